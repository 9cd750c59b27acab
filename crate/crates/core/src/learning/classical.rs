//! Offline rules computed directly from the stored patterns.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, HopfieldNet, PatternKind, PatternSet, Result};

/// `W = (1/N) Σ_m ξᵐ ξᵐᵀ` with a zero diagonal.
pub fn train_hebbian(patterns: &PatternSet) -> Result<HopfieldNet> {
    patterns.expect_kind(PatternKind::Binary)?;
    let n = patterns.dim();
    let x = patterns.column_matrix();
    let mut w = &x * x.transpose() / n as f64;
    w.fill_diagonal(0.0);
    HopfieldNet::new(w, DVector::zeros(n))
}

/// Storkey's incremental rule, presenting patterns once in set order:
/// `W_ij += (ξ_i ξ_j − ξ_i h_ji − h_ij ξ_j) / N` with
/// `h_ij = Σ_{k≠i,j} W_ik ξ_k`.
pub fn train_storkey(patterns: &PatternSet) -> Result<HopfieldNet> {
    patterns.expect_kind(PatternKind::Binary)?;
    let n = patterns.dim();
    let inv_n = 1.0 / n as f64;
    let mut w = DMatrix::<f64>::zeros(n, n);
    for p in patterns {
        let xi = p.values();
        // full local field; the diagonal is zero so only k = j must be removed
        let h = &w * xi;
        let mut next = w.clone();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let h_ij = h[i] - w[(i, j)] * xi[j];
                let h_ji = h[j] - w[(j, i)] * xi[i];
                next[(i, j)] += inv_n * (xi[i] * xi[j] - xi[i] * h_ji - h_ij * xi[j]);
            }
        }
        w = next;
    }
    HopfieldNet::new(w, DVector::zeros(n))
}

/// `W = (1/N) Ξᵀ Q⁻¹ Ξ`, `Q_mn = ξᵐ·ξⁿ / N`, so that `W ξᵐ = ξᵐ` for every
/// stored pattern. Dependent pattern sets are rejected with the offending
/// indices.
pub fn train_pseudo_inverse(patterns: &PatternSet) -> Result<HopfieldNet> {
    patterns.expect_kind(PatternKind::Binary)?;
    let n = patterns.dim();
    if patterns.is_empty() {
        return Ok(HopfieldNet::zeros(n));
    }
    check_independent(patterns)?;
    let x = patterns.column_matrix(); // N×M
    let q = x.transpose() * &x / n as f64;
    let chol = Cholesky::new(q).ok_or_else(|| Error::SingularOverlap {
        pattern: patterns.len() - 1,
        depends_on: (0..patterns.len() - 1).collect(),
    })?;
    let q_inv_xt = chol.solve(&x.transpose());
    let w = &x * q_inv_xt / n as f64;
    HopfieldNet::new(w, DVector::zeros(n))
}

/// Modified Gram–Schmidt over the patterns. On the first dependent pattern,
/// back-solves for its coefficients on the earlier independent ones to name
/// them.
fn check_independent(patterns: &PatternSet) -> Result<()> {
    const REL_TOL: f64 = 1e-9;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut owners: Vec<usize> = Vec::new();

    for (m, p) in patterns.iter().enumerate() {
        let mut v = p.values().clone();
        let scale = v.norm();
        let mut coeffs = vec![0.0; basis.len()];
        // two passes keep the residual orthogonal to working precision
        for _ in 0..2 {
            for (k, q) in basis.iter().enumerate() {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
                coeffs[k] += c;
            }
        }
        let norm = v.norm();
        if norm <= REL_TOL * scale {
            let k = basis.len();
            let mut a = vec![0.0; k];
            for i in (0..k).rev() {
                let mut s = coeffs[i];
                for j in i + 1..k {
                    s -= r_cols[j][i] * a[j];
                }
                a[i] = s / r_cols[i][i];
            }
            let depends_on = a
                .iter()
                .zip(&owners)
                .filter(|(c, _)| c.abs() > 1e-8)
                .map(|(_, &o)| o)
                .collect();
            return Err(Error::SingularOverlap {
                pattern: m,
                depends_on,
            });
        }
        coeffs.push(norm);
        r_cols.push(coeffs);
        basis.push(v / norm);
        owners.push(m);
    }
    Ok(())
}
