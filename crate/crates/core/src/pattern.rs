//! Stored memories.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    /// Every entry is exactly −1 or +1.
    Binary,
    /// Every entry lies in [−1, +1].
    Continuous,
}

impl PatternKind {
    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Binary => "binary",
            PatternKind::Continuous => "continuous",
        }
    }
}

/// A neuron state or stored memory of length N.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    values: DVector<f64>,
    kind: PatternKind,
}

impl Pattern {
    pub fn new(values: DVector<f64>, kind: PatternKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPattern("pattern length must be > 0".into()));
        }
        match kind {
            PatternKind::Binary => {
                if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v != 1.0 && v != -1.0) {
                    return Err(Error::InvalidPattern(format!(
                        "binary entry {i} is {v}, expected ±1"
                    )));
                }
            }
            PatternKind::Continuous => {
                if let Some((i, v)) = values
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| !v.is_finite() || !(-1.0..=1.0).contains(&v))
                {
                    return Err(Error::InvalidPattern(format!(
                        "continuous entry {i} is {v}, expected a value in [-1, 1]"
                    )));
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub fn binary(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values), PatternKind::Binary)
    }

    pub fn continuous(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values), PatternKind::Continuous)
    }

    /// Skips validation; callers guarantee the kind invariant.
    pub(crate) fn from_parts(values: DVector<f64>, kind: PatternKind) -> Self {
        debug_assert!(Self::new(values.clone(), kind).is_ok());
        Self { values, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub(crate) fn expect_kind(&self, kind: PatternKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    pub(crate) fn expect_len(&self, n: usize) -> Result<()> {
        if self.len() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: n,
                found: self.len(),
            })
        }
    }
}

/// An ordered collection of equal-length patterns of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    dim: usize,
    kind: PatternKind,
}

impl PatternSet {
    /// An empty set still carries its dimension and kind so that training
    /// zero patterns yields a well-formed (all-zero) network.
    pub fn empty(dim: usize, kind: PatternKind) -> Self {
        Self {
            patterns: Vec::new(),
            dim,
            kind,
        }
    }

    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        let first = patterns
            .first()
            .ok_or_else(|| Error::InvalidArgument("use PatternSet::empty for zero patterns".into()))?;
        let (dim, kind) = (first.len(), first.kind());
        for p in &patterns {
            p.expect_len(dim)?;
            p.expect_kind(kind)?;
        }
        Ok(Self {
            patterns,
            dim,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pattern> {
        self.patterns.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Pattern> {
        self.patterns.get(i)
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub(crate) fn expect_kind(&self, kind: PatternKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    /// N×M matrix whose columns are the patterns.
    pub fn column_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.len());
        for (j, p) in self.patterns.iter().enumerate() {
            m.set_column(j, p.values());
        }
        m
    }

    /// Same set with a new order; `order` must index every pattern once.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if !is_permutation(order, self.len()) {
            return Err(Error::InvalidPermutation(self.len()));
        }
        Ok(Self {
            patterns: order.iter().map(|&i| self.patterns[i].clone()).collect(),
            dim: self.dim,
            kind: self.kind,
        })
    }

    /// Long-format CSV: `pattern_id,element_index,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pattern_id", "element_index", "value"])?;
        for (pid, p) in self.patterns.iter().enumerate() {
            for (i, v) in p.as_slice().iter().enumerate() {
                w.write_record(&[pid.to_string(), i.to_string(), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`PatternSet::write_csv`]. Rows may come in
    /// any order but every (pattern, element) cell must be present exactly once.
    pub fn read_csv<R: Read>(reader: R, kind: PatternKind) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            pattern_id: usize,
            element_index: usize,
            value: f64,
        }
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = rec?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("pattern CSV has no rows".into()));
        }
        let count = rows.iter().map(|r| r.pattern_id).max().unwrap() + 1;
        let dim = rows.iter().map(|r| r.element_index).max().unwrap() + 1;
        if rows.len() != count * dim {
            return Err(Error::InvalidArgument(format!(
                "pattern CSV has {} cells, expected {count}x{dim}",
                rows.len()
            )));
        }
        let mut values = vec![vec![f64::NAN; dim]; count];
        for r in rows {
            let cell = &mut values[r.pattern_id][r.element_index];
            if !cell.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate cell ({}, {})",
                    r.pattern_id, r.element_index
                )));
            }
            *cell = r.value;
        }
        let patterns = values
            .into_iter()
            .map(|v| Pattern::new(DVector::from_vec(v), kind))
            .collect::<Result<Vec<_>>>()?;
        Self::new(patterns)
    }
}

impl<'a> IntoIterator for &'a PatternSet {
    type Item = &'a Pattern;
    type IntoIter = std::slice::Iter<'a, Pattern>;

    fn into_iter(self) -> Self::IntoIter {
        self.patterns.iter()
    }
}

pub(crate) fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_rejects_non_unit_entries() {
        assert!(Pattern::binary(vec![1.0, -1.0]).is_ok());
        assert!(Pattern::binary(vec![1.0, 0.0]).is_err());
        assert!(Pattern::binary(vec![]).is_err());
    }

    #[test]
    fn continuous_range_is_closed_unit_interval() {
        assert!(Pattern::continuous(vec![0.95, -1.0, 1.0]).is_ok());
        assert!(Pattern::continuous(vec![1.01]).is_err());
        assert!(Pattern::continuous(vec![f64::NAN]).is_err());
    }

    #[test]
    fn set_requires_uniform_shape_and_kind() {
        let a = Pattern::binary(vec![1.0, -1.0]).unwrap();
        let b = Pattern::binary(vec![1.0, -1.0, 1.0]).unwrap();
        let c = Pattern::continuous(vec![0.5, 0.5]).unwrap();
        assert!(PatternSet::new(vec![a.clone(), b]).is_err());
        assert!(PatternSet::new(vec![a, c]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let set = PatternSet::new(vec![
            Pattern::continuous(vec![0.1, -0.25, 0.9]).unwrap(),
            Pattern::continuous(vec![-0.95, 0.0, 1.0 / 3.0]).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = PatternSet::read_csv(buf.as_slice(), PatternKind::Continuous).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn permutation_check() {
        assert!(is_permutation(&[2, 0, 1], 3));
        assert!(!is_permutation(&[0, 0, 1], 3));
        assert!(!is_permutation(&[0, 1], 3));
        assert!(!is_permutation(&[0, 1, 3], 3));
    }
}
