use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::{seed, Error, Pattern, PatternKind, Result};

/// Negates each element independently with probability `flip_prob`.
pub fn corrupt_flip(p: &Pattern, flip_prob: f64, seed: u64) -> Result<Pattern> {
    p.expect_kind(PatternKind::Binary)?;
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::InvalidArgument(format!(
            "flip probability must be in [0, 1], got {flip_prob}"
        )));
    }
    let mut rng = seed::rng(seed);
    let v = p.values().map(|x| if rng.random_bool(flip_prob) { -x } else { x });
    Ok(Pattern::from_parts(v, PatternKind::Binary))
}

/// Adds `N(0, σ²)` to every element and clamps to [−1, 1].
pub fn corrupt_gaussian(p: &Pattern, sigma: f64, seed: u64) -> Result<Pattern> {
    p.expect_kind(PatternKind::Continuous)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let v = p.values().map(|x| (x + normal.sample(&mut rng)).clamp(-1.0, 1.0));
    Ok(Pattern::from_parts(v, PatternKind::Continuous))
}

/// Applies the corruption matching the pattern kind.
pub fn corrupt(p: &Pattern, noise: f64, seed: u64) -> Result<Pattern> {
    match p.kind() {
        PatternKind::Binary => corrupt_flip(p, noise, seed),
        PatternKind::Continuous => corrupt_gaussian(p, noise, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(n: usize) -> Pattern {
        Pattern::binary((0..n).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect()).unwrap()
    }

    #[test]
    fn flip_extremes() {
        let p = bin(20);
        assert_eq!(corrupt_flip(&p, 0.0, 1).unwrap(), p);
        let neg = corrupt_flip(&p, 1.0, 1).unwrap();
        assert!(neg.as_slice().iter().zip(p.as_slice()).all(|(a, b)| *a == -b));
        assert!(corrupt_flip(&p, 1.1, 1).is_err());
    }

    #[test]
    fn flip_count_is_binomial_mean() {
        let p = bin(64);
        let total: usize = (0..10_000u64)
            .map(|s| {
                let q = corrupt_flip(&p, 0.1, s).unwrap();
                q.as_slice().iter().zip(p.as_slice()).filter(|(a, b)| a != b).count()
            })
            .sum();
        let mean = total as f64 / 1e4;
        assert!((mean - 6.4).abs() < 0.1, "mean flips {mean}");
    }

    #[test]
    fn kinds_are_enforced() {
        let c = Pattern::continuous(vec![0.2, -0.4]).unwrap();
        assert!(matches!(corrupt_flip(&c, 0.1, 0), Err(Error::KindMismatch { .. })));
        assert!(matches!(corrupt_gaussian(&bin(4), 0.1, 0), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn gaussian_noise_scale_and_clamp() {
        let c = Pattern::continuous(vec![0.0; 20_000]).unwrap();
        assert_eq!(corrupt_gaussian(&c, 0.0, 3).unwrap(), c);
        // small σ so clamping is negligible and the estimator sees raw noise
        let q = corrupt_gaussian(&c, 0.2, 3).unwrap();
        let var = q.as_slice().iter().map(|v| v * v).sum::<f64>() / 20_000.0;
        assert!((var.sqrt() - 0.2).abs() < 0.005);

        let hi = Pattern::continuous(vec![0.95; 1000]).unwrap();
        let q = corrupt_gaussian(&hi, 5.0, 4).unwrap();
        assert!(q.as_slice().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(q.len(), 1000);
    }
}
