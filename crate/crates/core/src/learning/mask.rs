use nalgebra::DMatrix;
use rand::seq::index;

use crate::{seed, Error, Result};

/// Weight locations whose devices are stuck; a stuck weight is pinned at zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultMask {
    rows: usize,
    cols: usize,
    stuck: Vec<bool>, // row-major
}

impl FaultMask {
    pub fn none(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            stuck: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::none(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.stuck[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// Exactly `⌊fraction·rows·cols⌋` locations drawn uniformly without replacement.
    pub fn random(rows: usize, cols: usize, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "fault fraction must be in [0, 1], got {fraction}"
            )));
        }
        let total = rows * cols;
        let k = ((fraction * total as f64).floor() as usize).min(total);
        let mut mask = Self::none(rows, cols);
        let mut rng = seed::rng(seed);
        for i in index::sample(&mut rng, total, k) {
            mask.stuck[i] = true;
        }
        Ok(mask)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_stuck(&self, row: usize, col: usize) -> bool {
        self.stuck[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, stuck: bool) {
        self.stuck[row * self.cols + col] = stuck;
    }

    pub fn count(&self) -> usize {
        self.stuck.iter().filter(|&&s| s).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn union(&self, other: &FaultMask) -> Result<FaultMask> {
        self.check_shape(other.rows, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            stuck: self.stuck.iter().zip(&other.stuck).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// Also pins the main diagonal (self-connections).
    pub fn with_diagonal(mut self) -> Self {
        for i in 0..self.rows.min(self.cols) {
            self.set(i, i, true);
        }
        self
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (self.rows, self.cols) == (rows, cols) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "mask is {}x{}, weights are {rows}x{cols}",
                self.rows, self.cols
            )))
        }
    }

    /// Zeroes every stuck entry of `m`.
    pub fn apply(&self, m: &mut DMatrix<f64>) {
        debug_assert_eq!(m.shape(), (self.rows, self.cols));
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.is_stuck(r, c) {
                    m[(r, c)] = 0.0;
                }
            }
        }
    }

    pub fn all_zero_in(&self, m: &DMatrix<f64>) -> bool {
        (0..self.rows).all(|r| (0..self.cols).all(|c| !self.is_stuck(r, c) || m[(r, c)] == 0.0))
    }

    pub fn iter_stuck(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.stuck
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(move |(i, _)| (i / self.cols, i % self.cols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mask_counts() {
        assert_eq!(FaultMask::random(64, 64, 0.5, 1).unwrap().count(), 2048);
        assert_eq!(FaultMask::random(64, 64, 0.0, 1).unwrap().count(), 0);
        assert_eq!(FaultMask::random(3, 3, 1.0, 1).unwrap().count(), 9);
        assert_eq!(FaultMask::random(10, 10, 0.333, 1).unwrap().count(), 33);
        assert!(FaultMask::random(2, 2, 1.5, 1).is_err());
    }

    #[test]
    fn random_mask_is_seeded() {
        let a = FaultMask::random(16, 16, 0.3, 5).unwrap();
        assert_eq!(a, FaultMask::random(16, 16, 0.3, 5).unwrap());
        assert_ne!(a, FaultMask::random(16, 16, 0.3, 6).unwrap());
    }

    #[test]
    fn apply_zeroes_only_stuck_entries() {
        let mask = FaultMask::from_fn(2, 2, |r, c| r == 0 && c == 1);
        let mut m = DMatrix::from_element(2, 2, 3.0);
        mask.apply(&mut m);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m.iter().filter(|&&v| v == 3.0).count(), 3);
        assert!(mask.all_zero_in(&m));
        assert_eq!(mask.iter_stuck().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn diagonal_and_union() {
        let d = FaultMask::none(3, 3).with_diagonal();
        assert_eq!(d.count(), 3);
        let u = d.union(&FaultMask::from_fn(3, 3, |r, c| r == 0 && c == 2)).unwrap();
        assert_eq!(u.count(), 4);
        assert!(d.union(&FaultMask::none(2, 3)).is_err());
    }
}
