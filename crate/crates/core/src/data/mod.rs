//! Pattern sources: MNIST digits, random patterns and corruption.

mod corrupt;
mod idx;
mod resample;

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, IndexedRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use corrupt::{corrupt, corrupt_flip, corrupt_gaussian};
pub use idx::{load_mnist, load_mnist_dir, parse_images, parse_labels, IMAGES_MAGIC, LABELS_MAGIC};
pub use resample::{
    bicubic_resize, center_crop, preprocess, resample_matrix, CONTINUOUS_LIMIT, CROP_SIDE, CUBIC_A,
};

use crate::{seed, Error, Pattern, PatternKind, PatternSet, Result};

/// Grayscale image with pixels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub pixels: DMatrix<f64>,
    pub label: Option<u8>,
}

impl ImageGrid {
    pub fn new(pixels: DMatrix<f64>, label: Option<u8>) -> Result<Self> {
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("pixel values must lie in [0, 1]".into()));
        }
        if label.is_some_and(|l| l > 9) {
            return Err(Error::InvalidArgument(format!("digit label {} out of range", label.unwrap())));
        }
        Ok(Self { pixels, label })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PatternSource {
    /// Directory with the IDX training files.
    Mnist { path: PathBuf },
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: PatternSource,
    pub kind: PatternKind,
    pub target_side: usize,
    pub count: usize,
    /// One exemplar each of digits `0..count`.
    pub per_digit: bool,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn dim(&self) -> usize {
        self.target_side * self.target_side
    }

    /// Loads (for MNIST) and preprocesses the whole source once.
    pub fn pool(&self) -> Result<PatternPool> {
        match &self.source {
            PatternSource::Mnist { path } => {
                PatternPool::from_images(&load_mnist_dir(path)?, self.target_side, self.kind)
            }
            PatternSource::Random => Ok(PatternPool::random(self.dim(), self.kind)),
        }
    }

    pub fn load(&self) -> Result<PatternSet> {
        self.pool()?.sample(self.count, self.per_digit, self.seed)
    }
}

/// I.i.d. patterns: ±1 for binary, uniform on ±0.95 for continuous.
pub fn gen_random_patterns(count: usize, n: usize, kind: PatternKind, seed: u64) -> Result<PatternSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("pattern length must be >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    let patterns = (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..n)
                .map(|_| match kind {
                    PatternKind::Binary => {
                        if rng.random_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    PatternKind::Continuous => rng.random_range(-CONTINUOUS_LIMIT..=CONTINUOUS_LIMIT),
                })
                .collect();
            Pattern::new(DVector::from_vec(v), kind)
        })
        .collect::<Result<Vec<_>>>()?;
    if patterns.is_empty() {
        Ok(PatternSet::empty(n, kind))
    } else {
        PatternSet::new(patterns)
    }
}

/// Preprocessed patterns to draw stored sets from.
#[derive(Debug, Clone)]
pub enum PatternPool {
    Images {
        patterns: Vec<Pattern>,
        labels: Vec<Option<u8>>,
        dim: usize,
        kind: PatternKind,
    },
    Random { dim: usize, kind: PatternKind },
}

impl PatternPool {
    pub fn from_images(images: &[ImageGrid], side: usize, kind: PatternKind) -> Result<Self> {
        Ok(Self::Images {
            patterns: images.iter().map(|i| preprocess(i, side, kind)).collect::<Result<_>>()?,
            labels: images.iter().map(|i| i.label).collect(),
            dim: side * side,
            kind,
        })
    }

    pub fn random(dim: usize, kind: PatternKind) -> Self {
        Self::Random { dim, kind }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Images { dim, .. } | Self::Random { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> PatternKind {
        match self {
            Self::Images { kind, .. } | Self::Random { kind, .. } => *kind,
        }
    }

    /// Draws `count` patterns. `per_digit` takes one random exemplar of each
    /// digit `0..count` in digit order; otherwise sampling is uniform
    /// without replacement.
    pub fn sample(&self, count: usize, per_digit: bool, seed: u64) -> Result<PatternSet> {
        match self {
            Self::Random { dim, kind } => gen_random_patterns(count, *dim, *kind, seed),
            Self::Images {
                patterns,
                labels,
                dim,
                kind,
            } => {
                let mut rng = seed::rng(seed);
                let picked: Vec<usize> = if per_digit {
                    if count > 10 {
                        return Err(Error::InsufficientData {
                            requested: count,
                            available: 10,
                        });
                    }
                    (0..count as u8)
                        .map(|d| {
                            let of_digit: Vec<usize> =
                                (0..labels.len()).filter(|&i| labels[i] == Some(d)).collect();
                            of_digit.choose(&mut rng).copied().ok_or(Error::InsufficientData {
                                requested: 1,
                                available: 0,
                            })
                        })
                        .collect::<Result<_>>()?
                } else {
                    if count > patterns.len() {
                        return Err(Error::InsufficientData {
                            requested: count,
                            available: patterns.len(),
                        });
                    }
                    index::sample(&mut rng, patterns.len(), count).into_vec()
                };
                if picked.is_empty() {
                    return Ok(PatternSet::empty(*dim, *kind));
                }
                PatternSet::new(picked.into_iter().map(|i| patterns[i].clone()).collect())
            }
        }
    }
}

/// Draws a stored set from a loaded image collection.
pub fn select_patterns(images: &[ImageGrid], spec: &DatasetSpec) -> Result<PatternSet> {
    PatternPool::from_images(images, spec.target_side, spec.kind)?.sample(spec.count, spec.per_digit, spec.seed)
}
