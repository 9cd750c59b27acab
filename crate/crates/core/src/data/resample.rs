//! Center crop and antialiased bicubic resampling.

use nalgebra::{DMatrix, DVector};

use super::ImageGrid;
use crate::{Error, Pattern, PatternKind, Result};

/// Side of the centered crop taken before resampling.
pub const CROP_SIDE: usize = 24;
/// Catmull-Rom kernel constant.
pub const CUBIC_A: f64 = -0.5;
/// Continuous patterns span `[-CONTINUOUS_LIMIT, CONTINUOUS_LIMIT]`.
pub const CONTINUOUS_LIMIT: f64 = 0.95;

fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x < 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// `out×inp` resampling matrix. When shrinking, the kernel is stretched by
/// the scale factor so every input pixel contributes; taps beyond the edge
/// are clamped to the border pixel and each row is normalised to sum to 1.
pub fn resample_matrix(inp: usize, out: usize) -> DMatrix<f64> {
    let scale = inp as f64 / out as f64;
    let stretch = scale.max(1.0);
    let support = 2.0 * stretch;
    let mut m = DMatrix::zeros(out, inp);
    for o in 0..out {
        let centre = (o as f64 + 0.5) * scale;
        let lo = (centre - support).floor() as i64;
        let hi = (centre + support).ceil() as i64;
        let mut total = 0.0;
        for j in lo..=hi {
            let w = cubic((j as f64 + 0.5 - centre) / stretch);
            if w != 0.0 {
                let jj = j.clamp(0, inp as i64 - 1) as usize;
                m[(o, jj)] += w;
                total += w;
            }
        }
        for j in 0..inp {
            m[(o, j)] /= total;
        }
    }
    m
}

/// Separable bicubic resize of a grid to `side×side`.
pub fn bicubic_resize(img: &DMatrix<f64>, side: usize) -> DMatrix<f64> {
    let rows = resample_matrix(img.nrows(), side);
    let cols = resample_matrix(img.ncols(), side);
    rows * img * cols.transpose()
}

pub fn center_crop(img: &DMatrix<f64>, side: usize) -> Result<DMatrix<f64>> {
    let (h, w) = img.shape();
    if h < side || w < side {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min: side,
        });
    }
    Ok(img.view(((h - side) / 2, (w - side) / 2), (side, side)).into_owned())
}

/// Crop 24×24, resize to `side×side`, then binarize at 0.5 or map [0, 1]
/// affinely onto ±0.95. Flattened row-major.
pub fn preprocess(img: &ImageGrid, side: usize, kind: PatternKind) -> Result<Pattern> {
    if side == 0 {
        return Err(Error::InvalidArgument("target side must be >= 1".into()));
    }
    let small = bicubic_resize(&center_crop(&img.pixels, CROP_SIDE)?, side);
    let mut values = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let v = small[(r, c)].clamp(0.0, 1.0);
            values.push(match kind {
                PatternKind::Binary => {
                    if v >= 0.5 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                PatternKind::Continuous => (2.0 * v - 1.0) * CONTINUOUS_LIMIT,
            });
        }
    }
    Pattern::new(DVector::from_vec(values), kind)
}
