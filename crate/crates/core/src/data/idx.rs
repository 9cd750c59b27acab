//! IDX container reader (the MNIST distribution format), plain or gzipped.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::DMatrix;

use super::ImageGrid;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            needed: at + 4,
            got: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found == expected {
        Ok(())
    } else {
        Err(Error::BadMagic { expected, found })
    }
}

/// Parses an IDX3 image file into `count` row-major grids scaled to [0, 1].
pub fn parse_images(bytes: &[u8]) -> Result<Vec<DMatrix<f64>>> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let needed = 16 + count * size;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    Ok(bytes[16..needed]
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| DMatrix::from_row_iterator(rows, cols, px.iter().map(|&v| f64::from(v) / 255.0)))
        .collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

/// Loads an image file and its label file.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<Vec<ImageGrid>> {
    let grids = parse_images(&read_maybe_gz(images)?)?;
    let labels = parse_labels(&read_maybe_gz(labels)?)?;
    if grids.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: grids.len(),
            labels: labels.len(),
        });
    }
    grids
        .into_iter()
        .zip(labels)
        .map(|(px, l)| ImageGrid::new(px, Some(l)))
        .collect()
}

/// Loads the training split from a directory holding
/// `train-images-idx3-ubyte[.gz]` and `train-labels-idx1-ubyte[.gz]`.
pub fn load_mnist_dir(dir: &Path) -> Result<Vec<ImageGrid>> {
    let find = |stem: &str| {
        let plain = dir.join(stem);
        let gz = dir.join(format!("{stem}.gz"));
        if plain.exists() {
            Ok(plain)
        } else if gz.exists() {
            Ok(gz)
        } else {
            Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found", plain.display()),
            )))
        }
    };
    load_mnist(&find("train-images-idx3-ubyte")?, &find("train-labels-idx1-ubyte")?)
}
