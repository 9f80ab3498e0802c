//! IDX (MNIST) image and label files.
//!
//! Images: magic `0x00000803`, count, rows, cols (big-endian `u32`), then
//! `count·rows·cols` unsigned bytes in row-major order. Labels: magic
//! `0x00000801`, count, then `count` bytes.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::bounds::PointCloud;
use crate::error::{BmcError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images flattened to rows with pixel intensities scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImageSet {
    pub images: DMatrix<f64>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl IdxImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

struct Header<'a> {
    origin: &'a str,
    bytes: &'a [u8],
}

impl<'a> Header<'a> {
    fn word(&self, k: usize) -> Result<u32> {
        let start = 4 * k;
        let chunk = self.bytes.get(start..start + 4).ok_or(BmcError::Truncated {
            path: self.origin.to_string(),
            needed: start + 4,
            actual: self.bytes.len(),
        })?;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn expect_magic(&self, expected: u32) -> Result<()> {
        let found = self.word(0)?;
        if found != expected {
            return Err(BmcError::BadMagic {
                path: self.origin.to_string(),
                expected,
                found,
            });
        }
        Ok(())
    }

    fn payload(&self, offset: usize, len: usize) -> Result<&'a [u8]> {
        self.bytes.get(offset..offset + len).ok_or(BmcError::Truncated {
            path: self.origin.to_string(),
            needed: offset + len,
            actual: self.bytes.len(),
        })
    }
}

/// Returns `(images, rows, cols)` with one flattened image per row.
pub fn parse_idx_images(bytes: &[u8], origin: &str) -> Result<(DMatrix<f64>, usize, usize)> {
    let h = Header { origin, bytes };
    h.expect_magic(IMAGES_MAGIC)?;
    let count = h.word(1)? as usize;
    let rows = h.word(2)? as usize;
    let cols = h.word(3)? as usize;
    let pixels = rows * cols;
    let data = h.payload(16, count * pixels)?;
    let images = DMatrix::from_fn(count, pixels, |i, j| f64::from(data[i * pixels + j]) / 255.0);
    Ok((images, rows, cols))
}

pub fn parse_idx_labels(bytes: &[u8], origin: &str) -> Result<Vec<u8>> {
    let h = Header { origin, bytes };
    h.expect_magic(LABELS_MAGIC)?;
    let count = h.word(1)? as usize;
    Ok(h.payload(8, count)?.to_vec())
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<IdxImageSet> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = fs::read(ip).map_err(|e| BmcError::io(ip, e))?;
    let label_bytes = fs::read(lp).map_err(|e| BmcError::io(lp, e))?;
    let (images, rows, cols) = parse_idx_images(&image_bytes, &ip.display().to_string())?;
    let labels = parse_idx_labels(&label_bytes, &lp.display().to_string())?;
    if images.nrows() != labels.len() {
        return Err(BmcError::CountMismatch {
            images: images.nrows(),
            labels: labels.len(),
        });
    }
    Ok(IdxImageSet { images, labels, rows, cols })
}

/// Draws `per_digit` images of each requested digit uniformly without
/// replacement and stacks them in the order of `digits`.
pub fn subsample_by_digit(set: &IdxImageSet, digits: &[u8], per_digit: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = super::rng(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(digits.len() * per_digit);
    let mut labels = Vec::with_capacity(digits.len() * per_digit);
    for &digit in digits {
        let pool: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == digit).collect();
        if pool.len() < per_digit {
            return Err(BmcError::Parameter(format!(
                "digit {digit} has {} images, {per_digit} requested",
                pool.len()
            )));
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, pool.len(), per_digit)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        chosen.sort_unstable();
        picked.extend(&chosen);
        labels.extend(std::iter::repeat_n(i64::from(digit), per_digit));
    }
    let coords = set.images.select_rows(&picked);
    PointCloud::new(coords, Some(labels))
}
