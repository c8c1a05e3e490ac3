//! IDX files (the MNIST distribution format): big-endian, images magic 2051
//! (`u32 magic, u32 count, u32 rows, u32 cols, u8 pixels...`), labels magic
//! 2049 (`u32 magic, u32 count, u8 labels...`).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Grayscale images in `[0, 1]` with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImages {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` values, image after image, row-major.
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
}

impl GrayImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let area = self.rows * self.cols;
        &self.pixels[i * area..(i + 1) * area]
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: header truncated")))
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<GrayImages> {
    let magic = be_u32(images, 0, "image file")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic}, expected {IMAGES_MAGIC}"
        )));
    }
    let count = be_u32(images, 4, "image file")? as usize;
    let rows = be_u32(images, 8, "image file")? as usize;
    let cols = be_u32(images, 12, "image file")? as usize;
    let lmagic = be_u32(labels, 0, "label file")?;
    if lmagic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {lmagic}, expected {LABELS_MAGIC}"
        )));
    }
    let lcount = be_u32(labels, 4, "label file")? as usize;
    if lcount != count {
        return Err(Error::Format(format!(
            "{count} images but {lcount} labels"
        )));
    }
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let body = &images[16..];
    if body.len() != expected {
        return Err(Error::Format(format!(
            "image file holds {} pixel bytes, header implies {expected}",
            body.len()
        )));
    }
    if labels.len() - 8 != count {
        return Err(Error::Format(format!(
            "label file holds {} labels, header implies {count}",
            labels.len() - 8
        )));
    }
    Ok(GrayImages {
        rows,
        cols,
        pixels: body.iter().map(|&p| p as f32 / 255.0).collect(),
        labels: labels[8..].to_vec(),
    })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<GrayImages> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: u32, rows: u32, cols: u32, pixels: usize) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IMAGES_MAGIC, count, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend((0..pixels).map(|i| (i % 256) as u8));
        v
    }

    fn labels(count: u32, n: usize) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [LABELS_MAGIC, count] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend((0..n).map(|i| (i % 10) as u8));
        v
    }

    #[test]
    fn parses_two_images() {
        let g = parse_idx(&images(2, 28, 28, 2 * 784), &labels(2, 2)).unwrap();
        assert_eq!((g.len(), g.rows, g.cols), (2, 28, 28));
        assert_eq!(g.image(1).len(), 784);
        assert_eq!(g.pixels[255], 1.0);
        assert_eq!(g.labels, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut img = images(2, 28, 28, 2 * 784);
        img[3] = 0x02;
        assert!(matches!(parse_idx(&img, &labels(2, 2)), Err(Error::Format(_))));
        assert!(matches!(
            parse_idx(&images(2, 28, 28, 2 * 784), &images(2, 28, 28, 0)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_count_mismatch_and_truncation() {
        assert!(matches!(
            parse_idx(&images(2, 28, 28, 2 * 784), &labels(3, 3)),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_idx(&images(2, 28, 28, 784), &labels(2, 2)),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_idx(&images(2, 28, 28, 2 * 784), &labels(2, 1)),
            Err(Error::Format(_))
        ));
        assert!(matches!(parse_idx(&[0, 0], &labels(2, 2)), Err(Error::Format(_))));
    }
}
