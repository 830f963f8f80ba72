//! Reader for the big-endian IDX files MNIST-style datasets ship in.

use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| {
            Error::Format(format!(
                "{what}: header truncated at byte offset {offset} (file has {} bytes)",
                bytes.len()
            ))
        })
}

fn check_payload(bytes: &[u8], header: usize, payload: usize, what: &str) -> Result<()> {
    let expected = header + payload;
    if bytes.len() != expected {
        let kind = if bytes.len() < expected { "truncated payload" } else { "trailing bytes" };
        return Err(Error::Format(format!(
            "{what}: {kind} at byte offset {}: expected {expected} bytes, found {}",
            bytes.len().min(expected),
            bytes.len()
        )));
    }
    Ok(())
}

/// Parses an image file and a label file already read into memory. Pixels are
/// scaled to `[0, 1]`; images are flattened row-major. The result is not normalized.
pub fn parse_idx(images: &[u8], labels: &[u8], classes: usize) -> Result<Dataset> {
    let magic = read_u32(images, 0, "image file")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image file: bad magic {magic:#010x} at byte offset 0, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = read_u32(images, 4, "image file")? as usize;
    let rows = read_u32(images, 8, "image file")? as usize;
    let cols = read_u32(images, 12, "image file")? as usize;
    let pixels = rows * cols;
    check_payload(images, 16, n * pixels, "image file")?;

    let magic = read_u32(labels, 0, "label file")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label file: bad magic {magic:#010x} at byte offset 0, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = read_u32(labels, 4, "label file")? as usize;
    if n_labels != n {
        return Err(Error::Format(format!(
            "label file: count {n_labels} at byte offset 4 does not match {n} images"
        )));
    }
    check_payload(labels, 8, n, "label file")?;

    let ys: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    if let Some(i) = ys.iter().position(|&y| y >= classes) {
        return Err(Error::Format(format!(
            "label file: label {} at byte offset {} outside [0, {classes})",
            ys[i],
            8 + i
        )));
    }
    let data = images[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new("idx", Tensor::new([n, pixels], data)?, ys, classes)
}

/// Loads an IDX image/label pair and normalizes the features.
pub fn load_idx(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lbl = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let located = |e: Error| match e {
        Error::Format(m) if m.starts_with("image") => {
            Error::Format(format!("{}: {m}", images.display()))
        }
        Error::Format(m) => Error::Format(format!("{}: {m}", labels.display())),
        other => other,
    };
    parse_idx(&img, &lbl, classes).map_err(located)?.normalized()
}

/// Encodes a dataset with byte-valued pixels as IDX files (used by tests and fixtures).
pub fn encode_idx(pixels: &[u8], n: usize, rows: usize, cols: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lbl = Vec::with_capacity(8 + labels.len());
    for v in [LABEL_MAGIC, labels.len() as u32] {
        lbl.extend_from_slice(&v.to_be_bytes());
    }
    lbl.extend_from_slice(labels);
    (img, lbl)
}
