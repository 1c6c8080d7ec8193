//! Big-endian IDX reader for the MNIST distribution files.

use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(field, "file ends inside the header"))
}

/// Returns `(count, rows * cols, pixels scaled to [0, 1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let magic = read_u32(bytes, 0, "images.magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            "images.magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32(bytes, 4, "images.count")? as usize;
    let rows = read_u32(bytes, 8, "images.rows")? as usize;
    let cols = read_u32(bytes, 12, "images.cols")? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * dim {
        return Err(Error::format(
            "images.data",
            format!(
                "header promises {count} images of {rows}x{cols} ({} bytes), file holds {}",
                count * dim,
                body.len()
            ),
        ));
    }
    Ok((count, dim, body.iter().map(|&b| b as f64 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels.magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            "labels.magic",
            format!("expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32(bytes, 4, "labels.count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::format(
            "labels.data",
            format!("header promises {count} labels, file holds {}", body.len()),
        ));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label IDX pair as a 10-class dataset.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (count, dim, features) = parse_idx_images(&images)?;
    let labels = parse_idx_labels(&labels)?;
    if labels.len() != count {
        return Err(Error::format(
            "labels.count",
            format!("{} labels for {count} images", labels.len()),
        ));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 9) {
        return Err(Error::format(
            "labels.data",
            format!("label {y} outside 0..=9"),
        ));
    }
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mnist".into());
    Dataset::new(name, features, labels, dim, 10)
}
