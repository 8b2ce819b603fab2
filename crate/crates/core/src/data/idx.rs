//! IDX container parsing (big-endian, magic 2051 for images, 2049 for
//! labels). Gzipped files are detected by their two-byte magic and inflated
//! in memory, so the published `.gz` distributions load directly.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{CoreError, Result};

use super::ImageDataset;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CoreError::MissingFile(path.to_path_buf())
        } else {
            CoreError::io(path, e)
        }
    })?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| CoreError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(CoreError::Parse {
            path: path.to_path_buf(),
            offset: offset as u64,
            detail: "truncated file while reading 32-bit field".into(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parses paired IDX image and label files into a dataset with pixel values
/// in `[0, 255]` (standardization happens separately).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageDataset> {
    let img = read_maybe_gz(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(CoreError::Parse {
            path: images_path.to_path_buf(),
            offset: 0,
            detail: format!("image magic {magic}, expected {IMAGE_MAGIC}"),
        });
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let dim = rows * cols;
    let expected = 16 + n * dim;
    if img.len() < expected {
        return Err(CoreError::Parse {
            path: images_path.to_path_buf(),
            offset: img.len() as u64,
            detail: format!("truncated pixel payload: {} of {expected} bytes", img.len()),
        });
    }

    let lab = read_maybe_gz(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(CoreError::Parse {
            path: labels_path.to_path_buf(),
            offset: 0,
            detail: format!("label magic {magic}, expected {LABEL_MAGIC}"),
        });
    }
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(CoreError::Parse {
            path: labels_path.to_path_buf(),
            offset: 4,
            detail: format!("{n_labels} labels for {n} images"),
        });
    }
    if lab.len() < 8 + n {
        return Err(CoreError::Parse {
            path: labels_path.to_path_buf(),
            offset: lab.len() as u64,
            detail: "truncated label payload".into(),
        });
    }

    let images: Vec<f64> = img[16..16 + n * dim].iter().map(|&b| b as f64).collect();
    let labels: Vec<u8> = lab[8..8 + n].to_vec();
    let n_classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let tag = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Ok(ImageDataset {
        images,
        dim,
        labels,
        n_classes,
        tag,
    })
}

/// Writes a `[0, 255]`-valued dataset back to IDX image format (28x28 layout
/// inferred only when `dim` is a perfect square; otherwise rows=1, cols=dim).
pub fn write_idx_images(path: &Path, ds: &ImageDataset) -> Result<()> {
    let side = (ds.dim as f64).sqrt() as usize;
    let (rows, cols) = if side * side == ds.dim {
        (side, side)
    } else {
        (1, ds.dim)
    };
    let mut out = Vec::with_capacity(16 + ds.images.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in &ds.images {
        out.push(v.round().clamp(0.0, 255.0) as u8);
    }
    fs::write(path, out).map_err(|e| CoreError::io(path, e))
}

/// Writes labels to IDX label format.
pub fn write_idx_labels(path: &Path, ds: &ImageDataset) -> Result<()> {
    let mut out = Vec::with_capacity(8 + ds.labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&ds.labels);
    fs::write(path, out).map_err(|e| CoreError::io(path, e))
}
