//! Feature-vector CSV ingestion for externally extracted embeddings.
//!
//! Format: header `label,f0,...,f{d-1}`, then one decimal-float row per
//! example. This is the ingestion path for domain-incremental protocols that
//! run on embeddings (e.g. 512-dimensional backbone features) instead of raw
//! pixels.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor2;

/// Dense feature vectors with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVectorDataset {
    /// Row-major `n x dim` values.
    pub vectors: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<u8>,
    pub n_classes: usize,
    pub tag: String,
}

impl FeatureVectorDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn gather(&self, indices: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(indices.len(), self.dim);
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.vector(i));
        }
        out
    }
}

pub fn load_feature_csv(path: &Path) -> Result<FeatureVectorDataset> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CoreError::MissingFile(path.to_path_buf())
        } else {
            CoreError::io(path, e)
        }
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CoreError::Parse {
        path: path.to_path_buf(),
        offset: 0,
        detail: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(CoreError::Parse {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("header must start with 'label', got '{header}'"),
        });
    }
    let dim = cols.len() - 1;
    for (i, col) in cols.iter().enumerate().skip(1) {
        let expected = format!("f{}", i - 1);
        if *col != expected {
            return Err(CoreError::Parse {
                path: path.to_path_buf(),
                offset: 0,
                detail: format!("header column {i} is '{col}', expected '{expected}'"),
            });
        }
    }
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: u8 = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| CoreError::Parse {
                path: path.to_path_buf(),
                offset: line_no as u64 + 1,
                detail: format!("bad label: {e}"),
            })?;
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| CoreError::Parse {
                    path: path.to_path_buf(),
                    offset: line_no as u64 + 1,
                    detail: format!("bad float '{f}': {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(CoreError::Parse {
                path: path.to_path_buf(),
                offset: line_no as u64 + 1,
                detail: format!("{} features, expected {dim}", row.len()),
            });
        }
        labels.push(label);
        vectors.extend(row);
    }
    if labels.is_empty() {
        return Err(CoreError::Parse {
            path: path.to_path_buf(),
            offset: 1,
            detail: "no data rows".into(),
        });
    }
    let n_classes = labels.iter().copied().max().unwrap() as usize + 1;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "features".into());
    Ok(FeatureVectorDataset {
        vectors,
        dim,
        labels,
        n_classes,
        tag,
    })
}
