//! Dataset ingestion and the streaming protocol.

mod features;
mod idx;
mod manifest;
mod permute;
mod stream;

pub use features::{load_feature_csv, FeatureVectorDataset};
pub use idx::{load_idx, write_idx_images, write_idx_labels};
pub use manifest::{known_dataset_files, resolve_dataset_file, verify_dataset_root, DatasetCheck, KnownFile};
pub use permute::{apply_permutation, make_permutation, PermutationTask};
pub use stream::{StreamConfig, StreamItem, StreamPlan};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tensor::Tensor2;

/// Flat image dataset: `n` rows of `dim` standardizable pixel reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    /// Row-major `n x dim` values.
    pub images: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<u8>,
    pub n_classes: usize,
    pub tag: String,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies rows `indices` into a `len(indices) x dim` tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(indices.len(), self.dim);
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.image(i));
        }
        out
    }

    /// Keeps only the first `n` examples (deterministic prefix subset).
    pub fn truncate(mut self, n: usize) -> ImageDataset {
        let n = n.min(self.len());
        self.images.truncate(n * self.dim);
        self.labels.truncate(n);
        self
    }
}

/// Scalar standardization statistics computed over all training pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: f64,
    pub std: f64,
}

/// Standardizes with a single global mean and std over all pixels.
///
/// Pass `Some(stats)` to reuse training statistics on held-out data; `None`
/// computes fresh statistics from `ds` and returns them.
pub fn standardize(
    ds: &ImageDataset,
    stats: Option<StandardizeStats>,
) -> Result<(ImageDataset, StandardizeStats)> {
    if ds.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "standardize",
            detail: "empty dataset".into(),
        });
    }
    let stats = match stats {
        Some(s) => s,
        None => {
            let n = ds.images.len() as f64;
            let mean = ds.images.iter().sum::<f64>() / n;
            let var = ds.images.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std == 0.0 {
                return Err(CoreError::NumericDomain {
                    op: "standardize",
                    detail: "zero standard deviation (constant dataset)".into(),
                });
            }
            StandardizeStats { mean, std }
        }
    };
    if stats.std == 0.0 {
        return Err(CoreError::NumericDomain {
            op: "standardize",
            detail: "zero standard deviation in reused stats".into(),
        });
    }
    let images = ds
        .images
        .iter()
        .map(|&v| (v - stats.mean) / stats.std)
        .collect();
    Ok((
        ImageDataset {
            images,
            dim: ds.dim,
            labels: ds.labels.clone(),
            n_classes: ds.n_classes,
            tag: ds.tag.clone(),
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(values: Vec<f64>, dim: usize) -> ImageDataset {
        let n = values.len() / dim;
        ImageDataset {
            images: values,
            dim,
            labels: vec![0; n],
            n_classes: 2,
            tag: "toy".into(),
        }
    }

    #[test]
    fn standardize_normalizes_training_data() {
        let ds = toy(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3);
        let (out, stats) = standardize(&ds, None).unwrap();
        let n = out.images.len() as f64;
        let mean = out.images.iter().sum::<f64>() / n;
        let var = out.images.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
        assert!(stats.std > 0.0);
    }

    #[test]
    fn constant_dataset_is_an_error() {
        let ds = toy(vec![7.0; 6], 3);
        assert!(standardize(&ds, None).is_err());
    }

    #[test]
    fn reused_stats_do_not_recompute() {
        let train = toy(vec![0.0, 10.0, 0.0, 10.0], 2);
        let (_, stats) = standardize(&train, None).unwrap();
        let test = toy(vec![10.0, 10.0, 10.0, 10.0], 2);
        let (out, reused) = standardize(&test, Some(stats)).unwrap();
        assert_eq!(stats, reused);
        // Standardized with train stats, the test mean is not zero.
        let mean = out.images.iter().sum::<f64>() / out.images.len() as f64;
        assert!(mean.abs() > 0.5);
    }

    #[test]
    fn standardize_is_idempotent_with_reused_stats() {
        let ds = toy(vec![1.0, 2.0, 3.0, 4.0], 2);
        let (once, _stats) = standardize(&ds, None).unwrap();
        let fixed = StandardizeStats { mean: 0.0, std: 1.0 };
        let (twice, _) = standardize(&once, Some(fixed)).unwrap();
        for (a, b) in once.images.iter().zip(&twice.images) {
            assert_eq!(a, b);
        }
    }
}
