//! Fixed pixel permutations, one per task.
//!
//! Task 0 is the identity (plain images first); later tasks get a
//! Fisher-Yates shuffle keyed by `(seed, task_index)`, so the same task index
//! always produces the same permutation.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::RngStream;

use super::ImageDataset;

/// A bijection on pixel indices identifying one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationTask {
    pub perm: Vec<u32>,
    pub task_index: usize,
    pub seed: u64,
}

impl PermutationTask {
    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i as u32 == p)
    }

    pub fn inverse(&self) -> PermutationTask {
        let mut inv = vec![0u32; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p as usize] = i as u32;
        }
        PermutationTask {
            perm: inv,
            task_index: self.task_index,
            seed: self.seed,
        }
    }

    /// Gathers one image row in place: `out[j] = image[perm[j]]`.
    pub fn apply_row(&self, image: &[f64], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.perm) {
            *o = image[p as usize];
        }
    }
}

/// Builds the permutation for `(seed, task_index)`; index 0 is the identity.
pub fn make_permutation(seed: u64, task_index: usize, dim: usize) -> PermutationTask {
    let mut perm: Vec<u32> = (0..dim as u32).collect();
    if task_index > 0 {
        let mut rng = RngStream::new(seed, task_index as u64);
        for i in (1..dim).rev() {
            let j = rng.next_below(i + 1);
            perm.swap(i, j);
        }
    }
    PermutationTask {
        perm,
        task_index,
        seed,
    }
}

/// Materializes a permuted copy of the dataset.
pub fn apply_permutation(perm: &PermutationTask, ds: &ImageDataset) -> Result<ImageDataset> {
    if perm.perm.len() != ds.dim {
        return Err(CoreError::ShapeMismatch {
            op: "apply_permutation",
            detail: format!("permutation over {} vs dim {}", perm.perm.len(), ds.dim),
        });
    }
    let mut images = vec![0.0; ds.images.len()];
    for i in 0..ds.len() {
        let src = ds.image(i);
        let dst = &mut images[i * ds.dim..(i + 1) * ds.dim];
        perm.apply_row(src, dst);
    }
    Ok(ImageDataset {
        images,
        dim: ds.dim,
        labels: ds.labels.clone(),
        n_classes: ds.n_classes,
        tag: format!("{}-task{}", ds.tag, perm.task_index),
    })
}
