//! The batch-of-one streaming protocol.
//!
//! Tasks are visited in order; within each task every epoch yields a fresh
//! shuffled pass over the examples in batches (default size one). A boundary
//! item follows the last batch of each task so boundary-dependent learners
//! can consolidate; boundary-free learners simply ignore those items.
//!
//! The whole schedule is a pure function of the config, so any position can
//! be recomputed from a global batch index (checkpoint resume).

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::RngStream;

/// Streaming schedule settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub batch_size: usize,
    pub epochs_per_task: usize,
    /// Order in which task indices are visited.
    pub task_order: Vec<usize>,
    pub shuffle_seed: u64,
}

impl StreamConfig {
    pub fn single_pass(num_tasks: usize, shuffle_seed: u64) -> Self {
        StreamConfig {
            batch_size: 1,
            epochs_per_task: 1,
            task_order: (0..num_tasks).collect(),
            shuffle_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs_per_task == 0 || self.task_order.is_empty() {
            return Err(CoreError::InvalidArgument {
                op: "StreamConfig",
                detail: "batch_size, epochs_per_task and task_order must be non-empty".into(),
            });
        }
        Ok(())
    }
}

/// One unit of the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamItem {
    Batch {
        /// Task identifier (value from `task_order`).
        task: usize,
        /// Position of this task in the visiting order.
        task_ordinal: usize,
        epoch: usize,
        /// Example indices into the task's training set.
        indices: Vec<usize>,
    },
    /// Emitted after the final batch of each task.
    TaskBoundary {
        task: usize,
        task_ordinal: usize,
    },
}

/// Deterministic iterator over the stream.
#[derive(Debug, Clone)]
pub struct StreamPlan {
    cfg: StreamConfig,
    task_sizes: Vec<usize>,
    // Cursor state.
    ordinal: usize,
    epoch: usize,
    offset: usize,
    boundary_pending: bool,
    current_order: Vec<usize>,
    done: bool,
}

impl StreamPlan {
    /// `task_sizes[i]` is the number of training examples of task id `i`.
    pub fn new(task_sizes: Vec<usize>, cfg: StreamConfig) -> Result<Self> {
        cfg.validate()?;
        for &t in &cfg.task_order {
            if t >= task_sizes.len() {
                return Err(CoreError::InvalidArgument {
                    op: "StreamPlan::new",
                    detail: format!("task {t} outside {} known tasks", task_sizes.len()),
                });
            }
            if task_sizes[t] == 0 {
                return Err(CoreError::InvalidArgument {
                    op: "StreamPlan::new",
                    detail: format!("task {t} is empty"),
                });
            }
        }
        let mut plan = StreamPlan {
            cfg,
            task_sizes,
            ordinal: 0,
            epoch: 0,
            offset: 0,
            boundary_pending: false,
            current_order: Vec::new(),
            done: false,
        };
        plan.load_epoch();
        Ok(plan)
    }

    /// Batches per task (all epochs), used for progress and seeking.
    pub fn batches_per_task(&self, task: usize) -> usize {
        let n = self.task_sizes[task];
        let per_epoch = n.div_ceil(self.cfg.batch_size);
        per_epoch * self.cfg.epochs_per_task
    }

    /// Total batch count of the whole stream (boundaries excluded).
    pub fn total_batches(&self) -> usize {
        self.cfg
            .task_order
            .iter()
            .map(|&t| self.batches_per_task(t))
            .sum()
    }

    fn shuffled_order(&self, task: usize, task_ordinal: usize, epoch: usize) -> Vec<usize> {
        let n = self.task_sizes[task];
        let mut order: Vec<usize> = (0..n).collect();
        // Keyed by (seed, ordinal, epoch): every pass is its own stream.
        let mut rng = RngStream::new(
            self.cfg.shuffle_seed,
            (task_ordinal as u64) << 20 | epoch as u64,
        );
        for i in (1..n).rev() {
            let j = rng.next_below(i + 1);
            order.swap(i, j);
        }
        order
    }

    fn load_epoch(&mut self) {
        if self.ordinal >= self.cfg.task_order.len() {
            self.done = true;
            return;
        }
        let task = self.cfg.task_order[self.ordinal];
        self.current_order = self.shuffled_order(task, self.ordinal, self.epoch);
        self.offset = 0;
    }

    /// Advances the cursor to just after `n_batches` batches (boundaries are
    /// replayed in place). Counting restarts from the beginning.
    pub fn seek(&mut self, n_batches: usize) {
        *self = StreamPlan::new(self.task_sizes.clone(), self.cfg.clone()).expect("valid plan");
        for _ in 0..n_batches {
            loop {
                match self.next() {
                    Some(StreamItem::Batch { .. }) => break,
                    Some(StreamItem::TaskBoundary { .. }) => continue,
                    None => return,
                }
            }
        }
    }
}

impl Iterator for StreamPlan {
    type Item = StreamItem;

    fn next(&mut self) -> Option<StreamItem> {
        if self.done {
            return None;
        }
        if self.boundary_pending {
            self.boundary_pending = false;
            let task = self.cfg.task_order[self.ordinal];
            let item = StreamItem::TaskBoundary {
                task,
                task_ordinal: self.ordinal,
            };
            self.ordinal += 1;
            self.epoch = 0;
            self.load_epoch();
            return Some(item);
        }
        let task = self.cfg.task_order[self.ordinal];
        let end = (self.offset + self.cfg.batch_size).min(self.current_order.len());
        let indices = self.current_order[self.offset..end].to_vec();
        let item = StreamItem::Batch {
            task,
            task_ordinal: self.ordinal,
            epoch: self.epoch,
            indices,
        };
        self.offset = end;
        if self.offset >= self.current_order.len() {
            self.epoch += 1;
            if self.epoch >= self.cfg.epochs_per_task {
                self.boundary_pending = true;
            } else {
                let ordinal = self.ordinal;
                let epoch = self.epoch;
                self.current_order = self.shuffled_order(task, ordinal, epoch);
                self.offset = 0;
            }
        }
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(plan: StreamPlan) -> Vec<StreamItem> {
        plan.collect()
    }

    #[test]
    fn counts_and_boundary_placement() {
        let cfg = StreamConfig {
            batch_size: 1,
            epochs_per_task: 1,
            task_order: vec![0, 1],
            shuffle_seed: 9,
        };
        let items = collect(StreamPlan::new(vec![3, 3], cfg).unwrap());
        let batches: Vec<_> = items
            .iter()
            .filter(|i| matches!(i, StreamItem::Batch { .. }))
            .collect();
        assert_eq!(batches.len(), 6);
        // Boundary right after the third batch.
        assert!(matches!(items[3], StreamItem::TaskBoundary { task: 0, .. }));
        assert!(matches!(items[7], StreamItem::TaskBoundary { task: 1, .. }));
        for item in &items {
            if let StreamItem::Batch { indices, .. } = item {
                assert_eq!(indices.len(), 1);
            }
        }
    }

    #[test]
    fn identical_configs_yield_identical_streams() {
        let cfg = StreamConfig {
            batch_size: 1,
            epochs_per_task: 2,
            task_order: vec![1, 0, 2],
            shuffle_seed: 123,
        };
        let a = collect(StreamPlan::new(vec![5, 4, 6], cfg.clone()).unwrap());
        let b = collect(StreamPlan::new(vec![5, 4, 6], cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn each_epoch_covers_every_example() {
        let cfg = StreamConfig {
            batch_size: 2,
            epochs_per_task: 3,
            task_order: vec![0],
            shuffle_seed: 7,
        };
        let items = collect(StreamPlan::new(vec![7], cfg).unwrap());
        for epoch in 0..3 {
            let mut seen: Vec<usize> = items
                .iter()
                .filter_map(|i| match i {
                    StreamItem::Batch {
                        epoch: e, indices, ..
                    } if *e == epoch => Some(indices.clone()),
                    _ => None,
                })
                .flatten()
                .collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn epochs_are_shuffled_differently() {
        let cfg = StreamConfig {
            batch_size: 1,
            epochs_per_task: 2,
            task_order: vec![0],
            shuffle_seed: 3,
        };
        let items = collect(StreamPlan::new(vec![50], cfg).unwrap());
        let epoch_order = |e: usize| -> Vec<usize> {
            items
                .iter()
                .filter_map(|i| match i {
                    StreamItem::Batch { epoch, indices, .. } if *epoch == e => {
                        Some(indices[0])
                    }
                    _ => None,
                })
                .collect()
        };
        assert_ne!(epoch_order(0), epoch_order(1));
    }

    #[test]
    fn seek_replays_to_same_position() {
        let cfg = StreamConfig {
            batch_size: 1,
            epochs_per_task: 2,
            task_order: vec![0, 1],
            shuffle_seed: 5,
        };
        let mut full = StreamPlan::new(vec![4, 3], cfg.clone()).unwrap();
        let mut skipped = 0;
        for _ in 0..6 {
            while let Some(item) = full.next() {
                if matches!(item, StreamItem::Batch { .. }) {
                    skipped += 1;
                    break;
                }
            }
        }
        let rest_full: Vec<_> = full.collect();
        let mut seeked = StreamPlan::new(vec![4, 3], cfg).unwrap();
        seeked.seek(skipped);
        let rest_seeked: Vec<_> = seeked.collect();
        assert_eq!(rest_full, rest_seeked);
    }

    #[test]
    fn empty_task_rejected() {
        let cfg = StreamConfig::single_pass(2, 1);
        assert!(StreamPlan::new(vec![3, 0], cfg).is_err());
    }
}
