//! The experiment run loop: stream, learn, evaluate, persist.
//!
//! A run is fully determined by its config. Task data is shared immutably;
//! permutations are applied lazily per example so two hundred permuted
//! copies of the training set never exist in memory. Evaluation random
//! streams are keyed by the record index, so a resumed run replays the
//! identical evaluations it would have produced uninterrupted.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    load_feature_csv, load_idx, make_permutation, resolve_dataset_file, standardize,
    ImageDataset, PermutationTask, StreamConfig, StreamItem, StreamPlan,
};
use crate::error::{CoreError, Result};
use crate::exec;
use crate::network::{det_probs, predictive_prob_samples, DeterministicNetwork, MeanFieldNetwork};
use crate::rng::RngStream;
use crate::tensor::Tensor2;
use crate::uncertainty::{
    roc_auc, uncertainty_triples, UncertaintyRow, UncertaintyTriple,
};

use super::config::{Algorithm, DatasetKind, EvalCadence, ExperimentConfig};
use super::learner::Learner;
use super::metrics::{
    write_metrics_jsonl, write_summary_csv, MetricsRecord,
};

/// Stream id bases keeping independent random consumers apart.
const STREAM_EVAL_BASE: u64 = 1 << 32;
const STREAM_SUBSET_BASE: u64 = 1 << 33;
const STREAM_OOD: u64 = 1 << 34;

/// One task's train/test data, with lazy permutation.
pub struct TaskData {
    train: Arc<ImageDataset>,
    test: Arc<ImageDataset>,
    perm: Option<PermutationTask>,
    /// Indices into `train` used by the stream (subset prefix).
    train_indices: Vec<usize>,
    /// Indices into `test` used for evaluation.
    eval_indices: Vec<usize>,
}

impl TaskData {
    pub fn n_train(&self) -> usize {
        self.train_indices.len()
    }

    /// Copies (permuted) example `i` of the training subset into `out`;
    /// returns its label.
    pub fn train_example(&self, i: usize, out: &mut [f64]) -> usize {
        let idx = self.train_indices[i];
        let src = self.train.image(idx);
        match &self.perm {
            Some(p) => p.apply_row(src, out),
            None => out.copy_from_slice(src),
        }
        self.train.labels[idx] as usize
    }

    /// Materializes the evaluation batch (inputs, labels).
    pub fn eval_batch(&self) -> (Tensor2, Vec<usize>) {
        self.batch_from(&self.test, &self.eval_indices)
    }

    /// Materializes up to `cap` training examples for consolidation passes.
    pub fn consolidation_batch(&self, cap: usize) -> (Tensor2, Vec<usize>) {
        let take: Vec<usize> = self.train_indices[..self.n_train().min(cap)].to_vec();
        self.batch_from(&self.train, &take)
    }

    fn batch_from(&self, ds: &ImageDataset, indices: &[usize]) -> (Tensor2, Vec<usize>) {
        let mut x = Tensor2::zeros(indices.len(), ds.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            let src = ds.image(i);
            let dst = x.row_mut(r);
            match &self.perm {
                Some(p) => p.apply_row(src, dst),
                None => dst.copy_from_slice(src),
            }
            labels.push(ds.labels[i] as usize);
        }
        (x, labels)
    }
}

/// Run outputs manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub algorithm: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: super::config::Seeds,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub output_files: Vec<String>,
    pub sigma_floor_hits: u64,
    pub final_mean_accuracy: f64,
}

/// A fully materialized, steppable experiment.
pub struct ExperimentRun {
    pub cfg: ExperimentConfig,
    tasks: Vec<TaskData>,
    ood_pool: Option<(Tensor2, Vec<usize>)>,
    pub learner: Learner,
    plan: StreamPlan,
    /// Stream items consumed so far (batches and boundaries).
    pub items_consumed: u64,
    pub batches_consumed: u64,
    pub records: Vec<MetricsRecord>,
    loss_accum: f64,
    loss_count: u64,
    last_epoch_seen: usize,
    scratch_x: Vec<f64>,
    started: Instant,
}

fn unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Loads, standardizes, and subsets the datasets a config needs.
fn build_tasks(cfg: &ExperimentConfig, data_root: &Path) -> Result<Vec<TaskData>> {
    let input_dim = cfg.network.layer_sizes[0];
    match cfg.stream.dataset {
        DatasetKind::Mnist | DatasetKind::PermutedMnist | DatasetKind::FashionMnist => {
            let base = match cfg.stream.dataset {
                DatasetKind::FashionMnist => "fashion-mnist",
                _ => "mnist",
            };
            let (train, test) = load_idx_pair(data_root, base)?;
            if train.dim != input_dim {
                return Err(CoreError::Config(format!(
                    "dataset dim {} vs network input {input_dim}",
                    train.dim
                )));
            }
            let (train_std, stats) = standardize(&train, None)?;
            let (test_std, _) = standardize(&test, Some(stats))?;
            let train_arc = Arc::new(train_std);
            let test_arc = Arc::new(test_std);
            let tasks = (0..cfg.stream.num_tasks)
                .map(|t| {
                    let perm = match cfg.stream.dataset {
                        DatasetKind::PermutedMnist => {
                            let p = make_permutation(cfg.seeds.data, t, input_dim);
                            if p.is_identity() {
                                None
                            } else {
                                Some(p)
                            }
                        }
                        _ => None,
                    };
                    TaskData {
                        train_indices: subset_indices(
                            train_arc.len(),
                            cfg.stream.train_subset,
                            cfg.seeds.data,
                            STREAM_SUBSET_BASE + t as u64,
                        ),
                        eval_indices: subset_indices(
                            test_arc.len(),
                            cfg.stream.eval_subset,
                            cfg.seeds.data,
                            STREAM_SUBSET_BASE + (1 << 16) + t as u64,
                        ),
                        train: Arc::clone(&train_arc),
                        test: Arc::clone(&test_arc),
                        perm,
                    }
                })
                .collect();
            Ok(tasks)
        }
        DatasetKind::FeatureCsv => {
            let mut tasks = Vec::with_capacity(cfg.stream.num_tasks);
            for t in 0..cfg.stream.num_tasks {
                let train = feature_as_images(load_feature_csv(&cfg.stream.train_csvs[t])?);
                let test = feature_as_images(load_feature_csv(&cfg.stream.test_csvs[t])?);
                if train.dim != input_dim {
                    return Err(CoreError::Config(format!(
                        "feature dim {} vs network input {input_dim}",
                        train.dim
                    )));
                }
                tasks.push(TaskData {
                    train_indices: subset_indices(
                        train.len(),
                        cfg.stream.train_subset,
                        cfg.seeds.data,
                        STREAM_SUBSET_BASE + t as u64,
                    ),
                    eval_indices: subset_indices(
                        test.len(),
                        cfg.stream.eval_subset,
                        cfg.seeds.data,
                        STREAM_SUBSET_BASE + (1 << 16) + t as u64,
                    ),
                    train: Arc::new(train),
                    test: Arc::new(test),
                    perm: None,
                });
            }
            Ok(tasks)
        }
    }
}

/// Feature vectors reuse the image-dataset container (same shape contract).
fn feature_as_images(f: crate::data::FeatureVectorDataset) -> ImageDataset {
    ImageDataset {
        images: f.vectors,
        dim: f.dim,
        labels: f.labels,
        n_classes: f.n_classes,
        tag: f.tag,
    }
}

fn load_idx_pair(root: &Path, base: &str) -> Result<(ImageDataset, ImageDataset)> {
    let resolve = |rel: String| {
        resolve_dataset_file(root, &rel)
            .ok_or_else(|| CoreError::MissingFile(root.join(rel)))
    };
    let train = load_idx(
        &resolve(format!("{base}/train-images-idx3-ubyte"))?,
        &resolve(format!("{base}/train-labels-idx1-ubyte"))?,
    )?;
    let test = load_idx(
        &resolve(format!("{base}/t10k-images-idx3-ubyte"))?,
        &resolve(format!("{base}/t10k-labels-idx1-ubyte"))?,
    )?;
    Ok((train, test))
}

/// First `cap` positions of a seeded shuffle (or identity order when no cap).
fn subset_indices(n: usize, cap: Option<usize>, seed: u64, stream: u64) -> Vec<usize> {
    match cap {
        None => (0..n).collect(),
        Some(cap) => {
            let cap = cap.min(n);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = RngStream::new(seed, stream);
            for i in (1..n).rev() {
                let j = rng.next_below(i + 1);
                order.swap(i, j);
            }
            order.truncate(cap);
            order
        }
    }
}

/// Accuracy of a mean-field network on one batch: argmax of MC-mean probs.
pub fn accuracy_mean_field(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    labels: &[usize],
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let samples = predictive_prob_samples(net, x, n_samples, rng)?;
    let k = net.spec.output_dim();
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let mut mean = vec![0.0; k];
        for s in &samples {
            for (m, &p) in mean.iter_mut().zip(s.row(i)) {
                *m += p;
            }
        }
        if argmax(&mean) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / x.rows() as f64)
}

/// Accuracy of a deterministic network on one batch.
pub fn accuracy_det(net: &DeterministicNetwork, x: &Tensor2, labels: &[usize]) -> Result<f64> {
    let probs = det_probs(net, x)?;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if argmax(probs.row(i)) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / x.rows() as f64)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Evaluates a learner on every task's evaluation subset.
///
/// Tasks are scored in parallel; each task owns an rng substream keyed by
/// `(record, task)`, so results are independent of scheduling.
pub fn evaluate_all_tasks(
    learner: &Learner,
    tasks: &[TaskData],
    n_samples: usize,
    sampling_seed: u64,
    record_index: u64,
) -> Result<Vec<f64>> {
    let results: Vec<Result<f64>> = exec::map_indexed(tasks.len(), |t| {
        let (x, labels) = tasks[t].eval_batch();
        let mut rng = RngStream::new(
            sampling_seed,
            STREAM_EVAL_BASE + record_index * 4096 + t as u64,
        );
        match learner {
            Learner::MeanField(m) => {
                accuracy_mean_field(&m.net, &x, &labels, n_samples, &mut rng)
            }
            Learner::Det(d) => accuracy_det(&d.to_network(), &x, &labels),
        }
    });
    results.into_iter().collect()
}

impl ExperimentRun {
    pub fn new(cfg: ExperimentConfig, data_root: &Path) -> Result<ExperimentRun> {
        cfg.validate()?;
        let tasks = build_tasks(&cfg, data_root)?;
        let ood_pool = match &cfg.ood {
            Some(ood) => {
                let base = match ood.dataset {
                    DatasetKind::FashionMnist => "fashion-mnist",
                    DatasetKind::Mnist => "mnist",
                    _ => {
                        return Err(CoreError::Config(
                            "ood.dataset must be an IDX dataset".into(),
                        ))
                    }
                };
                // OOD inputs go through the pipeline of the in-distribution
                // training data: same standardization statistics.
                let (id_train, _) = load_idx_pair(data_root, "mnist")?;
                let (_, stats) = standardize(&id_train, None)?;
                let (_, ood_test) = load_idx_pair(data_root, base)?;
                let (ood_std, _) = standardize(&ood_test, Some(stats))?;
                let indices = subset_indices(
                    ood_std.len(),
                    Some(ood.eval_subset),
                    cfg.seeds.data,
                    STREAM_OOD,
                );
                let mut x = Tensor2::zeros(indices.len(), ood_std.dim);
                let mut labels = Vec::with_capacity(indices.len());
                for (r, &i) in indices.iter().enumerate() {
                    x.row_mut(r).copy_from_slice(ood_std.image(i));
                    labels.push(ood_std.labels[i] as usize);
                }
                Some((x, labels))
            }
            None => None,
        };
        let learner = Learner::new(&cfg)?;
        let plan = StreamPlan::new(
            tasks.iter().map(|t| t.n_train()).collect(),
            StreamConfig {
                batch_size: cfg.stream.batch_size,
                epochs_per_task: cfg.stream.epochs_per_task,
                task_order: (0..cfg.stream.num_tasks).collect(),
                shuffle_seed: cfg.seeds.data,
            },
        )?;
        let input_dim = cfg.network.layer_sizes[0];
        Ok(ExperimentRun {
            cfg,
            tasks,
            ood_pool,
            learner,
            plan,
            items_consumed: 0,
            batches_consumed: 0,
            records: Vec::new(),
            loss_accum: 0.0,
            loss_count: 0,
            last_epoch_seen: 0,
            scratch_x: vec![0.0; input_dim],
            started: Instant::now(),
        })
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    /// Processes stream items until exhaustion or `max_items`.
    pub fn run_items(&mut self, max_items: Option<u64>) -> Result<()> {
        let mut processed = 0u64;
        while let Some(item) = self.plan.next() {
            match item {
                StreamItem::Batch {
                    task_ordinal,
                    epoch,
                    indices,
                    ..
                } => {
                    // Per-epoch cadence records at each epoch change.
                    if self.cfg.stream.eval_cadence == EvalCadence::PerEpoch
                        && epoch != self.last_epoch_seen
                    {
                        let finished_epoch = self.last_epoch_seen;
                        self.record(task_ordinal, finished_epoch)?;
                    }
                    self.last_epoch_seen = epoch;
                    for &i in &indices {
                        let label = self.tasks[task_ordinal].train_example(i, &mut self.scratch_x);
                        let out = self.learner.step(&self.scratch_x, label)?;
                        self.loss_accum += out.loss;
                        self.loss_count += 1;
                    }
                    self.batches_consumed += 1;
                }
                StreamItem::TaskBoundary { task_ordinal, .. } => {
                    let needs_data = matches!(
                        (&self.learner, self.cfg.algorithm),
                        (Learner::Det(_), Algorithm::EwcOnline)
                    );
                    if self.cfg.algorithm.uses_boundaries() {
                        if needs_data {
                            let cap = self.cfg.ewc_online.consolidation_cap;
                            let (x, labels) = self.tasks[task_ordinal].consolidation_batch(cap);
                            self.learner.on_task_boundary(Some((&x, &labels)))?;
                        } else {
                            self.learner.on_task_boundary(None)?;
                        }
                    }
                    // Record at boundaries: last epoch of the finished task.
                    let final_epoch = self.cfg.stream.epochs_per_task - 1;
                    self.record(task_ordinal, final_epoch)?;
                    self.last_epoch_seen = 0;
                }
            }
            self.items_consumed += 1;
            processed += 1;
            if let Some(max) = max_items {
                if processed >= max {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Runs the stream to completion.
    pub fn run_to_end(&mut self) -> Result<()> {
        self.run_items(None)
    }

    fn record(&mut self, task_ordinal: usize, epoch: usize) -> Result<()> {
        let record_index = self.records.len() as u64;
        let accuracies = evaluate_all_tasks(
            &self.learner,
            &self.tasks,
            self.cfg.mc.eval_samples,
            self.cfg.seeds.sampling,
            record_index,
        )?;
        let roc = match (&self.ood_pool, &self.learner) {
            (Some((ood_x, _)), Learner::MeanField(m)) => {
                let (id_x, _) = self.tasks[task_ordinal].eval_batch();
                Some(self.epistemic_roc(&m.net, &id_x, ood_x, record_index)?)
            }
            _ => None,
        };
        let loss_avg = if self.loss_count > 0 {
            self.loss_accum / self.loss_count as f64
        } else {
            f64::NAN
        };
        self.loss_accum = 0.0;
        self.loss_count = 0;
        self.records.push(MetricsRecord {
            step: self.batches_consumed,
            task_ordinal,
            epoch,
            accuracies,
            mean_sigma_per_layer: self.learner.mean_sigma_per_layer(),
            loss_avg,
            roc_auc: roc,
            wall_clock_ms: self.started.elapsed().as_millis() as u64,
        });
        Ok(())
    }

    fn epistemic_roc(
        &self,
        net: &MeanFieldNetwork,
        id_x: &Tensor2,
        ood_x: &Tensor2,
        record_index: u64,
    ) -> Result<f64> {
        let mut rng_id = RngStream::new(
            self.cfg.seeds.sampling,
            STREAM_OOD + 2 * record_index + 1,
        );
        let mut rng_ood = RngStream::new(
            self.cfg.seeds.sampling,
            STREAM_OOD + 2 * record_index + 2,
        );
        let id = uncertainty_triples(net, id_x, self.cfg.mc.eval_samples, &mut rng_id)?;
        let ood = uncertainty_triples(net, ood_x, self.cfg.mc.eval_samples, &mut rng_ood)?;
        let id_scores: Vec<f64> = id.iter().map(|t| t.epistemic).collect();
        let ood_scores: Vec<f64> = ood.iter().map(|t| t.epistemic).collect();
        roc_auc(&id_scores, &ood_scores)
    }

    /// Uncertainty rows over the final task's eval subset and the OOD pool.
    fn uncertainty_rows(&self) -> Result<Option<Vec<UncertaintyRow>>> {
        let (ood_x, ood_labels) = match &self.ood_pool {
            Some(p) => p,
            None => return Ok(None),
        };
        let net = match &self.learner {
            Learner::MeanField(m) => &m.net,
            Learner::Det(_) => return Ok(None),
        };
        let last = self.tasks.len() - 1;
        let (id_x, id_labels) = self.tasks[last].eval_batch();
        let mut rng_id = RngStream::new(self.cfg.seeds.sampling, STREAM_OOD + (1 << 20));
        let mut rng_ood = RngStream::new(self.cfg.seeds.sampling, STREAM_OOD + (1 << 20) + 1);
        let id = uncertainty_triples(net, &id_x, self.cfg.mc.eval_samples, &mut rng_id)?;
        let ood = uncertainty_triples(net, ood_x, self.cfg.mc.eval_samples, &mut rng_ood)?;
        let mut rows = Vec::with_capacity(id.len() + ood.len());
        let push = |rows: &mut Vec<UncertaintyRow>,
                    triples: &[UncertaintyTriple],
                    labels: &[usize],
                    tag: &str| {
            for (i, t) in triples.iter().enumerate() {
                rows.push(UncertaintyRow {
                    input_index: i,
                    total: t.total,
                    aleatoric: t.aleatoric,
                    epistemic: t.epistemic,
                    label: labels[i],
                    dataset_tag: tag.to_string(),
                });
            }
        };
        push(&mut rows, &id, &id_labels, "in-distribution");
        push(&mut rows, &ood, ood_labels, "out-of-distribution");
        Ok(Some(rows))
    }

    /// Writes metrics.jsonl, summary.csv, uncertainty.csv, manifest.json.
    pub fn write_outputs(&self, out_dir: &Path) -> Result<RunManifest> {
        std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
        let mut files = Vec::new();
        let metrics_path = out_dir.join("metrics.jsonl");
        write_metrics_jsonl(&metrics_path, &self.records)?;
        files.push("metrics.jsonl".to_string());
        if let Some(last) = self.records.last() {
            let summary_path = out_dir.join("summary.csv");
            write_summary_csv(&summary_path, last)?;
            files.push("summary.csv".to_string());
        }
        if let Some(rows) = self.uncertainty_rows()? {
            let unc_path = out_dir.join("uncertainty.csv");
            crate::uncertainty::write_uncertainty_csv(&unc_path, &rows)?;
            files.push("uncertainty.csv".to_string());
        }
        let final_mean_accuracy = self
            .records
            .last()
            .map(|r| r.accuracies.iter().sum::<f64>() / r.accuracies.len().max(1) as f64)
            .unwrap_or(f64::NAN);
        let sigma_floor_hits = match &self.learner {
            Learner::MeanField(m) => m.sigma_floor_hits,
            Learner::Det(_) => 0,
        };
        let manifest = RunManifest {
            name: self.cfg.name.clone(),
            algorithm: self.cfg.algorithm.name().to_string(),
            config_hash: self.cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: self.cfg.seeds,
            started_unix_ms: unix_ms().saturating_sub(self.started.elapsed().as_millis() as u64),
            finished_unix_ms: unix_ms(),
            output_files: files,
            sigma_floor_hits,
            final_mean_accuracy,
        };
        let manifest_path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&manifest_path, json).map_err(|e| CoreError::io(&manifest_path, e))?;
        Ok(manifest)
    }

    /// Internal loss accumulator state, exposed for checkpointing.
    pub fn loss_state(&self) -> (f64, u64) {
        (self.loss_accum, self.loss_count)
    }

    /// Swaps in a checkpointed learner.
    pub fn restore_learner(
        &mut self,
        state: super::checkpoint::LearnerState,
    ) -> Result<()> {
        use super::checkpoint::LearnerState;
        self.learner = match state {
            LearnerState::MeanField {
                net,
                rule,
                sampling_rng,
                sigma_floor_hits,
            } => Learner::MeanField(Box::new(super::learner::MfLearner::from_state(
                &self.cfg,
                net,
                rule,
                sampling_rng,
                sigma_floor_hits,
            )?)),
            LearnerState::Det {
                net, rule, alpha, ..
            } => Learner::Det(Box::new(super::learner::DetLearner::from_state(
                &self.cfg, &net, rule, alpha,
            )?)),
        };
        Ok(())
    }

    /// Restores progress counters and replays the stream cursor.
    pub fn restore_progress(
        &mut self,
        items: u64,
        records: Vec<MetricsRecord>,
        loss_accum: f64,
        loss_count: u64,
    ) {
        self.records = records;
        self.loss_accum = loss_accum;
        self.loss_count = loss_count;
        self.seek_items(items);
    }

    /// Replays the stream cursor to a checkpointed position.
    pub(crate) fn seek_items(&mut self, items: u64) {
        let mut fresh = StreamPlan::new(
            self.tasks.iter().map(|t| t.n_train()).collect(),
            StreamConfig {
                batch_size: self.cfg.stream.batch_size,
                epochs_per_task: self.cfg.stream.epochs_per_task,
                task_order: (0..self.cfg.stream.num_tasks).collect(),
                shuffle_seed: self.cfg.seeds.data,
            },
        )
        .expect("plan was valid at construction");
        let mut batches = 0u64;
        let mut last_epoch = 0usize;
        for _ in 0..items {
            match fresh.next() {
                Some(StreamItem::Batch { epoch, .. }) => {
                    batches += 1;
                    last_epoch = epoch;
                }
                Some(StreamItem::TaskBoundary { .. }) => {
                    last_epoch = 0;
                }
                None => break,
            }
        }
        self.plan = fresh;
        self.items_consumed = items;
        self.batches_consumed = batches;
        self.last_epoch_seen = last_epoch;
    }
}

/// Convenience entry point: build, run to completion, write outputs.
pub fn run_experiment(
    cfg: ExperimentConfig,
    data_root: &Path,
    out_dir: &Path,
) -> Result<RunManifest> {
    let mut run = ExperimentRun::new(cfg, data_root)?;
    match run.run_to_end() {
        Ok(()) => run.write_outputs(out_dir),
        Err(err) => {
            // Numeric divergence rejects the update, so current parameters
            // are the last good state; park them for post-mortem.
            std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
            let ckpt_path = out_dir.join("checkpoint-abort.json");
            if let Ok(ckpt) = super::checkpoint::Checkpoint::capture(&run) {
                let _ = ckpt.save(&ckpt_path);
            }
            Err(err)
        }
    }
}

/// Default dataset root: `$MESU_DATA_DIR` or `./data`.
pub fn default_data_root() -> PathBuf {
    std::env::var_os("MESU_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}
