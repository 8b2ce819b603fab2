//! Versioned run checkpoints: config, parameters, optimizer state, random
//! streams, and the stream cursor. JSON with full-precision floats, so a
//! round trip is lossless and a resumed run is bitwise identical to an
//! uninterrupted one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::{DeterministicNetwork, MeanFieldNetwork, NetworkSpec};
use crate::rng::RngStream;

use super::config::ExperimentConfig;
use super::learner::{DetRule, Learner, MfRule};
use super::metrics::MetricsRecord;
use super::runner::ExperimentRun;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LearnerState {
    MeanField {
        net: MeanFieldNetwork,
        rule: MfRule,
        sampling_rng: RngStream,
        sigma_floor_hits: u64,
    },
    Det {
        spec: NetworkSpec,
        net: DeterministicNetwork,
        rule: DetRule,
        alpha: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    /// Stream items (batches and boundaries) fully processed.
    pub items_consumed: u64,
    pub batches_consumed: u64,
    pub learner: LearnerState,
    pub records: Vec<MetricsRecord>,
    pub loss_accum: f64,
    pub loss_count: u64,
}

impl Checkpoint {
    /// Snapshots a run between stream items.
    pub fn capture(run: &ExperimentRun) -> Result<Checkpoint> {
        let learner = match &run.learner {
            Learner::MeanField(m) => LearnerState::MeanField {
                net: m.net.clone(),
                rule: m.rule.clone(),
                sampling_rng: m.sampling_rng.clone(),
                sigma_floor_hits: m.sigma_floor_hits,
            },
            Learner::Det(d) => LearnerState::Det {
                spec: d.spec.clone(),
                net: d.to_network(),
                rule: d.rule.clone(),
                alpha: d.alpha,
            },
        };
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: run.cfg.hash(),
            config: run.cfg.clone(),
            items_consumed: run.items_consumed,
            batches_consumed: run.batches_consumed,
            learner,
            records: run.records.clone(),
            loss_accum: run.loss_state().0,
            loss_count: run.loss_state().1,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CoreError::MissingFile(path.to_path_buf())
            } else {
                CoreError::io(path, e)
            }
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CoreError::Config(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.config_hash != ckpt.config.hash() {
            return Err(CoreError::Config(
                "checkpoint config hash does not match its config".into(),
            ));
        }
        Ok(ckpt)
    }

    /// Rebuilds a runnable experiment positioned exactly where the
    /// checkpoint was taken.
    pub fn resume(self, data_root: &Path) -> Result<ExperimentRun> {
        let mut run = ExperimentRun::new(self.config, data_root)?;
        run.restore_learner(self.learner)?;
        run.restore_progress(
            self.items_consumed,
            self.records,
            self.loss_accum,
            self.loss_count,
        );
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Algorithm;

    #[test]
    fn version_and_hash_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::desk_permuted_mnist(Algorithm::Sgd, 1);
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION + 5,
            config_hash: cfg.hash(),
            config: cfg,
            items_consumed: 0,
            batches_consumed: 0,
            learner: LearnerState::Det {
                spec: NetworkSpec::new(vec![2, 2], crate::network::Flavor::Deterministic)
                    .unwrap(),
                net: DeterministicNetwork {
                    spec: NetworkSpec::new(vec![2, 2], crate::network::Flavor::Deterministic)
                        .unwrap(),
                    layers: vec![],
                },
                rule: DetRule::Sgd,
                alpha: 0.1,
            },
            records: vec![],
            loss_accum: 0.0,
            loss_count: 0,
        };
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
