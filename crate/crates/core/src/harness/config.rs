//! Experiment configuration: a strict TOML schema with embedded defaults.
//!
//! Unknown keys are rejected everywhere. Per-algorithm hyperparameter tables
//! default to the streaming MNIST benchmark values, so a config only has to
//! name the algorithm and the protocol it runs on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::network::{Flavor, InitScheme, NetworkSpec, Reduction};
use crate::optim::MesuConfig;

/// Update rule driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Mesu,
    Foovb,
    BnnSgd,
    Sgd,
    EwcOnline,
    EwcStream,
    Si,
}

impl Algorithm {
    pub fn flavor(self) -> Flavor {
        match self {
            Algorithm::Mesu | Algorithm::Foovb | Algorithm::BnnSgd => Flavor::MeanField,
            _ => Flavor::Deterministic,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mesu => "mesu",
            Algorithm::Foovb => "foovb",
            Algorithm::BnnSgd => "bnn-sgd",
            Algorithm::Sgd => "sgd",
            Algorithm::EwcOnline => "ewc-online",
            Algorithm::EwcStream => "ewc-stream",
            Algorithm::Si => "si",
        }
    }

    /// Whether the algorithm consumes task-boundary events.
    pub fn uses_boundaries(self) -> bool {
        matches!(self, Algorithm::EwcOnline | Algorithm::Si)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    #[serde(default = "default_init")]
    pub init: InitScheme,
}

fn default_init() -> InitScheme {
    InitScheme::Mnist
}

/// Which data feeds the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    PermutedMnist,
    FashionMnist,
    FeatureCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalCadence {
    PerTask,
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSettings {
    pub dataset: DatasetKind,
    #[serde(default = "default_num_tasks")]
    pub num_tasks: usize,
    #[serde(default = "default_one")]
    pub epochs_per_task: usize,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    /// Cap on training examples per task (prefix of a seeded shuffle);
    /// absent means the full training set.
    #[serde(default)]
    pub train_subset: Option<usize>,
    /// Cap on test examples per task used in periodic evaluation.
    #[serde(default)]
    pub eval_subset: Option<usize>,
    #[serde(default = "default_cadence")]
    pub eval_cadence: EvalCadence,
    #[serde(default)]
    pub loss_reduction: Reduction,
    /// Task CSVs when `dataset = "feature-csv"`: one train/test pair per task.
    #[serde(default)]
    pub train_csvs: Vec<PathBuf>,
    #[serde(default)]
    pub test_csvs: Vec<PathBuf>,
}

fn default_num_tasks() -> usize {
    10
}

fn default_one() -> usize {
    1
}

fn default_cadence() -> EvalCadence {
    EvalCadence::PerTask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub data: u64,
    pub sampling: u64,
}

impl Seeds {
    /// Derives the three seeds from one master seed.
    pub fn from_master(master: u64) -> Seeds {
        let mut rng = crate::rng::RngStream::new(master, 0x5eed);
        Seeds {
            init: rng.next_u64(),
            data: rng.next_u64(),
            sampling: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    #[serde(default = "default_train_samples")]
    pub eval_samples: usize,
}

fn default_train_samples() -> usize {
    10
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            train_samples: 10,
            eval_samples: 10,
        }
    }
}

/// Out-of-distribution scoring settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSettings {
    pub dataset: DatasetKind,
    #[serde(default = "default_ood_subset")]
    pub eval_subset: usize,
}

fn default_ood_subset() -> usize {
    2000
}

// Per-algorithm hyperparameters; defaults are the streaming MNIST values.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesuParams {
    #[serde(default = "default_mesu_n")]
    pub n: f64,
    #[serde(default)]
    pub mu_prior: f64,
    #[serde(default = "default_one_f")]
    pub sigma_prior: f64,
    #[serde(default = "default_one_f")]
    pub alpha_mu: f64,
    #[serde(default = "default_one_f")]
    pub alpha_sigma: f64,
}

fn default_mesu_n() -> f64 {
    300_000.0
}

fn default_one_f() -> f64 {
    1.0
}

impl Default for MesuParams {
    fn default() -> Self {
        MesuParams {
            n: 300_000.0,
            mu_prior: 0.0,
            sigma_prior: 1.0,
            alpha_mu: 1.0,
            alpha_sigma: 1.0,
        }
    }
}

impl MesuParams {
    pub fn to_config(self) -> MesuConfig {
        MesuConfig {
            n: self.n,
            mu_prior: self.mu_prior,
            sigma_prior: self.sigma_prior,
            alpha_mu: self.alpha_mu,
            alpha_sigma: self.alpha_sigma,
            sigma_floor: 1e-6 * self.sigma_prior,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoovbParams {
    #[serde(default = "default_one_f")]
    pub alpha_mu: f64,
    #[serde(default = "default_one_f")]
    pub alpha_sigma: f64,
    /// Floor keeps sigma positive over very long no-forgetting streams.
    #[serde(default = "default_foovb_floor")]
    pub sigma_floor: f64,
}

fn default_foovb_floor() -> f64 {
    1e-6
}

impl Default for FoovbParams {
    fn default() -> Self {
        FoovbParams {
            alpha_mu: 1.0,
            alpha_sigma: 1.0,
            sigma_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnnSgdParams {
    #[serde(default = "default_sgd_alpha")]
    pub alpha: f64,
    #[serde(default = "default_foovb_floor")]
    pub sigma_floor: f64,
}

impl Default for BnnSgdParams {
    fn default() -> Self {
        BnnSgdParams {
            alpha: 0.002,
            sigma_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdParams {
    #[serde(default = "default_sgd_alpha")]
    pub alpha: f64,
}

fn default_sgd_alpha() -> f64 {
    0.002
}

impl Default for SgdParams {
    fn default() -> Self {
        SgdParams { alpha: 0.002 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EwcParams {
    #[serde(default = "default_sgd_alpha")]
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default = "default_gamma_down")]
    pub gamma_down: f64,
    /// Consolidation pass size cap at a task boundary (online mode).
    #[serde(default = "default_consolidation_cap")]
    pub consolidation_cap: usize,
}

fn default_gamma_down() -> f64 {
    0.2
}

fn default_consolidation_cap() -> usize {
    10_000
}

impl EwcParams {
    pub fn online_defaults() -> Self {
        EwcParams {
            alpha: 0.002,
            lambda: 2.0,
            gamma_down: 0.2,
            consolidation_cap: 10_000,
        }
    }

    pub fn stream_defaults() -> Self {
        EwcParams {
            alpha: 0.002,
            lambda: 5.0,
            gamma_down: 0.2,
            consolidation_cap: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiParams {
    #[serde(default = "default_si_alpha")]
    pub alpha: f64,
    #[serde(default = "default_si_c")]
    pub c: f64,
    #[serde(default = "default_si_damping")]
    pub damping: f64,
}

fn default_si_alpha() -> f64 {
    0.005
}

fn default_si_c() -> f64 {
    1e-9
}

fn default_si_damping() -> f64 {
    1e-3
}

impl Default for SiParams {
    fn default() -> Self {
        SiParams {
            alpha: 0.005,
            c: 1e-9,
            damping: 1e-3,
        }
    }
}

/// Top-level experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub algorithm: Algorithm,
    pub network: NetworkConfig,
    pub stream: StreamSettings,
    pub seeds: Seeds,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub ood: Option<OodSettings>,
    #[serde(default)]
    pub mesu: MesuParams,
    #[serde(default)]
    pub foovb: FoovbParams,
    #[serde(default)]
    pub bnn_sgd: BnnSgdParams,
    #[serde(default)]
    pub sgd: SgdParams,
    #[serde(default = "EwcParams::online_defaults")]
    pub ewc_online: EwcParams,
    #[serde(default = "EwcParams::stream_defaults")]
    pub ewc_stream: EwcParams,
    #[serde(default)]
    pub si: SiParams,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CoreError::MissingFile(path.to_path_buf())
            } else {
                CoreError::io(path, e)
            }
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.stream.num_tasks == 0 {
            return Err(CoreError::Config("stream.num_tasks must be >= 1".into()));
        }
        if self.stream.batch_size == 0 || self.stream.epochs_per_task == 0 {
            return Err(CoreError::Config(
                "stream.batch_size and stream.epochs_per_task must be >= 1".into(),
            ));
        }
        if self.network.layer_sizes.len() < 2 || self.network.layer_sizes.contains(&0) {
            return Err(CoreError::Config(format!(
                "network.layer_sizes invalid: {:?}",
                self.network.layer_sizes
            )));
        }
        if self.mc.train_samples == 0 || self.mc.eval_samples == 0 {
            return Err(CoreError::Config("mc sample counts must be >= 1".into()));
        }
        if self.stream.dataset == DatasetKind::FeatureCsv
            && (self.stream.train_csvs.len() != self.stream.num_tasks
                || self.stream.test_csvs.len() != self.stream.num_tasks)
        {
            {
                return Err(CoreError::Config(format!(
                    "feature-csv needs {} train and test csvs",
                    self.stream.num_tasks
                )));
            }
        }
        if self.algorithm == Algorithm::Mesu {
            self.mesu.to_config().validate()?;
        }
        Ok(())
    }

    /// Network spec implied by algorithm flavor.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.network.layer_sizes.clone(), self.algorithm.flavor())
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest.as_slice() {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Desk-scale Permuted MNIST protocol: 10 tasks, batch one, one epoch
    /// per task over a 20000-example prefix of each permutation, with
    /// 1000-example evaluation subsets. The memory window keeps the
    /// full-scale five-task horizon (5 x 20000 = 100000); every other
    /// hyperparameter keeps its full-scale default.
    pub fn desk_permuted_mnist(algorithm: Algorithm, master_seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            name: format!("pmnist-desk-{}", algorithm.name()),
            algorithm,
            network: NetworkConfig {
                layer_sizes: vec![784, 50, 10],
                init: InitScheme::Mnist,
            },
            stream: StreamSettings {
                dataset: DatasetKind::PermutedMnist,
                num_tasks: 10,
                epochs_per_task: 1,
                batch_size: 1,
                train_subset: Some(20000),
                eval_subset: Some(1000),
                eval_cadence: EvalCadence::PerTask,
                loss_reduction: Reduction::Mean,
                train_csvs: Vec::new(),
                test_csvs: Vec::new(),
            },
            seeds: Seeds::from_master(master_seed),
            mc: McSettings::default(),
            ood: None,
            mesu: MesuParams {
                n: 100_000.0,
                ..MesuParams::default()
            },
            foovb: FoovbParams::default(),
            bnn_sgd: BnnSgdParams::default(),
            sgd: SgdParams::default(),
            ewc_online: EwcParams::online_defaults(),
            ewc_stream: EwcParams::stream_defaults(),
            si: SiParams::default(),
        };
        cfg.ewc_online.consolidation_cap = 10_000;
        cfg
    }

    /// Full-scale Permuted MNIST: 200 tasks over the complete training set
    /// with the literal memory window of 300000 steps. Multi-hour run.
    pub fn full_permuted_mnist(algorithm: Algorithm, master_seed: u64) -> ExperimentConfig {
        let mut cfg = Self::desk_permuted_mnist(algorithm, master_seed);
        cfg.name = format!("pmnist-full-{}", algorithm.name());
        cfg.stream.num_tasks = 200;
        cfg.stream.train_subset = None;
        cfg.stream.eval_subset = None;
        cfg.mesu.n = 300_000.0;
        cfg.ewc_online.consolidation_cap = 10_000;
        cfg
    }

    /// Desk-scale single-distribution MNIST study: one task streamed for 50
    /// epochs over a 6000-example prefix, evaluated per epoch, with
    /// Fashion-MNIST as the out-of-distribution pool. The memory window
    /// keeps the full-scale three-epoch horizon (3 x 6000 = 18000) and the
    /// MNIST prior scale of 0.06.
    pub fn desk_mnist_ood(algorithm: Algorithm, master_seed: u64) -> ExperimentConfig {
        let mut cfg = Self::desk_permuted_mnist(algorithm, master_seed);
        cfg.name = format!("mnist-ood-desk-{}", algorithm.name());
        cfg.stream.dataset = DatasetKind::Mnist;
        cfg.stream.num_tasks = 1;
        cfg.stream.epochs_per_task = 50;
        cfg.stream.train_subset = Some(6000);
        cfg.stream.eval_subset = Some(1000);
        cfg.stream.eval_cadence = EvalCadence::PerEpoch;
        cfg.mesu = MesuParams {
            n: 18_000.0,
            sigma_prior: 0.06,
            ..MesuParams::default()
        };
        cfg.ood = Some(OodSettings {
            dataset: DatasetKind::FashionMnist,
            eval_subset: 2000,
        });
        cfg
    }
}
