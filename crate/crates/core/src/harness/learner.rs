//! Unified streaming learner: one step per batch, one writer per network.
//!
//! Mean-field learners carry a fused gradient engine plus the chosen update
//! rule; deterministic learners carry flat parameters so the EWC/SI state
//! can mirror them elementwise. Boundary handling is a no-op for
//! boundary-free rules.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::fused::{DetStepper, MfStepper};
use crate::network::{
    init_deterministic, init_mean_field, DeterministicLayer, DeterministicNetwork,
    MeanFieldNetwork, NetworkSpec,
};
use crate::optim::{
    bnn_sgd_step, ewc_regularized_grad, foovb_step, mesu_step, sgd_step, si_consolidate,
    si_track_and_step, EwcState, MesuConfig, SiState,
};
use crate::rng::RngStream;
use crate::tensor::Tensor2;

use super::config::{Algorithm, ExperimentConfig};

/// Mean-field update rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MfRule {
    Mesu(MesuConfig),
    Foovb {
        alpha_mu: f64,
        alpha_sigma: f64,
        sigma_floor: f64,
    },
    BnnSgd {
        alpha: f64,
        sigma_floor: f64,
    },
}

/// Deterministic update rules with their running state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetRule {
    Sgd,
    EwcOnline { state: EwcState, consolidation_cap: usize },
    EwcStream { state: EwcState },
    Si { state: SiState },
}

pub struct MfLearner {
    pub net: MeanFieldNetwork,
    pub rule: MfRule,
    pub n_samples: usize,
    pub sampling_rng: RngStream,
    pub sigma_floor_hits: u64,
    stepper: MfStepper,
}

pub struct DetLearner {
    pub spec: NetworkSpec,
    /// Flat parameters laid out as `[w0, b0, w1, b1, ...]`.
    pub params: Vec<f64>,
    pub rule: DetRule,
    pub alpha: f64,
    stepper: DetStepper,
    grad_total: Vec<f64>,
}

pub enum Learner {
    MeanField(Box<MfLearner>),
    Det(Box<DetLearner>),
}

/// Outcome of one training step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub loss: f64,
}

impl Learner {
    /// Builds a fresh learner per the config, consuming the init stream.
    pub fn new(cfg: &ExperimentConfig) -> Result<Learner> {
        let spec = cfg.network_spec()?;
        let mut init_rng = RngStream::new(cfg.seeds.init, 0);
        match cfg.algorithm {
            Algorithm::Mesu | Algorithm::Foovb | Algorithm::BnnSgd => {
                let net = init_mean_field(&spec, cfg.network.init, &mut init_rng)?;
                let rule = match cfg.algorithm {
                    Algorithm::Mesu => {
                        let mc = cfg.mesu.to_config();
                        mc.validate()?;
                        MfRule::Mesu(mc)
                    }
                    Algorithm::Foovb => MfRule::Foovb {
                        alpha_mu: cfg.foovb.alpha_mu,
                        alpha_sigma: cfg.foovb.alpha_sigma,
                        sigma_floor: cfg.foovb.sigma_floor,
                    },
                    _ => MfRule::BnnSgd {
                        alpha: cfg.bnn_sgd.alpha,
                        sigma_floor: cfg.bnn_sgd.sigma_floor,
                    },
                };
                let stepper = MfStepper::new(&spec, cfg.mc.train_samples);
                Ok(Learner::MeanField(Box::new(MfLearner {
                    net,
                    rule,
                    n_samples: cfg.mc.train_samples,
                    sampling_rng: RngStream::new(cfg.seeds.sampling, 0),
                    sigma_floor_hits: 0,
                    stepper,
                })))
            }
            _ => {
                let net = init_deterministic(&spec, &mut init_rng)?;
                let stepper = DetStepper::new(&spec);
                let mut params = vec![0.0; stepper.param_len()];
                for (l, layer) in net.layers.iter().enumerate() {
                    params[stepper.layer_w_range(l)].copy_from_slice(layer.w.as_slice());
                    params[stepper.layer_b_range(l)].copy_from_slice(&layer.bias);
                }
                let n = params.len();
                let (rule, alpha) = match cfg.algorithm {
                    Algorithm::Sgd => (DetRule::Sgd, cfg.sgd.alpha),
                    Algorithm::EwcOnline => (
                        DetRule::EwcOnline {
                            state: EwcState::new(n, cfg.ewc_online.lambda, cfg.ewc_online.gamma_down),
                            consolidation_cap: cfg.ewc_online.consolidation_cap,
                        },
                        cfg.ewc_online.alpha,
                    ),
                    Algorithm::EwcStream => (
                        DetRule::EwcStream {
                            state: EwcState::new(n, cfg.ewc_stream.lambda, cfg.ewc_stream.gamma_down),
                        },
                        cfg.ewc_stream.alpha,
                    ),
                    Algorithm::Si => (
                        DetRule::Si {
                            state: SiState::new(n, cfg.si.c, cfg.si.damping),
                        },
                        cfg.si.alpha,
                    ),
                    _ => unreachable!("mean-field algorithms handled above"),
                };
                // EWC/SI anchors start at the initial weights.
                let mut rule = rule;
                match &mut rule {
                    DetRule::EwcOnline { state, .. } | DetRule::EwcStream { state } => {
                        state.theta_star.copy_from_slice(&params);
                    }
                    DetRule::Si { state } => {
                        state.theta_star.copy_from_slice(&params);
                    }
                    DetRule::Sgd => {}
                }
                Ok(Learner::Det(Box::new(DetLearner {
                    spec,
                    params,
                    rule,
                    alpha,
                    stepper,
                    grad_total: vec![0.0; n],
                })))
            }
        }
    }

    /// One stream step on a single example.
    pub fn step(&mut self, x: &[f64], label: usize) -> Result<StepOutcome> {
        match self {
            Learner::MeanField(m) => m.step(x, label),
            Learner::Det(d) => d.step(x, label),
        }
    }

    /// Task-boundary hook; `consolidation` provides (inputs, labels) drawn
    /// from the finished task for rules that estimate importance there.
    pub fn on_task_boundary(
        &mut self,
        consolidation: Option<(&Tensor2, &[usize])>,
    ) -> Result<()> {
        match self {
            Learner::MeanField(_) => Ok(()),
            Learner::Det(d) => d.on_task_boundary(consolidation),
        }
    }

    pub fn mean_sigma_per_layer(&self) -> Option<Vec<f64>> {
        match self {
            Learner::MeanField(m) => Some(m.net.mean_sigma_per_layer()),
            Learner::Det(_) => None,
        }
    }

    /// Deterministic snapshot for evaluation.
    pub fn det_network(&self) -> Option<DeterministicNetwork> {
        match self {
            Learner::Det(d) => Some(d.to_network()),
            Learner::MeanField(_) => None,
        }
    }

    pub fn mean_field_network(&self) -> Option<&MeanFieldNetwork> {
        match self {
            Learner::MeanField(m) => Some(&m.net),
            Learner::Det(_) => None,
        }
    }
}

/// Applies an elementwise update rule over fixed-size chunks, in parallel
/// when available. Chunking cannot change results: the rules carry no
/// cross-element arithmetic.
fn step_chunked<F>(
    mu: &mut [f64],
    sigma: &mut [f64],
    g_mu: &[f64],
    g_sigma: &[f64],
    rule: F,
) -> Result<usize>
where
    F: Fn(&mut [f64], &mut [f64], &[f64], &[f64]) -> Result<crate::optim::StepStats> + Sync,
{
    const CHUNK: usize = 1 << 20;
    if mu.len() <= CHUNK {
        return Ok(rule(mu, sigma, g_mu, g_sigma)?.sigma_floored);
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let counts: Vec<Result<usize>> = mu
            .par_chunks_mut(CHUNK)
            .zip(sigma.par_chunks_mut(CHUNK))
            .zip(g_mu.par_chunks(CHUNK).zip(g_sigma.par_chunks(CHUNK)))
            .map(|((m, s), (gm, gs))| Ok(rule(m, s, gm, gs)?.sigma_floored))
            .collect();
        let mut total = 0;
        for c in counts {
            total += c?;
        }
        Ok(total)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut total = 0;
        for ((m, s), (gm, gs)) in mu
            .chunks_mut(CHUNK)
            .zip(sigma.chunks_mut(CHUNK))
            .zip(g_mu.chunks(CHUNK).zip(g_sigma.chunks(CHUNK)))
        {
            total += rule(m, s, gm, gs)?.sigma_floored;
        }
        Ok(total)
    }
}

impl MfLearner {
    /// Rebuilds a learner from checkpointed components.
    pub fn from_state(
        cfg: &ExperimentConfig,
        net: MeanFieldNetwork,
        rule: MfRule,
        sampling_rng: RngStream,
        sigma_floor_hits: u64,
    ) -> Result<MfLearner> {
        let spec = cfg.network_spec()?;
        if spec.layer_sizes != net.spec.layer_sizes {
            return Err(CoreError::Config(
                "checkpoint network does not match config".into(),
            ));
        }
        Ok(MfLearner {
            stepper: MfStepper::new(&spec, cfg.mc.train_samples),
            net,
            rule,
            n_samples: cfg.mc.train_samples,
            sampling_rng,
            sigma_floor_hits,
        })
    }

    fn step(&mut self, x: &[f64], label: usize) -> Result<StepOutcome> {
        let loss = self
            .stepper
            .compute_grads(&self.net, x, label, &mut self.sampling_rng)?;
        let grads = &self.stepper.grads;
        for (l, layer) in self.net.layers.iter_mut().enumerate() {
            type ParamPair<'a> = (&'a mut [f64], &'a mut [f64], &'a [f64], &'a [f64]);
            let pairs: [ParamPair<'_>; 2] = [
                (
                    layer.mu.as_mut_slice(),
                    layer.sigma.as_mut_slice(),
                    &grads.w_mu[l],
                    &grads.w_sigma[l],
                ),
                (
                    &mut layer.bias_mu,
                    &mut layer.bias_sigma,
                    &grads.b_mu[l],
                    &grads.b_sigma[l],
                ),
            ];
            for (mu, sigma, g_mu, g_sigma) in pairs {
                let floored = match &self.rule {
                    MfRule::Mesu(cfg) => step_chunked(mu, sigma, g_mu, g_sigma, |m, s, gm, gs| {
                        mesu_step(m, s, gm, gs, cfg)
                    })?,
                    MfRule::Foovb {
                        alpha_mu,
                        alpha_sigma,
                        sigma_floor,
                    } => step_chunked(mu, sigma, g_mu, g_sigma, |m, s, gm, gs| {
                        foovb_step(m, s, gm, gs, *alpha_mu, *alpha_sigma, *sigma_floor)
                    })?,
                    MfRule::BnnSgd { alpha, sigma_floor } => {
                        step_chunked(mu, sigma, g_mu, g_sigma, |m, s, gm, gs| {
                            bnn_sgd_step(m, s, gm, gs, *alpha, *sigma_floor)
                        })?
                    }
                };
                self.sigma_floor_hits += floored as u64;
            }
        }
        Ok(StepOutcome { loss })
    }
}

impl DetLearner {
    /// Rebuilds a learner from checkpointed components.
    pub fn from_state(
        cfg: &ExperimentConfig,
        net: &DeterministicNetwork,
        rule: DetRule,
        alpha: f64,
    ) -> Result<DetLearner> {
        let spec = cfg.network_spec()?;
        if spec.layer_sizes != net.spec.layer_sizes {
            return Err(CoreError::Config(
                "checkpoint network does not match config".into(),
            ));
        }
        let stepper = DetStepper::new(&spec);
        let n = stepper.param_len();
        let mut learner = DetLearner {
            spec,
            params: vec![0.0; n],
            rule,
            alpha,
            stepper,
            grad_total: vec![0.0; n],
        };
        learner.load_network(net);
        Ok(learner)
    }

    fn step(&mut self, x: &[f64], label: usize) -> Result<StepOutcome> {
        let loss = self.stepper.compute_grads(&self.params, x, label)?;
        let grad = &self.stepper.grad;
        match &mut self.rule {
            DetRule::Sgd => {
                sgd_step(&mut self.params, grad, self.alpha)?;
            }
            DetRule::EwcOnline { state, .. } => {
                let total = ewc_regularized_grad(&self.params, grad, state)?;
                self.grad_total.copy_from_slice(&total);
                sgd_step(&mut self.params, &self.grad_total, self.alpha)?;
            }
            DetRule::EwcStream { state } => {
                let total = ewc_regularized_grad(&self.params, grad, state)?;
                self.grad_total.copy_from_slice(&total);
                sgd_step(&mut self.params, &self.grad_total, self.alpha)?;
                // Every data point is its own task: single-sample Fisher.
                for (f, g) in state.fisher.iter_mut().zip(grad) {
                    *f = state.gamma_down * *f + g * g;
                }
                state.theta_star.copy_from_slice(&self.params);
            }
            DetRule::Si { state } => {
                si_track_and_step(&mut self.params, grad, self.alpha, state)?;
            }
        }
        Ok(StepOutcome { loss })
    }

    fn on_task_boundary(&mut self, consolidation: Option<(&Tensor2, &[usize])>) -> Result<()> {
        match &mut self.rule {
            DetRule::EwcOnline { state, consolidation_cap } => {
                let (inputs, labels) = consolidation.ok_or_else(|| CoreError::InvalidArgument {
                    op: "on_task_boundary",
                    detail: "EWC online consolidation needs boundary data".into(),
                })?;
                let n = inputs.rows().min(*consolidation_cap);
                if n == 0 {
                    return Err(CoreError::InvalidArgument {
                        op: "ewc_consolidate",
                        detail: "empty consolidation sample set".into(),
                    });
                }
                // Incremental empirical Fisher: mean of squared gradients.
                let mut fisher_mean = vec![0.0; self.params.len()];
                let inv = 1.0 / n as f64;
                for (i, &label) in labels.iter().enumerate().take(n) {
                    self.stepper
                        .compute_grads(&self.params, inputs.row(i), label)?;
                    for (acc, g) in fisher_mean.iter_mut().zip(&self.stepper.grad) {
                        *acc += g * g * inv;
                    }
                }
                for (f, fresh) in state.fisher.iter_mut().zip(&fisher_mean) {
                    *f = state.gamma_down * *f + fresh;
                }
                state.theta_star.copy_from_slice(&self.params);
            }
            DetRule::Si { state } => {
                let params = self.params.clone();
                si_consolidate(state, &params)?;
            }
            DetRule::Sgd | DetRule::EwcStream { .. } => {}
        }
        Ok(())
    }

    /// Rebuilds the structured network from the flat block.
    pub fn to_network(&self) -> DeterministicNetwork {
        let layers = (0..self.spec.num_layers())
            .map(|l| DeterministicLayer {
                w: Tensor2::from_vec(
                    self.spec.layer_sizes[l + 1],
                    self.spec.layer_sizes[l],
                    self.params[self.stepper.layer_w_range(l)].to_vec(),
                )
                .expect("layout is consistent"),
                bias: self.params[self.stepper.layer_b_range(l)].to_vec(),
            })
            .collect();
        DeterministicNetwork {
            spec: self.spec.clone(),
            layers,
        }
    }

    /// Restores flat parameters from a structured network.
    pub fn load_network(&mut self, net: &DeterministicNetwork) {
        for (l, layer) in net.layers.iter().enumerate() {
            self.params[self.stepper.layer_w_range(l)].copy_from_slice(layer.w.as_slice());
            self.params[self.stepper.layer_b_range(l)].copy_from_slice(&layer.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(algorithm: Algorithm) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk_permuted_mnist(algorithm, 1);
        cfg.network.layer_sizes = vec![12, 8, 4];
        cfg
    }

    fn toy_example(seed: u64) -> (Vec<f64>, usize) {
        let mut rng = RngStream::new(seed, 0);
        let x: Vec<f64> = (0..12).map(|_| rng.next_uniform(-1.0, 1.0)).collect();
        (x, (seed % 4) as usize)
    }

    #[test]
    fn ewc_lambda_zero_matches_sgd_bitwise() {
        let mut cfg_sgd = toy_config(Algorithm::Sgd);
        cfg_sgd.sgd.alpha = 0.01;
        let mut cfg_ewc = toy_config(Algorithm::EwcOnline);
        cfg_ewc.ewc_online.lambda = 0.0;
        cfg_ewc.ewc_online.alpha = 0.01;
        let mut a = Learner::new(&cfg_sgd).unwrap();
        let mut b = Learner::new(&cfg_ewc).unwrap();
        for s in 0..200 {
            let (x, y) = toy_example(s);
            a.step(&x, y).unwrap();
            b.step(&x, y).unwrap();
        }
        match (&a, &b) {
            (Learner::Det(da), Learner::Det(db)) => {
                for (p, q) in da.params.iter().zip(&db.params) {
                    assert_eq!(p.to_bits(), q.to_bits());
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn si_c_zero_matches_sgd_bitwise() {
        let mut cfg_sgd = toy_config(Algorithm::Sgd);
        cfg_sgd.sgd.alpha = 0.005;
        let mut cfg_si = toy_config(Algorithm::Si);
        cfg_si.si.c = 0.0;
        cfg_si.si.alpha = 0.005;
        let mut a = Learner::new(&cfg_sgd).unwrap();
        let mut b = Learner::new(&cfg_si).unwrap();
        for s in 0..200 {
            let (x, y) = toy_example(s);
            a.step(&x, y).unwrap();
            b.step(&x, y).unwrap();
        }
        match (&a, &b) {
            (Learner::Det(da), Learner::Det(db)) => {
                for (p, q) in da.params.iter().zip(&db.params) {
                    assert_eq!(p.to_bits(), q.to_bits());
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mesu_learner_sigma_stays_positive() {
        let cfg = toy_config(Algorithm::Mesu);
        let mut learner = Learner::new(&cfg).unwrap();
        for s in 0..100 {
            let (x, y) = toy_example(s);
            learner.step(&x, y).unwrap();
        }
        if let Learner::MeanField(m) = &learner {
            for layer in &m.net.layers {
                assert!(layer.sigma.as_slice().iter().all(|&v| v > 0.0));
            }
        }
    }

    #[test]
    fn det_round_trip_via_network() {
        let cfg = toy_config(Algorithm::Sgd);
        let mut learner = Learner::new(&cfg).unwrap();
        let (x, y) = toy_example(3);
        learner.step(&x, y).unwrap();
        if let Learner::Det(d) = &mut learner {
            let net = d.to_network();
            let before = d.params.clone();
            d.load_network(&net);
            assert_eq!(before, d.params);
        }
    }
}
