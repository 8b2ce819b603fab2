//! Analytic oracles for the standard-deviation dynamics.
//!
//! Under an i.i.d. stream with constant curvature the sigma update becomes a
//! Bernoulli differential equation
//!
//! ```text
//! sigma'(t) - (gamma/N) sigma = -(gamma/N) (N*H_D + 1/sigma_prior^2) sigma^3
//! ```
//!
//! whose closed form, asymptote, and N = infinity scaling law live here,
//! together with the Hessian-diagonal estimator `H_D = (1/sigma) dC/dsigma`
//! and the closed-form KL between diagonal Gaussians. These let the optimizer
//! be validated against theory without touching real datasets.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::exec;
use crate::network::{backward_grads, forward_sample, MeanFieldNetwork, Reduction};
use crate::optim::{foovb_step, mesu_step, newton_step, MesuConfig, NewtonConfig};
use crate::rng::RngStream;
use crate::tensor::Tensor2;

/// Scalar Gaussian negative log-likelihood task:
/// `L(w) = (w - m)^2 / (2 s^2) + 1/2 log(2 pi s^2)`.
///
/// Its reduced cost under a Gaussian posterior has the exact gradients
/// `dC/dmu = (mu - m)/s^2` and `dC/dsigma = sigma/s^2`, and a constant
/// Hessian `1/s^2`, which makes it the reference workload for the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTask {
    pub target_mean: f64,
    pub scale: f64,
}

impl QuadraticTask {
    pub fn new(target_mean: f64, scale: f64) -> Result<Self> {
        if scale <= 0.0 || !scale.is_finite() {
            return Err(CoreError::InvalidArgument {
                op: "QuadraticTask::new",
                detail: format!("scale {scale}"),
            });
        }
        Ok(QuadraticTask { target_mean, scale })
    }

    pub fn loss(&self, w: f64) -> f64 {
        let d = w - self.target_mean;
        let s2 = self.scale * self.scale;
        d * d / (2.0 * s2) + 0.5 * (2.0 * std::f64::consts::PI * s2).ln()
    }

    pub fn grad(&self, w: f64) -> f64 {
        (w - self.target_mean) / (self.scale * self.scale)
    }

    pub fn hessian(&self) -> f64 {
        1.0 / (self.scale * self.scale)
    }

    /// Exact reduced-cost gradients under the posterior `N(mu, sigma^2)`.
    pub fn reduced_cost_grads(&self, mu: f64, sigma: f64) -> (f64, f64) {
        let s2 = self.scale * self.scale;
        ((mu - self.target_mean) / s2, sigma / s2)
    }
}

/// Parameters of the sigma dynamics; requires `0 < sigma0 <= sigma_prior`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub sigma0: f64,
    /// Step scale of the dynamics equation. A MESU run with multiplier
    /// `alpha_sigma` corresponds to `gamma = alpha_sigma / 2`; a Newton run
    /// with rate `g` corresponds to `gamma = g * N / 2`.
    pub gamma: f64,
    pub n: f64,
    pub hessian_diag: f64,
    pub sigma_prior: f64,
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0 <= self.sigma_prior) {
            return Err(CoreError::InvalidArgument {
                op: "DynamicsParams",
                detail: format!(
                    "requires 0 < sigma0 <= sigma_prior, got {} vs {}",
                    self.sigma0, self.sigma_prior
                ),
            });
        }
        if self.gamma <= 0.0 || self.n < 1.0 || self.hessian_diag < 0.0 {
            return Err(CoreError::InvalidArgument {
                op: "DynamicsParams",
                detail: "gamma > 0, n >= 1, hessian_diag >= 0 required".into(),
            });
        }
        Ok(())
    }

    /// Coefficient `N sigma0^2 (H_D + 1/(N sigma_prior^2))`.
    fn curvature_mass(&self) -> f64 {
        self.n
            * self.sigma0
            * self.sigma0
            * (self.hessian_diag + 1.0 / (self.n * self.sigma_prior * self.sigma_prior))
    }
}

/// Closed-form solution of the sigma dynamics:
/// `sigma(t) = sigma0 e^{gamma t/N} / sqrt(1 + N sigma0^2 (H_D + 1/(N sigma_prior^2)) (e^{2 gamma t/N} - 1))`.
pub fn closed_form_sigma(t: f64, p: &DynamicsParams) -> f64 {
    let e = (p.gamma * t / p.n).exp();
    p.sigma0 * e / (1.0 + p.curvature_mass() * (e * e - 1.0)).sqrt()
}

/// Limiting variance `(1/N) / (H_D + 1/(N sigma_prior^2))`, returned as a
/// variance (square of the terminal sigma).
pub fn sigma_asymptote(p: &DynamicsParams) -> f64 {
    (1.0 / p.n) / (p.hessian_diag + 1.0 / (p.n * p.sigma_prior * p.sigma_prior))
}

/// The no-forgetting recurrence `alpha_{t+1} = alpha_t (1 - alpha_t^2)`.
#[derive(Debug, Clone)]
pub struct AlphaSequence {
    /// `alpha_t` for `t = 0..=steps`.
    pub values: Vec<f64>,
    /// `alpha_t * sqrt(2 t)` for the same indices (zero at `t = 0`).
    pub scaled: Vec<f64>,
}

/// Iterates the recurrence from `alpha0 in (0, 1)`; the scaled sequence
/// converges to 1, which is the N = infinity collapse rate of sigma.
pub fn alpha_recurrence(alpha0: f64, steps: usize) -> Result<AlphaSequence> {
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(CoreError::InvalidArgument {
            op: "alpha_recurrence",
            detail: format!("alpha0 {alpha0} outside (0, 1)"),
        });
    }
    let mut values = Vec::with_capacity(steps + 1);
    let mut scaled = Vec::with_capacity(steps + 1);
    let mut a = alpha0;
    values.push(a);
    scaled.push(0.0);
    for t in 1..=steps {
        a = a * (1.0 - a * a);
        values.push(a);
        scaled.push(a * (2.0 * t as f64).sqrt());
    }
    Ok(AlphaSequence { values, scaled })
}

/// Per-layer Hessian-diagonal estimates with exclusion diagnostics.
#[derive(Debug, Clone)]
pub struct HessianEstimate {
    /// One tensor per layer: `g_sigma / sigma` elementwise, NaN where the
    /// entry was excluded.
    pub layers: Vec<Tensor2>,
    /// Number of entries excluded because sigma sat below the floor.
    pub excluded: usize,
}

/// Estimates the Hessian diagonal of a network's loss at the current
/// posterior via `H_D ~= (1/sigma) dC/dsigma` with an MC gradient.
pub fn estimate_hessian_diag(
    net: &MeanFieldNetwork,
    inputs: &Tensor2,
    labels: &[usize],
    n_samples: usize,
    rng: &mut RngStream,
    sigma_floor: f64,
) -> Result<HessianEstimate> {
    let trace = forward_sample(net, inputs, n_samples, rng)?;
    let grads = backward_grads(net, &trace, labels, Reduction::Mean)?;
    let mut layers = Vec::with_capacity(net.layers.len());
    let mut excluded = 0usize;
    for (layer, block) in net.layers.iter().zip(&grads.layers) {
        let est = layer.sigma.zip_map(&block.sigma, |s, g| {
            if s <= sigma_floor {
                f64::NAN
            } else {
                g / s
            }
        })?;
        excluded += est.as_slice().iter().filter(|v| v.is_nan()).count();
        layers.push(est);
    }
    Ok(HessianEstimate { layers, excluded })
}

/// Scalar variant on the quadratic task: draws `n_samples` eps, forms the MC
/// estimate of `dC/dsigma = E[dL/dw * eps]`, and divides by sigma.
pub fn estimate_hessian_diag_quadratic(
    task: &QuadraticTask,
    mu: f64,
    sigma: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(CoreError::InvalidArgument {
            op: "estimate_hessian_diag_quadratic",
            detail: format!("sigma {sigma}"),
        });
    }
    if n_samples == 0 {
        return Err(CoreError::InvalidArgument {
            op: "estimate_hessian_diag_quadratic",
            detail: "n_samples must be >= 1".into(),
        });
    }
    let streams = rng.fork(n_samples);
    let contributions = exec::map_indexed(n_samples, |s| {
        let mut stream = streams[s].clone();
        let eps = stream.next_normal();
        task.grad(mu + eps * sigma) * eps
    });
    // Ascending-index reduction keeps the estimate bitwise reproducible.
    let g_sigma = contributions.iter().sum::<f64>() / n_samples as f64;
    Ok(g_sigma / sigma)
}

/// Which update rule drives a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryRule {
    /// MESU with both alphas equal to the given multiplier.
    Mesu { alpha: f64 },
    /// Newton form with explicit rate.
    Newton { gamma: f64 },
    /// No-forgetting limit.
    Foovb { alpha: f64 },
}

/// Runs the actual update rule on a scalar parameter against the quadratic
/// task's exact reduced-cost gradients, recording sigma at every step
/// (entry 0 is sigma0).
pub fn simulate_sigma_trajectory(
    task: &QuadraticTask,
    p: &DynamicsParams,
    steps: usize,
    rule: TrajectoryRule,
) -> Result<Vec<f64>> {
    p.validate()?;
    let mut mu = vec![task.target_mean];
    let mut sigma = vec![p.sigma0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(sigma[0]);
    let mesu_cfg = |alpha: f64| MesuConfig {
        n: p.n,
        mu_prior: 0.0,
        sigma_prior: p.sigma_prior,
        alpha_mu: alpha,
        alpha_sigma: alpha,
        sigma_floor: 0.0,
    };
    for _ in 0..steps {
        let (g_mu, g_sigma) = task.reduced_cost_grads(mu[0], sigma[0]);
        match rule {
            TrajectoryRule::Mesu { alpha } => {
                mesu_step(&mut mu, &mut sigma, &[g_mu], &[g_sigma], &mesu_cfg(alpha))?;
            }
            TrajectoryRule::Newton { gamma } => {
                let cfg = NewtonConfig {
                    gamma,
                    n: p.n,
                    mu_prior: 0.0,
                    sigma_prior: p.sigma_prior,
                    sigma_floor: 0.0,
                };
                newton_step(&mut mu, &mut sigma, &[g_mu], &[g_sigma], &cfg)?;
            }
            TrajectoryRule::Foovb { alpha } => {
                foovb_step(&mut mu, &mut sigma, &[g_mu], &[g_sigma], alpha, alpha, 0.0)?;
            }
        }
        out.push(sigma[0]);
    }
    Ok(out)
}

/// Closed-form KL divergence between diagonal Gaussians,
/// `KL(a || b) = sum log(sigma_b/sigma_a) + (sigma_a^2 + (mu_a - mu_b)^2) / (2 sigma_b^2) - 1/2`.
pub fn kl_diag_gaussian(
    mu_a: &[f64],
    sigma_a: &[f64],
    mu_b: &[f64],
    sigma_b: &[f64],
) -> Result<f64> {
    let n = mu_a.len();
    if sigma_a.len() != n || mu_b.len() != n || sigma_b.len() != n {
        return Err(CoreError::ShapeMismatch {
            op: "kl_diag_gaussian",
            detail: "parameter lengths differ".into(),
        });
    }
    if sigma_a.iter().chain(sigma_b).any(|&s| s <= 0.0) {
        return Err(CoreError::InvalidArgument {
            op: "kl_diag_gaussian",
            detail: "standard deviations must be positive".into(),
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        let dm = mu_a[i] - mu_b[i];
        total += (sigma_b[i] / sigma_a[i]).ln()
            + (sigma_a[i] * sigma_a[i] + dm * dm) / (2.0 * sigma_b[i] * sigma_b[i])
            - 0.5;
    }
    Ok(total)
}

/// Combines a Gaussian prior with a Gaussian likelihood into the posterior:
/// `1/sigma^2 = 1/sigma_L^2 + 1/sigma_prior^2` and
/// `mu = (mu_L sigma_prior^2 + mu_prior sigma_L^2) / (sigma_L^2 + sigma_prior^2)`.
pub fn gaussian_product_posterior(
    mu_prior: f64,
    sigma_prior: f64,
    mu_likelihood: f64,
    sigma_likelihood: f64,
) -> (f64, f64) {
    let vp = sigma_prior * sigma_prior;
    let vl = sigma_likelihood * sigma_likelihood;
    let var = 1.0 / (1.0 / vl + 1.0 / vp);
    let mu = (mu_likelihood * vp + mu_prior * vl) / (vl + vp);
    (mu, var.sqrt())
}

/// One row of the trajectory comparison file.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRow {
    pub step: usize,
    pub sigma_simulated: f64,
    pub sigma_closed_form: f64,
    pub abs_rel_err: f64,
}

/// Builds comparison rows between a simulated trajectory and the closed form.
pub fn trajectory_rows(simulated: &[f64], p: &DynamicsParams) -> Vec<TrajectoryRow> {
    simulated
        .iter()
        .enumerate()
        .map(|(step, &sim)| {
            let cf = closed_form_sigma(step as f64, p);
            TrajectoryRow {
                step,
                sigma_simulated: sim,
                sigma_closed_form: cf,
                abs_rel_err: ((sim - cf) / cf).abs(),
            }
        })
        .collect()
}

/// Writes trajectory rows as CSV: `step,sigma_simulated,sigma_closed_form,abs_rel_err`.
pub fn write_trajectory_csv(path: &std::path::Path, rows: &[TrajectoryRow]) -> Result<()> {
    use std::io::Write;
    let mut out = String::from("step,sigma_simulated,sigma_closed_form,abs_rel_err\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.step, r.sigma_simulated, r.sigma_closed_form, r.abs_rel_err
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CoreError::io(path, e))
}
