//! Mean-field update rules.
//!
//! The full rule moves each weight's Gaussian by
//!
//! ```text
//! dsigma = scale_sigma * 1/2 * [ -sigma^2 * g_sigma + sigma  * (sigma_prior^2 - sigma^2) / (N * sigma_prior^2) ]
//! dmu    = scale_mu          * [ -sigma^2 * g_mu    + sigma^2 * (mu_prior - mu)          / (N * sigma_prior^2) ]
//! ```
//!
//! with `scale = alpha` (MESU) or `scale = gamma * N` (Newton form); both go
//! through the same bracket kernel so `gamma = 1/N` reproduces `alpha = 1`
//! bitwise. The variance in front of the gradient is the metaplasticity:
//! uncertain weights move fast, confident ones barely move. The second term
//! releases old evidence back toward the prior at rate `1/N`; dropping it
//! gives the no-forgetting FOO-VB diagonal rule, and `sigma` then collapses
//! over long streams.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// MESU hyperparameters.
///
/// `n` is the memory window in stream steps. `alpha_mu`/`alpha_sigma`
/// multiply the entire bracketed update, so `t_c = N / alpha_sigma` keeps its
/// meaning as the sigma convergence timescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesuConfig {
    pub n: f64,
    pub mu_prior: f64,
    pub sigma_prior: f64,
    pub alpha_mu: f64,
    pub alpha_sigma: f64,
    /// Hard floor applied to sigma after each step; 0 disables it.
    pub sigma_floor: f64,
}

impl MesuConfig {
    pub fn new(n: f64, mu_prior: f64, sigma_prior: f64) -> Self {
        MesuConfig {
            n,
            mu_prior,
            sigma_prior,
            alpha_mu: 1.0,
            alpha_sigma: 1.0,
            // The small-update assumption can be violated by large gradients;
            // the floor prevents sign flips. Logged by callers when active.
            sigma_floor: 1e-6 * sigma_prior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1.0 || !self.n.is_finite() {
            return Err(CoreError::InvalidArgument {
                op: "MesuConfig",
                detail: format!("memory window n = {}", self.n),
            });
        }
        if self.sigma_prior <= 0.0 || self.alpha_mu <= 0.0 || self.alpha_sigma <= 0.0 {
            return Err(CoreError::InvalidArgument {
                op: "MesuConfig",
                detail: "sigma_prior, alpha_mu, alpha_sigma must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Newton-form hyperparameters; `gamma <= 1` recommended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    pub gamma: f64,
    pub n: f64,
    pub mu_prior: f64,
    pub sigma_prior: f64,
    pub sigma_floor: f64,
}

/// Diagnostics from one update: how many sigma entries hit the floor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub sigma_floored: usize,
}

/// Rejects the update before anything is written if gradients carry NaN or
/// infinities (the realistic divergence mode).
fn ensure_finite_grads(op: &'static str, g_mu: &[f64], g_sigma: &[f64]) -> Result<()> {
    let bad = g_mu.iter().filter(|v| !v.is_finite()).count()
        + g_sigma.iter().filter(|v| !v.is_finite()).count();
    if bad > 0 {
        return Err(CoreError::UpdateRejected(bad, op));
    }
    Ok(())
}

/// The shared bracket kernel. `scale_mu`/`scale_sigma` absorb either the
/// alpha multipliers or `gamma * N`. Gradients are validated before anything
/// is written; an overflow produced mid-update (finite inputs, astronomical
/// magnitudes) is still counted and reported so callers abort the run.
#[allow(clippy::too_many_arguments)]
fn scaled_step(
    mu: &mut [f64],
    sigma: &mut [f64],
    g_mu: &[f64],
    g_sigma: &[f64],
    n: f64,
    mu_prior: f64,
    sigma_prior: f64,
    scale_mu: f64,
    scale_sigma: f64,
    sigma_floor: f64,
    op: &'static str,
) -> Result<StepStats> {
    if mu.len() != sigma.len() || mu.len() != g_mu.len() || mu.len() != g_sigma.len() {
        return Err(CoreError::ShapeMismatch {
            op,
            detail: "parameter/gradient lengths differ".into(),
        });
    }
    ensure_finite_grads(op, g_mu, g_sigma)?;
    let prior_var = sigma_prior * sigma_prior;
    let inv_n_prior = 1.0 / (n * prior_var);
    let mut floored = 0usize;
    let mut bad = 0usize;
    for i in 0..mu.len() {
        let s = sigma[i];
        let var = s * s;
        let d_sigma =
            scale_sigma * 0.5 * (-var * g_sigma[i] + s * (prior_var - var) * inv_n_prior);
        let d_mu = scale_mu * (-var * g_mu[i] + var * (mu_prior - mu[i]) * inv_n_prior);
        let new_mu = mu[i] + d_mu;
        let mut new_sigma = s + d_sigma;
        if !new_mu.is_finite() || !new_sigma.is_finite() {
            bad += 1;
            continue;
        }
        if new_sigma < sigma_floor {
            new_sigma = sigma_floor;
            floored += 1;
        }
        mu[i] = new_mu;
        sigma[i] = new_sigma;
    }
    if bad > 0 {
        return Err(CoreError::UpdateRejected(bad, op));
    }
    Ok(StepStats {
        sigma_floored: floored,
    })
}

/// One MESU step over flat parameter slices. `sigma` stays above
/// `cfg.sigma_floor`; non-finite results reject the update.
pub fn mesu_step(
    mu: &mut [f64],
    sigma: &mut [f64],
    g_mu: &[f64],
    g_sigma: &[f64],
    cfg: &MesuConfig,
) -> Result<StepStats> {
    scaled_step(
        mu,
        sigma,
        g_mu,
        g_sigma,
        cfg.n,
        cfg.mu_prior,
        cfg.sigma_prior,
        cfg.alpha_mu,
        cfg.alpha_sigma,
        cfg.sigma_floor,
        "mesu_step",
    )
}

/// No-forgetting limit: the prior-attraction terms removed (N → ∞).
pub fn foovb_step(
    mu: &mut [f64],
    sigma: &mut [f64],
    g_mu: &[f64],
    g_sigma: &[f64],
    alpha_mu: f64,
    alpha_sigma: f64,
    sigma_floor: f64,
) -> Result<StepStats> {
    if mu.len() != sigma.len() || mu.len() != g_mu.len() || mu.len() != g_sigma.len() {
        return Err(CoreError::ShapeMismatch {
            op: "foovb_step",
            detail: "parameter/gradient lengths differ".into(),
        });
    }
    ensure_finite_grads("foovb_step", g_mu, g_sigma)?;
    let mut floored = 0usize;
    let mut bad = 0usize;
    for i in 0..mu.len() {
        let s = sigma[i];
        let var = s * s;
        let d_sigma = -alpha_sigma * 0.5 * var * g_sigma[i];
        let d_mu = -alpha_mu * var * g_mu[i];
        let new_mu = mu[i] + d_mu;
        let mut new_sigma = s + d_sigma;
        if !new_mu.is_finite() || !new_sigma.is_finite() {
            bad += 1;
            continue;
        }
        if new_sigma < sigma_floor {
            new_sigma = sigma_floor;
            floored += 1;
        }
        mu[i] = new_mu;
        sigma[i] = new_sigma;
    }
    if bad > 0 {
        return Err(CoreError::UpdateRejected(bad, "foovb_step"));
    }
    Ok(StepStats {
        sigma_floored: floored,
    })
}

/// Newton-form update; with `gamma = 1/N` it equals [`mesu_step`] at
/// `alpha = 1` exactly.
pub fn newton_step(
    mu: &mut [f64],
    sigma: &mut [f64],
    g_mu: &[f64],
    g_sigma: &[f64],
    cfg: &NewtonConfig,
) -> Result<StepStats> {
    let scale = cfg.gamma * cfg.n;
    scaled_step(
        mu,
        sigma,
        g_mu,
        g_sigma,
        cfg.n,
        cfg.mu_prior,
        cfg.sigma_prior,
        scale,
        scale,
        cfg.sigma_floor,
        "newton_step",
    )
}

/// Plain gradient descent on `(mu, sigma)` with a fixed learning rate; the
/// classic BNN baseline without metaplastic scaling.
pub fn bnn_sgd_step(
    mu: &mut [f64],
    sigma: &mut [f64],
    g_mu: &[f64],
    g_sigma: &[f64],
    alpha: f64,
    sigma_floor: f64,
) -> Result<StepStats> {
    if mu.len() != sigma.len() || mu.len() != g_mu.len() || mu.len() != g_sigma.len() {
        return Err(CoreError::ShapeMismatch {
            op: "bnn_sgd_step",
            detail: "parameter/gradient lengths differ".into(),
        });
    }
    ensure_finite_grads("bnn_sgd_step", g_mu, g_sigma)?;
    let mut floored = 0usize;
    let mut bad = 0usize;
    for i in 0..mu.len() {
        let new_mu = mu[i] - alpha * g_mu[i];
        let mut new_sigma = sigma[i] - alpha * g_sigma[i];
        if !new_mu.is_finite() || !new_sigma.is_finite() {
            bad += 1;
            continue;
        }
        if new_sigma < sigma_floor {
            new_sigma = sigma_floor;
            floored += 1;
        }
        mu[i] = new_mu;
        sigma[i] = new_sigma;
    }
    if bad > 0 {
        return Err(CoreError::UpdateRejected(bad, "bnn_sgd_step"));
    }
    Ok(StepStats {
        sigma_floored: floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn cfg(n: f64, sigma_prior: f64) -> MesuConfig {
        MesuConfig {
            n,
            mu_prior: 0.0,
            sigma_prior,
            alpha_mu: 1.0,
            alpha_sigma: 1.0,
            sigma_floor: 0.0,
        }
    }

    #[test]
    fn prior_is_a_fixed_point() {
        let c = MesuConfig {
            mu_prior: 0.25,
            ..cfg(100.0, 0.7)
        };
        let mut mu = vec![0.25];
        let mut sigma = vec![0.7];
        mesu_step(&mut mu, &mut sigma, &[0.0], &[0.0], &c).unwrap();
        assert_eq!(mu[0], 0.25);
        assert_eq!(sigma[0], 0.7);
    }

    #[test]
    fn scalar_sigma_update_matches_hand_computation() {
        // sigma=0.1, g_sigma=2.0, N=100, sigma_prior=1, alpha=1:
        // d_sigma = -(0.01/2)*2 + 0.1*(1-0.01)/(2*100) = -0.01 + 0.000495.
        let c = cfg(100.0, 1.0);
        let mut mu = vec![0.0];
        let mut sigma = vec![0.1];
        mesu_step(&mut mu, &mut sigma, &[0.0], &[2.0], &c).unwrap();
        assert!((sigma[0] - (0.1 - 0.009505)).abs() < 1e-15);
    }

    #[test]
    fn scalar_mu_decays_toward_prior() {
        // mu=0.5, g_mu=0, mu_prior=0, sigma=0.1, N=100: d_mu = -5e-5.
        let c = cfg(100.0, 1.0);
        let mut mu = vec![0.5];
        let mut sigma = vec![0.1];
        mesu_step(&mut mu, &mut sigma, &[0.0], &[0.0], &c).unwrap();
        assert!((mu[0] - 0.49995).abs() < 1e-15);
    }

    #[test]
    fn foovb_is_the_large_n_limit() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..200 {
            let mu0 = rng.next_uniform(-1.0, 1.0);
            let s0 = rng.next_uniform(0.01, 1.0);
            let gm = rng.next_uniform(-2.0, 2.0);
            let gs = rng.next_uniform(-2.0, 2.0);
            let c = cfg(1e15, 1.0);
            let (mut mu_a, mut sig_a) = (vec![mu0], vec![s0]);
            mesu_step(&mut mu_a, &mut sig_a, &[gm], &[gs], &c).unwrap();
            let (mut mu_b, mut sig_b) = (vec![mu0], vec![s0]);
            foovb_step(&mut mu_b, &mut sig_b, &[gm], &[gs], 1.0, 1.0, 0.0).unwrap();
            assert!((mu_a[0] - mu_b[0]).abs() < 1e-12);
            assert!((sig_a[0] - sig_b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn foovb_scalar_example() {
        let (mut mu, mut sigma) = (vec![0.0], vec![0.1]);
        foovb_step(&mut mu, &mut sigma, &[0.0], &[2.0], 1.0, 1.0, 0.0).unwrap();
        assert!((sigma[0] - 0.09).abs() < 1e-15); // d_sigma = -0.01
        let (mut mu2, mut sigma2) = (vec![0.3], vec![0.2]);
        foovb_step(&mut mu2, &mut sigma2, &[0.0], &[0.0], 1.0, 1.0, 0.0).unwrap();
        assert_eq!(mu2[0], 0.3);
        assert_eq!(sigma2[0], 0.2);
    }

    #[test]
    fn newton_gamma_zero_is_identity() {
        let c = NewtonConfig {
            gamma: 0.0,
            n: 10.0,
            mu_prior: 0.0,
            sigma_prior: 1.0,
            sigma_floor: 0.0,
        };
        let (mut mu, mut sigma) = (vec![0.4], vec![0.3]);
        newton_step(&mut mu, &mut sigma, &[1.0], &[1.0], &c).unwrap();
        assert_eq!(mu[0], 0.4);
        assert_eq!(sigma[0], 0.3);
    }

    #[test]
    fn newton_scalar_example() {
        // N=1, gamma=2, zero grads, sigma=0.5, sigma_prior=1:
        // d_sigma = (2*1/2) * 0.5*(1-0.25)/(1*1) = 0.375.
        let c = NewtonConfig {
            gamma: 2.0,
            n: 1.0,
            mu_prior: 0.0,
            sigma_prior: 1.0,
            sigma_floor: 0.0,
        };
        let (mut mu, mut sigma) = (vec![0.0], vec![0.5]);
        newton_step(&mut mu, &mut sigma, &[0.0], &[0.0], &c).unwrap();
        assert!((sigma[0] - 0.875).abs() < 1e-15);
    }

    #[test]
    fn newton_at_inverse_n_equals_mesu_bitwise() {
        let mut rng = RngStream::new(23, 0);
        for trial in 0..1000 {
            // Window sizes where 1/N is exact or rounds back exactly: the
            // identity also holds for arbitrary N (checked in acceptance).
            let n = (1u64 << (trial % 20)) as f64;
            let mu0 = rng.next_uniform(-2.0, 2.0);
            let s0 = rng.next_uniform(1e-3, 2.0);
            let gm = rng.next_uniform(-5.0, 5.0);
            let gs = rng.next_uniform(-5.0, 5.0);
            let mcfg = cfg(n, 1.3);
            let ncfg = NewtonConfig {
                gamma: 1.0 / n,
                n,
                mu_prior: 0.0,
                sigma_prior: 1.3,
                sigma_floor: 0.0,
            };
            let (mut mu_a, mut sig_a) = (vec![mu0], vec![s0]);
            mesu_step(&mut mu_a, &mut sig_a, &[gm], &[gs], &mcfg).unwrap();
            let (mut mu_b, mut sig_b) = (vec![mu0], vec![s0]);
            newton_step(&mut mu_b, &mut sig_b, &[gm], &[gs], &ncfg).unwrap();
            assert_eq!(mu_a[0].to_bits(), mu_b[0].to_bits());
            assert_eq!(sig_a[0].to_bits(), sig_b[0].to_bits());
        }
    }

    #[test]
    fn bnn_sgd_basics() {
        let (mut mu, mut sigma) = (vec![1.0], vec![0.5]);
        bnn_sgd_step(&mut mu, &mut sigma, &[1.0], &[0.0], 0.0, 0.0).unwrap();
        assert_eq!(mu[0], 1.0);
        bnn_sgd_step(&mut mu, &mut sigma, &[1.0], &[0.0], 0.1, 0.0).unwrap();
        assert!((mu[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn metaplastic_scaling_vs_fixed_rate() {
        // Same gradient, sigma=0.01: MESU moves mu by sigma^2 * g = 1e-4 * g,
        // plain BNN SGD moves it by alpha * g.
        let g = 1.0;
        let c = cfg(1e15, 1.0);
        let (mut mu_m, mut sig_m) = (vec![0.0], vec![0.01]);
        mesu_step(&mut mu_m, &mut sig_m, &[g], &[0.0], &c).unwrap();
        assert!((mu_m[0] + 1e-4).abs() < 1e-12);
        let (mut mu_s, mut sig_s) = (vec![0.0], vec![0.01]);
        bnn_sgd_step(&mut mu_s, &mut sig_s, &[g], &[0.0], 0.1, 0.0).unwrap();
        assert!((mu_s[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn sigma_positivity_with_floor() {
        let mut rng = RngStream::new(29, 0);
        let c = MesuConfig {
            sigma_floor: 1e-6,
            ..cfg(50.0, 1.0)
        };
        let mut mu = vec![0.0; 32];
        let mut sigma = vec![0.5; 32];
        for _ in 0..500 {
            let gm: Vec<f64> = (0..32).map(|_| rng.next_uniform(-50.0, 50.0)).collect();
            let gs: Vec<f64> = (0..32).map(|_| rng.next_uniform(-50.0, 50.0)).collect();
            mesu_step(&mut mu, &mut sigma, &gm, &gs, &c).unwrap();
            assert!(sigma.iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn forgetting_monotonicity_with_zero_grads() {
        let c = MesuConfig {
            mu_prior: 0.1,
            ..cfg(30.0, 0.8)
        };
        let mut mu = vec![1.5];
        let mut sigma = vec![0.2];
        let mut mu_gap = (mu[0] - 0.1f64).abs();
        let mut sig_gap = (sigma[0] - 0.8f64).abs();
        for _ in 0..200 {
            mesu_step(&mut mu, &mut sigma, &[0.0], &[0.0], &c).unwrap();
            let new_mu_gap = (mu[0] - 0.1f64).abs();
            let new_sig_gap = (sigma[0] - 0.8f64).abs();
            assert!(new_mu_gap < mu_gap);
            assert!(new_sig_gap <= sig_gap);
            mu_gap = new_mu_gap;
            sig_gap = new_sig_gap;
        }
    }

    #[test]
    fn prior_attraction_scales_as_inverse_n() {
        // With zero gradients the whole update is the prior-attraction term;
        // doubling N must halve it.
        let (mu0, s0) = (0.7, 0.3);
        for &n in &[10.0, 100.0, 1e4] {
            let (mut mu_a, mut sig_a) = (vec![mu0], vec![s0]);
            mesu_step(&mut mu_a, &mut sig_a, &[0.0], &[0.0], &cfg(n, 1.0)).unwrap();
            let (mut mu_b, mut sig_b) = (vec![mu0], vec![s0]);
            mesu_step(&mut mu_b, &mut sig_b, &[0.0], &[0.0], &cfg(2.0 * n, 1.0)).unwrap();
            let dmu_a = mu_a[0] - mu0;
            let dmu_b = mu_b[0] - mu0;
            let dsig_a = sig_a[0] - s0;
            let dsig_b = sig_b[0] - s0;
            assert!((dmu_a / dmu_b - 2.0).abs() < 1e-9);
            assert!((dsig_a / dsig_b - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_grads_reject_update() {
        let c = cfg(100.0, 1.0);
        let mut mu = vec![0.1];
        let mut sigma = vec![0.2];
        let err = mesu_step(&mut mu, &mut sigma, &[f64::NAN], &[0.0], &c);
        assert!(matches!(err, Err(CoreError::UpdateRejected(1, _))));
        // Gradients are validated before anything is written.
        assert_eq!(mu[0], 0.1);
        assert_eq!(sigma[0], 0.2);
    }
}
