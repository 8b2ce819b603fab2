//! Deterministic-network baselines: SGD, the two EWC variants, and SI.
//!
//! EWC keeps a running Fisher-diagonal importance estimate and pulls weights
//! back toward the anchor taken at the last consolidation. The online variant
//! consolidates at task boundaries; the stream variant treats every data
//! point as its own task and consolidates after each sample. SI accumulates a
//! path integral of grad x displacement within a task and converts it into
//! importance at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// When Fisher consolidation happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EwcMode {
    OnlineTaskBoundary,
    StreamPerSample,
}

/// Running EWC state over one flat parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    /// Per-parameter importance accumulator, nonnegative.
    pub fisher: Vec<f64>,
    /// Anchor weights from the last consolidation.
    pub theta_star: Vec<f64>,
    pub lambda: f64,
    /// Downweighting factor in (0, 1] applied to old importance.
    pub gamma_down: f64,
}

impl EwcState {
    pub fn new(num_params: usize, lambda: f64, gamma_down: f64) -> Self {
        EwcState {
            fisher: vec![0.0; num_params],
            theta_star: vec![0.0; num_params],
            lambda,
            gamma_down,
        }
    }
}

/// Running SI state over one flat parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    /// Consolidated importance, nonnegative.
    pub omega_importance: Vec<f64>,
    /// Within-task accumulator of grad x displacement.
    pub path_accum: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub c: f64,
    pub damping: f64,
}

impl SiState {
    pub fn new(num_params: usize, c: f64, damping: f64) -> Self {
        SiState {
            omega_importance: vec![0.0; num_params],
            path_accum: vec![0.0; num_params],
            theta_star: vec![0.0; num_params],
            c,
            damping,
        }
    }
}

fn ensure_finite(op: &'static str, grads: &[f64]) -> Result<()> {
    let bad = grads.iter().filter(|v| !v.is_finite()).count();
    if bad > 0 {
        return Err(CoreError::UpdateRejected(bad, op));
    }
    Ok(())
}

/// Plain gradient descent: `w <- w - alpha * grad`.
pub fn sgd_step(w: &mut [f64], grad: &[f64], alpha: f64) -> Result<()> {
    if w.len() != grad.len() {
        return Err(CoreError::ShapeMismatch {
            op: "sgd_step",
            detail: "weight/gradient lengths differ".into(),
        });
    }
    ensure_finite("sgd_step", grad)?;
    for (wv, g) in w.iter_mut().zip(grad) {
        *wv -= alpha * g;
    }
    Ok(())
}

/// Adds the EWC quadratic penalty gradient:
/// `grad_total = grad_data + lambda * fisher * (w - theta_star)`.
pub fn ewc_regularized_grad(w: &[f64], grad_data: &[f64], state: &EwcState) -> Result<Vec<f64>> {
    if w.len() != grad_data.len() || w.len() != state.fisher.len() {
        return Err(CoreError::ShapeMismatch {
            op: "ewc_regularized_grad",
            detail: "weight/gradient/state lengths differ".into(),
        });
    }
    Ok(w.iter()
        .zip(grad_data)
        .zip(state.fisher.iter().zip(&state.theta_star))
        .map(|((&wv, &g), (&f, &ts))| g + state.lambda * f * (wv - ts))
        .collect())
}

/// Folds a fresh empirical Fisher diagonal into the running estimate and
/// re-anchors at the current weights:
/// `fisher <- gamma_down * fisher + mean(grad^2)`, `theta_star <- w`.
///
/// `sample_grads` holds one flat gradient per consolidation sample; stream
/// mode passes exactly one. Empirical Fisher uses the label's gradient.
pub fn ewc_consolidate_update(
    state: &mut EwcState,
    w: &[f64],
    sample_grads: &[&[f64]],
) -> Result<()> {
    if sample_grads.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "ewc_consolidate",
            detail: "empty consolidation sample set".into(),
        });
    }
    let n = state.fisher.len();
    if w.len() != n || sample_grads.iter().any(|g| g.len() != n) {
        return Err(CoreError::ShapeMismatch {
            op: "ewc_consolidate",
            detail: "weight/gradient/state lengths differ".into(),
        });
    }
    let inv = 1.0 / sample_grads.len() as f64;
    for f in state.fisher.iter_mut() {
        *f *= state.gamma_down;
    }
    for grads in sample_grads {
        for (f, g) in state.fisher.iter_mut().zip(*grads) {
            *f += g * g * inv;
        }
    }
    state.theta_star.copy_from_slice(w);
    Ok(())
}

/// One SI step: regularized descent plus path-integral tracking.
/// `w <- w - alpha * (grad + c * omega * (w - theta_star))`;
/// `path_accum += grad * (w_old - w_new)` per parameter.
pub fn si_track_and_step(w: &mut [f64], grad: &[f64], alpha: f64, state: &mut SiState) -> Result<()> {
    let n = state.omega_importance.len();
    if w.len() != n || grad.len() != n {
        return Err(CoreError::ShapeMismatch {
            op: "si_track_and_step",
            detail: "weight/gradient/state lengths differ".into(),
        });
    }
    ensure_finite("si_track_and_step", grad)?;
    for i in 0..n {
        let total =
            grad[i] + state.c * state.omega_importance[i] * (w[i] - state.theta_star[i]);
        let old = w[i];
        w[i] = old - alpha * total;
        state.path_accum[i] += grad[i] * (old - w[i]);
    }
    Ok(())
}

/// Task-boundary consolidation:
/// `omega += path_accum / ((w_end - theta_star)^2 + damping)`, then the path
/// resets and the anchor moves to `w_end`.
pub fn si_consolidate(state: &mut SiState, w_end: &[f64]) -> Result<()> {
    let n = state.omega_importance.len();
    if w_end.len() != n {
        return Err(CoreError::ShapeMismatch {
            op: "si_consolidate",
            detail: "weight/state lengths differ".into(),
        });
    }
    for (i, &w) in w_end.iter().enumerate() {
        let dtheta = w - state.theta_star[i];
        state.omega_importance[i] += state.path_accum[i] / (dtheta * dtheta + state.damping);
        state.path_accum[i] = 0.0;
    }
    state.theta_star.copy_from_slice(w_end);
    Ok(())
}
