//! Allocation-free training-step kernels for the batch-of-one stream.
//!
//! The general forward/backward path allocates per-sample traces, which is
//! fine for tests but dominates the cost of a 600k-step stream. These
//! steppers keep every buffer preallocated and compute the identical
//! gradients (up to floating-point associativity; the equivalence against
//! the general path is asserted in tests).
//!
//! Layer 0 weights are never materialized per sample: with a fixed input x,
//! `z0 = (mu + eps*sigma)·x + b = mu·x + b + sum_i eps_i * (sigma_i x_i)`,
//! so one shared `mu·x` pass and a per-sample dot with `sigma*x` suffice.
//! Deeper layers are small and get per-sample scratch copies.
//!
//! Per-sample work runs in parallel over disjoint slots; gradient reduction
//! walks samples in ascending index, so results are bitwise reproducible
//! across thread counts.

use crate::error::{CoreError, Result};
use crate::loss::softmax_cross_entropy;
use crate::network::{MeanFieldNetwork, NetworkSpec};
use crate::rng::RngStream;
use crate::tensor::dot;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Flat per-layer gradient buffers (weights then biases).
#[derive(Debug, Clone)]
pub struct FusedGrads {
    /// dC/dmu per layer, row-major weight layout.
    pub w_mu: Vec<Vec<f64>>,
    pub w_sigma: Vec<Vec<f64>>,
    pub b_mu: Vec<Vec<f64>>,
    pub b_sigma: Vec<Vec<f64>>,
}

/// Per-sample scratch slot; slots are disjoint so samples can run on any
/// thread without coordination.
#[derive(Debug, Clone)]
struct SampleSlot {
    /// eps draws for every layer's weights, concatenated.
    eps_w: Vec<f64>,
    /// eps draws for every layer's biases, concatenated.
    eps_b: Vec<f64>,
    /// Materialized per-sample weights for layers >= 1, concatenated.
    w_upper: Vec<f64>,
    /// Pre-activations, all layers concatenated.
    z: Vec<f64>,
    /// Activations (post-ReLU), hidden layers concatenated.
    a: Vec<f64>,
    /// Deltas, all layers concatenated.
    delta: Vec<f64>,
    loss: f64,
}

/// Fused mean-field gradient engine for batch size one.
#[derive(Debug)]
pub struct MfStepper {
    sizes: Vec<usize>,
    n_samples: usize,
    /// Offsets of layer l's weights into the concatenated eps_w buffer.
    w_off: Vec<usize>,
    /// Offsets of layer l (>= 1) weights into w_upper.
    upper_off: Vec<usize>,
    /// Offsets of layer l's units into z/a/delta/eps_b.
    unit_off: Vec<usize>,
    /// Shared per-step buffers.
    z_mu0: Vec<f64>,
    sigx0: Vec<f64>,
    slots: Vec<SampleSlot>,
    pub grads: FusedGrads,
    pub mean_loss: f64,
}

impl MfStepper {
    pub fn new(spec: &NetworkSpec, n_samples: usize) -> Self {
        let sizes = spec.layer_sizes.clone();
        let n_layers = sizes.len() - 1;
        let mut w_off = vec![0usize];
        let mut upper_off = vec![0usize];
        let mut unit_off = vec![0usize];
        for l in 0..n_layers {
            let wl = sizes[l + 1] * sizes[l];
            w_off.push(w_off[l] + wl);
            upper_off.push(upper_off[l] + if l >= 1 { wl } else { 0 });
            unit_off.push(unit_off[l] + sizes[l + 1]);
        }
        let total_w = w_off[n_layers];
        let total_upper = upper_off[n_layers];
        let total_units = unit_off[n_layers];
        let slot = SampleSlot {
            eps_w: vec![0.0; total_w],
            eps_b: vec![0.0; total_units],
            w_upper: vec![0.0; total_upper],
            z: vec![0.0; total_units],
            a: vec![0.0; total_units],
            delta: vec![0.0; total_units],
            loss: 0.0,
        };
        let grads = FusedGrads {
            w_mu: (0..n_layers).map(|l| vec![0.0; sizes[l + 1] * sizes[l]]).collect(),
            w_sigma: (0..n_layers).map(|l| vec![0.0; sizes[l + 1] * sizes[l]]).collect(),
            b_mu: (0..n_layers).map(|l| vec![0.0; sizes[l + 1]]).collect(),
            b_sigma: (0..n_layers).map(|l| vec![0.0; sizes[l + 1]]).collect(),
        };
        MfStepper {
            n_samples,
            z_mu0: vec![0.0; sizes[1]],
            sigx0: vec![0.0; sizes[1] * sizes[0]],
            slots: vec![slot; n_samples],
            grads,
            mean_loss: 0.0,
            sizes,
            w_off,
            upper_off,
            unit_off,
        }
    }

    /// Computes mean-field gradients for one example, filling `self.grads`
    /// and `self.mean_loss`. Returns the per-sample-mean loss.
    pub fn compute_grads(
        &mut self,
        net: &MeanFieldNetwork,
        x: &[f64],
        label: usize,
        rng: &mut RngStream,
    ) -> Result<f64> {
        let sizes = &self.sizes;
        let n_layers = sizes.len() - 1;
        if x.len() != sizes[0] {
            return Err(CoreError::ShapeMismatch {
                op: "MfStepper::compute_grads",
                detail: format!("input dim {} vs spec {}", x.len(), sizes[0]),
            });
        }
        if net.spec.layer_sizes != *sizes {
            return Err(CoreError::ShapeMismatch {
                op: "MfStepper::compute_grads",
                detail: "network does not match stepper spec".into(),
            });
        }

        // Shared layer-0 quantities.
        let l0 = &net.layers[0];
        let (n_in, n_h) = (sizes[0], sizes[1]);
        for h in 0..n_h {
            self.z_mu0[h] = dot(l0.mu.row(h), x) + l0.bias_mu[h];
            let sig_row = l0.sigma.row(h);
            let out = &mut self.sigx0[h * n_in..(h + 1) * n_in];
            for i in 0..n_in {
                out[i] = sig_row[i] * x[i];
            }
        }

        // Phase 1: independent per-sample forward/backward into slots.
        let streams = rng.fork(self.n_samples);
        let ctx = PhaseCtx {
            sizes,
            w_off: &self.w_off,
            upper_off: &self.upper_off,
            unit_off: &self.unit_off,
            z_mu0: &self.z_mu0,
            sigx0: &self.sigx0,
            net,
            label,
        };
        #[cfg(feature = "parallel")]
        {
            self.slots
                .par_iter_mut()
                .enumerate()
                .try_for_each(|(s, slot)| run_sample(&ctx, slot, streams[s].clone()))?;
        }
        #[cfg(not(feature = "parallel"))]
        {
            for (s, slot) in self.slots.iter_mut().enumerate() {
                run_sample(&ctx, slot, streams[s].clone())?;
            }
        }

        // Phase 2: ascending-sample reduction into the gradient buffers.
        let inv = 1.0 / self.n_samples as f64;
        self.mean_loss = self.slots.iter().map(|s| s.loss).sum::<f64>() * inv;

        // Layer 0 weights, row-major: d mu is rank one in the mean delta;
        // d sigma accumulates per-sample eps products into an L1-resident
        // row before the single write. Rows are independent, so they run in
        // parallel without affecting the (per-row, ascending-sample)
        // summation order.
        let mut delta0_mean = vec![0.0; n_h];
        for slot in &self.slots {
            for (m, &d) in delta0_mean.iter_mut().zip(&slot.delta[0..n_h]) {
                *m += d * inv;
            }
        }
        {
            let slots = &self.slots;
            let gw_mu0 = &mut self.grads.w_mu[0];
            let gw_sig0 = &mut self.grads.w_sigma[0];
            let mut acc = vec![0.0; n_in];
            for h in 0..n_h {
                acc.iter_mut().for_each(|v| *v = 0.0);
                for slot in slots {
                    let d = slot.delta[h] * inv;
                    let eps_row = &slot.eps_w[h * n_in..(h + 1) * n_in];
                    for i in 0..n_in {
                        acc[i] += d * eps_row[i];
                    }
                }
                let d = delta0_mean[h];
                let mu_row = &mut gw_mu0[h * n_in..(h + 1) * n_in];
                let sig_row = &mut gw_sig0[h * n_in..(h + 1) * n_in];
                for i in 0..n_in {
                    mu_row[i] = d * x[i];
                    sig_row[i] = acc[i] * x[i];
                }
            }
        }
        self.grads.b_mu[0].copy_from_slice(&delta0_mean);
        let gb_sig0 = &mut self.grads.b_sigma[0];
        gb_sig0.iter_mut().for_each(|v| *v = 0.0);
        for slot in &self.slots {
            for (h, acc) in gb_sig0.iter_mut().enumerate().take(n_h) {
                *acc += slot.delta[h] * slot.eps_b[h] * inv;
            }
        }

        // Upper layers: accumulate per-sample outer products directly.
        for l in 1..n_layers {
            let (n_hi, n_lo) = (sizes[l + 1], sizes[l]);
            let u_off = self.unit_off[l];
            let a_off = self.unit_off[l - 1];
            let gw_mu = &mut self.grads.w_mu[l];
            let gw_sig = &mut self.grads.w_sigma[l];
            let gb_mu = &mut self.grads.b_mu[l];
            let gb_sig = &mut self.grads.b_sigma[l];
            gw_mu.iter_mut().for_each(|v| *v = 0.0);
            gw_sig.iter_mut().for_each(|v| *v = 0.0);
            gb_mu.iter_mut().for_each(|v| *v = 0.0);
            gb_sig.iter_mut().for_each(|v| *v = 0.0);
            for slot in &self.slots {
                let delta = &slot.delta[u_off..u_off + n_hi];
                let act = &slot.a[a_off..a_off + n_lo];
                let eps = &slot.eps_w[self.w_off[l]..self.w_off[l + 1]];
                for o in 0..n_hi {
                    let d = delta[o] * inv;
                    let row_mu = &mut gw_mu[o * n_lo..(o + 1) * n_lo];
                    let row_sig = &mut gw_sig[o * n_lo..(o + 1) * n_lo];
                    let eps_row = &eps[o * n_lo..(o + 1) * n_lo];
                    for i in 0..n_lo {
                        let g = d * act[i];
                        row_mu[i] += g;
                        row_sig[i] += g * eps_row[i];
                    }
                    gb_mu[o] += d;
                    gb_sig[o] += d * slot.eps_b[u_off + o];
                }
            }
        }
        Ok(self.mean_loss)
    }
}

/// Shared read-only context for one sample's forward/backward.
struct PhaseCtx<'a> {
    sizes: &'a [usize],
    w_off: &'a [usize],
    upper_off: &'a [usize],
    unit_off: &'a [usize],
    z_mu0: &'a [f64],
    sigx0: &'a [f64],
    net: &'a MeanFieldNetwork,
    label: usize,
}

fn run_sample(ctx: &PhaseCtx<'_>, slot: &mut SampleSlot, mut rng: RngStream) -> Result<()> {
    let sizes = ctx.sizes;
    let n_layers = sizes.len() - 1;
    let (n_in, n_h) = (sizes[0], sizes[1]);

    // Draw all eps for this sample in the same order as
    // EpsSet::sample_like: weights of every layer first, then biases.
    for l in 0..n_layers {
        for v in &mut slot.eps_w[ctx.w_off[l]..ctx.w_off[l + 1]] {
            *v = rng.next_normal();
        }
    }
    for l in 0..n_layers {
        for v in &mut slot.eps_b[ctx.unit_off[l]..ctx.unit_off[l + 1]] {
            *v = rng.next_normal();
        }
    }

    // Layer 0 forward via the z-split identity.
    let l0 = &ctx.net.layers[0];
    for h in 0..n_h {
        let eps_row = &slot.eps_w[h * n_in..(h + 1) * n_in];
        let sigx_row = &ctx.sigx0[h * n_in..(h + 1) * n_in];
        let z = ctx.z_mu0[h]
            + dot(eps_row, sigx_row)
            + slot.eps_b[h] * l0.bias_sigma[h];
        slot.z[h] = z;
        slot.a[h] = if z > 0.0 { z } else { 0.0 };
    }

    // Upper layers: materialize sample weights, then affine + ReLU.
    for l in 1..n_layers {
        let (n_hi, n_lo) = (sizes[l + 1], sizes[l]);
        let layer = &ctx.net.layers[l];
        let w = &mut slot.w_upper[ctx.upper_off[l]..ctx.upper_off[l + 1]];
        let eps = &slot.eps_w[ctx.w_off[l]..ctx.w_off[l + 1]];
        let mu = layer.mu.as_slice();
        let sg = layer.sigma.as_slice();
        for i in 0..w.len() {
            w[i] = mu[i] + eps[i] * sg[i];
        }
        let (a_prev_start, u_off) = (ctx.unit_off[l - 1], ctx.unit_off[l]);
        let is_hidden = l + 1 < n_layers;
        for o in 0..n_hi {
            let z = {
                let a_prev = &slot.a[a_prev_start..a_prev_start + n_lo];
                dot(&w[o * n_lo..(o + 1) * n_lo], a_prev)
                    + layer.bias_mu[o]
                    + slot.eps_b[u_off + o] * layer.bias_sigma[o]
            };
            slot.z[u_off + o] = z;
            // Hidden layers apply ReLU; the last layer keeps logits.
            slot.a[u_off + o] = if is_hidden && z <= 0.0 { 0.0 } else { z };
        }
    }

    // Loss and output delta.
    let out_off = ctx.unit_off[n_layers - 1];
    let k = sizes[n_layers];
    let logits = &slot.z[out_off..out_off + k];
    let (loss, grad) = softmax_cross_entropy(logits, ctx.label)?;
    slot.loss = loss;
    slot.delta[out_off..out_off + k].copy_from_slice(&grad);

    // Backward through upper layers only (layer 0 delta is the last one).
    for l in (1..n_layers).rev() {
        let (n_hi, n_lo) = (sizes[l + 1], sizes[l]);
        let u_off = ctx.unit_off[l];
        let lo_off = ctx.unit_off[l - 1];
        let w = &slot.w_upper[ctx.upper_off[l]..ctx.upper_off[l + 1]];
        for i in 0..n_lo {
            let z = slot.z[lo_off + i];
            let d = if z > 0.0 {
                let mut acc = 0.0;
                for o in 0..n_hi {
                    acc += slot.delta[u_off + o] * w[o * n_lo + i];
                }
                acc
            } else {
                0.0
            };
            slot.delta[lo_off + i] = d;
        }
    }
    Ok(())
}

/// Fused deterministic stepper over a flat parameter block laid out as
/// `[w0, b0, w1, b1, ...]` with row-major weights.
#[derive(Debug)]
pub struct DetStepper {
    sizes: Vec<usize>,
    /// Offset of layer l's weights in the flat block.
    w_off: Vec<usize>,
    /// Offset of layer l's biases in the flat block.
    b_off: Vec<usize>,
    unit_off: Vec<usize>,
    z: Vec<f64>,
    a: Vec<f64>,
    delta: Vec<f64>,
    /// Flat gradient, same layout as the parameter block.
    pub grad: Vec<f64>,
    pub loss: f64,
}

impl DetStepper {
    pub fn new(spec: &NetworkSpec) -> Self {
        let sizes = spec.layer_sizes.clone();
        let n_layers = sizes.len() - 1;
        let mut w_off = Vec::with_capacity(n_layers);
        let mut b_off = Vec::with_capacity(n_layers);
        let mut unit_off = vec![0usize];
        let mut cursor = 0usize;
        for l in 0..n_layers {
            w_off.push(cursor);
            cursor += sizes[l + 1] * sizes[l];
            b_off.push(cursor);
            cursor += sizes[l + 1];
            unit_off.push(unit_off[l] + sizes[l + 1]);
        }
        let total_units = unit_off[n_layers];
        DetStepper {
            z: vec![0.0; total_units],
            a: vec![0.0; total_units],
            delta: vec![0.0; total_units],
            grad: vec![0.0; cursor],
            loss: 0.0,
            sizes,
            w_off,
            b_off,
            unit_off,
        }
    }

    /// Total flat parameter length for this spec.
    pub fn param_len(&self) -> usize {
        self.grad.len()
    }

    pub fn layer_w_range(&self, l: usize) -> std::ops::Range<usize> {
        self.w_off[l]..self.b_off[l]
    }

    pub fn layer_b_range(&self, l: usize) -> std::ops::Range<usize> {
        self.b_off[l]..self.b_off[l] + self.sizes[l + 1]
    }

    /// Forward + backward for one example against flat parameters; fills
    /// `self.grad` and returns the loss.
    pub fn compute_grads(&mut self, params: &[f64], x: &[f64], label: usize) -> Result<f64> {
        let sizes = &self.sizes;
        let n_layers = sizes.len() - 1;
        if params.len() != self.grad.len() || x.len() != sizes[0] {
            return Err(CoreError::ShapeMismatch {
                op: "DetStepper::compute_grads",
                detail: "parameter or input length mismatch".into(),
            });
        }
        // Forward.
        for l in 0..n_layers {
            let (n_hi, n_lo) = (sizes[l + 1], sizes[l]);
            let w = &params[self.w_off[l]..self.b_off[l]];
            let b = &params[self.b_off[l]..self.b_off[l] + n_hi];
            let u_off = self.unit_off[l];
            for o in 0..n_hi {
                let z = if l == 0 {
                    dot(&w[o * n_lo..(o + 1) * n_lo], x) + b[o]
                } else {
                    let a_prev = &self.a
                        [self.unit_off[l - 1]..self.unit_off[l - 1] + n_lo];
                    dot(&w[o * n_lo..(o + 1) * n_lo], a_prev) + b[o]
                };
                self.z[u_off + o] = z;
                self.a[u_off + o] = if l + 1 < n_layers && z <= 0.0 { 0.0 } else { z };
            }
        }
        // Loss + output delta.
        let out_off = self.unit_off[n_layers - 1];
        let k = sizes[n_layers];
        let (loss, grad_logits) =
            softmax_cross_entropy(&self.z[out_off..out_off + k], label)?;
        self.loss = loss;
        self.delta[out_off..out_off + k].copy_from_slice(&grad_logits);
        // Backward.
        for l in (0..n_layers).rev() {
            let (n_hi, n_lo) = (sizes[l + 1], sizes[l]);
            let u_off = self.unit_off[l];
            let w = &params[self.w_off[l]..self.b_off[l]];
            {
                let gw = &mut self.grad[self.w_off[l]..self.b_off[l]];
                let gb_start = self.b_off[l] - self.w_off[l];
                let _ = gb_start;
                for o in 0..n_hi {
                    let d = self.delta[u_off + o];
                    let gw_row = &mut gw[o * n_lo..(o + 1) * n_lo];
                    if l == 0 {
                        for (g, &xv) in gw_row.iter_mut().zip(x) {
                            *g = d * xv;
                        }
                    } else {
                        let a_off = self.unit_off[l - 1];
                        for (i, g) in gw_row.iter_mut().enumerate() {
                            *g = d * self.a[a_off + i];
                        }
                    }
                }
            }
            for o in 0..n_hi {
                self.grad[self.b_off[l] + o] = self.delta[u_off + o];
            }
            if l > 0 {
                let lo_off = self.unit_off[l - 1];
                for i in 0..n_lo {
                    let z = self.z[lo_off + i];
                    self.delta[lo_off + i] = if z > 0.0 {
                        let mut acc = 0.0;
                        for o in 0..n_hi {
                            acc += self.delta[u_off + o] * w[o * n_lo + i];
                        }
                        acc
                    } else {
                        0.0
                    };
                }
            }
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        backward_grads, det_backward, forward_sample, init_deterministic, init_mean_field,
        DeterministicLayer, DeterministicNetwork, Flavor, InitScheme, Reduction,
    };
    use crate::tensor::Tensor2;

    #[test]
    fn fused_matches_general_path() {
        let spec = NetworkSpec::new(vec![23, 9, 7, 5], Flavor::MeanField).unwrap();
        let mut init = RngStream::new(41, 0);
        let net = init_mean_field(&spec, InitScheme::Mnist, &mut init).unwrap();
        let mut xs = RngStream::new(42, 0);
        let x: Vec<f64> = (0..23).map(|_| xs.next_uniform(-1.5, 1.5)).collect();

        let mut stepper = MfStepper::new(&spec, 6);
        let mut rng_a = RngStream::new(99, 7);
        let loss_fused = stepper
            .compute_grads(&net, &x, 3, &mut rng_a)
            .unwrap();

        let mut rng_b = RngStream::new(99, 7);
        let xt = Tensor2::row_vector(x.clone());
        let trace = forward_sample(&net, &xt, 6, &mut rng_b).unwrap();
        let general = backward_grads(&net, &trace, &[3], Reduction::Mean).unwrap();

        assert!((loss_fused - general.mean_loss).abs() < 1e-10);
        for l in 0..3 {
            let gm = general.layers[l].mu.as_slice();
            let gf = &stepper.grads.w_mu[l];
            for (a, b) in gm.iter().zip(gf) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "mu {l}: {a} vs {b}");
            }
            let gs = general.layers[l].sigma.as_slice();
            let gfs = &stepper.grads.w_sigma[l];
            for (a, b) in gs.iter().zip(gfs) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "sigma {l}: {a} vs {b}");
            }
            for (a, b) in general.layers[l].bias_mu.iter().zip(&stepper.grads.b_mu[l]) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
            for (a, b) in general.layers[l]
                .bias_sigma
                .iter()
                .zip(&stepper.grads.b_sigma[l])
            {
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn det_stepper_matches_general_path() {
        let spec = NetworkSpec::new(vec![17, 8, 4], Flavor::Deterministic).unwrap();
        let mut init = RngStream::new(4, 0);
        let net = init_deterministic(&spec, &mut init).unwrap();
        let mut stepper = DetStepper::new(&spec);
        // Pack the network into the flat layout.
        let mut flat = vec![0.0; stepper.param_len()];
        for (l, layer) in net.layers.iter().enumerate() {
            flat[stepper.layer_w_range(l)].copy_from_slice(layer.w.as_slice());
            flat[stepper.layer_b_range(l)].copy_from_slice(&layer.bias);
        }
        let mut xs = RngStream::new(5, 0);
        let x: Vec<f64> = (0..17).map(|_| xs.next_uniform(-1.0, 1.0)).collect();
        let loss = stepper.compute_grads(&flat, &x, 2).unwrap();

        let xt = Tensor2::row_vector(x);
        let general = det_backward(&net, &xt, &[2], Reduction::Mean).unwrap();
        assert!((loss - general.mean_loss).abs() < 1e-12);
        for l in 0..2 {
            for (a, b) in general.layers[l]
                .w
                .as_slice()
                .iter()
                .zip(&stepper.grad[stepper.layer_w_range(l)])
            {
                assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()));
            }
            for (a, b) in general.layers[l]
                .bias
                .iter()
                .zip(&stepper.grad[stepper.layer_b_range(l)])
            {
                assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn det_flat_pack_round_trip() {
        let spec = NetworkSpec::new(vec![6, 5, 3], Flavor::Deterministic).unwrap();
        let mut init = RngStream::new(8, 0);
        let net = init_deterministic(&spec, &mut init).unwrap();
        let stepper = DetStepper::new(&spec);
        let mut flat = vec![0.0; stepper.param_len()];
        for (l, layer) in net.layers.iter().enumerate() {
            flat[stepper.layer_w_range(l)].copy_from_slice(layer.w.as_slice());
            flat[stepper.layer_b_range(l)].copy_from_slice(&layer.bias);
        }
        let rebuilt = DeterministicNetwork {
            spec: spec.clone(),
            layers: (0..2)
                .map(|l| DeterministicLayer {
                    w: Tensor2::from_vec(
                        spec.layer_sizes[l + 1],
                        spec.layer_sizes[l],
                        flat[stepper.layer_w_range(l)].to_vec(),
                    )
                    .unwrap(),
                    bias: flat[stepper.layer_b_range(l)].to_vec(),
                })
                .collect(),
        };
        assert_eq!(net, rebuilt);
    }
}
