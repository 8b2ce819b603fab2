//! Fully connected networks in two flavors.
//!
//! The mean-field flavor keeps a Gaussian per weight: means `mu` and standard
//! deviations `sigma`, sampled through `w = mu + eps * sigma` with recorded
//! `eps` so the backward pass can form both gradients:
//! `dC/dmu = mean_s dL/dw` and `dC/dsigma = mean_s (dL/dw * eps)`.
//! The deterministic flavor is the `sigma = 0` limit and shares the same
//! forward kernels, so it matches that limit bit for bit.
//!
//! Per-sample work is independent; parallel sites reduce partial gradients in
//! ascending sample index, keeping results bitwise identical across thread
//! counts.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::exec;
use crate::loss::{softmax, softmax_cross_entropy};
use crate::rng::RngStream;
use crate::tensor::Tensor2;

/// Which parameterization a network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Deterministic,
    MeanField,
}

/// Weight initialization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// mu ~ U(−4/√n, 4/√n), sigma = 2/√n.
    Mnist,
    /// mu ~ U(−√2/√n, √2/√n), sigma = 1/(2√m).
    ConvStyle,
}

/// Layer sizes plus flavor; ReLU between hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub flavor: Flavor,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, flavor: Flavor) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(CoreError::InvalidArgument {
                op: "NetworkSpec::new",
                detail: format!("layer sizes {layer_sizes:?}"),
            });
        }
        Ok(NetworkSpec {
            layer_sizes,
            flavor,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Per-weight Gaussian parameters of one layer; `sigma > 0` elementwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldLayer {
    pub mu: Tensor2,
    pub sigma: Tensor2,
    pub bias_mu: Vec<f64>,
    pub bias_sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicLayer {
    pub w: Tensor2,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldNetwork {
    pub spec: NetworkSpec,
    pub layers: Vec<MeanFieldLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicNetwork {
    pub spec: NetworkSpec,
    pub layers: Vec<DeterministicLayer>,
}

/// One ε draw per weight and bias of every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSet {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
}

impl EpsSet {
    /// All-zero draws matching the shape of `net` (the σ→0 limit).
    pub fn zeros_like(net: &MeanFieldNetwork) -> EpsSet {
        EpsSet {
            weights: net
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.mu.rows(), l.mu.cols()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias_mu.len()])
                .collect(),
        }
    }

    /// Fresh standard-normal draws matching the shape of `net`.
    pub fn sample_like(net: &MeanFieldNetwork, rng: &mut RngStream) -> EpsSet {
        EpsSet {
            weights: net
                .layers
                .iter()
                .map(|l| {
                    let mut t = Tensor2::zeros(l.mu.rows(), l.mu.cols());
                    for v in t.as_mut_slice() {
                        *v = rng.next_normal();
                    }
                    t
                })
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| (0..l.bias_mu.len()).map(|_| rng.next_normal()).collect())
                .collect(),
        }
    }
}

/// Everything the backward pass needs from one Monte Carlo sample.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    pub eps: EpsSet,
    /// Effective weights `mu + eps*sigma` actually used in the forward pass.
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
    /// Pre-activations per layer, batch rows × layer outputs.
    pub pre: Vec<Tensor2>,
    /// Post-ReLU activations per hidden layer.
    pub post: Vec<Tensor2>,
}

impl SampleTrace {
    pub fn logits(&self) -> &Tensor2 {
        self.pre.last().expect("at least one layer")
    }
}

/// Forward record for a batch: the input plus one trace per MC sample.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor2,
    pub samples: Vec<SampleTrace>,
}

/// Per-layer mean-field gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct GradBlock {
    pub mu: Tensor2,
    pub sigma: Tensor2,
    pub bias_mu: Vec<f64>,
    pub bias_sigma: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MeanFieldGrads {
    pub layers: Vec<GradBlock>,
    pub mean_loss: f64,
}

/// Per-layer deterministic gradients.
#[derive(Debug, Clone)]
pub struct DetGradBlock {
    pub w: Tensor2,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DetGrads {
    pub layers: Vec<DetGradBlock>,
    pub mean_loss: f64,
}

/// How per-batch losses are reduced before differentiation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

// ---- initialization ----------------------------------------------------

/// Mean-field init. `mnist`: mu ~ U(−4/√n, 4/√n), sigma = 2/√n.
/// `conv-style`: mu ~ U(−√2/√n, √2/√n), sigma = 1/(2√m). Biases get the same
/// treatment as the weights of their layer.
pub fn init_mean_field(
    spec: &NetworkSpec,
    scheme: InitScheme,
    rng: &mut RngStream,
) -> Result<MeanFieldNetwork> {
    if spec.flavor != Flavor::MeanField {
        return Err(CoreError::InvalidArgument {
            op: "init_mean_field",
            detail: "spec flavor is deterministic".into(),
        });
    }
    let mut layers = Vec::with_capacity(spec.num_layers());
    for l in 0..spec.num_layers() {
        let n_in = spec.layer_sizes[l];
        let n_out = spec.layer_sizes[l + 1];
        let (mu_bound, sigma0) = match scheme {
            InitScheme::Mnist => (4.0 / (n_in as f64).sqrt(), 2.0 / (n_in as f64).sqrt()),
            InitScheme::ConvStyle => (
                (2.0f64).sqrt() / (n_in as f64).sqrt(),
                1.0 / (2.0 * (n_out as f64).sqrt()),
            ),
        };
        let mut mu = Tensor2::zeros(n_out, n_in);
        for v in mu.as_mut_slice() {
            *v = rng.next_uniform(-mu_bound, mu_bound);
        }
        let bias_mu: Vec<f64> = (0..n_out)
            .map(|_| rng.next_uniform(-mu_bound, mu_bound))
            .collect();
        layers.push(MeanFieldLayer {
            mu,
            sigma: Tensor2::full(n_out, n_in, sigma0),
            bias_mu,
            bias_sigma: vec![sigma0; n_out],
        });
    }
    Ok(MeanFieldNetwork {
        spec: spec.clone(),
        layers,
    })
}

/// Deterministic Kaiming-style init: w ~ U(−1/√n, 1/√n), same for biases.
pub fn init_deterministic(spec: &NetworkSpec, rng: &mut RngStream) -> Result<DeterministicNetwork> {
    if spec.flavor != Flavor::Deterministic {
        return Err(CoreError::InvalidArgument {
            op: "init_deterministic",
            detail: "spec flavor is mean-field".into(),
        });
    }
    let mut layers = Vec::with_capacity(spec.num_layers());
    for l in 0..spec.num_layers() {
        let n_in = spec.layer_sizes[l];
        let n_out = spec.layer_sizes[l + 1];
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut w = Tensor2::zeros(n_out, n_in);
        for v in w.as_mut_slice() {
            *v = rng.next_uniform(-bound, bound);
        }
        let bias: Vec<f64> = (0..n_out).map(|_| rng.next_uniform(-bound, bound)).collect();
        layers.push(DeterministicLayer { w, bias });
    }
    Ok(DeterministicNetwork {
        spec: spec.clone(),
        layers,
    })
}

// ---- shared forward kernels ---------------------------------------------

/// Affine map `x (B×n_in) · wᵀ (n_out×n_in) + bias`, the only dense kernel
/// in every forward pass.
fn affine(x: &Tensor2, w: &Tensor2, bias: &[f64]) -> Result<Tensor2> {
    let mut z = x.matmul_bt(w)?;
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(z)
}

#[inline(always)]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Forward through explicit weight matrices, recording pre/post activations.
fn mlp_forward(
    weights: &[Tensor2],
    biases: &[Vec<f64>],
    x: &Tensor2,
) -> Result<(Vec<Tensor2>, Vec<Tensor2>)> {
    let mut pre = Vec::with_capacity(weights.len());
    let mut post = Vec::with_capacity(weights.len().saturating_sub(1));
    let mut activ = x.clone();
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let z = affine(&activ, w, b)?;
        if l + 1 < weights.len() {
            let a = z.map(relu);
            post.push(a.clone());
            pre.push(z);
            activ = a;
        } else {
            pre.push(z);
        }
    }
    Ok((pre, post))
}

// ---- mean-field forward / backward ---------------------------------------

impl MeanFieldNetwork {
    /// Materializes `mu + eps*sigma` for every layer.
    pub fn effective_weights(&self, eps: &EpsSet) -> Result<(Vec<Tensor2>, Vec<Vec<f64>>)> {
        if eps.weights.len() != self.layers.len() {
            return Err(CoreError::ShapeMismatch {
                op: "effective_weights",
                detail: "eps layer count mismatch".into(),
            });
        }
        let mut ws = Vec::with_capacity(self.layers.len());
        let mut bs = Vec::with_capacity(self.layers.len());
        for (layer, (ew, eb)) in self.layers.iter().zip(eps.weights.iter().zip(&eps.biases)) {
            if !layer.mu.same_shape(ew) {
                return Err(CoreError::ShapeMismatch {
                    op: "effective_weights",
                    detail: "eps shape mismatch".into(),
                });
            }
            let mut w = layer.mu.clone();
            let sl = layer.sigma.as_slice();
            let el = ew.as_slice();
            for (i, v) in w.as_mut_slice().iter_mut().enumerate() {
                *v += el[i] * sl[i];
            }
            let b: Vec<f64> = layer
                .bias_mu
                .iter()
                .zip(layer.bias_sigma.iter().zip(eb))
                .map(|(&m, (&s, &e))| m + e * s)
                .collect();
            ws.push(w);
            bs.push(b);
        }
        Ok((ws, bs))
    }

    /// Mean σ over all weights and biases of every layer (scalar per layer).
    pub fn mean_sigma_per_layer(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| {
                let n = l.sigma.len() + l.bias_sigma.len();
                let sum: f64 =
                    l.sigma.as_slice().iter().sum::<f64>() + l.bias_sigma.iter().sum::<f64>();
                sum / n as f64
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.mu.len() + l.bias_mu.len())
            .sum()
    }
}

/// Forward pass with caller-supplied ε draws (one set per MC sample).
pub fn forward_with_eps(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    eps_sets: Vec<EpsSet>,
) -> Result<ForwardTrace> {
    if x.cols() != net.spec.input_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "forward_with_eps",
            detail: format!("input dim {} vs spec {}", x.cols(), net.spec.input_dim()),
        });
    }
    let samples = eps_sets
        .into_iter()
        .map(|eps| {
            let (weights, biases) = net.effective_weights(&eps)?;
            let (pre, post) = mlp_forward(&weights, &biases, x)?;
            Ok(SampleTrace {
                eps,
                weights,
                biases,
                pre,
                post,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardTrace {
        input: x.clone(),
        samples,
    })
}

/// Reparameterized forward pass: draws `n_samples` ε sets from per-sample
/// substreams of `rng` and records them in the trace.
pub fn forward_sample(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<ForwardTrace> {
    if n_samples == 0 {
        return Err(CoreError::InvalidArgument {
            op: "forward_sample",
            detail: "n_samples must be >= 1".into(),
        });
    }
    if x.cols() != net.spec.input_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "forward_sample",
            detail: format!("input dim {} vs spec {}", x.cols(), net.spec.input_dim()),
        });
    }
    let streams = rng.fork(n_samples);
    let samples: Vec<Result<SampleTrace>> = exec::map_indexed(n_samples, |s| {
        let mut stream = streams[s].clone();
        let eps = EpsSet::sample_like(net, &mut stream);
        let (weights, biases) = net.effective_weights(&eps)?;
        let (pre, post) = mlp_forward(&weights, &biases, x)?;
        Ok(SampleTrace {
            eps,
            weights,
            biases,
            pre,
            post,
        })
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ForwardTrace {
        input: x.clone(),
        samples,
    })
}

/// Per-sample loss and logit gradients for one trace.
fn logit_grads(
    logits: &Tensor2,
    labels: &[usize],
    reduction: Reduction,
) -> Result<(f64, Tensor2)> {
    if logits.rows() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            op: "backward_grads",
            detail: format!("{} logit rows vs {} labels", logits.rows(), labels.len()),
        });
    }
    let batch = labels.len();
    let scale = match reduction {
        Reduction::Mean => 1.0 / batch as f64,
        Reduction::Sum => 1.0,
    };
    let mut delta = Tensor2::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(r), label)?;
        loss += l * scale;
        let row = delta.row_mut(r);
        for (d, gv) in row.iter_mut().zip(&g) {
            *d = gv * scale;
        }
    }
    Ok((loss, delta))
}

struct SampleGrads {
    w: Vec<Tensor2>,
    b: Vec<Vec<f64>>,
    loss: f64,
}

/// Backprop through one sample's trace; returns dL/dW and dL/dbias per layer.
fn backward_one_sample(
    trace: &SampleTrace,
    input: &Tensor2,
    labels: &[usize],
    reduction: Reduction,
) -> Result<SampleGrads> {
    let n_layers = trace.weights.len();
    let (loss, mut delta) = logit_grads(trace.logits(), labels, reduction)?;
    let mut w_grads = vec![Tensor2::zeros(0, 0); n_layers];
    let mut b_grads = vec![Vec::new(); n_layers];
    for l in (0..n_layers).rev() {
        let upstream = if l == 0 { input } else { &trace.post[l - 1] };
        // dW = deltaᵀ · upstream, dbias = column sums of delta.
        w_grads[l] = delta.matmul_at(upstream)?;
        let mut bg = vec![0.0; delta.cols()];
        for r in 0..delta.rows() {
            for (acc, v) in bg.iter_mut().zip(delta.row(r)) {
                *acc += v;
            }
        }
        b_grads[l] = bg;
        if l > 0 {
            // Propagate: delta_prev = (delta · W) masked by ReLU'(pre).
            let mut prev = delta.matmul(&trace.weights[l])?;
            let pre = &trace.pre[l - 1];
            for (v, &z) in prev.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                // Subgradient at 0 defined as 0.
                if z <= 0.0 {
                    *v = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(SampleGrads {
        w: w_grads,
        b: b_grads,
        loss,
    })
}

/// Backpropagation over every MC sample of a trace.
///
/// `grad.mu` is the arithmetic mean over samples of dL/dw; `grad.sigma` the
/// mean of dL/dw·ε, per the reparameterization identities. Partial results
/// are reduced in ascending sample index.
pub fn backward_grads(
    net: &MeanFieldNetwork,
    trace: &ForwardTrace,
    labels: &[usize],
    reduction: Reduction,
) -> Result<MeanFieldGrads> {
    if trace.samples.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "backward_grads",
            detail: "trace has no samples".into(),
        });
    }
    for (l, layer) in net.layers.iter().enumerate() {
        if !layer.mu.same_shape(&trace.samples[0].weights[l]) {
            return Err(CoreError::ShapeMismatch {
                op: "backward_grads",
                detail: format!("trace/net mismatch at layer {l}"),
            });
        }
    }
    let n_samples = trace.samples.len();
    let per_sample: Vec<Result<SampleGrads>> = exec::map_indexed(n_samples, |s| {
        backward_one_sample(&trace.samples[s], &trace.input, labels, reduction)
    });

    let inv = 1.0 / n_samples as f64;
    let mut layers: Vec<GradBlock> = net
        .layers
        .iter()
        .map(|l| GradBlock {
            mu: Tensor2::zeros(l.mu.rows(), l.mu.cols()),
            sigma: Tensor2::zeros(l.mu.rows(), l.mu.cols()),
            bias_mu: vec![0.0; l.bias_mu.len()],
            bias_sigma: vec![0.0; l.bias_mu.len()],
        })
        .collect();
    let mut mean_loss = 0.0;
    for (s, sample) in per_sample.into_iter().enumerate() {
        let sample = sample?;
        mean_loss += sample.loss * inv;
        let eps = &trace.samples[s].eps;
        for (l, block) in layers.iter_mut().enumerate() {
            let gw = sample.w[l].as_slice();
            let ew = eps.weights[l].as_slice();
            let gmu = block.mu.as_mut_slice();
            let gsig = block.sigma.as_mut_slice();
            for i in 0..gw.len() {
                gmu[i] += gw[i] * inv;
                gsig[i] += gw[i] * ew[i] * inv;
            }
            for (i, &gb) in sample.b[l].iter().enumerate() {
                block.bias_mu[i] += gb * inv;
                block.bias_sigma[i] += gb * eps.biases[l][i] * inv;
            }
        }
    }
    Ok(MeanFieldGrads { layers, mean_loss })
}

// ---- deterministic forward / backward ------------------------------------

/// Deterministic forward pass; returns logits for a batch.
pub fn det_forward(net: &DeterministicNetwork, x: &Tensor2) -> Result<Tensor2> {
    if x.cols() != net.spec.input_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "det_forward",
            detail: format!("input dim {} vs spec {}", x.cols(), net.spec.input_dim()),
        });
    }
    let weights: Vec<Tensor2> = net.layers.iter().map(|l| l.w.clone()).collect();
    let biases: Vec<Vec<f64>> = net.layers.iter().map(|l| l.bias.clone()).collect();
    let (pre, _) = mlp_forward(&weights, &biases, x)?;
    Ok(pre.into_iter().last().unwrap())
}

/// Deterministic forward + backward in one call.
pub fn det_backward(
    net: &DeterministicNetwork,
    x: &Tensor2,
    labels: &[usize],
    reduction: Reduction,
) -> Result<DetGrads> {
    let weights: Vec<Tensor2> = net.layers.iter().map(|l| l.w.clone()).collect();
    let biases: Vec<Vec<f64>> = net.layers.iter().map(|l| l.bias.clone()).collect();
    let (pre, post) = mlp_forward(&weights, &biases, x)?;
    let trace = SampleTrace {
        eps: EpsSet {
            weights: Vec::new(),
            biases: Vec::new(),
        },
        weights,
        biases,
        pre,
        post,
    };
    let grads = backward_one_sample(&trace, x, labels, reduction)?;
    Ok(DetGrads {
        layers: grads
            .w
            .into_iter()
            .zip(grads.b)
            .map(|(w, bias)| DetGradBlock { w, bias })
            .collect(),
        mean_loss: grads.loss,
    })
}

// ---- batched prediction ---------------------------------------------------

/// Class-probability rows for each MC sample: one `B×K` tensor per sample.
///
/// Weights are sampled once per MC sample (not per input); samples are
/// processed in ascending index order.
pub fn predictive_prob_samples(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<Tensor2>> {
    if n_samples == 0 {
        return Err(CoreError::InvalidArgument {
            op: "predictive_prob_samples",
            detail: "n_samples must be >= 1".into(),
        });
    }
    let streams = rng.fork(n_samples);
    let per_sample: Vec<Result<Tensor2>> = exec::map_indexed(n_samples, |s| {
        let mut stream = streams[s].clone();
        let eps = EpsSet::sample_like(net, &mut stream);
        let (weights, biases) = net.effective_weights(&eps)?;
        let (pre, _) = mlp_forward(&weights, &biases, x)?;
        let logits = pre.into_iter().last().unwrap();
        let mut probs = Tensor2::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            let p = softmax(logits.row(r));
            probs.row_mut(r).copy_from_slice(&p);
        }
        Ok(probs)
    });
    per_sample.into_iter().collect()
}

/// Mean predictive probabilities over `n_samples` MC draws.
pub fn predict_mean_probs(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Tensor2> {
    let samples = predictive_prob_samples(net, x, n_samples, rng)?;
    let mut mean = Tensor2::zeros(x.rows(), net.spec.output_dim());
    let inv = 1.0 / samples.len() as f64;
    for s in &samples {
        mean.add_scaled(s, inv)?;
    }
    Ok(mean)
}

/// Softmax probabilities of a deterministic network.
pub fn det_probs(net: &DeterministicNetwork, x: &Tensor2) -> Result<Tensor2> {
    let logits = det_forward(net, x)?;
    let mut probs = Tensor2::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r));
        probs.row_mut(r).copy_from_slice(&p);
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mf_spec(sizes: Vec<usize>) -> NetworkSpec {
        NetworkSpec::new(sizes, Flavor::MeanField).unwrap()
    }

    #[test]
    fn mnist_init_sigma_constant() {
        let spec = mf_spec(vec![784, 50, 10]);
        let mut rng = RngStream::new(1, 0);
        let net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
        let expect = 2.0 / (784.0f64).sqrt();
        assert!((expect - 0.071_428_6).abs() < 1e-6);
        for v in net.layers[0].sigma.as_slice() {
            assert_eq!(*v, expect);
        }
        let bound = 4.0 / 28.0;
        for v in net.layers[0].mu.as_slice() {
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn conv_style_init_sigma() {
        let spec = mf_spec(vec![512, 64, 5]);
        let mut rng = RngStream::new(1, 0);
        let net = init_mean_field(&spec, InitScheme::ConvStyle, &mut rng).unwrap();
        // n_l = 512, m_l = 64 for the first layer.
        for v in net.layers[0].sigma.as_slice() {
            assert_eq!(*v, 0.0625);
        }
    }

    #[test]
    fn deterministic_init_bounds_and_determinism() {
        let spec = NetworkSpec::new(vec![784, 50, 10], Flavor::Deterministic).unwrap();
        let mut rng = RngStream::new(9, 0);
        let net = init_deterministic(&spec, &mut rng).unwrap();
        for v in net.layers[0].w.as_slice() {
            assert!(v.abs() <= 1.0 / 28.0);
        }
        let mut rng2 = RngStream::new(9, 0);
        let net2 = init_deterministic(&spec, &mut rng2).unwrap();
        assert_eq!(net, net2);
        // n_l = 4 gives support bound 0.5.
        let tiny = NetworkSpec::new(vec![4, 2], Flavor::Deterministic).unwrap();
        let mut rng3 = RngStream::new(1, 0);
        let net3 = init_deterministic(&tiny, &mut rng3).unwrap();
        for v in net3.layers[0].w.as_slice() {
            assert!(v.abs() <= 0.5);
        }
    }

    #[test]
    fn sigma_zero_matches_deterministic_bit_for_bit() {
        let spec = mf_spec(vec![12, 7, 4]);
        let mut rng = RngStream::new(21, 0);
        let mut net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
        for l in &mut net.layers {
            l.sigma = Tensor2::zeros(l.sigma.rows(), l.sigma.cols());
            l.bias_sigma = vec![0.0; l.bias_sigma.len()];
        }
        let det = DeterministicNetwork {
            spec: NetworkSpec::new(vec![12, 7, 4], Flavor::Deterministic).unwrap(),
            layers: net
                .layers
                .iter()
                .map(|l| DeterministicLayer {
                    w: l.mu.clone(),
                    bias: l.bias_mu.clone(),
                })
                .collect(),
        };
        let mut x = Tensor2::zeros(3, 12);
        let mut xs = RngStream::new(5, 1);
        for v in x.as_mut_slice() {
            *v = xs.next_uniform(-2.0, 2.0);
        }
        let mut sampler = RngStream::new(7, 2);
        let trace = forward_sample(&net, &x, 4, &mut sampler).unwrap();
        let det_logits = det_forward(&det, &x).unwrap();
        for sample in &trace.samples {
            assert_eq!(sample.logits().as_slice(), det_logits.as_slice());
        }
    }

    #[test]
    fn forward_sample_is_deterministic() {
        let spec = mf_spec(vec![6, 5, 3]);
        let mut rng = RngStream::new(33, 0);
        let net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
        let x = Tensor2::row_vector(vec![0.5, -1.0, 0.0, 2.0, 1.0, -0.5]);
        let mut s1 = RngStream::new(77, 4);
        let mut s2 = RngStream::new(77, 4);
        let t1 = forward_sample(&net, &x, 10, &mut s1).unwrap();
        let t2 = forward_sample(&net, &x, 10, &mut s2).unwrap();
        for (a, b) in t1.samples.iter().zip(&t2.samples) {
            assert_eq!(a.logits().as_slice(), b.logits().as_slice());
        }
    }

    #[test]
    fn reparameterization_identity_on_trace() {
        let spec = mf_spec(vec![5, 4, 3]);
        let mut rng = RngStream::new(3, 0);
        let net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
        let x = Tensor2::row_vector(vec![1.0, 0.3, -0.2, 0.0, 0.7]);
        let mut sampler = RngStream::new(8, 0);
        let trace = forward_sample(&net, &x, 3, &mut sampler).unwrap();
        for sample in &trace.samples {
            for (l, layer) in net.layers.iter().enumerate() {
                let w = sample.weights[l].as_slice();
                let eps = sample.eps.weights[l].as_slice();
                let mu = layer.mu.as_slice();
                let sg = layer.sigma.as_slice();
                for i in 0..w.len() {
                    assert_eq!(w[i], mu[i] + eps[i] * sg[i]);
                }
            }
        }
    }

    #[test]
    fn scalar_net_with_pinned_eps() {
        // 1-layer net, mu=[[1]], sigma=[[1]], x=[1], eps=0.5 -> logit 1.5.
        let spec = mf_spec(vec![1, 1]);
        let net = MeanFieldNetwork {
            spec: spec.clone(),
            layers: vec![MeanFieldLayer {
                mu: Tensor2::from_vec(1, 1, vec![1.0]).unwrap(),
                sigma: Tensor2::from_vec(1, 1, vec![1.0]).unwrap(),
                bias_mu: vec![0.0],
                bias_sigma: vec![0.0],
            }],
        };
        let eps = EpsSet {
            weights: vec![Tensor2::from_vec(1, 1, vec![0.5]).unwrap()],
            biases: vec![vec![0.0]],
        };
        let x = Tensor2::row_vector(vec![1.0]);
        let trace = forward_with_eps(&net, &x, vec![eps]).unwrap();
        assert_eq!(trace.samples[0].logits().get(0, 0), 1.5);
    }

    #[test]
    fn grad_sigma_zero_when_eps_zero() {
        let spec = mf_spec(vec![4, 3, 2]);
        let mut rng = RngStream::new(5, 0);
        let net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
        let x = Tensor2::row_vector(vec![0.2, -0.4, 1.0, 0.5]);
        let eps = EpsSet::zeros_like(&net);
        let trace = forward_with_eps(&net, &x, vec![eps]).unwrap();
        let grads = backward_grads(&net, &trace, &[1], Reduction::Mean).unwrap();
        for block in &grads.layers {
            assert!(block.sigma.as_slice().iter().all(|&v| v == 0.0));
            assert!(block.bias_sigma.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn batch_reduction_mean_vs_sum() {
        let spec = mf_spec(vec![3, 2]);
        let mut rng = RngStream::new(15, 0);
        let net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
        let x = Tensor2::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4]).unwrap();
        let eps = EpsSet::zeros_like(&net);
        let trace = forward_with_eps(&net, &x, vec![eps.clone()]).unwrap();
        let mean = backward_grads(&net, &trace, &[0, 1], Reduction::Mean).unwrap();
        let trace2 = forward_with_eps(&net, &x, vec![eps]).unwrap();
        let sum = backward_grads(&net, &trace2, &[0, 1], Reduction::Sum).unwrap();
        assert!((sum.mean_loss - 2.0 * mean.mean_loss).abs() < 1e-12);
        for (a, b) in mean.layers.iter().zip(&sum.layers) {
            for (x, y) in a.mu.as_slice().iter().zip(b.mu.as_slice()) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }
}

pub mod fused;
