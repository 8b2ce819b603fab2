//! Independent oracles for integration and acceptance tests.
//!
//! Everything here deliberately avoids the implementation paths it checks:
//! the ODE integrator never touches the closed form, the finite-difference
//! gradients never touch backprop, the pairwise ROC never touches the
//! rank-sum formulation, and the grid posterior never touches the
//! product-of-Gaussians identity.

#![allow(dead_code)]

use mesu_core::rng::RngStream;

/// Adaptive Runge-Kutta-Fehlberg 4(5) integrator for scalar ODEs.
///
/// Classic embedded pair with step-doubling control; tolerances are applied
/// to the embedded error estimate per step.
pub fn rkf45<F: Fn(f64, f64) -> f64>(
    f: F,
    t0: f64,
    y0: f64,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> f64 {
    // Fehlberg coefficients.
    const A: [f64; 6] = [0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5];
    const B: [[f64; 5]; 6] = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.25, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
        [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
        [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
        [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ];
    const C4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
    const C5: [f64; 6] = [
        16.0 / 135.0,
        0.0,
        6656.0 / 12825.0,
        28561.0 / 56430.0,
        -9.0 / 50.0,
        2.0 / 55.0,
    ];

    let mut t = t0;
    let mut y = y0;
    let mut h = (t_end - t0) / 100.0;
    let h_min = (t_end - t0) * 1e-14;
    let mut k = [0.0f64; 6];
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        for i in 0..6 {
            let mut yi = y;
            for j in 0..i {
                yi += h * B[i][j] * k[j];
            }
            k[i] = f(t + A[i] * h, yi);
        }
        let y4 = y + h * (0..6).map(|i| C4[i] * k[i]).sum::<f64>();
        let y5 = y + h * (0..6).map(|i| C5[i] * k[i]).sum::<f64>();
        let err = (y5 - y4).abs();
        let tol = atol + rtol * y5.abs().max(y.abs());
        if err <= tol || h <= h_min {
            t += h;
            y = y5;
        }
        // Standard safety-factored step adaptation.
        let scale = if err > 0.0 {
            0.9 * (tol / err).powf(0.2)
        } else {
            2.0
        };
        h *= scale.clamp(0.2, 4.0);
        if h <= 0.0 || !h.is_finite() {
            panic!("rkf45 step collapsed at t={t}");
        }
    }
    y
}

/// Central finite difference of a scalar function.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Brute-force pairwise ROC AUC: fraction of (id, ood) pairs where the OOD
/// score wins, ties counted one half.
pub fn roc_auc_pairwise(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &o in ood {
        for &i in id {
            if o > i {
                wins += 1.0;
            } else if o == i {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Monte Carlo estimate of `KL(a || b)` for diagonal Gaussians via
/// `E_{x~a}[log a(x) - log b(x)]`.
pub fn kl_monte_carlo(
    mu_a: &[f64],
    sigma_a: &[f64],
    mu_b: &[f64],
    sigma_b: &[f64],
    samples: usize,
    rng: &mut RngStream,
) -> f64 {
    let dim = mu_a.len();
    let mut total = 0.0;
    for _ in 0..samples {
        let mut log_a = 0.0;
        let mut log_b = 0.0;
        for d in 0..dim {
            let eps = rng.next_normal();
            let x = mu_a[d] + eps * sigma_a[d];
            log_a += log_normal_pdf(x, mu_a[d], sigma_a[d]);
            log_b += log_normal_pdf(x, mu_b[d], sigma_b[d]);
        }
        total += log_a - log_b;
    }
    total / samples as f64
}

pub fn log_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Mean and standard deviation of the normalized product of two Gaussian
/// densities, computed by brute-force Simpson quadrature on a wide grid.
pub fn product_posterior_by_quadrature(
    mu_prior: f64,
    sigma_prior: f64,
    mu_lik: f64,
    sigma_lik: f64,
) -> (f64, f64) {
    let lo = (mu_prior - 12.0 * sigma_prior).min(mu_lik - 12.0 * sigma_lik);
    let hi = (mu_prior + 12.0 * sigma_prior).max(mu_lik + 12.0 * sigma_lik);
    let n = 20_000; // even
    let h = (hi - lo) / n as f64;
    let density = |x: f64| {
        (log_normal_pdf(x, mu_prior, sigma_prior) + log_normal_pdf(x, mu_lik, sigma_lik)).exp()
    };
    let simpson = |g: &dyn Fn(f64) -> f64| {
        let mut acc = g(lo) + g(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += g(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let z = simpson(&|x| density(x));
    let mean = simpson(&|x| x * density(x)) / z;
    let var = simpson(&|x| (x - mean) * (x - mean) * density(x)) / z;
    (mean, var.sqrt())
}

/// Asserts `|a - b| <= tol * max(1, |b|)` with a readable failure message.
pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    let scale = 1.0f64.max(b.abs());
    assert!(
        (a - b).abs() <= tol * scale,
        "{what}: {a} vs {b} (tol {tol})"
    );
}

/// Worst relative error between backprop gradients and central finite
/// differences of the frozen-eps Monte Carlo loss, over random parameter
/// probes of a mean-field network.
pub fn frozen_eps_fd_max_rel(
    net: &mut mesu_core::network::MeanFieldNetwork,
    eps_sets: &[mesu_core::network::EpsSet],
    x: &mesu_core::tensor::Tensor2,
    labels: &[usize],
    probes: usize,
    h: f64,
    probe_seed: u64,
) -> f64 {
    use mesu_core::network::{backward_grads, forward_with_eps, Reduction};
    let loss = |net: &mesu_core::network::MeanFieldNetwork| -> f64 {
        let trace = forward_with_eps(net, x, eps_sets.to_vec()).unwrap();
        backward_grads(net, &trace, labels, Reduction::Mean)
            .unwrap()
            .mean_loss
    };
    let trace = forward_with_eps(net, x, eps_sets.to_vec()).unwrap();
    let grads = backward_grads(net, &trace, labels, Reduction::Mean).unwrap();
    let mut rng = RngStream::new(probe_seed, 0);
    let mut max_rel: f64 = 0.0;
    for _ in 0..probes {
        let layer = rng.next_below(net.layers.len());
        let (rows, cols) = (net.layers[layer].mu.rows(), net.layers[layer].mu.cols());
        let r = rng.next_below(rows);
        let c = rng.next_below(cols);
        let on_sigma = rng.next_below(2) == 1;
        let analytic = if on_sigma {
            grads.layers[layer].sigma.get(r, c)
        } else {
            grads.layers[layer].mu.get(r, c)
        };
        let original = if on_sigma {
            net.layers[layer].sigma.get(r, c)
        } else {
            net.layers[layer].mu.get(r, c)
        };
        let set = |net: &mut mesu_core::network::MeanFieldNetwork, v: f64| {
            if on_sigma {
                net.layers[layer].sigma.set(r, c, v);
            } else {
                net.layers[layer].mu.set(r, c, v);
            }
        };
        set(net, original + h);
        let plus = loss(net);
        set(net, original - h);
        let minus = loss(net);
        set(net, original);
        let fd = (plus - minus) / (2.0 * h);
        let denom = analytic.abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max((analytic - fd).abs() / denom);
    }
    max_rel
}
