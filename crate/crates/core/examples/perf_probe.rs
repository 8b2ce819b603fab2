use std::time::Instant;

use mesu_core::network::fused::{DetStepper, MfStepper};
use mesu_core::network::{init_deterministic, init_mean_field, Flavor, InitScheme, NetworkSpec};
use mesu_core::optim::{mesu_step, MesuConfig};
use mesu_core::rng::RngStream;

fn main() {
    let mut rng = RngStream::new(1, 0);
    let n = 20_000_000u64;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += rng.next_normal();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("normals: {:.2} ns/draw (sink {acc:.3})", dt / n as f64 * 1e9);

    let spec = NetworkSpec::new(vec![784, 50, 10], Flavor::MeanField).unwrap();
    let mut init_rng = RngStream::new(2, 0);
    let mut net = init_mean_field(&spec, InitScheme::Mnist, &mut init_rng).unwrap();
    let mut xs = RngStream::new(3, 0);
    let x: Vec<f64> = (0..784).map(|_| xs.next_uniform(-1.0, 1.0)).collect();
    let cfg = MesuConfig::new(300_000.0, 0.0, 1.0);
    let mut sampler = RngStream::new(4, 0);
    let mut stepper = MfStepper::new(&spec, 10);
    let steps = 5000;
    let t0 = Instant::now();
    for _ in 0..steps {
        stepper.compute_grads(&net, &x, 3, &mut sampler).unwrap();
        for (l, layer) in net.layers.iter_mut().enumerate() {
            mesu_step(
                layer.mu.as_mut_slice(),
                layer.sigma.as_mut_slice(),
                &stepper.grads.w_mu[l],
                &stepper.grads.w_sigma[l],
                &cfg,
            )
            .unwrap();
            mesu_step(
                &mut layer.bias_mu,
                &mut layer.bias_sigma,
                &stepper.grads.b_mu[l],
                &stepper.grads.b_sigma[l],
                &cfg,
            )
            .unwrap();
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "fused mesu step: {:.1} us/step  ({:.0} steps/s)",
        dt / steps as f64 * 1e6,
        steps as f64 / dt
    );

    let dspec = NetworkSpec::new(vec![784, 50, 10], Flavor::Deterministic).unwrap();
    let mut dinit = RngStream::new(5, 0);
    let dnet = init_deterministic(&dspec, &mut dinit).unwrap();
    let mut det = DetStepper::new(&dspec);
    let mut flat = vec![0.0; det.param_len()];
    for (l, layer) in dnet.layers.iter().enumerate() {
        flat[det.layer_w_range(l)].copy_from_slice(layer.w.as_slice());
        flat[det.layer_b_range(l)].copy_from_slice(&layer.bias);
    }
    let steps = 20000;
    let t0 = Instant::now();
    for _ in 0..steps {
        det.compute_grads(&flat, &x, 3).unwrap();
        for i in 0..flat.len() {
            flat[i] -= 0.002 * det.grad[i];
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "det sgd step: {:.1} us/step  ({:.0} steps/s)",
        dt / steps as f64 * 1e6,
        steps as f64 / dt
    );
}
