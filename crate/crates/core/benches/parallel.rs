//! Throughput of the data-parallel inner loops, single-threaded baseline
//! against the ambient rayon pool.
//!
//! Build default (`parallel` feature on) and the same benches run over both
//! a one-thread pool and the full pool; `--no-default-features` gives the
//! true sequential fallback for cross-checking numbers.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mesu_core::network::fused::MfStepper;
use mesu_core::network::{
    init_mean_field, predict_mean_probs, Flavor, InitScheme, MeanFieldNetwork, NetworkSpec,
};
use mesu_core::optim::{mesu_step, MesuConfig};
use mesu_core::rng::{gaussian_sample, RngStream};
use mesu_core::tensor::Tensor2;

fn setup_net() -> (NetworkSpec, MeanFieldNetwork) {
    let spec = NetworkSpec::new(vec![784, 50, 10], Flavor::MeanField).unwrap();
    let mut rng = RngStream::new(2, 0);
    let net = init_mean_field(&spec, InitScheme::Mnist, &mut rng).unwrap();
    (spec, net)
}

fn with_pool<F: FnOnce() + Send>(threads: Option<usize>, f: F) {
    match threads {
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(f),
        _ => f(),
    }
}

fn bench_train_step(c: &mut Criterion) {
    let (spec, mut net) = setup_net();
    let mut xs = RngStream::new(3, 0);
    let x: Vec<f64> = (0..784).map(|_| xs.next_uniform(-1.0, 1.0)).collect();
    let cfg = MesuConfig::new(100_000.0, 0.0, 1.0);

    let mut group = c.benchmark_group("train_step_784_50_10_s10");
    for threads in pool_sizes() {
        group.bench_with_input(
            BenchmarkId::new("threads", label(threads)),
            &threads,
            |b, &threads| {
                let mut stepper = MfStepper::new(&spec, 10);
                let mut rng = RngStream::new(4, 0);
                b.iter(|| {
                    with_pool(threads, || {
                        stepper.compute_grads(&net, &x, 3, &mut rng).unwrap();
                    });
                    for (l, layer) in net.layers.iter_mut().enumerate() {
                        mesu_step(
                            layer.mu.as_mut_slice(),
                            layer.sigma.as_mut_slice(),
                            &stepper.grads.w_mu[l],
                            &stepper.grads.w_sigma[l],
                            &cfg,
                        )
                        .unwrap();
                    }
                });
            },
        );
    }
    group.finish();
}

fn bench_batch_prediction(c: &mut Criterion) {
    let (_, net) = setup_net();
    let mut xs = RngStream::new(5, 0);
    let mut x = Tensor2::zeros(512, 784);
    for v in x.as_mut_slice() {
        *v = xs.next_uniform(-1.0, 1.0);
    }
    let mut group = c.benchmark_group("predict_512_inputs_s10");
    group.sample_size(10);
    for threads in pool_sizes() {
        group.bench_with_input(
            BenchmarkId::new("threads", label(threads)),
            &threads,
            |b, &threads| {
                let mut rng = RngStream::new(6, 0);
                b.iter(|| {
                    with_pool(threads, || {
                        predict_mean_probs(&net, &x, 10, &mut rng).unwrap();
                    })
                });
            },
        );
    }
    group.finish();
}

fn bench_gaussian_sampling(c: &mut Criterion) {
    c.bench_function("gaussian_sample_50x784", |b| {
        let mut rng = RngStream::new(7, 0);
        b.iter(|| gaussian_sample(&mut rng, 50, 784));
    });
}

fn pool_sizes() -> Vec<Option<usize>> {
    #[cfg(feature = "parallel")]
    {
        vec![Some(1), None]
    }
    #[cfg(not(feature = "parallel"))]
    {
        vec![None]
    }
}

fn label(threads: Option<usize>) -> String {
    match threads {
        Some(n) => n.to_string(),
        None => "ambient".to_string(),
    }
}

criterion_group!(
    benches,
    bench_train_step,
    bench_batch_prediction,
    bench_gaussian_sampling
);
criterion_main!(benches);
