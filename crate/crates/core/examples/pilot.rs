use std::time::Instant;

use mesu_core::harness::{config::Algorithm, ExperimentConfig, ExperimentRun};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let algo = match args.get(1).map(|s| s.as_str()) {
        Some("mesu") | None => Algorithm::Mesu,
        Some("foovb") => Algorithm::Foovb,
        Some("sgd") => Algorithm::Sgd,
        Some("ewc-online") => Algorithm::EwcOnline,
        Some("ewc-stream") => Algorithm::EwcStream,
        Some("si") => Algorithm::Si,
        Some("bnn-sgd") => Algorithm::BnnSgd,
        Some(other) => panic!("unknown algorithm {other}"),
    };
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let mode = args.get(3).map(|s| s.as_str()).unwrap_or("pmnist");

    let data_root = std::path::PathBuf::from(
        std::env::var("MESU_DATA_DIR").unwrap_or_else(|_| "/root/data".into()),
    );
    let mut cfg = match mode {
        "pmnist" => ExperimentConfig::desk_permuted_mnist(algo, seed),
        "ood" => ExperimentConfig::desk_mnist_ood(algo, seed),
        other => panic!("unknown mode {other}"),
    };
    if let Some(subset) = args.get(4) {
        let subset: usize = subset.parse().unwrap();
        cfg.stream.train_subset = Some(subset);
        if mode == "pmnist" {
            cfg.mesu.n = 5.0 * subset as f64;
            cfg.ewc_online.consolidation_cap = subset;
        } else {
            cfg.mesu.n = 3.0 * subset as f64;
        }
    }
    eprintln!("config: {} n_tasks={} subset={:?}", cfg.name, cfg.stream.num_tasks, cfg.stream.train_subset);
    let t0 = Instant::now();
    let mut run = ExperimentRun::new(cfg, &data_root).unwrap();
    run.run_to_end().unwrap();
    let dt = t0.elapsed().as_secs_f64();
    eprintln!("run took {dt:.1}s, {} records", run.records.len());
    if let Some(last) = run.records.last() {
        let accs: Vec<String> = last.accuracies.iter().map(|a| format!("{a:.4}")).collect();
        println!("final_acc_vector: [{}]", accs.join(", "));
    }
    for (i, rec) in run.records.iter().enumerate() {
        let mean = rec.accuracies.iter().sum::<f64>() / rec.accuracies.len() as f64;
        let new_task = rec.accuracies[rec.task_ordinal];
        let sigma = rec
            .mean_sigma_per_layer
            .as_ref()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .unwrap_or(f64::NAN);
        println!(
            "rec {i:>3} step {:>7} task {:>2} epoch {:>2} | mean_acc {mean:.4} new_task {new_task:.4} | mean_sigma {sigma:.5} | loss {:.4} | roc {:?}",
            rec.step, rec.task_ordinal, rec.epoch, rec.loss_avg, rec.roc_auc
        );
    }
}
