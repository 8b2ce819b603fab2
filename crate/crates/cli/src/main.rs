//! `mesu` — streaming continual-learning experiments from the command line.
//!
//! Subcommands: `run` an experiment from a TOML config, `evaluate` a saved
//! checkpoint on every task, `verify-dynamics` against the closed-form
//! standard-deviation solution, `report` across finished runs, and
//! `datasets fetch-check` to validate the local dataset files.
//! The dataset root comes from `--data-root` or `$MESU_DATA_DIR` (default
//! `./data`).

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mesu_core::dynamics::{
    closed_form_sigma, sigma_asymptote, simulate_sigma_trajectory, trajectory_rows,
    write_trajectory_csv, DynamicsParams, QuadraticTask, TrajectoryRule,
};
use mesu_core::harness::{
    checkpoint::Checkpoint, config::Algorithm, default_data_root, evaluate_all_tasks,
    run_experiment, write_report, ExperimentConfig, ExperimentRun, Seeds,
};

#[derive(Parser)]
#[command(name = "mesu", version, about = "Mean-field Bayesian continual-learning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataRootArg {
    /// Dataset root directory (falls back to $MESU_DATA_DIR, then ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
}

impl DataRootArg {
    fn resolve(&self) -> PathBuf {
        self.data_root.clone().unwrap_or_else(default_data_root)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Master seed override; derives init/data/sampling seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Algorithm override.
        #[arg(long)]
        algorithm: Option<String>,
        /// Full-scale protocol: 200 tasks over the complete training data.
        /// Multi-hour run; desk-scale configs remain the default.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        data: DataRootArg,
    },
    /// Evaluate a checkpoint on every task of its protocol.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Monte Carlo samples per prediction (defaults to the config).
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        data: DataRootArg,
    },
    /// Check the update rule against the closed-form sigma dynamics.
    VerifyDynamics {
        /// Where to write trajectory.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge finished run directories into comparison tables.
    Report {
        /// Run directories (each holding manifest.json + metrics.jsonl).
        run_dirs: Vec<PathBuf>,
        /// Output directory for the report CSVs.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Dataset management.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
}

#[derive(Subcommand)]
enum DatasetsCommand {
    /// Verify presence and checksums of the expected dataset files.
    FetchCheck {
        #[command(flatten)]
        data: DataRootArg,
    },
}

fn parse_algorithm(name: &str) -> anyhow::Result<Algorithm> {
    Ok(match name {
        "mesu" => Algorithm::Mesu,
        "foovb" => Algorithm::Foovb,
        "bnn-sgd" => Algorithm::BnnSgd,
        "sgd" => Algorithm::Sgd,
        "ewc-online" => Algorithm::EwcOnline,
        "ewc-stream" => Algorithm::EwcStream,
        "si" => Algorithm::Si,
        other => bail!(
            "unknown algorithm '{other}' (expected mesu|foovb|bnn-sgd|sgd|ewc-online|ewc-stream|si)"
        ),
    })
}

fn cmd_run(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    algorithm: Option<String>,
    full: bool,
    data: &DataRootArg,
) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::from_toml_file(&config)
        .with_context(|| format!("loading config {}", config.display()))?;
    if let Some(name) = algorithm {
        cfg.algorithm = parse_algorithm(&name)?;
    }
    if let Some(master) = seed {
        cfg.seeds = Seeds::from_master(master);
    }
    if full {
        cfg.stream.num_tasks = 200;
        cfg.stream.train_subset = None;
        cfg.stream.eval_subset = None;
        cfg.name = format!("{}-full", cfg.name);
    }
    cfg.validate()?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    let data_root = data.resolve();
    eprintln!(
        "running '{}' [{}] -> {}",
        cfg.name,
        cfg.algorithm.name(),
        out_dir.display()
    );
    let manifest = run_experiment(cfg, &data_root, &out_dir)?;
    println!(
        "finished: mean accuracy over tasks = {:.4} ({} records) -> {}",
        manifest.final_mean_accuracy,
        manifest.output_files.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(
    checkpoint: PathBuf,
    samples: Option<usize>,
    data: &DataRootArg,
) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let n_samples = samples.unwrap_or(ckpt.config.mc.eval_samples);
    let sampling_seed = ckpt.config.seeds.sampling;
    let run: ExperimentRun = ckpt.resume(&data.resolve())?;
    let accs = evaluate_all_tasks(&run.learner, run.tasks(), n_samples, sampling_seed, u64::MAX >> 8)?;
    println!("task,accuracy");
    for (t, a) in accs.iter().enumerate() {
        println!("{t},{a:.4}");
    }
    println!(
        "mean,{:.4}",
        accs.iter().sum::<f64>() / accs.len().max(1) as f64
    );
    Ok(())
}

fn cmd_verify_dynamics(out: Option<PathBuf>) -> anyhow::Result<()> {
    // A curvature-4 quadratic stream: simulate the actual update rule and
    // compare against the closed form and the limiting variance.
    let task = QuadraticTask::new(0.1, 0.5)?;
    let params = DynamicsParams {
        sigma0: 0.05,
        gamma: 0.5,
        n: 1000.0,
        hessian_diag: task.hessian(),
        sigma_prior: 1.0,
    };
    let steps = (10.0 * params.n / params.gamma) as usize;
    let traj = simulate_sigma_trajectory(&task, &params, steps, TrajectoryRule::Mesu { alpha: 1.0 })?;
    let rows = trajectory_rows(&traj, &params);
    let max_rel = rows.iter().map(|r| r.abs_rel_err).fold(0.0, f64::max);
    let terminal_var = traj.last().unwrap().powi(2);
    let asymptote = sigma_asymptote(&params);
    let asym_rel = ((terminal_var - asymptote) / asymptote).abs();
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("trajectory.csv");
        write_trajectory_csv(&path, &rows)?;
        println!("wrote {}", path.display());
    }
    let traj_ok = max_rel <= 0.05;
    let asym_ok = asym_rel <= 0.10;
    println!(
        "{} trajectory vs closed form: max relative error {max_rel:.3e} (tolerance 5e-2)",
        if traj_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "{} terminal variance vs asymptote: relative error {asym_rel:.3e} (tolerance 1e-1)",
        if asym_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "closed form at t=0: {:.6}; asymptote sigma: {:.6}",
        closed_form_sigma(0.0, &params),
        asymptote.sqrt()
    );
    if !(traj_ok && asym_ok) {
        bail!("dynamics verification failed");
    }
    Ok(())
}

fn cmd_datasets_check(data: &DataRootArg) -> anyhow::Result<()> {
    let root = data.resolve();
    println!("dataset root: {}", root.display());
    let checks = mesu_core::data::verify_dataset_root(&root);
    let mut all_ok = true;
    for c in &checks {
        let status = match (c.present, c.checksum_ok) {
            (false, _) => {
                all_ok = false;
                "MISSING"
            }
            (true, Some(true)) => "OK",
            (true, _) => {
                all_ok = false;
                "CHECKSUM MISMATCH"
            }
        };
        println!(
            "{status:>18}  {}  {}",
            c.tag,
            c.path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into())
        );
    }
    if !all_ok {
        bail!(
            "dataset files missing or invalid under {}; fetch the MNIST and \
             Fashion-MNIST IDX archives (gzipped originals work as-is) into \
             mnist/ and fashion-mnist/ subdirectories — see the README for \
             mirror URLs",
            root.display()
        );
    }
    println!("all dataset files verified");
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            algorithm,
            full,
            data,
        } => cmd_run(config, seed, out, algorithm, full, &data),
        Command::Evaluate {
            checkpoint,
            samples,
            data,
        } => cmd_evaluate(checkpoint, samples, &data),
        Command::VerifyDynamics { out } => cmd_verify_dynamics(out),
        Command::Report { run_dirs, out } => {
            let summaries = write_report(&run_dirs, &out)?;
            println!("algorithm            runs  final_acc  last5_acc  rigidity");
            for s in &summaries {
                println!(
                    "{:<20} {:>4}  {:>9.4}  {:>9.4}  {:>8.2}",
                    s.algorithm, s.runs, s.final_mean_acc, s.last5_acc, s.rigidity
                );
            }
            println!("report written to {}", out.display());
            Ok(())
        }
        Command::Datasets { command } => match command {
            DatasetsCommand::FetchCheck { data } => cmd_datasets_check(&data),
        },
    }
}
