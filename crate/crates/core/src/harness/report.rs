//! Cross-run reports: merges run directories into comparison tables and
//! plot-ready CSVs (final accuracies, retention, new-task accuracy, memory
//! rigidity, per-record mean sigma and ROC AUC).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CoreError, Result};

use super::metrics::{memory_rigidity, read_metrics_jsonl, MetricsRecord};
use super::runner::RunManifest;

/// One loaded run.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<MetricsRecord>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CoreError::MissingFile(manifest_path.clone())
        } else {
            CoreError::io(&manifest_path, e)
        }
    })?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let records = read_metrics_jsonl(&dir.join("metrics.jsonl"))?;
    if records.is_empty() {
        return Err(CoreError::Config(format!(
            "run {} has no metrics records",
            dir.display()
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        records,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregated figures of merit for one algorithm across seeds.
#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub runs: usize,
    /// Mean over tasks of the end-of-run accuracy, mean +- std over seeds.
    pub final_mean_acc: f64,
    pub final_mean_acc_std: f64,
    /// Mean accuracy over the last five tasks' test sets at end of run.
    pub last5_acc: f64,
    pub last5_acc_std: f64,
    /// Accuracy on the newly learned task: first and last boundary.
    pub new_task_first: f64,
    pub new_task_last: f64,
    /// Inverse drift between the two, capped.
    pub rigidity: f64,
    /// Final ROC AUC when the runs scored an OOD pool.
    pub final_roc_auc: Option<f64>,
}

/// Validates that runs in one group share a protocol (same config hash).
fn check_same_protocol(runs: &[&LoadedRun]) -> Result<()> {
    let task_counts: Vec<usize> = runs
        .iter()
        .map(|r| r.records.last().unwrap().accuracies.len())
        .collect();
    if task_counts.windows(2).any(|w| w[0] != w[1]) {
        return Err(CoreError::Config(format!(
            "incompatible runs in one group: task counts {task_counts:?}"
        )));
    }
    Ok(())
}

fn summarize_group(algorithm: &str, runs: &[&LoadedRun]) -> Result<AlgorithmSummary> {
    check_same_protocol(runs)?;
    let mut final_means = Vec::new();
    let mut last5 = Vec::new();
    let mut first_new = Vec::new();
    let mut last_new = Vec::new();
    let mut rocs = Vec::new();
    for run in runs {
        let last = run.records.last().unwrap();
        let n_tasks = last.accuracies.len();
        final_means.push(last.accuracies.iter().sum::<f64>() / n_tasks as f64);
        let tail = n_tasks.min(5);
        last5.push(
            last.accuracies[n_tasks - tail..].iter().sum::<f64>() / tail as f64,
        );
        // New-task accuracy: at each boundary record, the accuracy on the
        // task that was just trained.
        let boundary_records: Vec<&MetricsRecord> = run
            .records
            .iter()
            .filter(|r| r.epoch + 1 == run_epochs(run))
            .collect();
        if let (Some(first), Some(final_rec)) =
            (boundary_records.first(), boundary_records.last())
        {
            first_new.push(first.accuracies[first.task_ordinal]);
            last_new.push(final_rec.accuracies[final_rec.task_ordinal]);
        }
        if let Some(roc) = last.roc_auc {
            rocs.push(roc);
        }
    }
    let (final_mean_acc, final_mean_acc_std) = mean_std(&final_means);
    let (last5_acc, last5_acc_std) = mean_std(&last5);
    let new_task_first = if first_new.is_empty() {
        f64::NAN
    } else {
        mean_std(&first_new).0
    };
    let new_task_last = if last_new.is_empty() {
        f64::NAN
    } else {
        mean_std(&last_new).0
    };
    Ok(AlgorithmSummary {
        algorithm: algorithm.to_string(),
        runs: runs.len(),
        final_mean_acc,
        final_mean_acc_std,
        last5_acc,
        last5_acc_std,
        new_task_first,
        new_task_last,
        rigidity: memory_rigidity(new_task_first, new_task_last),
        final_roc_auc: if rocs.is_empty() {
            None
        } else {
            Some(mean_std(&rocs).0)
        },
    })
}

fn run_epochs(run: &LoadedRun) -> usize {
    run.records.iter().map(|r| r.epoch).max().unwrap_or(0) + 1
}

/// Merges run directories into the report files under `out_dir`.
///
/// Emits `comparison.csv` (one row per algorithm), `retention.csv` (per-task
/// end accuracies), `new_task.csv` (per-boundary just-trained accuracy),
/// `mean_sigma.csv` and `roc_auc.csv` (per-record trajectories).
pub fn write_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<AlgorithmSummary>> {
    if run_dirs.is_empty() {
        return Err(CoreError::Config("report needs at least one run dir".into()));
    }
    let runs: Vec<LoadedRun> = run_dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;

    let mut groups: BTreeMap<String, Vec<&LoadedRun>> = BTreeMap::new();
    for run in &runs {
        groups
            .entry(run.manifest.algorithm.clone())
            .or_default()
            .push(run);
    }

    let summaries: Vec<AlgorithmSummary> = groups
        .iter()
        .map(|(alg, members)| summarize_group(alg, members))
        .collect::<Result<_>>()?;

    // comparison.csv
    let mut out = String::from(
        "algorithm,runs,final_mean_acc,final_mean_acc_std,last5_acc,last5_acc_std,\
         new_task_first,new_task_last,rigidity,final_roc_auc\n",
    );
    for s in &summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.algorithm,
            s.runs,
            s.final_mean_acc,
            s.final_mean_acc_std,
            s.last5_acc,
            s.last5_acc_std,
            s.new_task_first,
            s.new_task_last,
            s.rigidity,
            s.final_roc_auc.map_or(String::new(), |v| v.to_string()),
        ));
    }
    write_file(&out_dir.join("comparison.csv"), &out)?;

    // retention.csv: per-algorithm per-task end-of-run accuracy.
    let mut out = String::from("algorithm,task_ordinal,acc_mean,acc_std\n");
    for (alg, members) in &groups {
        check_same_protocol(members)?;
        let n_tasks = members[0].records.last().unwrap().accuracies.len();
        for t in 0..n_tasks {
            let vals: Vec<f64> = members
                .iter()
                .map(|r| r.records.last().unwrap().accuracies[t])
                .collect();
            let (m, s) = mean_std(&vals);
            out.push_str(&format!("{alg},{t},{m},{s}\n"));
        }
    }
    write_file(&out_dir.join("retention.csv"), &out)?;

    // new_task.csv: accuracy on the task just trained, per boundary.
    let mut out = String::from("algorithm,task_ordinal,acc_mean,acc_std\n");
    for (alg, members) in &groups {
        let epochs = run_epochs(members[0]);
        let n_boundaries = members[0]
            .records
            .iter()
            .filter(|r| r.epoch + 1 == epochs)
            .count();
        for b in 0..n_boundaries {
            let vals: Vec<f64> = members
                .iter()
                .filter_map(|r| {
                    r.records
                        .iter()
                        .filter(|rec| rec.epoch + 1 == epochs)
                        .nth(b)
                        .map(|rec| rec.accuracies[rec.task_ordinal])
                })
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (m, s) = mean_std(&vals);
            out.push_str(&format!("{alg},{b},{m},{s}\n"));
        }
    }
    write_file(&out_dir.join("new_task.csv"), &out)?;

    // mean_sigma.csv: per-record mean sigma across layers (mean-field runs).
    let mut out = String::from("algorithm,record,step,mean_sigma\n");
    for (alg, members) in &groups {
        for run in members {
            for (i, rec) in run.records.iter().enumerate() {
                if let Some(sigmas) = &rec.mean_sigma_per_layer {
                    let m = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
                    out.push_str(&format!("{alg},{i},{},{m}\n", rec.step));
                }
            }
        }
    }
    write_file(&out_dir.join("mean_sigma.csv"), &out)?;

    // roc_auc.csv: per-record OOD separability.
    let mut out = String::from("algorithm,record,step,roc_auc\n");
    for (alg, members) in &groups {
        for run in members {
            for (i, rec) in run.records.iter().enumerate() {
                if let Some(roc) = rec.roc_auc {
                    out.push_str(&format!("{alg},{i},{},{roc}\n", rec.step));
                }
            }
        }
    }
    write_file(&out_dir.join("roc_auc.csv"), &out)?;

    Ok(summaries)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| CoreError::io(path, e))
}
