//! Metrics records, output files, and derived figures of merit.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Batches consumed when this record was taken.
    pub step: u64,
    /// Ordinal of the task trained most recently.
    pub task_ordinal: usize,
    /// Epoch within that task (0-based, complete epochs).
    pub epoch: usize,
    /// Accuracy on every task's evaluation subset, by task ordinal.
    pub accuracies: Vec<f64>,
    /// Mean sigma per layer (mean-field runs only).
    pub mean_sigma_per_layer: Option<Vec<f64>>,
    /// Mean training loss since the previous record.
    pub loss_avg: f64,
    /// Epistemic-uncertainty ROC AUC against the OOD pool, when configured.
    pub roc_auc: Option<f64>,
    /// Wall-clock milliseconds since run start. Excluded from determinism
    /// comparisons.
    pub wall_clock_ms: u64,
}

impl MetricsRecord {
    /// Canonical form for determinism comparisons: timestamps zeroed.
    pub fn canonical(&self) -> MetricsRecord {
        MetricsRecord {
            wall_clock_ms: 0,
            ..self.clone()
        }
    }
}

/// Appends records as JSON lines.
pub fn write_metrics_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CoreError::io(path, e))
}

/// Reads a metrics.jsonl file back.
pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CoreError::MissingFile(path.to_path_buf())
        } else {
            CoreError::io(path, e)
        }
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CoreError::from))
        .collect()
}

/// Final-state summary CSV: one row per task with its end-of-run accuracy.
pub fn write_summary_csv(path: &Path, final_record: &MetricsRecord) -> Result<()> {
    let mut out = String::from("task_ordinal,accuracy\n");
    for (t, acc) in final_record.accuracies.iter().enumerate() {
        out.push_str(&format!("{t},{acc}\n"));
    }
    let mean = final_record.accuracies.iter().sum::<f64>()
        / final_record.accuracies.len().max(1) as f64;
    out.push_str(&format!("mean,{mean}\n"));
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CoreError::io(path, e))
}

/// Inverse absolute accuracy drift `1/|a_first - a_last|`, capped at 1e6
/// when the difference falls under 1e-6.
pub fn memory_rigidity(acc_first: f64, acc_last: f64) -> f64 {
    let diff = (acc_first - acc_last).abs();
    if diff < 1e-6 {
        1e6
    } else {
        1.0 / diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rigidity_arithmetic() {
        assert!((memory_rigidity(0.9, 0.7) - 5.0).abs() < 1e-12);
        assert!((memory_rigidity(0.95, 0.93) - 50.0).abs() < 1e-9);
        assert_eq!(memory_rigidity(0.8, 0.8), 1e6);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let records = vec![
            MetricsRecord {
                step: 100,
                task_ordinal: 0,
                epoch: 0,
                accuracies: vec![0.91, 0.12],
                mean_sigma_per_layer: Some(vec![0.07, 0.06]),
                loss_avg: 0.35,
                roc_auc: None,
                wall_clock_ms: 1234,
            },
            MetricsRecord {
                step: 200,
                task_ordinal: 1,
                epoch: 0,
                accuracies: vec![0.88, 0.90],
                mean_sigma_per_layer: None,
                loss_avg: 0.21,
                roc_auc: Some(0.97),
                wall_clock_ms: 2345,
            },
        ];
        write_metrics_jsonl(&path, &records).unwrap();
        let back = read_metrics_jsonl(&path).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn canonical_strips_wall_clock() {
        let r = MetricsRecord {
            step: 1,
            task_ordinal: 0,
            epoch: 0,
            accuracies: vec![0.5],
            mean_sigma_per_layer: None,
            loss_avg: 1.0,
            roc_auc: None,
            wall_clock_ms: 99,
        };
        let mut s = r.clone();
        s.wall_clock_ms = 777;
        assert_eq!(r.canonical(), s.canonical());
    }
}
