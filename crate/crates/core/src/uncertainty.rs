//! Predictive-uncertainty decomposition and OOD scoring.
//!
//! Total uncertainty is the entropy of the MC-mean predictive distribution;
//! aleatoric is the mean entropy of the per-sample distributions; epistemic
//! is their difference (the mutual information between parameters and label).
//! Deterministic networks carry no parameter uncertainty, so only aleatoric
//! (= total) is defined for them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::exec;
use crate::network::{det_probs, predictive_prob_samples, DeterministicNetwork, MeanFieldNetwork};
use crate::rng::RngStream;
use crate::tensor::Tensor2;

/// Probabilities are clamped here before logs; saturated softmax rows would
/// otherwise produce 0 * log 0 artifacts.
const PROB_CLAMP: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-9;

/// Shannon entropy in nats with the 0 log 0 = 0 convention.
pub fn entropy_nats(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| {
            if p <= 0.0 {
                0.0
            } else {
                let p = p.max(PROB_CLAMP);
                -p * p.ln()
            }
        })
        .sum()
}

/// Per-input predictive distribution: one probability row per MC sample.
#[derive(Debug, Clone)]
pub struct PredictiveSample {
    probs: Tensor2,
    mean_probs: Vec<f64>,
}

impl PredictiveSample {
    /// Validates each row sums to 1 within 1e-9 and precomputes the row mean.
    pub fn new(probs: Tensor2) -> Result<Self> {
        if probs.rows() == 0 || probs.cols() == 0 {
            return Err(CoreError::InvalidArgument {
                op: "PredictiveSample::new",
                detail: "need at least one sample and one class".into(),
            });
        }
        let mut mean_probs = vec![0.0; probs.cols()];
        for r in 0..probs.rows() {
            let row = probs.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(CoreError::NumericDomain {
                    op: "PredictiveSample::new",
                    detail: format!("row {r} sums to {sum}"),
                });
            }
            for (m, &p) in mean_probs.iter_mut().zip(row) {
                *m += p;
            }
        }
        let inv = 1.0 / probs.rows() as f64;
        for m in &mut mean_probs {
            *m *= inv;
        }
        Ok(PredictiveSample { probs, mean_probs })
    }

    pub fn n_samples(&self) -> usize {
        self.probs.rows()
    }

    pub fn mean_probs(&self) -> &[f64] {
        &self.mean_probs
    }

    pub fn sample_row(&self, s: usize) -> &[f64] {
        self.probs.row(s)
    }
}

/// Total/aleatoric/epistemic uncertainty in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTriple {
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
}

/// Decomposes predictive uncertainty: `TU = H[mean]`, `AU = mean H[sample]`,
/// `EU = TU - AU`.
pub fn decompose(ps: &PredictiveSample) -> UncertaintyTriple {
    let total = entropy_nats(ps.mean_probs());
    let aleatoric = (0..ps.n_samples())
        .map(|s| entropy_nats(ps.sample_row(s)))
        .sum::<f64>()
        / ps.n_samples() as f64;
    UncertaintyTriple {
        total,
        aleatoric,
        epistemic: total - aleatoric,
    }
}

/// Probability that a random OOD score exceeds a random ID score, ties
/// counted one half (the Mann-Whitney statistic).
pub fn roc_auc(scores_id: &[f64], scores_ood: &[f64]) -> Result<f64> {
    if scores_id.is_empty() || scores_ood.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "roc_auc",
            detail: "both score lists must be non-empty".into(),
        });
    }
    // Rank-sum over the pooled scores with average ranks for ties.
    let mut pooled: Vec<(f64, bool)> = scores_id
        .iter()
        .map(|&s| (s, false))
        .chain(scores_ood.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must be comparable"));
    let mut rank_sum_ood = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Average 1-based rank of the tie group [i, j].
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for item in &pooled[i..=j] {
            if item.1 {
                rank_sum_ood += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_ood = scores_ood.len() as f64;
    let n_id = scores_id.len() as f64;
    let u = rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0;
    Ok(u / (n_id * n_ood))
}

/// Which component of the triple a score list reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyKind {
    Total,
    Aleatoric,
    Epistemic,
}

/// One score per input of `x`, ordered by input index, from a mean-field
/// network's MC predictive distribution.
pub fn uncertainty_for_dataset(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    n_samples: usize,
    kind: UncertaintyKind,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let triples = uncertainty_triples(net, x, n_samples, rng)?;
    Ok(triples
        .into_iter()
        .map(|t| match kind {
            UncertaintyKind::Total => t.total,
            UncertaintyKind::Aleatoric => t.aleatoric,
            UncertaintyKind::Epistemic => t.epistemic,
        })
        .collect())
}

/// Full triples for every input row of `x`.
pub fn uncertainty_triples(
    net: &MeanFieldNetwork,
    x: &Tensor2,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<UncertaintyTriple>> {
    let prob_samples = predictive_prob_samples(net, x, n_samples, rng)?;
    let n_inputs = x.rows();
    let k = net.spec.output_dim();
    let triples = exec::map_indexed(n_inputs, |i| {
        let mut per_input = Tensor2::zeros(n_samples, k);
        for (s, sample) in prob_samples.iter().enumerate() {
            per_input.row_mut(s).copy_from_slice(sample.row(i));
        }
        let ps = PredictiveSample::new(per_input)?;
        Ok(decompose(&ps))
    });
    triples.into_iter().collect()
}

/// Deterministic-network scores: entropy of the single softmax output.
/// Requesting epistemic uncertainty is an error by definition.
pub fn uncertainty_for_dataset_det(
    net: &DeterministicNetwork,
    x: &Tensor2,
    kind: UncertaintyKind,
) -> Result<Vec<f64>> {
    if kind == UncertaintyKind::Epistemic {
        return Err(CoreError::InvalidArgument {
            op: "uncertainty_for_dataset_det",
            detail: "deterministic networks have no epistemic uncertainty".into(),
        });
    }
    let probs = det_probs(net, x)?;
    Ok((0..probs.rows()).map(|r| entropy_nats(probs.row(r))).collect())
}

/// One row of the uncertainty report file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyRow {
    pub input_index: usize,
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub label: usize,
    pub dataset_tag: String,
}

/// Writes `input_index,total,aleatoric,epistemic,label,dataset_tag` rows.
pub fn write_uncertainty_csv(path: &Path, rows: &[UncertaintyRow]) -> Result<()> {
    use std::io::Write;
    let mut out = String::from("input_index,total,aleatoric,epistemic,label,dataset_tag\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.input_index, r.total, r.aleatoric, r.epistemic, r.label, r.dataset_tag
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CoreError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(rows: Vec<Vec<f64>>) -> PredictiveSample {
        let r = rows.len();
        let c = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        PredictiveSample::new(Tensor2::from_vec(r, c, flat).unwrap()).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_epistemic() {
        let sample = ps(vec![vec![0.7, 0.2, 0.1]; 5]);
        let t = decompose(&sample);
        assert!(t.epistemic.abs() < 1e-12);
        assert!((t.total - t.aleatoric).abs() < 1e-12);
    }

    #[test]
    fn uniform_rows_hit_max_entropy() {
        let sample = ps(vec![vec![0.1; 10]; 4]);
        let t = decompose(&sample);
        let ln10 = (10.0f64).ln();
        assert!((t.total - ln10).abs() < 1e-9);
        assert!((t.aleatoric - ln10).abs() < 1e-9);
        assert!(t.epistemic.abs() < 1e-12);
    }

    #[test]
    fn binary_disagreement_is_pure_epistemic() {
        let sample = ps(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let t = decompose(&sample);
        assert!(t.aleatoric.abs() < 1e-9);
        assert!((t.total - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((t.epistemic - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn unnormalized_rows_rejected() {
        let bad = Tensor2::from_vec(1, 2, vec![0.6, 0.6]).unwrap();
        assert!(PredictiveSample::new(bad).is_err());
    }

    #[test]
    fn roc_auc_basics() {
        assert_eq!(roc_auc(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.4], &[0.3, 0.9]).unwrap(), 0.75);
        assert!(roc_auc(&[], &[1.0]).is_err());
    }

    #[test]
    fn roc_auc_complementarity_without_ties() {
        let id = [0.11, 0.52, 0.23, 0.94];
        let ood = [0.45, 0.76, 0.07];
        let a = roc_auc(&id, &ood).unwrap();
        let b = roc_auc(&ood, &id).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roc_auc_monotone_invariance() {
        let id = [0.1, 0.2, 0.3];
        let ood = [0.25, 0.4];
        let before = roc_auc(&id, &ood).unwrap();
        let f = |x: f64| (3.0 * x).exp() + 1.0;
        let id2: Vec<f64> = id.iter().map(|&x| f(x)).collect();
        let ood2: Vec<f64> = ood.iter().map(|&x| f(x)).collect();
        let after = roc_auc(&id2, &ood2).unwrap();
        assert_eq!(before, after);
    }
}
