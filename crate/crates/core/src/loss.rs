//! Classification loss primitives.

use crate::error::{CoreError, Result};

/// Numerically stable softmax over one logit row (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Cross-entropy of one logit row against an integer label.
///
/// Returns `(loss, grad_logits)` with `loss = −log softmax(logits)[label]`
/// and `grad = softmax(logits) − onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NumericDomain {
            op: "softmax_cross_entropy",
            detail: "non-finite logits".into(),
        });
    }
    if label >= logits.len() {
        return Err(CoreError::InvalidArgument {
            op: "softmax_cross_entropy",
            detail: format!("label {label} for {} classes", logits.len()),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|&z| z - max).collect();
    let log_sum = shifted.iter().map(|&z| z.exp()).sum::<f64>().ln();
    let loss = log_sum - shifted[label];
    let mut grad: Vec<f64> = shifted.iter().map(|&z| (z - log_sum).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn uniform_logits_give_log_k() {
        let (loss, _) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        let (loss10, _) = softmax_cross_entropy(&[1.5; 10], 3).unwrap();
        assert!((loss10 - (10.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_class() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn gradient_sums_to_zero() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..10).map(|_| rng.next_uniform(-5.0, 5.0)).collect();
            let (_, grad) = softmax_cross_entropy(&logits, 7).unwrap();
            assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = RngStream::new(4, 0);
        let h = 1e-5;
        for _ in 0..20 {
            let logits: Vec<f64> = (0..10).map(|_| rng.next_uniform(-3.0, 3.0)).collect();
            let label = rng.next_below(10);
            let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
            for i in 0..10 {
                let mut plus = logits.clone();
                plus[i] += h;
                let mut minus = logits.clone();
                minus[i] -= h;
                let (lp, _) = softmax_cross_entropy(&plus, label).unwrap();
                let (lm, _) = softmax_cross_entropy(&minus, label).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() < 1e-6,
                    "component {i}: fd {fd} vs grad {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(softmax_cross_entropy(&[f64::NAN, 0.0], 0).is_err());
        assert!(softmax_cross_entropy(&[f64::INFINITY, 0.0], 1).is_err());
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
