use crate::error::{Error, Result};

use super::tensor::Tensor;

fn check_logits(logits: &Tensor, label: usize) -> Result<()> {
    if logits.rank() != 1 {
        return Err(Error::shape(
            "cross-entropy logits",
            &[logits.len()],
            logits.shape(),
        ));
    }
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok(())
}

/// Softmax probabilities, stabilized by subtracting the max logit.
pub fn softmax(logits: &Tensor) -> Vec<f64> {
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits
        .data()
        .iter()
        .map(|&v| (v as f64 - max).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &Tensor) -> f64 {
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    max + logits
        .data()
        .iter()
        .map(|&v| (v as f64 - max).exp())
        .sum::<f64>()
        .ln()
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    check_logits(logits, label)?;
    Ok(log_sum_exp(logits) - logits.data()[label] as f64)
}

/// Cross-entropy and its gradient w.r.t. the logits (`softmax - onehot`).
pub fn cross_entropy_with_grad(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let loss = cross_entropy(logits, label)?;
    let mut grad: Vec<f32> = softmax(logits).into_iter().map(|p| p as f32).collect();
    grad[label] -= 1.0;
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}
