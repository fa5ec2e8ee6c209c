//! Scalar losses over a batch of outputs, each returning the loss and its
//! gradient with respect to the outputs.

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Mean squared error over all entries of a batch with one output column per target.
pub fn mse(outputs: &Matrix, targets: &[f64]) -> Result<(f64, Matrix)> {
    if outputs.cols() != 1 || outputs.rows() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "mse on {}x{} outputs with {} targets",
            outputs.rows(),
            outputs.cols(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(targets.len());
    for (&f, &y) in outputs.data().iter().zip(targets) {
        let r = f - y;
        loss += r * r;
        grad.push(2.0 * r / n);
    }
    Ok((loss / n, Matrix::from_raw(targets.len(), 1, grad)))
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Row-wise softmax probabilities.
pub fn softmax(logits: &Matrix) -> Matrix {
    let data = logits.row_iter().flat_map(softmax_row).collect();
    Matrix::from_raw(logits.rows(), logits.cols(), data)
}

/// Mean softmax cross-entropy.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "cross-entropy on {} rows with {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let c = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::DimensionMismatch(format!("label {bad} with {c} classes")));
    }
    let n = labels.len() as f64;
    let mut probs = softmax(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = probs.row_mut(i);
        loss -= row[y].max(f64::MIN_POSITIVE).ln();
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok((loss / n, probs))
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    scores
        .row_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

pub fn accuracy(scores: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = argmax_rows(scores).iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}
