//! Mini-batch gradient descent machinery shared by the DBN fine-tuning and
//! the shallow softmax baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rbm::epoch_batches;
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Supervised training settings (DBN fine-tuning and the shallow baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl FineTuneConfig {
    /// Learning rate 0.1, 1000 epochs, mini-batches of 20.
    pub fn finetune_default(seed: u64) -> Self {
        Self { learning_rate: 0.1, epochs: 1000, batch_size: 20, seed }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows<T: Scalar>(logits: &mut Matrix<T>) {
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

/// Mean cross-entropy of `labels` under `softmax(logits)` and its gradient
/// with respect to the logits, `(P - Y) / B`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> (T, Matrix<T>) {
    let b = T::from_usize(labels.len()).expect("batch size");
    let mut loss = T::zero();
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).fold(T::zero(), |a, e| a + e).ln();
        loss += lse - row[label];
    }
    let mut grad = logits.clone();
    softmax_rows(&mut grad);
    for (r, &label) in labels.iter().enumerate() {
        grad[(r, label)] -= T::one();
    }
    grad.map_inplace(|g| g / b);
    (loss / b, grad)
}

pub fn check_labels(labels: &[usize], classes: usize) -> Result<(), TrainError> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(TrainError::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

/// `param -= rate * grad`
pub fn descend<T: Scalar>(params: &mut [T], grads: &[T], rate: T) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= rate * g;
    }
}

/// Runs `config.epochs` passes over `n` examples in shuffled mini-batches.
/// `step` receives the batch indices, performs the update and returns the
/// batch's mean loss (measured before the update). The returned trace holds
/// the example-weighted mean loss of each epoch.
pub fn run_epochs<T: Scalar>(
    n: usize,
    config: &FineTuneConfig,
    mut step: impl FnMut(&[usize]) -> Result<T, TrainError>,
) -> Result<Vec<T>, TrainError> {
    config.validate()?;
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = rng_from_seed(config.seed);
    let total = T::from_usize(n).expect("example count");
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut sum = T::zero();
        for idx in epoch_batches(n, config.batch_size, &mut rng) {
            sum += step(&idx)? * T::from_usize(idx.len()).expect("batch size");
        }
        let mean = sum / total;
        if !mean.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch: epoch + 1 });
        }
        log::debug!("epoch {}: loss {mean}", epoch + 1);
        trace.push(mean);
    }
    Ok(trace)
}
