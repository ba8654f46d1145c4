//! Shallow comparison model: multinomial logistic regression on the same
//! 90-dim features, trained with the DBN fine-tuning loop.

use crate::eval::{argmax, ClassScorer};
use crate::linalg::Matrix;
use crate::optim::{
    check_labels, descend, run_epochs, softmax_cross_entropy, softmax_rows, FineTuneConfig, TrainError,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression<T> {
    /// `inputs x classes`
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> SoftmaxRegression<T> {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        Self { weights: Matrix::zeros(inputs, classes), bias: vec![T::zero(); classes] }
    }

    fn logits(&self, features: &Matrix<T>) -> Matrix<T> {
        let mut z = features.matmul(&self.weights);
        z.add_row_vector(&self.bias);
        z
    }

    fn check_width(&self, cols: usize) -> Result<(), TrainError> {
        if cols != self.weights.rows() {
            return Err(TrainError::InvalidConfig(format!("expected {} features, got {cols}", self.weights.rows())));
        }
        Ok(())
    }

    pub fn forward_batch(&self, features: &Matrix<T>) -> Result<Matrix<T>, TrainError> {
        self.check_width(features.cols())?;
        let mut p = self.logits(features);
        softmax_rows(&mut p);
        Ok(p)
    }

    pub fn predict(&self, feature: &[T]) -> Result<(usize, Vec<T>), TrainError> {
        let m = Matrix::from_vec(1, feature.len(), feature.to_vec()).expect("row");
        let p = self.forward_batch(&m)?.into_vec();
        let f: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
        Ok((argmax(&f), p))
    }

    /// Mean cross-entropy and its gradients `(d weights, d bias)`.
    pub fn loss_and_gradients(
        &self,
        features: &Matrix<T>,
        labels: &[usize],
    ) -> Result<(T, Matrix<T>, Vec<T>), TrainError> {
        if labels.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        if labels.len() != features.rows() {
            return Err(TrainError::LengthMismatch { features: features.rows(), labels: labels.len() });
        }
        self.check_width(features.cols())?;
        check_labels(labels, self.bias.len())?;
        let (loss, d) = softmax_cross_entropy(&self.logits(features), labels);
        Ok((loss, features.t_matmul(&d), d.column_sums()))
    }
}

impl<T: Scalar> ClassScorer for SoftmaxRegression<T> {
    fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn class_scores(&self, features: &[f64]) -> Vec<f64> {
        let x: Vec<T> = features.iter().map(|&v| T::lit(v)).collect();
        self.predict(&x).expect("input width checked by caller").1.into_iter().map(|p| p.as_f64()).collect()
    }
}

/// Zero-initialised softmax regression trained by mini-batch gradient descent.
pub fn train_baseline<T: Scalar>(
    features: &Matrix<T>,
    labels: &[usize],
    classes: usize,
    config: &FineTuneConfig,
) -> Result<(SoftmaxRegression<T>, Vec<T>), TrainError> {
    if labels.len() != features.rows() {
        return Err(TrainError::LengthMismatch { features: features.rows(), labels: labels.len() });
    }
    check_labels(labels, classes)?;
    let mut model = SoftmaxRegression::zeros(features.cols(), classes);
    let rate = T::lit(config.learning_rate);
    let trace = run_epochs(labels.len(), config, |idx| {
        let batch = features.select_rows(idx);
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, gw, gb) = model.loss_and_gradients(&batch, &batch_labels)?;
        descend(model.weights.as_mut_slice(), gw.as_slice(), rate);
        descend(&mut model.bias, &gb, rate);
        Ok(loss)
    })?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_gives_uniform_predictions() {
        let f = Matrix::from_fn(14, 5, |i, j| ((i * j) % 4) as f64 / 4.0);
        let labels: Vec<usize> = (0..14).map(|i| i % 7).collect();
        let cfg = FineTuneConfig { learning_rate: 0.0, epochs: 2, batch_size: 5, seed: 0 };
        let (m, trace) = train_baseline(&f, &labels, 7, &cfg).unwrap();
        assert!((trace[1] - 7f64.ln()).abs() < 1e-12);
        let (_, p) = m.predict(f.row(3)).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn errors() {
        let f = Matrix::<f64>::zeros(2, 3);
        let cfg = FineTuneConfig::finetune_default(0);
        assert!(matches!(train_baseline(&f, &[0], 7, &cfg), Err(TrainError::LengthMismatch { .. })));
        assert!(matches!(train_baseline(&Matrix::<f64>::zeros(0, 3), &[], 7, &cfg), Err(TrainError::EmptyDataset)));
        assert!(matches!(train_baseline(&f, &[0, 9], 7, &cfg), Err(TrainError::LabelOutOfRange { .. })));
    }
}
