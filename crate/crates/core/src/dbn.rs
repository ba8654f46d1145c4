//! The deep belief net: Gaussian RBM (input -> hidden1), binary RBM
//! (hidden1 -> hidden2) and a softmax head (hidden2 -> classes).
//!
//! Training is greedy layer-wise CD pre-training followed by supervised
//! fine-tuning of every parameter through the deterministic forward map
//!
//!   h1  = logistic(b1 + (v / sigma) W1)
//!   h2  = logistic(b2 + h1 W2)
//!   out = softmax(h2 W3 + b3)

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{argmax, ClassScorer};
use crate::linalg::Matrix;
use crate::optim::{
    check_labels, descend, run_epochs, softmax_cross_entropy, softmax_rows, FineTuneConfig, TrainError,
};
use crate::rbm::{pretrain_layer, sample_binary, BinaryRbm, CdConfig, GaussianRbm, Rbm, RbmError};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbnError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl DbnError {
    /// True when training diverged (non-finite loss).
    pub fn is_numeric(&self) -> bool {
        matches!(self, DbnError::Train(TrainError::NonFiniteLoss { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub classes: usize,
}

impl Default for Architecture {
    /// 90-200-50-7.
    fn default() -> Self {
        Self { input: 90, hidden1: 200, hidden2: 50, classes: 7 }
    }
}

/// How layer-1 activity is handed to the layer-2 RBM during pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Propagate {
    /// Hidden probabilities (deterministic).
    #[default]
    Mean,
    /// Bernoulli samples of the hidden probabilities.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub layer1: CdConfig,
    pub layer2: CdConfig,
    pub propagate: Propagate,
    /// Visible standard deviation of the Gaussian layer (fixed, not learned).
    pub sigma: f64,
    /// Seeds weight initialisation and sampled propagation.
    pub init_seed: u64,
}

impl PretrainConfig {
    /// Learning rate 0.01 and 100 epochs for each layer; every stream seed
    /// derived from `seed`.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            layer1: CdConfig::pretrain_default(derive_seed(seed, "pretrain.layer1")),
            layer2: CdConfig::pretrain_default(derive_seed(seed, "pretrain.layer2")),
            propagate: Propagate::Mean,
            sigma: 1.0,
            init_seed: derive_seed(seed, "pretrain.init"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead<T> {
    /// `inputs x classes`
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> SoftmaxHead<T> {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        Self { weights: Matrix::zeros(inputs, classes), bias: vec![T::zero(); classes] }
    }

    pub fn logits(&self, input: &Matrix<T>) -> Matrix<T> {
        let mut z = input.matmul(&self.weights);
        z.add_row_vector(&self.bias);
        z
    }
}

/// Provenance recorded with a trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: Option<u64>,
    pub pretrain: Option<PretrainConfig>,
    pub finetune: Option<FineTuneConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel<T> {
    pub layer1: GaussianRbm<T>,
    pub layer2: BinaryRbm<T>,
    pub head: SoftmaxHead<T>,
    pub metadata: ModelMetadata,
}

/// Gradients of the mean cross-entropy, one entry per discriminative
/// parameter. Visible biases do not enter the forward map and have none.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    pub w3: Matrix<T>,
    pub b3: Vec<T>,
}

struct Activations<T> {
    h1: Matrix<T>,
    h2: Matrix<T>,
    logits: Matrix<T>,
}

impl<T: Scalar> DbnModel<T> {
    /// Stacks pre-trained layers under a zero softmax head.
    pub fn from_layers(layer1: GaussianRbm<T>, layer2: BinaryRbm<T>, classes: usize) -> Result<Self, DbnError> {
        if layer1.n_hidden() != layer2.n_visible() {
            return Err(DbnError::DimensionMismatch {
                what: "layer2 visible units",
                expected: layer1.n_hidden(),
                found: layer2.n_visible(),
            });
        }
        let head = SoftmaxHead::zeros(layer2.n_hidden(), classes);
        Ok(Self { layer1, layer2, head, metadata: ModelMetadata::default() })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input: self.layer1.n_visible(),
            hidden1: self.layer1.n_hidden(),
            hidden2: self.layer2.n_hidden(),
            classes: self.head.bias.len(),
        }
    }

    /// Checks internal shape consistency (used after deserialisation).
    pub fn validate(&self) -> Result<(), DbnError> {
        let mismatch = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(DbnError::DimensionMismatch { what, expected, found })
            }
        };
        mismatch("layer2 visible units", self.layer1.n_hidden(), self.layer2.n_visible())?;
        mismatch("softmax inputs", self.layer2.n_hidden(), self.head.weights.rows())?;
        mismatch("softmax classes", self.head.bias.len(), self.head.weights.cols())?;
        mismatch("layer1 hidden bias", self.layer1.n_hidden(), self.layer1.hidden_bias.len())?;
        mismatch("layer1 visible bias", self.layer1.n_visible(), self.layer1.visible_bias.len())?;
        mismatch("layer2 hidden bias", self.layer2.n_hidden(), self.layer2.hidden_bias.len())?;
        mismatch("layer2 visible bias", self.layer2.n_visible(), self.layer2.visible_bias.len())?;
        Ok(())
    }

    fn check_input(&self, cols: usize) -> Result<(), DbnError> {
        if cols != self.layer1.n_visible() {
            return Err(DbnError::DimensionMismatch {
                what: "feature length",
                expected: self.layer1.n_visible(),
                found: cols,
            });
        }
        Ok(())
    }

    fn activations(&self, input: &Matrix<T>) -> Activations<T> {
        let h1 = self.layer1.hidden_probs_batch(input);
        let h2 = self.layer2.hidden_probs_batch(&h1);
        let logits = self.head.logits(&h2);
        Activations { h1, h2, logits }
    }

    /// Class probabilities for every row of `features`.
    pub fn forward_batch(&self, features: &Matrix<T>) -> Result<Matrix<T>, DbnError> {
        self.check_input(features.cols())?;
        let mut out = self.activations(features).logits;
        softmax_rows(&mut out);
        Ok(out)
    }

    pub fn forward(&self, feature: &[T]) -> Result<Vec<T>, DbnError> {
        let m = Matrix::from_vec(1, feature.len(), feature.to_vec()).expect("row");
        Ok(self.forward_batch(&m)?.into_vec())
    }

    /// Most probable class (lowest index on ties) and the probabilities.
    pub fn predict(&self, feature: &[T]) -> Result<(usize, Vec<T>), DbnError> {
        let p = self.forward(feature)?;
        let as_f64: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
        Ok((argmax(&as_f64), p))
    }

    /// Mean cross-entropy over the batch and its gradient by backpropagation.
    pub fn loss_and_gradients(&self, features: &Matrix<T>, labels: &[usize]) -> Result<(T, Gradients<T>), DbnError> {
        if labels.is_empty() {
            return Err(TrainError::EmptyBatch.into());
        }
        if features.rows() != labels.len() {
            return Err(TrainError::LengthMismatch { features: features.rows(), labels: labels.len() }.into());
        }
        self.check_input(features.cols())?;
        check_labels(labels, self.head.bias.len())?;

        let act = self.activations(features);
        let (loss, d_logits) = softmax_cross_entropy(&act.logits, labels);
        let w3 = act.h2.t_matmul(&d_logits);
        let b3 = d_logits.column_sums();

        let mut d_z2 = d_logits.matmul_t(&self.head.weights);
        for (d, &h) in d_z2.as_mut_slice().iter_mut().zip(act.h2.as_slice()) {
            *d *= h * (T::one() - h);
        }
        let w2 = act.h1.t_matmul(&d_z2);
        let b2 = d_z2.column_sums();

        let mut d_z1 = d_z2.matmul_t(&self.layer2.weights);
        for (d, &h) in d_z1.as_mut_slice().iter_mut().zip(act.h1.as_slice()) {
            *d *= h * (T::one() - h);
        }
        let mut w1 = features.t_matmul(&d_z1);
        if self.layer1.sigma != T::one() {
            let s = self.layer1.sigma;
            w1.map_inplace(|g| g / s);
        }
        let b1 = d_z1.column_sums();
        Ok((loss, Gradients { w1, b1, w2, b2, w3, b3 }))
    }

    /// Plain gradient step `theta -= rate * grad` on every parameter.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, rate: T) {
        descend(self.layer1.weights.as_mut_slice(), grads.w1.as_slice(), rate);
        descend(&mut self.layer1.hidden_bias, &grads.b1, rate);
        descend(self.layer2.weights.as_mut_slice(), grads.w2.as_slice(), rate);
        descend(&mut self.layer2.hidden_bias, &grads.b2, rate);
        descend(self.head.weights.as_mut_slice(), grads.w3.as_slice(), rate);
        descend(&mut self.head.bias, &grads.b3, rate);
    }
}

impl<T: Scalar> ClassScorer for DbnModel<T> {
    fn input_dim(&self) -> usize {
        self.layer1.n_visible()
    }

    fn n_classes(&self) -> usize {
        self.head.bias.len()
    }

    fn class_scores(&self, features: &[f64]) -> Vec<f64> {
        let input: Vec<T> = features.iter().map(|&x| T::lit(x)).collect();
        self.forward(&input).expect("input width checked by caller").into_iter().map(|p| p.as_f64()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained<T> {
    pub layer1: GaussianRbm<T>,
    pub layer2: BinaryRbm<T>,
    pub layer1_trace: Vec<T>,
    pub layer2_trace: Vec<T>,
}

/// Greedy layer-wise pre-training: the Gaussian RBM on the raw features,
/// then the binary RBM on layer-1 hidden activity (probabilities or samples,
/// per `config.propagate`).
pub fn pretrain<T: Scalar>(
    features: &Matrix<T>,
    arch: Architecture,
    config: &PretrainConfig,
) -> Result<Pretrained<T>, DbnError> {
    if features.rows() == 0 {
        return Err(RbmError::EmptyDataset.into());
    }
    if features.cols() != arch.input {
        return Err(DbnError::DimensionMismatch {
            what: "feature length",
            expected: arch.input,
            found: features.cols(),
        });
    }
    let mut init = rng_from_seed(config.init_seed);
    let mut layer1 = GaussianRbm::new(arch.input, arch.hidden1, T::lit(config.sigma), &mut init);
    let mut layer2 = BinaryRbm::new(arch.hidden1, arch.hidden2, &mut init);

    let layer1_trace = pretrain_layer(&mut layer1, features, &config.layer1)?;
    let mut hidden = layer1.hidden_probs_batch(features);
    if config.propagate == Propagate::Sample {
        let mut rng = rng_from_seed(derive_seed(config.init_seed, "propagate"));
        hidden = sample_binary(&hidden, &mut rng);
    }
    let layer2_trace = pretrain_layer(&mut layer2, &hidden, &config.layer2)?;
    Ok(Pretrained { layer1, layer2, layer1_trace, layer2_trace })
}

/// Fine-tunes all parameters by mini-batch gradient descent, starting from
/// the pre-trained layers and a zero softmax head. Returns the model and the
/// per-epoch mean training loss.
pub fn finetune<T: Scalar>(
    layer1: GaussianRbm<T>,
    layer2: BinaryRbm<T>,
    features: &Matrix<T>,
    labels: &[usize],
    classes: usize,
    config: &FineTuneConfig,
) -> Result<(DbnModel<T>, Vec<T>), DbnError> {
    let mut model = DbnModel::from_layers(layer1, layer2, classes)?;
    if features.rows() != labels.len() {
        return Err(TrainError::LengthMismatch { features: features.rows(), labels: labels.len() }.into());
    }
    if features.rows() == 0 {
        return Err(TrainError::EmptyDataset.into());
    }
    model.check_input(features.cols())?;
    check_labels(labels, classes)?;
    let rate = T::lit(config.learning_rate);
    let trace = run_epochs(labels.len(), config, |idx| {
        let batch = features.select_rows(idx);
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = model.loss_and_gradients(&batch, &batch_labels).map_err(|e| match e {
            DbnError::Train(t) => t,
            other => TrainError::InvalidConfig(other.to_string()),
        })?;
        model.apply_gradients(&grads, rate);
        Ok(loss)
    })?;
    model.metadata.finetune = Some(*config);
    Ok((model, trace))
}
