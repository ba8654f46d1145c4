//! Restricted Boltzmann machines: binary-binary and Gaussian-binary.
//!
//! Binary RBM energy:
//!   E(v,h) = -sum_ij v_i W_ij h_j - sum_j b_j h_j - sum_i c_i v_i
//! Gaussian RBM energy (shared visible standard deviation sigma):
//!   E(v,h) = 1/(2 sigma^2) sum_i (v_i - c_i)^2 - 1/sigma sum_ij v_i W_ij h_j - sum_j b_j h_j
//!
//! `W` is `n_visible x n_hidden`, `b` the hidden bias, `c` the visible bias.
//! Both models are trained with CD-k: hidden states are sampled during the
//! Gibbs chain, while visible reconstructions use probabilities (binary) or
//! means (Gaussian) without injected noise.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{logistic, Scalar};
use crate::seed::{rng_from_seed, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbmError {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), RbmError> {
    if expected == found {
        Ok(())
    } else {
        Err(RbmError::DimensionMismatch { what, expected, found })
    }
}

/// Contrastive-divergence settings for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Gibbs alternations per update (CD-k).
    pub k: usize,
    pub seed: u64,
}

impl CdConfig {
    /// Learning rate 0.01, 100 epochs, CD-1, mini-batches of 20.
    pub fn pretrain_default(seed: u64) -> Self {
        Self { learning_rate: 0.01, epochs: 100, batch_size: 20, k: 1, seed }
    }

    pub fn validate(&self) -> Result<(), RbmError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(RbmError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.k == 0 {
            return Err(RbmError::InvalidConfig("k must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(RbmError::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Operations shared by both RBM flavours; enough to run CD training.
pub trait Rbm<T: Scalar> {
    fn n_visible(&self) -> usize;
    fn n_hidden(&self) -> usize;

    /// `P(h = 1 | v)` for each row of `visible`. Caller guarantees the width.
    fn hidden_probs_batch(&self, visible: &Matrix<T>) -> Matrix<T>;

    /// Binary: `P(v = 1 | h)`; Gaussian: `E[v | h]`. One row per row of `hidden`.
    fn visible_batch(&self, hidden: &Matrix<T>) -> Matrix<T>;

    /// Factor multiplying `v_i W_ij h_j` in `-E`: `1/sigma` or 1.
    fn coupling_scale(&self) -> T;

    /// Factor multiplying the visible-bias gradient: `1/sigma^2` or 1.
    fn visible_bias_scale(&self) -> T;

    fn params_mut(&mut self) -> (&mut Matrix<T>, &mut Vec<T>, &mut Vec<T>);

    fn hidden_given_visible(&self, visible: &[T]) -> Result<Vec<T>, RbmError> {
        check_len("visible vector", self.n_visible(), visible.len())?;
        let v = Matrix::from_vec(1, visible.len(), visible.to_vec()).expect("row");
        Ok(self.hidden_probs_batch(&v).into_vec())
    }

    fn visible_given_hidden(&self, hidden: &[T]) -> Result<Vec<T>, RbmError> {
        check_len("hidden vector", self.n_hidden(), hidden.len())?;
        let h = Matrix::from_vec(1, hidden.len(), hidden.to_vec()).expect("row");
        Ok(self.visible_batch(&h).into_vec())
    }
}

fn init_weights<T: Scalar>(n_visible: usize, n_hidden: usize, rng: &mut Rng) -> Matrix<T> {
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    Matrix::from_fn(n_visible, n_hidden, |_, _| T::lit(normal.sample(rng)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRbm<T> {
    pub weights: Matrix<T>,
    pub hidden_bias: Vec<T>,
    pub visible_bias: Vec<T>,
}

impl<T: Scalar> BinaryRbm<T> {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: Matrix::zeros(n_visible, n_hidden),
            hidden_bias: vec![T::zero(); n_hidden],
            visible_bias: vec![T::zero(); n_visible],
        }
    }

    /// Weights from `Normal(0, 0.01^2)`, zero biases.
    pub fn new(n_visible: usize, n_hidden: usize, rng: &mut Rng) -> Self {
        Self { weights: init_weights(n_visible, n_hidden, rng), ..Self::zeros(n_visible, n_hidden) }
    }

    /// Builds a model from parts, checking that all shapes agree.
    pub fn from_parts(weights: Matrix<T>, hidden_bias: Vec<T>, visible_bias: Vec<T>) -> Result<Self, RbmError> {
        check_len("hidden bias", weights.cols(), hidden_bias.len())?;
        check_len("visible bias", weights.rows(), visible_bias.len())?;
        Ok(Self { weights, hidden_bias, visible_bias })
    }

    pub fn energy(&self, v: &[T], h: &[T]) -> Result<T, RbmError> {
        check_len("visible vector", self.n_visible(), v.len())?;
        check_len("hidden vector", self.n_hidden(), h.len())?;
        let mut coupling = T::zero();
        for (i, &vi) in v.iter().enumerate() {
            for (j, &hj) in h.iter().enumerate() {
                coupling += vi * self.weights[(i, j)] * hj;
            }
        }
        let hidden: T = self.hidden_bias.iter().zip(h).fold(T::zero(), |acc, (&b, &x)| acc + b * x);
        let visible: T = self.visible_bias.iter().zip(v).fold(T::zero(), |acc, (&c, &x)| acc + c * x);
        Ok(-coupling - hidden - visible)
    }

    /// `F(v) = -sum_i c_i v_i - sum_j log(1 + exp(b_j + sum_i v_i W_ij))`.
    pub fn free_energy(&self, v: &[T]) -> Result<T, RbmError> {
        check_len("visible vector", self.n_visible(), v.len())?;
        let mut f = T::zero();
        for (&c, &x) in self.visible_bias.iter().zip(v) {
            f -= c * x;
        }
        for j in 0..self.n_hidden() {
            let mut a = self.hidden_bias[j];
            for (i, &x) in v.iter().enumerate() {
                a += x * self.weights[(i, j)];
            }
            f -= softplus(a);
        }
        Ok(f)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<T: Scalar> Rbm<T> for BinaryRbm<T> {
    fn n_visible(&self) -> usize {
        self.weights.rows()
    }

    fn n_hidden(&self) -> usize {
        self.weights.cols()
    }

    fn hidden_probs_batch(&self, visible: &Matrix<T>) -> Matrix<T> {
        let mut a = visible.matmul(&self.weights);
        a.add_row_vector(&self.hidden_bias);
        a.map_inplace(logistic);
        a
    }

    fn visible_batch(&self, hidden: &Matrix<T>) -> Matrix<T> {
        let mut a = hidden.matmul_t(&self.weights);
        a.add_row_vector(&self.visible_bias);
        a.map_inplace(logistic);
        a
    }

    fn coupling_scale(&self) -> T {
        T::one()
    }

    fn visible_bias_scale(&self) -> T {
        T::one()
    }

    fn params_mut(&mut self) -> (&mut Matrix<T>, &mut Vec<T>, &mut Vec<T>) {
        (&mut self.weights, &mut self.hidden_bias, &mut self.visible_bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRbm<T> {
    pub weights: Matrix<T>,
    pub hidden_bias: Vec<T>,
    pub visible_bias: Vec<T>,
    pub sigma: T,
}

impl<T: Scalar> GaussianRbm<T> {
    pub fn zeros(n_visible: usize, n_hidden: usize, sigma: T) -> Self {
        Self {
            weights: Matrix::zeros(n_visible, n_hidden),
            hidden_bias: vec![T::zero(); n_hidden],
            visible_bias: vec![T::zero(); n_visible],
            sigma,
        }
    }

    /// Weights from `Normal(0, 0.01^2)`, zero biases, fixed `sigma`.
    pub fn new(n_visible: usize, n_hidden: usize, sigma: T, rng: &mut Rng) -> Self {
        Self { weights: init_weights(n_visible, n_hidden, rng), ..Self::zeros(n_visible, n_hidden, sigma) }
    }

    pub fn from_parts(
        weights: Matrix<T>,
        hidden_bias: Vec<T>,
        visible_bias: Vec<T>,
        sigma: T,
    ) -> Result<Self, RbmError> {
        check_len("hidden bias", weights.cols(), hidden_bias.len())?;
        check_len("visible bias", weights.rows(), visible_bias.len())?;
        if !(sigma > T::zero() && sigma.is_finite()) {
            return Err(RbmError::InvalidConfig(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { weights, hidden_bias, visible_bias, sigma })
    }

    pub fn energy(&self, v: &[T], h: &[T]) -> Result<T, RbmError> {
        check_len("visible vector", self.n_visible(), v.len())?;
        check_len("hidden vector", self.n_hidden(), h.len())?;
        let two = T::lit(2.0);
        let mut quad = T::zero();
        for (&x, &c) in v.iter().zip(&self.visible_bias) {
            quad += (x - c) * (x - c);
        }
        let mut coupling = T::zero();
        for (i, &vi) in v.iter().enumerate() {
            for (j, &hj) in h.iter().enumerate() {
                coupling += vi * self.weights[(i, j)] * hj;
            }
        }
        let hidden: T = self.hidden_bias.iter().zip(h).fold(T::zero(), |acc, (&b, &x)| acc + b * x);
        Ok(quad / (two * self.sigma * self.sigma) - coupling / self.sigma - hidden)
    }
}

impl<T: Scalar> Rbm<T> for GaussianRbm<T> {
    fn n_visible(&self) -> usize {
        self.weights.rows()
    }

    fn n_hidden(&self) -> usize {
        self.weights.cols()
    }

    fn hidden_probs_batch(&self, visible: &Matrix<T>) -> Matrix<T> {
        let mut a = visible.matmul(&self.weights);
        if self.sigma != T::one() {
            let s = self.sigma;
            a.map_inplace(|x| x / s);
        }
        a.add_row_vector(&self.hidden_bias);
        a.map_inplace(logistic);
        a
    }

    fn visible_batch(&self, hidden: &Matrix<T>) -> Matrix<T> {
        let mut a = hidden.matmul_t(&self.weights);
        if self.sigma != T::one() {
            let s = self.sigma;
            a.map_inplace(|x| x * s);
        }
        a.add_row_vector(&self.visible_bias);
        a
    }

    fn coupling_scale(&self) -> T {
        T::one() / self.sigma
    }

    fn visible_bias_scale(&self) -> T {
        T::one() / (self.sigma * self.sigma)
    }

    fn params_mut(&mut self) -> (&mut Matrix<T>, &mut Vec<T>, &mut Vec<T>) {
        (&mut self.weights, &mut self.hidden_bias, &mut self.visible_bias)
    }
}

/// Bernoulli draws, one per probability.
pub fn sample_binary<T: Scalar>(probs: &Matrix<T>, rng: &mut Rng) -> Matrix<T> {
    let mut out = probs.clone();
    for p in out.as_mut_slice() {
        *p = if rng.random::<f64>() < p.as_f64() { T::one() } else { T::zero() };
    }
    out
}

/// One CD-k update on `batch`, in place. Returns the mean squared
/// reconstruction error of the final negative-phase visible state.
pub fn cd_step<T: Scalar, R: Rbm<T> + ?Sized>(
    rbm: &mut R,
    batch: &Matrix<T>,
    config: &CdConfig,
    rng: &mut Rng,
) -> Result<T, RbmError> {
    config.validate()?;
    if batch.rows() == 0 {
        return Err(RbmError::EmptyBatch);
    }
    check_len("batch width", rbm.n_visible(), batch.cols())?;

    let positive_hidden = rbm.hidden_probs_batch(batch);
    let mut hidden = sample_binary(&positive_hidden, rng);
    let mut recon = rbm.visible_batch(&hidden);
    let mut negative_hidden = rbm.hidden_probs_batch(&recon);
    for _ in 1..config.k {
        hidden = sample_binary(&negative_hidden, rng);
        recon = rbm.visible_batch(&hidden);
        negative_hidden = rbm.hidden_probs_batch(&recon);
    }

    let rate = T::lit(config.learning_rate) / T::from_usize(batch.rows()).expect("batch size");
    let w_rate = rate * rbm.coupling_scale();
    let c_rate = rate * rbm.visible_bias_scale();
    let positive = batch.t_matmul(&positive_hidden);
    let negative = recon.t_matmul(&negative_hidden);
    let hidden_delta: Vec<T> =
        positive_hidden.column_sums().into_iter().zip(negative_hidden.column_sums()).map(|(p, n)| p - n).collect();
    let visible_delta: Vec<T> = batch.column_sums().into_iter().zip(recon.column_sums()).map(|(p, n)| p - n).collect();

    let (weights, hidden_bias, visible_bias) = rbm.params_mut();
    for ((w, &p), &n) in weights.as_mut_slice().iter_mut().zip(positive.as_slice()).zip(negative.as_slice()) {
        *w += w_rate * (p - n);
    }
    for (b, d) in hidden_bias.iter_mut().zip(hidden_delta) {
        *b += rate * d;
    }
    for (c, d) in visible_bias.iter_mut().zip(visible_delta) {
        *c += c_rate * d;
    }

    let mut err = T::zero();
    for (&x, &r) in batch.as_slice().iter().zip(recon.as_slice()) {
        err += (x - r) * (x - r);
    }
    Ok(err / T::from_usize(batch.as_slice().len()).expect("element count"))
}

/// Shuffled mini-batch order for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Runs `config.epochs` passes of shuffled mini-batch CD over `data` and
/// returns the per-epoch mean reconstruction error.
pub fn pretrain_layer<T: Scalar, R: Rbm<T> + ?Sized>(
    rbm: &mut R,
    data: &Matrix<T>,
    config: &CdConfig,
) -> Result<Vec<T>, RbmError> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(RbmError::EmptyDataset);
    }
    check_len("data width", rbm.n_visible(), data.cols())?;
    let mut rng = rng_from_seed(config.seed);
    let n = T::from_usize(data.rows()).expect("row count");
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = T::zero();
        for idx in epoch_batches(data.rows(), config.batch_size, &mut rng) {
            let batch = data.select_rows(&idx);
            let err = cd_step(rbm, &batch, config, &mut rng)?;
            total += err * T::from_usize(idx.len()).expect("batch size");
        }
        let mean = total / n;
        log::debug!("cd epoch {}: reconstruction error {mean}", epoch + 1);
        trace.push(mean);
    }
    Ok(trace)
}
