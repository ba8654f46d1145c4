//! End-to-end training: normalise, augment, encode, pre-train, fine-tune.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_all, AugmentConfig, AugmentError};
use crate::dbn::{finetune, pretrain, Architecture, DbnError, DbnModel, PretrainConfig};
use crate::eval::ThresholdSet;
use crate::geometry::{encode_image, normalize_scale, GeometryError, ImageAnnotation};
use crate::linalg::Matrix;
use crate::optim::FineTuneConfig;
use crate::scalar::Scalar;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] DbnError),
    #[error("image {0} has no action label")]
    MissingLabel(String),
    #[error("no training images")]
    EmptyDataset,
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub architecture: Architecture,
    pub pretrain: PretrainConfig,
    pub finetune: FineTuneConfig,
    /// `None` trains on the annotations as given.
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
}

impl TrainRecipe {
    /// 90-200-50-7; pre-training at rate 0.01 for 100 epochs per layer;
    /// fine-tuning at rate 0.1 for 1000 epochs; 10 jitter replicas of up to
    /// 10 px per orientation. All stream seeds derive from `seed`.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            architecture: Architecture::default(),
            pretrain: PretrainConfig::from_seed(derive_seed(seed, "pretrain")),
            finetune: FineTuneConfig::finetune_default(derive_seed(seed, "finetune")),
            augment: Some(AugmentConfig::with_seed(derive_seed(seed, "augment"))),
            seed,
        }
    }
}

/// Normalises, optionally augments, and encodes labelled annotations into a
/// feature matrix and class indices.
pub fn prepare_training_set<T: Scalar>(
    annotations: &[ImageAnnotation],
    augment: Option<&AugmentConfig>,
    thresholds: &ThresholdSet,
) -> Result<(Matrix<T>, Vec<usize>), PipelineError> {
    let mut normalized = Vec::with_capacity(annotations.len());
    for a in annotations {
        if a.label.is_none() {
            return Err(PipelineError::MissingLabel(a.image_id.clone()));
        }
        normalized.push(normalize_scale(a)?);
    }
    let samples = match augment {
        Some(cfg) => augment_all(&normalized, cfg)?,
        None => normalized,
    };
    encode_labeled(&samples, thresholds)
}

/// Encodes already-normalised labelled annotations.
pub fn encode_labeled<T: Scalar>(
    samples: &[ImageAnnotation],
    thresholds: &ThresholdSet,
) -> Result<(Matrix<T>, Vec<usize>), PipelineError> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for a in samples {
        let label = a.label.ok_or_else(|| PipelineError::MissingLabel(a.image_id.clone()))?;
        let f = encode_image(a, thresholds)?;
        rows.push(f.as_slice().iter().map(|&x| T::lit(x)).collect::<Vec<T>>());
        labels.push(label.index());
    }
    if rows.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    Ok((Matrix::from_rows(&rows).expect("fixed-width features"), labels))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: DbnModel<T>,
    pub layer1_trace: Vec<T>,
    pub layer2_trace: Vec<T>,
    pub finetune_trace: Vec<T>,
    pub samples: usize,
}

/// Greedy pre-training followed by fine-tuning on an encoded dataset.
pub fn train_on_features<T: Scalar>(
    features: &Matrix<T>,
    labels: &[usize],
    recipe: &TrainRecipe,
) -> Result<TrainOutcome<T>, PipelineError> {
    let pre = pretrain(features, recipe.architecture, &recipe.pretrain)?;
    let (mut model, finetune_trace) =
        finetune(pre.layer1, pre.layer2, features, labels, recipe.architecture.classes, &recipe.finetune)?;
    model.metadata.seed = Some(recipe.seed);
    model.metadata.pretrain = Some(recipe.pretrain);
    Ok(TrainOutcome {
        model,
        layer1_trace: pre.layer1_trace,
        layer2_trace: pre.layer2_trace,
        finetune_trace,
        samples: labels.len(),
    })
}

/// The full recipe on raw annotations. Training records are encoded with
/// every detection present (no score gating).
pub fn train_dbn<T: Scalar>(
    annotations: &[ImageAnnotation],
    recipe: &TrainRecipe,
) -> Result<TrainOutcome<T>, PipelineError> {
    let (features, labels) = prepare_training_set(annotations, recipe.augment.as_ref(), &ThresholdSet::permissive())?;
    train_on_features(&features, &labels, recipe)
}
