//! Train/test harness comparing the DBN with the softmax-regression baseline
//! on identical synthetic splits.

use thiserror::Error;

use super::{generate, train_baseline, SoftmaxRegression, SynthConfig, SynthError, TemplateSet};
use crate::catalog::ActionClass;
use crate::dbn::DbnModel;
use crate::eval::{evaluate_model, ClassScorer, EvalError, EvaluationReport, ThresholdSet};
use crate::geometry::ImageAnnotation;
use crate::optim::TrainError;
use crate::pipeline::{prepare_training_set, train_on_features, PipelineError, TrainRecipe};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("baseline training failed: {0}")]
    Baseline(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Disjoint train and test sets drawn from the same noise model.
pub fn split(
    templates: &TemplateSet,
    config: &SynthConfig,
    train_per_class: usize,
    test_per_class: usize,
) -> Result<(Vec<ImageAnnotation>, Vec<ImageAnnotation>), SynthError> {
    let train =
        SynthConfig { images_per_class: train_per_class, seed: derive_seed(config.seed, "bench.train"), ..*config };
    let test =
        SynthConfig { images_per_class: test_per_class, seed: derive_seed(config.seed, "bench.test"), ..*config };
    Ok((generate(templates, &train)?, generate(templates, &test)?))
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub dbn: EvaluationReport,
    pub baseline: EvaluationReport,
    pub dbn_model: DbnModel<f64>,
    pub baseline_model: SoftmaxRegression<f64>,
    pub samples: usize,
}

/// Trains both models on the same (augmented, encoded) training set and
/// evaluates them on the same test set. The baseline reuses the DBN's
/// fine-tuning schedule.
pub fn run_benchmark(
    train: &[ImageAnnotation],
    test: &[ImageAnnotation],
    recipe: &TrainRecipe,
) -> Result<BenchmarkOutcome, BenchError> {
    let permissive = ThresholdSet::permissive();
    let (features, labels) = prepare_training_set::<f64>(train, recipe.augment.as_ref(), &permissive)?;
    let outcome = train_on_features(&features, &labels, recipe)?;
    let (baseline_model, _) = train_baseline(&features, &labels, ActionClass::COUNT, &recipe.finetune)?;
    Ok(BenchmarkOutcome {
        dbn: evaluate_model(&outcome.model, test, &permissive)?,
        baseline: evaluate_model(&baseline_model, test, &permissive)?,
        dbn_model: outcome.model,
        baseline_model,
        samples: labels.len(),
    })
}

/// mAP of a fixed model on test sets regenerated at each miss probability.
/// Every test set shares `base.seed`.
pub fn miss_sweep<M: ClassScorer + ?Sized>(
    model: &M,
    templates: &TemplateSet,
    base: &SynthConfig,
    miss_probs: &[f64],
) -> Result<Vec<f64>, BenchError> {
    let mut out = Vec::with_capacity(miss_probs.len());
    for &p in miss_probs {
        let test = generate(templates, &SynthConfig { miss_prob: p, ..*base })?;
        out.push(evaluate_model(model, &test, &ThresholdSet::permissive())?.map);
    }
    Ok(out)
}
