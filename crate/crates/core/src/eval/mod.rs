//! Ranking metrics and model evaluation.
//!
//! AP here is the non-interpolated variant: the mean, over positives, of the
//! precision at each positive's rank. Items are ranked by descending score
//! with a stable sort, so equal scores keep input order; the number of tied
//! neighbours is reported alongside every AP so tie effects stay visible.

mod thresholds;

use std::fmt::Write as _;
use std::ops::{Add, Div};

use num_traits::{FromPrimitive, One, Zero};
use serde::Serialize;
use thiserror::Error;

pub use thresholds::{select_thresholds, ThresholdEntry, ThresholdSearch, ThresholdSelection, ThresholdSet};

use crate::catalog::ActionClass;
use crate::geometry::{encode_annotation, ImageAnnotation, FEATURE_DIM};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no positive items in the ranking")]
    NoPositives,
    #[error("class {0} has no positive test images")]
    NoPositivesForClass(ActionClass),
    #[error("{scores} scores but {labels} relevance labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at position {0} is not finite")]
    NonFiniteScore(usize),
    #[error("missing result for class {0}")]
    MissingClass(ActionClass),
    #[error("duplicate result for class {0}")]
    DuplicateClass(ActionClass),
    #[error("model expects {found} inputs, the encoder produces {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no image could be evaluated")]
    NothingEvaluated,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training failed: {0}")]
    Training(String),
}

/// Anything that maps a feature vector to per-class scores.
pub trait ClassScorer {
    fn input_dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn class_scores(&self, features: &[f64]) -> Vec<f64>;
}

/// Number types AP can be accumulated in. `f64` for reporting; an exact
/// rational type makes the result independent of summation order.
pub trait ApValue: Clone + Zero + One + Add<Output = Self> + Div<Output = Self> + FromPrimitive {}

impl<V> ApValue for V where V: Clone + Zero + One + Add<Output = V> + Div<Output = V> + FromPrimitive {}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedAp<V> {
    pub ap: V,
    pub positives: usize,
    pub ranked: usize,
    /// Adjacent pairs in the ranking with identical scores.
    pub ties: usize,
}

/// Indices ordered by descending score; equal scores keep input order.
pub fn rank_descending(scores: &[f64]) -> Result<Vec<usize>, EvalError> {
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(order)
}

pub fn average_precision_in<V: ApValue>(scores: &[f64], is_positive: &[bool]) -> Result<RankedAp<V>, EvalError> {
    if scores.len() != is_positive.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: is_positive.len() });
    }
    let positives = is_positive.iter().filter(|&&p| p).count();
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let order = rank_descending(scores)?;
    let ties = order.windows(2).filter(|w| scores[w[0]] == scores[w[1]]).count();
    let int = |n: usize| V::from_usize(n).expect("count representable");

    let mut hits = 0;
    let mut sum = V::zero();
    for (rank, &i) in order.iter().enumerate() {
        if is_positive[i] {
            hits += 1;
            sum = sum + int(hits) / int(rank + 1);
        }
    }
    Ok(RankedAp { ap: sum / int(positives), positives, ranked: scores.len(), ties })
}

pub fn average_precision(scores: &[f64], is_positive: &[bool]) -> Result<f64, EvalError> {
    average_precision_in::<f64>(scores, is_positive).map(|r| r.ap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub class: ActionClass,
    pub ap: f64,
    pub positives: usize,
    pub ranked: usize,
    pub ties: usize,
}

/// Unweighted mean of one AP per action class.
pub fn mean_average_precision(results: &[ApResult]) -> Result<f64, EvalError> {
    let mut seen = [None::<f64>; ActionClass::COUNT];
    for r in results {
        let slot = &mut seen[r.class.index()];
        if slot.is_some() {
            return Err(EvalError::DuplicateClass(r.class));
        }
        *slot = Some(r.ap);
    }
    let mut total = 0.0;
    for class in ActionClass::ALL {
        total += seen[class.index()].ok_or(EvalError::MissingClass(class))?;
    }
    Ok(total / ActionClass::COUNT as f64)
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub classes: Vec<ApResult>,
    pub map: f64,
    pub accuracy: f64,
    pub evaluated: usize,
    pub skipped: Vec<SkippedImage>,
}

impl EvaluationReport {
    /// Fixed-width table: one row per class, then the mAP row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>8} {:>8} {:>8} {:>6}", "class", "AP", "support", "ranked", "ties");
        for r in &self.classes {
            let _ =
                writeln!(out, "{:<28} {:>8.4} {:>8} {:>8} {:>6}", r.class.name(), r.ap, r.positives, r.ranked, r.ties);
        }
        let _ = writeln!(out, "{:<28} {:>8.4}", "mAP", self.map);
        let _ = writeln!(
            out,
            "accuracy {:.4}  evaluated {}  skipped {}",
            self.accuracy,
            self.evaluated,
            self.skipped.len()
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Per-class scores for a set of annotations plus the skipped images.
pub(crate) struct ScoredSet {
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<ActionClass>,
    pub skipped: Vec<SkippedImage>,
}

pub(crate) fn score_annotations<M: ClassScorer + ?Sized>(
    model: &M,
    annotations: &[ImageAnnotation],
    thresholds: &ThresholdSet,
) -> Result<ScoredSet, EvalError> {
    if model.input_dim() != FEATURE_DIM {
        return Err(EvalError::DimensionMismatch { expected: FEATURE_DIM, found: model.input_dim() });
    }
    if model.n_classes() != ActionClass::COUNT {
        return Err(EvalError::DimensionMismatch { expected: ActionClass::COUNT, found: model.n_classes() });
    }
    let mut set = ScoredSet { scores: Vec::new(), labels: Vec::new(), skipped: Vec::new() };
    for a in annotations {
        let Some(label) = a.label else {
            set.skipped.push(SkippedImage { image_id: a.image_id.clone(), reason: "missing label".into() });
            continue;
        };
        match encode_annotation(a, thresholds) {
            Ok(features) => {
                set.scores.push(model.class_scores(features.as_slice()));
                set.labels.push(label);
            }
            Err(e) => {
                log::warn!("skipping image {}: {e}", a.image_id);
                set.skipped.push(SkippedImage { image_id: a.image_id.clone(), reason: e.to_string() });
            }
        }
    }
    Ok(set)
}

pub(crate) fn report_from_scores(set: ScoredSet) -> Result<EvaluationReport, EvalError> {
    if set.labels.is_empty() {
        return Err(EvalError::NothingEvaluated);
    }
    let mut classes = Vec::with_capacity(ActionClass::COUNT);
    for class in ActionClass::ALL {
        let column: Vec<f64> = set.scores.iter().map(|s| s[class.index()]).collect();
        let positive: Vec<bool> = set.labels.iter().map(|&l| l == class).collect();
        let r = average_precision_in::<f64>(&column, &positive).map_err(|e| match e {
            EvalError::NoPositives => EvalError::NoPositivesForClass(class),
            other => other,
        })?;
        classes.push(ApResult { class, ap: r.ap, positives: r.positives, ranked: r.ranked, ties: r.ties });
    }
    let map = mean_average_precision(&classes)?;
    let correct = set.scores.iter().zip(&set.labels).filter(|(s, l)| argmax(s) == l.index()).count();
    Ok(EvaluationReport {
        classes,
        map,
        accuracy: correct as f64 / set.labels.len() as f64,
        evaluated: set.labels.len(),
        skipped: set.skipped,
    })
}

/// Normalises and encodes every annotation, ranks all evaluated images for
/// each class by the model's class score, and reports per-class AP, mAP and
/// top-1 accuracy. Unlabelled or unencodable images are listed in
/// `skipped`, never silently dropped.
pub fn evaluate_model<M: ClassScorer + ?Sized>(
    model: &M,
    annotations: &[ImageAnnotation],
    thresholds: &ThresholdSet,
) -> Result<EvaluationReport, EvalError> {
    report_from_scores(score_annotations(model, annotations, thresholds)?)
}
