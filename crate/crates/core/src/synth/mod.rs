//! Synthetic benchmark: class-conditional pose/object templates rendered
//! into detection records with coordinate noise, missed detections and
//! sampled detector scores, plus a shallow softmax-regression baseline.
//!
//! Templates live in `data/templates.json` (embedded at build time; an
//! alternative file can be loaded with [`TemplateSet::from_json`]).

mod baseline;
mod bench;

pub use baseline::{train_baseline, SoftmaxRegression};
pub use bench::{miss_sweep, run_benchmark, split, BenchError, BenchmarkOutcome};

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ActionClass, EntityKind};
use crate::geometry::{CentralLine, DetectionRecord, ImageAnnotation, PoseMode, Source, HEAD_LENGTH};
use crate::seed::{derive_seed, rng_from_seed, Rng};

const BUILTIN_TEMPLATES: &str = include_str!("../../data/templates.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid template file: {0}")]
    InvalidTemplates(String),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EntityTemplate {
    kind: EntityKind,
    line: [f64; 4],
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ClassTemplate {
    class: ActionClass,
    pose_mode: PoseMode,
    entities: Vec<EntityTemplate>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[serde(default)]
    description: String,
    classes: Vec<ClassTemplate>,
}

/// One geometric template per action class, in class-index order.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    classes: Vec<ClassTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("shipped templates are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let file: TemplateFile = serde_json::from_str(text).map_err(|e| SynthError::InvalidTemplates(e.to_string()))?;
        let mut classes = Vec::with_capacity(ActionClass::COUNT);
        for class in ActionClass::ALL {
            let mut matching = file.classes.iter().filter(|t| t.class == class);
            let t = matching.next().ok_or_else(|| SynthError::InvalidTemplates(format!("no template for {class}")))?;
            if matching.next().is_some() {
                return Err(SynthError::InvalidTemplates(format!("duplicate template for {class}")));
            }
            let mut seen = HashSet::new();
            for e in &t.entities {
                if !seen.insert(e.kind) {
                    return Err(SynthError::InvalidTemplates(format!("{class}: duplicate {}", e.kind)));
                }
                if t.pose_mode == PoseMode::Upper && e.kind.is_leg() {
                    return Err(SynthError::InvalidTemplates(format!("{class}: leg part in upper-body template")));
                }
            }
            let head = t.entities.iter().find(|e| e.kind == EntityKind::Head);
            match head {
                Some(h)
                    if (CentralLine::new(h.line[0], h.line[1], h.line[2], h.line[3]).length() - HEAD_LENGTH).abs()
                        < 1e-9 => {}
                _ => {
                    return Err(SynthError::InvalidTemplates(format!("{class}: head of length {HEAD_LENGTH} required")))
                }
            }
            classes.push(t.clone());
        }
        Ok(Self { classes })
    }
}

/// Normal score distribution for one kind of detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDist {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub images_per_class: usize,
    /// Gaussian noise on every endpoint coordinate, in image pixels.
    pub coord_sigma: f64,
    /// Probability that a non-head entity goes undetected.
    pub miss_prob: f64,
    /// Probability, per object kind absent from the template, of a spurious detection.
    pub false_positive_prob: f64,
    pub true_score: ScoreDist,
    pub false_score: ScoreDist,
    pub source: Source,
    pub seed: u64,
}

impl SynthConfig {
    /// Noise-free detector output.
    pub fn noiseless(images_per_class: usize, seed: u64) -> Self {
        Self {
            images_per_class,
            coord_sigma: 0.0,
            miss_prob: 0.0,
            false_positive_prob: 0.0,
            true_score: ScoreDist { mean: 1.0, sd: 0.0 },
            false_score: ScoreDist { mean: -1.0, sd: 0.0 },
            source: Source::Detector,
            seed,
        }
    }

    pub fn noisy(images_per_class: usize, miss_prob: f64, coord_sigma: f64, seed: u64) -> Self {
        Self {
            coord_sigma,
            miss_prob,
            true_score: ScoreDist { mean: 1.0, sd: 0.3 },
            false_score: ScoreDist { mean: -0.5, sd: 0.3 },
            ..Self::noiseless(images_per_class, seed)
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("{name} = {p} is not a probability")))
            }
        };
        prob("miss_prob", self.miss_prob)?;
        prob("false_positive_prob", self.false_positive_prob)?;
        let non_negative = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("{name} = {x} must be finite and non-negative")))
            }
        };
        non_negative("coord_sigma", self.coord_sigma)?;
        non_negative("true_score.sd", self.true_score.sd)?;
        non_negative("false_score.sd", self.false_score.sd)?;
        if !(self.true_score.mean.is_finite() && self.false_score.mean.is_finite()) {
            return Err(SynthError::InvalidConfig("score means must be finite".into()));
        }
        Ok(())
    }
}

/// Scales offered for a rendered person; head length is `50 * scale` pixels.
const SCALES: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
const SHIFT_PX: i64 = 40;

fn normal_sample(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        mean
    } else {
        Normal::new(mean, sd).expect("finite sd").sample(rng)
    }
}

/// Pixel coordinate: template position scaled and shifted, noised, rounded.
fn render(rng: &mut Rng, value: f64, scale: f64, origin: f64, sigma: f64) -> f64 {
    let exact = value * scale + origin;
    (exact + normal_sample(rng, 0.0, sigma)).round()
}

fn render_one(template: &ClassTemplate, index: usize, config: &SynthConfig, rng: &mut Rng) -> ImageAnnotation {
    let scale = SCALES[rng.random_range(0..SCALES.len())];
    let width = 500.0 * scale;
    let height = 400.0 * scale;
    let ox = (250.0 * scale).round() + rng.random_range(-SHIFT_PX..=SHIFT_PX) as f64;
    let oy = (100.0 * scale).round() + rng.random_range(-SHIFT_PX..=SHIFT_PX) as f64;
    let mut detections = Vec::new();
    for e in &template.entities {
        let missed = e.kind != EntityKind::Head && rng.random::<f64>() < config.miss_prob;
        let [x1, y1, x2, y2] = e.line;
        let line = CentralLine::new(
            render(rng, x1, scale, ox, config.coord_sigma),
            render(rng, y1, scale, oy, config.coord_sigma),
            render(rng, x2, scale, ox, config.coord_sigma),
            render(rng, y2, scale, oy, config.coord_sigma),
        );
        let score = normal_sample(rng, config.true_score.mean, config.true_score.sd);
        if !missed {
            detections.push(DetectionRecord { kind: e.kind, line, score, source: config.source });
        }
    }
    if config.false_positive_prob > 0.0 {
        for kind in EntityKind::ALL.into_iter().skip(10) {
            if template.entities.iter().any(|e| e.kind == kind) {
                continue;
            }
            if rng.random::<f64>() < config.false_positive_prob {
                let cx = ox + rng.random_range(-150.0..150.0) * scale;
                let cy = oy + rng.random_range(-50.0..250.0) * scale;
                let half = rng.random_range(20.0..80.0) * scale;
                let line = CentralLine::new((cx - half).round(), cy.round(), (cx + half).round(), cy.round());
                let score = normal_sample(rng, config.false_score.mean, config.false_score.sd);
                detections.push(DetectionRecord { kind, line, score, source: config.source });
            }
        }
    }
    ImageAnnotation {
        image_id: format!("{}-{index:04}", template.class.name()),
        width,
        height,
        detections,
        label: Some(template.class),
        pose_mode: template.pose_mode,
    }
}

/// Renders `images_per_class` labelled annotations for each class, class by
/// class. Deterministic in `config.seed`.
pub fn generate(templates: &TemplateSet, config: &SynthConfig) -> Result<Vec<ImageAnnotation>, SynthError> {
    config.validate()?;
    let mut rng = rng_from_seed(derive_seed(config.seed, "synth.generate"));
    let mut out = Vec::with_capacity(ActionClass::COUNT * config.images_per_class);
    for template in &templates.classes {
        for i in 0..config.images_per_class {
            out.push(render_one(template, i, config, &mut rng));
        }
    }
    Ok(out)
}
