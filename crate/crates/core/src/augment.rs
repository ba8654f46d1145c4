//! Training-set expansion: every labelled image yields `replicas` jittered
//! copies of itself and `replicas` jittered copies of its mirror image.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{flip_horizontal, ImageAnnotation};
use crate::seed::{derive_seed, fnv1a64, rng_from_seed, splitmix64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("image {0} has no action label")]
    MissingLabel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Jitter bound in (normalised) pixels; offsets are integers in `[-jitter_px, jitter_px]`.
    pub jitter_px: u32,
    pub replicas: usize,
    pub seed: u64,
}

impl AugmentConfig {
    /// Jitter of up to 10 px, 10 replicas per orientation.
    pub fn with_seed(seed: u64) -> Self {
        Self { jitter_px: 10, replicas: 10, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Original,
    Flipped,
}

/// Seed of the jitter stream for one output copy.
pub fn jitter_seed(seed: u64, image_id: &str, replica: usize, orientation: Orientation) -> u64 {
    let base = derive_seed(seed, "augment.jitter") ^ fnv1a64(image_id.as_bytes());
    let tag = (replica as u64) << 1 | u64::from(orientation == Orientation::Flipped);
    splitmix64(splitmix64(base) ^ tag)
}

/// Adds an independent uniform integer offset to every endpoint coordinate.
pub fn jitter(annotation: &ImageAnnotation, bound: u32, seed: u64) -> ImageAnnotation {
    if bound == 0 {
        return annotation.clone();
    }
    let mut rng = rng_from_seed(seed);
    let b = i64::from(bound);
    annotation.map_lines(|l| l.map(|_, c| c + rng.random_range(-b..=b) as f64))
}

/// Expands one normalised, labelled annotation into `2 * replicas` samples:
/// all originals first, then all mirrored copies, each jittered independently.
pub fn augment(annotation: &ImageAnnotation, config: &AugmentConfig) -> Result<Vec<ImageAnnotation>, AugmentError> {
    if config.replicas == 0 {
        return Err(AugmentError::InvalidConfig("replicas must be at least 1".into()));
    }
    if annotation.label.is_none() {
        return Err(AugmentError::MissingLabel(annotation.image_id.clone()));
    }
    let flipped = flip_horizontal(annotation);
    let mut out = Vec::with_capacity(2 * config.replicas);
    for (source, orientation) in [(annotation, Orientation::Original), (&flipped, Orientation::Flipped)] {
        for r in 0..config.replicas {
            let seed = jitter_seed(config.seed, &annotation.image_id, r, orientation);
            out.push(jitter(source, config.jitter_px, seed));
        }
    }
    Ok(out)
}

/// [`augment`] over a dataset, concatenated in input order.
pub fn augment_all(
    annotations: &[ImageAnnotation],
    config: &AugmentConfig,
) -> Result<Vec<ImageAnnotation>, AugmentError> {
    let mut out = Vec::with_capacity(annotations.len() * 2 * config.replicas);
    for a in annotations {
        out.extend(augment(a, config)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ActionClass, EntityKind};
    use crate::geometry::{CentralLine, DetectionRecord, PoseMode, Source};

    fn sample() -> ImageAnnotation {
        ImageAnnotation {
            image_id: "img-1".into(),
            width: 300.0,
            height: 200.0,
            detections: vec![
                DetectionRecord {
                    kind: EntityKind::Head,
                    line: CentralLine::new(100.0, 20.0, 100.0, 70.0),
                    score: 1.0,
                    source: Source::Manual,
                },
                DetectionRecord {
                    kind: EntityKind::LeftUpperArm,
                    line: CentralLine::new(80.0, 90.0, 60.0, 130.0),
                    score: 1.0,
                    source: Source::Manual,
                },
            ],
            label: Some(ActionClass::Running),
            pose_mode: PoseMode::Full,
        }
    }

    #[test]
    fn twenty_outputs_with_labels() {
        let out = augment(&sample(), &AugmentConfig::with_seed(1)).unwrap();
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|a| a.label == Some(ActionClass::Running)));
        assert_eq!(out[10].detections[1].kind, EntityKind::RightUpperArm);
    }

    #[test]
    fn zero_jitter_gives_exact_copies() {
        let a = sample();
        let cfg = AugmentConfig { jitter_px: 0, replicas: 3, seed: 5 };
        let out = augment(&a, &cfg).unwrap();
        let f = flip_horizontal(&a);
        assert_eq!(out[..3], [a.clone(), a.clone(), a]);
        assert_eq!(out[3..], [f.clone(), f.clone(), f]);
    }

    #[test]
    fn offsets_are_bounded_integers() {
        let a = sample();
        let f = flip_horizontal(&a);
        let out = augment(&a, &AugmentConfig::with_seed(2)).unwrap();
        for (i, o) in out.iter().enumerate() {
            let src = if i < 10 { &a } else { &f };
            for (d, s) in o.detections.iter().zip(&src.detections) {
                for (x, y) in d.line.coords().iter().zip(s.line.coords()) {
                    let off = x - y;
                    assert!(off.abs() <= 10.0 && off.fract() == 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_replica_specific() {
        let cfg = AugmentConfig::with_seed(3);
        let a = augment(&sample(), &cfg).unwrap();
        assert_eq!(a, augment(&sample(), &cfg).unwrap());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn unlabeled_is_rejected() {
        let mut a = sample();
        a.label = None;
        assert_eq!(augment(&a, &AugmentConfig::with_seed(0)), Err(AugmentError::MissingLabel("img-1".into())));
    }
}
