//! Geometric encoding of part and object detections.
//!
//! Every entity is described relative to the head (a star model around the
//! head centre): the entity's central line in head-centred coordinates plus
//! the angle between the head axis and the head-to-entity direction. Fifteen
//! 6-dim blocks give the 90-dim network input.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ActionClass, EntityKind};
use crate::eval::ThresholdSet;

/// Head length, in pixels, after scale normalisation.
pub const HEAD_LENGTH: f64 = 50.0;
/// Dims per entity block: `[isExist, x1, y1, x2, y2, alpha]`.
pub const BLOCK_DIM: usize = 6;
pub const FEATURE_DIM: usize = EntityKind::COUNT * BLOCK_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("image {0}: no head detection")]
    MissingHead(String),
    #[error("image {0}: head central line has zero length")]
    DegenerateHead(String),
}

/// Segment between the two anchor points of a part, or across an object's
/// detection window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralLine {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl CentralLine {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    pub fn midpoint(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self { x1: f(0, self.x1), y1: f(1, self.y1), x2: f(2, self.x2), y2: f(3, self.y2) }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|_, c| c * s)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        self.map(|i, c| if i % 2 == 0 { c + dx } else { c + dy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Hand-labelled location; always counted as present.
    Manual,
    /// Automatic detection; present only if its score clears the threshold.
    Detector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub kind: EntityKind,
    pub line: CentralLine,
    pub score: f64,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseMode {
    Full,
    /// Upper-body estimate: the four leg parts are treated as missing.
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageAnnotation {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub detections: Vec<DetectionRecord>,
    pub label: Option<ActionClass>,
    pub pose_mode: PoseMode,
}

impl ImageAnnotation {
    /// Highest-scoring record of `kind` (the first one on equal scores).
    pub fn best(&self, kind: EntityKind) -> Option<&DetectionRecord> {
        self.detections.iter().filter(|d| d.kind == kind).fold(None, |best, d| match best {
            Some(b) if b.score >= d.score => Some(b),
            _ => Some(d),
        })
    }

    /// Keeps one record per kind (the one [`ImageAnnotation::best`] picks),
    /// ordered by catalog index.
    pub fn dedup_detections(&mut self) {
        let kept: Vec<DetectionRecord> = EntityKind::ALL.iter().filter_map(|&k| self.best(k).cloned()).collect();
        self.detections = kept;
    }

    /// Applies `f` to every central line.
    pub fn map_lines(&self, mut f: impl FnMut(&CentralLine) -> CentralLine) -> Self {
        let mut out = self.clone();
        for d in &mut out.detections {
            d.line = f(&d.line);
        }
        out
    }

    /// Uniform scaling of all coordinates and the image size.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.map_lines(|l| l.scaled(s));
        out.width *= s;
        out.height *= s;
        out
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        self.map_lines(|l| l.translated(dx, dy))
    }

    fn head_line(&self) -> Result<CentralLine, GeometryError> {
        let head = self.best(EntityKind::Head).ok_or_else(|| GeometryError::MissingHead(self.image_id.clone()))?;
        if head.line.length() == 0.0 {
            return Err(GeometryError::DegenerateHead(self.image_id.clone()));
        }
        Ok(head.line)
    }
}

/// Rescales the annotation so the head's central line is [`HEAD_LENGTH`] long.
pub fn normalize_scale(annotation: &ImageAnnotation) -> Result<ImageAnnotation, GeometryError> {
    let head = annotation.head_line()?;
    let s = HEAD_LENGTH / head.length();
    if s == 1.0 {
        return Ok(annotation.clone());
    }
    Ok(annotation.scaled(s))
}

/// Raw (un-squashed) relation of one entity to the head.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntityFeature {
    pub is_exist: bool,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Signed angle in `[-pi, pi]`, see [`encode_entity`].
    pub alpha: f64,
    /// The entity midpoint sat on the head centre, so `alpha` was set to 0.
    pub degenerate_angle: bool,
}

/// Encodes `entity` relative to `head`.
///
/// Coordinates are the entity endpoints minus the head centre. `alpha` is the
/// signed angle from the head direction (first to second endpoint) to the
/// direction from the head centre to the entity midpoint, positive when the
/// rotation is counter-clockwise as seen on screen (y axis pointing down).
pub fn encode_entity(head: &CentralLine, entity: Option<&CentralLine>) -> EntityFeature {
    let Some(line) = entity else {
        return EntityFeature::default();
    };
    let (cx, cy) = head.midpoint();
    let (mx, my) = line.midpoint();
    let (dx, dy) = (head.x2 - head.x1, head.y2 - head.y1);
    let (ux, uy) = (mx - cx, my - cy);
    let degenerate = ux == 0.0 && uy == 0.0;
    let alpha = if degenerate {
        0.0
    } else {
        // y-down screen coordinates flip the usual orientation of the cross product
        let cross = dy * ux - dx * uy;
        let dot = dx * ux + dy * uy;
        cross.atan2(dot)
    };
    EntityFeature {
        is_exist: true,
        x1: line.x1 - cx,
        y1: line.y1 - cy,
        x2: line.x2 - cx,
        y2: line.y2 - cy,
        alpha,
        degenerate_angle: degenerate,
    }
}

/// Maps a raw block into `[isExist, logistic(x1/50), .., logistic(alpha/(pi/2))]`.
pub fn squash(raw: &EntityFeature) -> [f64; BLOCK_DIM] {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    [
        if raw.is_exist { 1.0 } else { 0.0 },
        sig(raw.x1 / HEAD_LENGTH),
        sig(raw.y1 / HEAD_LENGTH),
        sig(raw.x2 / HEAD_LENGTH),
        sig(raw.y2 / HEAD_LENGTH),
        sig(raw.alpha / FRAC_PI_2),
    ]
}

/// The 90-dim network input, entity-major in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn from_blocks(blocks: &[[f64; BLOCK_DIM]; EntityKind::COUNT]) -> Self {
        Self(blocks.iter().flatten().copied().collect())
    }

    /// Wraps raw values; `None` unless exactly [`FEATURE_DIM`] long.
    pub fn from_vec(values: Vec<f64>) -> Option<Self> {
        (values.len() == FEATURE_DIM).then_some(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn block(&self, kind: EntityKind) -> &[f64] {
        let k = kind.index() * BLOCK_DIM;
        &self.0[k..k + BLOCK_DIM]
    }

    pub fn exists(&self, kind: EntityKind) -> bool {
        self.block(kind)[0] == 1.0
    }
}

/// Encodes an already normalised annotation.
///
/// The head is the anchor and is always present. Other entities use their
/// best record; a detector record counts only if its score is strictly
/// greater than the entity threshold, manual records always count, and leg
/// parts are absent in upper-body mode.
pub fn encode_image(annotation: &ImageAnnotation, thresholds: &ThresholdSet) -> Result<FeatureVector, GeometryError> {
    let head = annotation.head_line()?;
    let mut blocks = [[0.0; BLOCK_DIM]; EntityKind::COUNT];
    for kind in EntityKind::ALL {
        let line = if kind == EntityKind::Head {
            Some(head)
        } else if annotation.pose_mode == PoseMode::Upper && kind.is_leg() {
            None
        } else {
            annotation
                .best(kind)
                .filter(|d| d.source == Source::Manual || d.score > thresholds.get(kind))
                .map(|d| d.line)
        };
        let raw = encode_entity(&head, line.as_ref());
        if raw.degenerate_angle && kind != EntityKind::Head {
            log::warn!("image {}: {} midpoint coincides with head centre, alpha set to 0", annotation.image_id, kind);
        }
        blocks[kind.index()] = squash(&raw);
    }
    Ok(FeatureVector::from_blocks(&blocks))
}

/// [`normalize_scale`] followed by [`encode_image`].
pub fn encode_annotation(
    annotation: &ImageAnnotation,
    thresholds: &ThresholdSet,
) -> Result<FeatureVector, GeometryError> {
    encode_image(&normalize_scale(annotation)?, thresholds)
}

/// Mirrors the image left to right: `x -> width - x` and left/right parts swap.
///
/// `flip_horizontal(flip_horizontal(a)) == a` holds bit for bit whenever
/// `width - x` is exactly representable, which covers integer pixel
/// coordinates; for arbitrary reals it holds to rounding.
pub fn flip_horizontal(annotation: &ImageAnnotation) -> ImageAnnotation {
    let w = annotation.width;
    let mut out = annotation.map_lines(|l| CentralLine::new(w - l.x1, l.y1, w - l.x2, l.y2));
    for d in &mut out.detections {
        d.kind = d.kind.mirror();
    }
    out
}
