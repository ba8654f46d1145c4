//! Per-entity detection-score thresholds and their cross-validated selection.

use serde::{Deserialize, Serialize};

use super::{report_from_scores, score_annotations, ClassScorer, EvalError};
use crate::catalog::{ActionClass, EntityKind};
use crate::geometry::{ImageAnnotation, Source};
use crate::seed::{derive_seed, rng_from_seed};

/// One threshold per catalog entity. A detector record counts as present
/// only when its score is strictly greater than the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    values: [f64; EntityKind::COUNT],
    flagged: [bool; EntityKind::COUNT],
}

/// Serialized form of one entry; `threshold: null` means "no gating".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdEntry {
    pub kind: EntityKind,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub flagged: bool,
}

impl Default for ThresholdSet {
    fn default() -> Self {
        Self::permissive()
    }
}

impl ThresholdSet {
    /// Every detection counts as present.
    pub fn permissive() -> Self {
        Self { values: [f64::NEG_INFINITY; EntityKind::COUNT], flagged: [false; EntityKind::COUNT] }
    }

    pub fn uniform(value: f64) -> Self {
        Self { values: [value; EntityKind::COUNT], flagged: [false; EntityKind::COUNT] }
    }

    #[inline]
    pub fn get(&self, kind: EntityKind) -> f64 {
        self.values[kind.index()]
    }

    pub fn set(&mut self, kind: EntityKind, value: f64) {
        self.values[kind.index()] = value;
    }

    /// Marks an entity whose threshold is a sentinel (no scores were observed).
    pub fn is_flagged(&self, kind: EntityKind) -> bool {
        self.flagged[kind.index()]
    }

    pub fn entries(&self) -> Vec<ThresholdEntry> {
        EntityKind::ALL
            .iter()
            .map(|&kind| ThresholdEntry {
                kind,
                threshold: Some(self.get(kind)).filter(|v| v.is_finite()),
                flagged: self.is_flagged(kind),
            })
            .collect()
    }

    /// Rebuilds a set from entries; every catalog entity must appear once.
    pub fn from_entries(entries: &[ThresholdEntry]) -> Result<Self, String> {
        let mut out = Self::permissive();
        let mut seen = [false; EntityKind::COUNT];
        for e in entries {
            let i = e.kind.index();
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("duplicate threshold for {}", e.kind));
            }
            match e.threshold {
                Some(v) if !v.is_finite() => return Err(format!("non-finite threshold for {}", e.kind)),
                Some(v) => out.values[i] = v,
                None => {}
            }
            out.flagged[i] = e.flagged;
        }
        if let Some(k) = EntityKind::ALL.iter().find(|k| !seen[k.index()]) {
            return Err(format!("missing threshold for {k}"));
        }
        Ok(out)
    }
}

impl Serialize for ThresholdSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ThresholdSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<ThresholdEntry>::deserialize(d)?;
        Self::from_entries(&entries).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub folds: usize,
    pub seed: u64,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        Self { folds: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSelection {
    pub thresholds: ThresholdSet,
    /// Mean held-out mAP at the selected thresholds.
    pub cv_map: f64,
    /// Candidate grid searched for each entity, in catalog order.
    pub grids: Vec<Vec<f64>>,
}

/// Candidate thresholds from the decile points `q_0, q_0.1, .., q_0.9` of the
/// observed scores (nearest rank, `q_p = s[ceil(p n)]`). Each candidate sits
/// one ulp below its decile, so "score > threshold" keeps exactly the scores
/// at or above that decile; the lowest candidate keeps every detection.
pub fn decile_grid(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut grid: Vec<f64> = (0..10).map(|i| sorted[((i * n).div_ceil(10)).min(n - 1)].next_down()).collect();
    grid.dedup();
    grid
}

/// Stratified assignment of labelled annotations to folds.
fn assign_folds(labels: &[ActionClass], folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = rng_from_seed(derive_seed(seed, "thresholds.folds"));
    let mut fold_of = vec![0; labels.len()];
    for class in ActionClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }
    fold_of
}

/// Cross-validated, coordinate-wise greedy search for per-entity thresholds.
///
/// `train` is called once per fold with that fold's training portion and
/// must return a scorer; the held-out portion is then re-encoded under each
/// candidate threshold set and ranked by the scorer. Entities are visited
/// once in catalog order (the head, which anchors the encoding and is never
/// gated, is skipped); a candidate replaces the current value only if it
/// strictly improves the mean held-out mAP. Entities with no detector scores
/// get the sentinel 0 and are flagged.
pub fn select_thresholds<M, F>(
    annotations: &[ImageAnnotation],
    mut train: F,
    search: ThresholdSearch,
) -> Result<ThresholdSelection, EvalError>
where
    M: ClassScorer,
    F: FnMut(&[ImageAnnotation]) -> Result<M, Box<dyn std::error::Error + Send + Sync>>,
{
    if search.folds < 2 {
        return Err(EvalError::InsufficientData(format!("need at least 2 folds, got {}", search.folds)));
    }
    let mut labels = Vec::with_capacity(annotations.len());
    for a in annotations {
        labels.push(a.label.ok_or_else(|| EvalError::InsufficientData(format!("image {} has no label", a.image_id)))?);
    }
    let fold_of = assign_folds(&labels, search.folds, search.seed);
    for f in 0..search.folds {
        for class in ActionClass::ALL {
            if !(0..labels.len()).any(|i| fold_of[i] == f && labels[i] == class) {
                return Err(EvalError::InsufficientData(format!("fold {f} has no image of class {class}")));
            }
        }
    }

    let mut grids = Vec::with_capacity(EntityKind::COUNT);
    for kind in EntityKind::ALL {
        let scores: Vec<f64> = annotations
            .iter()
            .filter_map(|a| a.best(kind))
            .filter(|d| d.source == Source::Detector)
            .map(|d| d.score)
            .collect();
        grids.push(decile_grid(&scores));
    }

    let mut folds = Vec::with_capacity(search.folds);
    for f in 0..search.folds {
        let train_part: Vec<ImageAnnotation> =
            (0..annotations.len()).filter(|&i| fold_of[i] != f).map(|i| annotations[i].clone()).collect();
        let held_out: Vec<ImageAnnotation> =
            (0..annotations.len()).filter(|&i| fold_of[i] == f).map(|i| annotations[i].clone()).collect();
        let model = train(&train_part).map_err(|e| EvalError::Training(e.to_string()))?;
        folds.push((model, held_out));
    }

    let cv_map = |th: &ThresholdSet| -> Result<f64, EvalError> {
        let mut total = 0.0;
        for (model, held_out) in &folds {
            total += report_from_scores(score_annotations(model, held_out, th)?)?.map;
        }
        Ok(total / folds.len() as f64)
    };

    let mut current = ThresholdSet::permissive();
    for kind in EntityKind::ALL {
        match grids[kind.index()].first() {
            Some(&lowest) => current.set(kind, lowest),
            None => {
                current.set(kind, 0.0);
                current.flagged[kind.index()] = true;
            }
        }
    }
    let mut best = cv_map(&current)?;
    for kind in EntityKind::ALL.into_iter().skip(1) {
        for &candidate in grids[kind.index()].iter().skip(1) {
            let mut trial = current.clone();
            trial.set(kind, candidate);
            let score = cv_map(&trial)?;
            if score > best {
                best = score;
                current = trial;
            }
        }
        log::info!("threshold {kind}: {} (cv mAP {best:.4})", current.get(kind));
    }
    Ok(ThresholdSelection { thresholds: current, cv_map: best, grids })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_of_identical_scores_is_a_single_point() {
        let g = decile_grid(&[0.4; 12]);
        assert_eq!(g, vec![0.4f64.next_down()]);
        assert!(0.4 > g[0]);
    }

    #[test]
    fn grid_points_track_nearest_rank_deciles() {
        let scores: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let g = decile_grid(&scores);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.0f64.next_down());
        assert_eq!(g[5], 10.0f64.next_down());
        assert!(decile_grid(&[]).is_empty());
    }

    #[test]
    fn serde_round_trip_with_permissive_entries() {
        let mut t = ThresholdSet::permissive();
        t.set(EntityKind::Bike, -0.75);
        let json = serde_json::to_string(&t).unwrap();
        let back: ThresholdSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(json.contains("\"threshold\":null"));
    }

    #[test]
    fn missing_entries_are_rejected() {
        let mut entries = ThresholdSet::permissive().entries();
        entries.pop();
        assert!(ThresholdSet::from_entries(&entries).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<ActionClass> = (0..70).map(|i| ActionClass::ALL[i % 7]).collect();
        let folds = assign_folds(&labels, 5, 3);
        for f in 0..5 {
            for c in ActionClass::ALL {
                assert!((0..70).any(|i| folds[i] == f && labels[i] == c));
            }
        }
        assert_eq!(folds, assign_folds(&labels, 5, 3));
    }
}
