mod common;

use num_rational::BigRational;
use proptest::prelude::*;

use common::*;
use stillact::eval::{
    average_precision, average_precision_in, evaluate_model, rank_descending, select_thresholds, ClassScorer,
    EvalError, ThresholdSearch, ThresholdSet,
};
use stillact::geometry::{CentralLine, DetectionRecord, Source};
use stillact::optim::FineTuneConfig;
use stillact::pipeline::prepare_training_set;
use stillact::synth::{generate, train_baseline, SynthConfig, TemplateSet};
use stillact::{ActionClass, EntityKind};

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..40).prop_flat_map(|n| {
        (prop::collection::vec(0u8..6, n), prop::collection::vec(any::<bool>(), n), 0..n).prop_map(|(s, mut p, k)| {
            p[k] = true;
            (s.into_iter().map(|x| f64::from(x) * 0.5).collect(), p)
        })
    })
}

proptest! {
    #[test]
    fn ap_matches_the_recall_walk(case in instance()) {
        let (scores, positive) = case;
        let exact = average_precision_in::<BigRational>(&scores, &positive).unwrap();
        prop_assert_eq!(exact.ap, ap_walk(&scores, &positive));
    }

    #[test]
    fn ap_lies_in_the_unit_interval(case in instance()) {
        let ap = average_precision(&case.0, &case.1).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }

    #[test]
    fn ranking_positives_first_gives_one(n_pos in 1usize..10, n_neg in 0usize..10) {
        let scores: Vec<f64> = (0..n_pos + n_neg).map(|i| -(i as f64)).collect();
        let positive: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
        prop_assert_eq!(average_precision(&scores, &positive).unwrap(), 1.0);
    }

    #[test]
    fn ranking_is_a_stable_descending_sort(scores in prop::collection::vec(0u8..5, 0..30)) {
        let s: Vec<f64> = scores.iter().map(|&x| f64::from(x)).collect();
        let order = rank_descending(&s).unwrap();
        for w in order.windows(2) {
            prop_assert!(s[w[0]] > s[w[1]] || (s[w[0]] == s[w[1]] && w[0] < w[1]));
        }
    }
}

#[test]
fn non_finite_scores_are_rejected() {
    assert!(matches!(average_precision(&[0.1, f64::NAN], &[true, false]), Err(EvalError::NonFiniteScore(1))));
    assert!(matches!(average_precision(&[0.1, 0.2], &[false, false]), Err(EvalError::NoPositives)));
}

struct Constant;

impl ClassScorer for Constant {
    fn input_dim(&self) -> usize {
        90
    }
    fn n_classes(&self) -> usize {
        7
    }
    fn class_scores(&self, _: &[f64]) -> Vec<f64> {
        vec![0.5; 7]
    }
}

#[test]
fn unencodable_and_unlabelled_images_are_reported() {
    let mut data = generate(&TemplateSet::builtin(), &SynthConfig::noiseless(3, 1)).unwrap();
    data[0].detections.retain(|d| d.kind != EntityKind::Head);
    data[1].label = None;
    let report = evaluate_model(&Constant, &data, &ThresholdSet::permissive()).unwrap();
    assert_eq!(report.evaluated, 19);
    assert_eq!(report.skipped.len(), 2);
    assert_eq!(report.skipped[0].image_id, data[0].image_id);
    // a constant scorer ties everything; AP then depends only on input order
    assert_eq!(report.classes.iter().map(|c| c.ties).max(), Some(18));
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["skipped"].as_array().unwrap().len(), 2);
    assert!(report.to_text().contains("mAP"));
}

#[test]
fn threshold_search_keeps_or_improves_the_cross_validated_map() {
    let config = SynthConfig { false_positive_prob: 0.5, ..SynthConfig::noisy(10, 0.2, 3.0, 21) };
    let mut data = generate(&TemplateSet::builtin(), &config).unwrap();
    // one entity kind never detected: it must come back flagged
    for a in &mut data {
        a.detections.retain(|d| d.kind != EntityKind::Instrument);
    }
    data[3].detections.push(DetectionRecord {
        kind: EntityKind::Horse,
        line: CentralLine::new(1.0, 1.0, 9.0, 1.0),
        score: 5.0,
        source: Source::Manual,
    });
    let train = |part: &[stillact::ImageAnnotation]| {
        let (f, l) = prepare_training_set::<f64>(part, None, &ThresholdSet::permissive())?;
        let cfg = FineTuneConfig { epochs: 30, ..FineTuneConfig::finetune_default(4) };
        Ok(train_baseline(&f, &l, ActionClass::COUNT, &cfg)?.0)
    };
    let selection = select_thresholds(&data, train, ThresholdSearch { folds: 3, seed: 8 }).unwrap();
    let th = &selection.thresholds;
    assert!(th.is_flagged(EntityKind::Instrument));
    assert_eq!(th.get(EntityKind::Instrument), 0.0);
    assert!(!th.is_flagged(EntityKind::Head));
    for kind in EntityKind::ALL.into_iter().skip(1).filter(|&k| k != EntityKind::Instrument) {
        assert!(selection.grids[kind.index()].contains(&th.get(kind)), "{kind}");
    }
    assert!(selection.cv_map > 0.0);
    let again = select_thresholds(&data, train, ThresholdSearch { folds: 3, seed: 8 }).unwrap();
    assert_eq!(again.thresholds, selection.thresholds);
}

#[test]
fn threshold_search_needs_every_class_in_every_fold() {
    let data = generate(&TemplateSet::builtin(), &SynthConfig::noiseless(2, 1)).unwrap();
    let r =
        select_thresholds(&data, |_| -> Result<Constant, _> { Ok(Constant) }, ThresholdSearch { folds: 3, seed: 0 });
    assert!(matches!(r, Err(EvalError::InsufficientData(_))));
}
