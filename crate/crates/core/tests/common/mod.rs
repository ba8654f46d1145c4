//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stillact::dbn::{DbnModel, Gradients};
use stillact::geometry::{CentralLine, DetectionRecord, ImageAnnotation, PoseMode, Source};
use stillact::linalg::Matrix;
use stillact::rbm::{BinaryRbm, GaussianRbm};
use stillact::EntityKind;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every binary vector of length `n`, in counting order.
pub fn binary_vectors(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n).map(|bits| (0..n).map(|i| ((bits >> i) & 1) as f64).collect()).collect()
}

/// `-sum v W h - sum b h - sum c v`, written out term by term.
pub fn binary_energy(w: &Matrix<f64>, b: &[f64], c: &[f64], v: &[f64], h: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..v.len() {
        for j in 0..h.len() {
            e -= v[i] * w[(i, j)] * h[j];
        }
    }
    for j in 0..h.len() {
        e -= b[j] * h[j];
    }
    for i in 0..v.len() {
        e -= c[i] * v[i];
    }
    e
}

/// Hidden marginals and free energy of `v` by summing the Boltzmann weights
/// of every hidden configuration.
pub fn enumerate_hidden(rbm: &BinaryRbm<f64>, v: &[f64]) -> (Vec<f64>, f64) {
    let n = rbm.hidden_bias.len();
    let configs = binary_vectors(n);
    let energies: Vec<f64> =
        configs.iter().map(|h| binary_energy(&rbm.weights, &rbm.hidden_bias, &rbm.visible_bias, v, h)).collect();
    // log-sum-exp shift
    let shift = energies.iter().map(|e| -e).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.iter().map(|e| (-e - shift).exp()).collect();
    let z: f64 = weights.iter().sum();
    let probs =
        (0..n).map(|j| configs.iter().zip(&weights).filter(|(h, _)| h[j] == 1.0).map(|(_, w)| w).sum::<f64>() / z);
    (probs.collect(), -(shift + z.ln()))
}

pub fn random_binary_rbm(rng: &mut ChaCha8Rng, m: usize, n: usize) -> BinaryRbm<f64> {
    let w = Matrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    BinaryRbm::from_parts(w, b, c).unwrap()
}

pub fn random_gaussian_rbm(rng: &mut ChaCha8Rng, m: usize, n: usize) -> GaussianRbm<f64> {
    let w = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.5..1.5));
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    GaussianRbm::from_parts(w, b, c, rng.random_range(0.25..3.0)).unwrap()
}

fn q(x: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Average precision by walking the ranked list cut-off by cut-off and
/// summing precision times the recall increment, in exact arithmetic. Items
/// are ranked by descending score, equal scores in input order.
pub fn ap_walk(scores: &[f64], positive: &[bool]) -> BigRational {
    let n = scores.len();
    let rank_of = |i: usize| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let mut at_rank = vec![0; n];
    for i in 0..n {
        at_rank[rank_of(i)] = i;
    }
    let total = positive.iter().filter(|&&p| p).count();
    let mut ap = BigRational::zero();
    let mut recall_prev = BigRational::zero();
    let mut hits = 0;
    for k in 1..=n {
        if positive[at_rank[k - 1]] {
            hits += 1;
        }
        let precision = q(hits) / q(k);
        let recall = q(hits) / q(total);
        ap += precision * (recall.clone() - recall_prev);
        recall_prev = recall;
    }
    ap
}

pub fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

pub fn is_one(x: &BigRational) -> bool {
    x.is_one()
}

/// Parameter slices of a model, in the order of [`Gradients`].
pub fn param_slices_mut(m: &mut DbnModel<f64>) -> [&mut [f64]; 6] {
    [
        m.layer1.weights.as_mut_slice(),
        &mut m.layer1.hidden_bias,
        m.layer2.weights.as_mut_slice(),
        &mut m.layer2.hidden_bias,
        m.head.weights.as_mut_slice(),
        &mut m.head.bias,
    ]
}

pub fn grad_slices(g: &Gradients<f64>) -> [&[f64]; 6] {
    [g.w1.as_slice(), &g.b1, g.w2.as_slice(), &g.b2, g.w3.as_slice(), &g.b3]
}

/// Largest relative disagreement between analytic gradients and central
/// differences with step `h`. Components where both are below `floor` in
/// magnitude are compared absolutely against `floor`.
pub fn max_relative_gradient_error(
    analytic: &[Vec<f64>],
    params: &mut [Vec<f64>],
    h: f64,
    floor: f64,
    mut loss: impl FnMut(&[Vec<f64>]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for block in 0..params.len() {
        for k in 0..params[block].len() {
            let orig = params[block][k];
            params[block][k] = orig + h;
            let up = loss(params);
            params[block][k] = orig - h;
            let down = loss(params);
            params[block][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[block][k];
            let err = (a - numeric).abs() / (a.abs().max(numeric.abs()).max(floor));
            worst = worst.max(err);
        }
    }
    worst
}

pub fn random_dbn(rng: &mut ChaCha8Rng, input: usize, h1: usize, h2: usize, classes: usize) -> DbnModel<f64> {
    let l1 = GaussianRbm::from_parts(
        Matrix::from_fn(input, h1, |_, _| rng.random_range(-1.0..1.0)),
        (0..h1).map(|_| rng.random_range(-0.5..0.5)).collect(),
        vec![0.0; input],
        1.0,
    )
    .unwrap();
    let l2 = BinaryRbm::from_parts(
        Matrix::from_fn(h1, h2, |_, _| rng.random_range(-1.0..1.0)),
        (0..h2).map(|_| rng.random_range(-0.5..0.5)).collect(),
        vec![0.0; h1],
    )
    .unwrap();
    let mut m = DbnModel::from_layers(l1, l2, classes).unwrap();
    m.head.weights = Matrix::from_fn(h2, classes, |_, _| rng.random_range(-1.0..1.0));
    m.head.bias = (0..classes).map(|_| rng.random_range(-0.5..0.5)).collect();
    m
}

/// Central-difference check of `DbnModel::loss_and_gradients` on one batch.
pub fn dbn_gradient_error(model: &DbnModel<f64>, batch: &Matrix<f64>, labels: &[usize]) -> f64 {
    let (_, grads) = model.loss_and_gradients(batch, labels).unwrap();
    let analytic: Vec<Vec<f64>> = grad_slices(&grads).iter().map(|s| s.to_vec()).collect();
    let mut work = model.clone();
    let mut params: Vec<Vec<f64>> = param_slices_mut(&mut work).iter().map(|s| s.to_vec()).collect();
    max_relative_gradient_error(&analytic, &mut params, 1e-5, 1e-6, |p| {
        let mut m = model.clone();
        for (dst, src) in param_slices_mut(&mut m).into_iter().zip(p) {
            dst.copy_from_slice(src);
        }
        m.loss_and_gradients(batch, labels).unwrap().0
    })
}

fn line(rng: &mut ChaCha8Rng, span: i64) -> CentralLine {
    let mut c = || rng.random_range(0..span) as f64;
    CentralLine::new(c(), c(), c(), c())
}

/// A random annotation with integer coordinates, a non-degenerate head and
/// a random subset of the other entities.
pub fn random_annotation(rng: &mut ChaCha8Rng, id: usize) -> ImageAnnotation {
    let width = rng.random_range(200..1200) as f64;
    let height = rng.random_range(200..1200) as f64;
    let span = width.min(height) as i64;
    let mut head = line(rng, span);
    while head.length() < 4.0 {
        head = line(rng, span);
    }
    let mut detections =
        vec![DetectionRecord { kind: EntityKind::Head, line: head, score: 1.0, source: Source::Detector }];
    for kind in EntityKind::ALL.into_iter().skip(1) {
        if rng.random_bool(0.6) {
            let score = rng.random_range(-1.0..2.0);
            detections.push(DetectionRecord { kind, line: line(rng, span), score, source: Source::Detector });
        }
    }
    ImageAnnotation { image_id: format!("img-{id}"), width, height, detections, label: None, pose_mode: PoseMode::Full }
}
