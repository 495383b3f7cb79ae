//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use pitchcon::nn::{Graph, ModelParams, Tensor, Var};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit_rows(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let norm = dot(&v, &v).sqrt().max(1e-9);
            v.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Mean over anchors with a nonempty positive set of
/// `-(1/|P(i)|) * sum_{j in P(i)} log( exp(a_i.k_j/tau) / sum_{m in D(i)} exp(a_i.k_m/tau) )`.
fn naive_supcon(
    anchors: &[Vec<f64>],
    keys: &[Vec<f64>],
    tau: f64,
    positive: impl Fn(usize, usize) -> bool,
    denominator: impl Fn(usize, usize) -> bool,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..anchors.len() {
        let mut den = 0.0;
        let mut any_den = false;
        for m in 0..keys.len() {
            if denominator(i, m) {
                den += (dot(&anchors[i], &keys[m]) / tau).exp();
                any_den = true;
            }
        }
        let pos: Vec<usize> = (0..keys.len()).filter(|&j| positive(i, j)).collect();
        if pos.is_empty() || !any_den {
            continue;
        }
        let mut term = 0.0;
        for &j in &pos {
            term -= ((dot(&anchors[i], &keys[j]) / tau).exp() / den).ln();
        }
        total += term / pos.len() as f64;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn naive_clean(z: &[Vec<f64>], y: &[usize], tau: f64) -> f64 {
    naive_supcon(z, z, tau, |i, j| j != i && y[j] == y[i], |i, k| k != i)
}

pub fn naive_aug(za: &[Vec<f64>], zc: &[Vec<f64>], y: &[usize], tau: f64) -> f64 {
    naive_supcon(za, zc, tau, |i, j| j != i && y[j] == y[i], |i, k| k != i)
}

pub fn naive_cross(z: &[Vec<f64>], zp: &[Vec<f64>], y: &[usize], tau: f64) -> f64 {
    naive_supcon(z, zp, tau, |i, p| y[p] == y[i], |_, _| true)
}

pub fn naive_unified(z: &[Vec<f64>], zp: &[Vec<f64>], y: &[usize], tau: f64) -> f64 {
    let all: Vec<Vec<f64>> = z.iter().chain(zp).cloned().collect();
    let yy: Vec<usize> = y.iter().chain(y).copied().collect();
    naive_supcon(&all, &all, tau, |i, p| p != i && yy[p] == yy[i], |i, a| a != i)
}

pub fn naive_info_nce(pred: &[Vec<f64>], target: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        let den: f64 = target.iter().map(|t| (dot(&pred[i], t) / tau).exp()).sum();
        total -= ((dot(&pred[i], &target[i]) / tau).exp() / den).ln();
    }
    total / pred.len() as f64
}

pub fn constant_rows(g: &mut Graph<f64>, rows: &[Vec<f64>]) -> Var {
    g.constant(Tensor::from_rows(rows).unwrap())
}

pub fn rows_of(g: &Graph<f64>, v: Var) -> Vec<Vec<f64>> {
    let t = g.value(v);
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Worst relative disagreement between analytic and central-difference
/// gradients of `loss` over every parameter entry.
///
/// Entries whose ±eps perturbation changes the ReLU sign pattern straddle a
/// kink, where the derivative is undefined; they are skipped and counted.
pub struct FdResult {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn fd_check_tensors(params: &[Tensor<f64>], eps: f64, loss: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> FdResult {
    let eval = |ps: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let l = loss(&mut g, &vars);
        (g.value(l).data()[0], g.relu_pattern())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let l = loss(&mut g, &vars);
    g.backward(l).unwrap();
    let base_pattern = g.relu_pattern();
    let mut res = FdResult { max_rel_err: 0.0, checked: 0, skipped: 0 };
    let mut ps = params.to_vec();
    for (pi, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; params[pi].len()]);
        for e in 0..params[pi].len() {
            let orig = ps[pi].data()[e];
            ps[pi].data_mut()[e] = orig + eps;
            let (fp, pp) = eval(&ps);
            ps[pi].data_mut()[e] = orig - eps;
            let (fm, pm) = eval(&ps);
            ps[pi].data_mut()[e] = orig;
            if pp != base_pattern || pm != base_pattern {
                res.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * eps);
            res.max_rel_err = res.max_rel_err.max(rel_err(analytic[e], numeric));
            res.checked += 1;
        }
    }
    res
}

/// Same check for a whole model, with the loss built from registered vars.
pub fn fd_check_model(
    params: &ModelParams<f64>,
    eps: f64,
    loss: impl Fn(&mut Graph<f64>, &pitchcon::nn::ModelVars) -> Var,
) -> FdResult {
    let tensors: Vec<Tensor<f64>> = params.tensors().into_iter().cloned().collect();
    fd_check_tensors(&tensors, eps, |g, vars| {
        let mv = params.bind(vars).unwrap();
        loss(g, &mv)
    })
}

use pitchcon::nn::{Architecture, EncoderInput};
use pitchcon::objectives::{ObjectiveKind, ObjectiveSpec, TrainBatch};

/// A randomly sized model, batch and objective small enough for exhaustive
/// finite differences.
pub struct SmallCase {
    pub params: ModelParams<f64>,
    pub batch: TrainBatch<f64>,
    pub spec: ObjectiveSpec,
}

pub fn random_input(r: &mut ChaCha8Rng, rows: usize, len: usize) -> EncoderInput<f64> {
    let mut vals = Vec::new();
    let mut masks = Vec::new();
    for _ in 0..rows {
        let v: Vec<f64> = (0..len).map(|_| r.random_range(0.0..1.0)).collect();
        let mut m: Vec<bool> = (0..len).map(|_| r.random_range(0.0..1.0) > 0.2).collect();
        m[0] = true;
        m[len / 2] = true;
        vals.push(v);
        masks.push(m);
    }
    EncoderInput::from_rows(vals.iter().zip(&masks).map(|(v, m)| (&v[..], &m[..]))).unwrap()
}

pub fn small_case(seed: u64, kind: ObjectiveKind) -> SmallCase {
    let mut r = rng(seed);
    let layers = r.random_range(1..=3);
    let arch = Architecture {
        kernels: (0..layers).map(|_| r.random_range(1..=5)).collect(),
        strides: (0..layers).map(|_| r.random_range(1..=2)).collect(),
        channels: (0..layers).map(|_| r.random_range(2..=4)).collect(),
        head_hidden: r.random_range(3..=5),
        head_out: r.random_range(2..=4),
    };
    let params = ModelParams::<f64>::init(&arch, seed).unwrap();
    let b = r.random_range(2..=4);
    let len = 2 * r.random_range(4..=8);
    let copies = r.random_range(1..=2);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..2)).collect();
    let clean = random_input(&mut r, b, len);
    let augmented = Some(random_input(&mut r, b * copies, len));
    let spec = ObjectiveSpec { kind, tau: r.random_range(0.2..1.0), lambda1: 1.0, lambda2: 1.0 };
    SmallCase { params, batch: TrainBatch { clean, augmented, labels, copies }, spec }
}

/// Direct loop evaluation of one encoder row: same-padded strided convolutions
/// with ReLU, mask pooling by OR over each stride window, then masked mean.
pub fn naive_encode(p: &ModelParams<f64>, values: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut x = vec![values.to_vec()];
    let mut m = mask.to_vec();
    for layer in &p.encoder.convs {
        let shape = layer.weight.shape();
        let (cout, cin, k) = (shape[0], shape[1], shape[2]);
        let w = layer.weight.data();
        let s = layer.stride;
        let len = m.len();
        let lout = len.div_ceil(s);
        let span = (lout - 1) * s + k;
        let pad = if span > len { (span - len) / 2 } else { 0 };
        let mut y = vec![vec![0.0; lout]; cout];
        for (co, row) in y.iter_mut().enumerate() {
            for (t, out) in row.iter_mut().enumerate() {
                let mut acc = layer.bias.data()[co];
                for (ci, xin) in x.iter().enumerate().take(cin) {
                    for kk in 0..k {
                        let pos = (t * s + kk) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += w[(co * cin + ci) * k + kk] * xin[pos as usize];
                        }
                    }
                }
                *out = acc.max(0.0);
            }
        }
        m = (0..lout).map(|t| (t * s..((t + 1) * s).min(len)).any(|i| m[i])).collect();
        x = y;
    }
    let count = m.iter().filter(|&&v| v).count();
    x.iter()
        .map(|row| {
            if count == 0 {
                0.0
            } else {
                row.iter().zip(&m).filter(|(_, &v)| v).map(|(a, _)| a).sum::<f64>() / count as f64
            }
        })
        .collect()
}

fn naive_dense(d: &pitchcon::nn::encoder::Dense<f64>, x: &[f64]) -> Vec<f64> {
    let (out, inp) = (d.weight.shape()[0], d.weight.shape()[1]);
    (0..out).map(|o| d.bias.data()[o] + (0..inp).map(|i| d.weight.data()[o * inp + i] * x[i]).sum::<f64>()).collect()
}

pub fn naive_head(m: &pitchcon::nn::encoder::Mlp<f64>, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = naive_dense(&m.hidden, x).into_iter().map(|v| v.max(0.0)).collect();
    let o = naive_dense(&m.out, &h);
    let norm = dot(&o, &o).sqrt().max(1e-12);
    o.iter().map(|v| v / norm).collect()
}

fn input_rows(input: &EncoderInput<f64>, start: usize, len: usize) -> Vec<(Vec<f64>, Vec<bool>)> {
    let l = input.frames();
    (0..input.batch())
        .map(|b| (input.values.data()[b * l + start..][..len].to_vec(), input.mask[b * l + start..][..len].to_vec()))
        .collect()
}

fn naive_project(p: &ModelParams<f64>, rows: &[(Vec<f64>, Vec<bool>)]) -> Vec<Vec<f64>> {
    rows.iter().map(|(v, m)| naive_head(&p.heads.projector, &naive_encode(p, v, m))).collect()
}

fn naive_predict(p: &ModelParams<f64>, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| naive_head(&p.heads.predictor, r)).collect()
}

/// InfoNCE averaged over every block pairing `b` predictions with `b` targets.
fn naive_blocks(pred: &[Vec<f64>], target: &[Vec<f64>], b: usize, tau: f64) -> f64 {
    let blocks = pred.len().max(target.len()) / b;
    let mut total = 0.0;
    for c in 0..blocks {
        let p = if pred.len() == b { pred } else { &pred[c * b..(c + 1) * b] };
        let t = if target.len() == b { target } else { &target[c * b..(c + 1) * b] };
        total += naive_info_nce(p, t, tau);
    }
    total / blocks as f64
}

/// Every objective evaluated from loop-level forward passes.
pub fn naive_objective(p: &ModelParams<f64>, batch: &TrainBatch<f64>, spec: &ObjectiveSpec) -> f64 {
    let tau = spec.tau;
    let b = batch.labels.len();
    let l = batch.clean.frames();
    let h = l / 2;
    let labels: Vec<usize> = (0..batch.copies).flat_map(|_| batch.labels.iter().copied()).collect();
    let clean = naive_project(p, &input_rows(&batch.clean, 0, l));
    let clean_rep: Vec<Vec<f64>> = (0..batch.copies).flat_map(|_| clean.iter().cloned()).collect();
    let aug_in = batch.augmented.as_ref();
    let aug = || naive_project(p, &input_rows(aug_in.unwrap(), 0, l));
    match spec.kind {
        ObjectiveKind::GlobClean => naive_clean(&clean_rep, &labels, tau),
        ObjectiveKind::GlobAugment => naive_aug(&aug(), &clean_rep, &labels, tau),
        ObjectiveKind::DualGlob => {
            spec.lambda1 * naive_clean(&clean_rep, &labels, tau)
                + spec.lambda2 * naive_aug(&aug(), &clean_rep, &labels, tau)
        }
        ObjectiveKind::CrossView => naive_cross(&clean_rep, &aug(), &labels, tau),
        ObjectiveKind::Unified => naive_unified(&clean_rep, &aug(), &labels, tau),
        ObjectiveKind::PredC | ObjectiveKind::PredA => {
            let past = naive_project(p, &input_rows(&batch.clean, 0, h));
            let future = naive_project(p, &input_rows(&batch.clean, h, h));
            let pred = naive_predict(p, &past);
            let clean_term = naive_info_nce(&pred, &future, tau);
            if spec.kind == ObjectiveKind::PredC {
                return clean_term;
            }
            let apast = naive_project(p, &input_rows(aug_in.unwrap(), 0, h));
            let afuture = naive_project(p, &input_rows(aug_in.unwrap(), h, h));
            let apred = naive_predict(p, &apast);
            (clean_term + naive_blocks(&apred, &future, b, tau) + naive_blocks(&pred, &afuture, b, tau)) / 3.0
        }
        ObjectiveKind::Hybrid => {
            let l_aug = naive_aug(&aug(), &clean_rep, &labels, tau);
            let future = naive_project(p, &input_rows(&batch.clean, h, h));
            let afuture = naive_project(p, &input_rows(aug_in.unwrap(), h, h));
            l_aug + naive_blocks(&naive_predict(p, &future), &afuture, b, tau)
        }
    }
}

/// Random unit projections for both views with `B <= 16` rows drawn from
/// between 2 and 16 classes.
pub struct ProjectionCase {
    pub clean: Vec<Vec<f64>>,
    pub aug: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub tau: f64,
}

pub fn projection_case(seed: u64) -> ProjectionCase {
    let mut r = rng(seed);
    let b = r.random_range(2..=16);
    let classes = r.random_range(2..=16);
    let d = r.random_range(2..=8);
    ProjectionCase {
        clean: unit_rows(&mut r, b, d),
        aug: unit_rows(&mut r, b, d),
        labels: (0..b).map(|_| r.random_range(0..classes)).collect(),
        tau: r.random_range(0.05..1.0),
    }
}

/// The five projection-level losses from the library, in the order clean,
/// augmented-anchor, cross-view, unified, InfoNCE.
pub fn library_projection_losses(c: &ProjectionCase) -> [f64; 5] {
    use pitchcon::objectives::{cross_view_supcon, info_nce, supcon_aug, supcon_clean, unified_supcon};
    let mut g = Graph::<f64>::new();
    let zc = constant_rows(&mut g, &c.clean);
    let za = constant_rows(&mut g, &c.aug);
    let l = [
        supcon_clean(&mut g, zc, &c.labels, c.tau).unwrap(),
        supcon_aug(&mut g, za, zc, &c.labels, c.tau).unwrap(),
        cross_view_supcon(&mut g, zc, za, &c.labels, c.tau).unwrap(),
        unified_supcon(&mut g, zc, za, &c.labels, c.tau).unwrap(),
        info_nce(&mut g, za, zc, c.tau).unwrap(),
    ];
    l.map(|v| g.value(v).data()[0])
}

pub fn naive_projection_losses(c: &ProjectionCase) -> [f64; 5] {
    [
        naive_clean(&c.clean, &c.labels, c.tau),
        naive_aug(&c.aug, &c.clean, &c.labels, c.tau),
        naive_cross(&c.clean, &c.aug, &c.labels, c.tau),
        naive_unified(&c.clean, &c.aug, &c.labels, c.tau),
        naive_info_nce(&c.aug, &c.clean, c.tau),
    ]
}

/// Library value of a full objective on a model and batch.
pub fn library_objective(p: &ModelParams<f64>, batch: &TrainBatch<f64>, spec: &ObjectiveSpec) -> f64 {
    let mut g = Graph::new();
    let vars = p.register(&mut g);
    let l = pitchcon::objectives::objective_loss(&mut g, &vars, batch, spec).unwrap();
    g.value(l).data()[0]
}

use pitchcon::augment::{compose, AugmentParams, SelectionStrategy};
use pitchcon::corpus::{normalize_speaker, stratified_folds, synth_generate, Dataset, SynthSpec, ToneLabel};
use pitchcon::objectives::{self_excluding_masks, ObjectiveSpec as Spec};
use pitchcon::trainer::{make_batch, TrainConfig};

pub fn small_synth(seed: u64, per_class: usize) -> Dataset {
    let mut r = rng(seed);
    let spec = SynthSpec {
        per_class,
        target_jitter_sd: r.random_range(0.0..0.05),
        unvoiced_dropout: r.random_range(0.0..0.2),
        frame_noise_sd: r.random_range(0.0..0.03),
        ..SynthSpec::default()
    };
    synth_generate(&spec, seed).unwrap()
}

/// Every speaker's voiced frames span exactly [0, 1] after normalisation.
pub fn check_normalization(seed: u64) -> Result<(), String> {
    let d = normalize_speaker(&small_synth(seed, 3)).map_err(|e| e.to_string())?;
    let mut ranges: std::collections::BTreeMap<&str, (f64, f64)> = Default::default();
    for s in &d.samples {
        let e = ranges.entry(&s.speaker_id).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        for v in s.contour.voiced() {
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
    }
    for (sp, (lo, hi)) in ranges {
        if lo != 0.0 || hi != 1.0 {
            return Err(format!("speaker {sp} spans [{lo}, {hi}]"));
        }
    }
    Ok(())
}

/// Per-class and total fold sizes differ by at most one, and the assignment is
/// reproducible.
pub fn check_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<(), String> {
    let f = stratified_folds(dataset, k, seed).map_err(|e| e.to_string())?;
    if f != stratified_folds(dataset, k, seed).unwrap() {
        return Err("fold assignment not reproducible".into());
    }
    let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
    for label in ToneLabel::ALL {
        let mut per_fold = vec![0usize; k];
        for (i, s) in dataset.samples.iter().enumerate() {
            if s.label == label {
                per_fold[f.assignment[i]] += 1;
            }
        }
        if spread(&per_fold) > 1 {
            return Err(format!("class {label:?} fold sizes {per_fold:?}"));
        }
    }
    if spread(&f.fold_sizes()) > 1 {
        return Err(format!("fold sizes {:?}", f.fold_sizes()));
    }
    Ok(())
}

/// Same seed gives the same view under every strategy, identity parameters give
/// back the input, and every view stays a valid normalised contour.
pub fn check_augmentations(dataset: &Dataset, seed: u64) -> Result<(), String> {
    let params = AugmentParams::default();
    let identity = AugmentParams::identity();
    for (i, s) in dataset.samples.iter().enumerate().take(8) {
        for strategy in SelectionStrategy::ALL {
            let item = seed.wrapping_add(i as u64);
            let a = compose(&s.contour, strategy, &params, item);
            if a != compose(&s.contour, strategy, &params, item) {
                return Err(format!("{strategy} not deterministic"));
            }
            if a.len() != s.contour.len() {
                return Err(format!("{strategy} changed the length"));
            }
            let valid = a.values().iter().zip(a.mask()).all(|(&v, &m)| (0.0..=1.0).contains(&v) && (m || v == 0.0));
            if !valid {
                return Err(format!("{strategy} produced values outside [0, 1]"));
            }
            if compose(&s.contour, strategy, &identity, item) != s.contour {
                return Err(format!("{strategy} is not the identity at identity parameters"));
            }
        }
    }
    Ok(())
}

/// With duplication, every augmented anchor has a positive among clean keys
/// other than itself, even when all labels in the batch differ.
pub fn check_duplication(dataset: &Dataset, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = dataset.len();
    let size = r.random_range(1..=16);
    let indices: Vec<usize> = (0..size).map(|_| r.random_range(0..n)).collect();
    let config =
        TrainConfig { objective: Spec::new(pitchcon::objectives::ObjectiveKind::DualGlob), ..TrainConfig::default() };
    let batch = make_batch::<f64>(dataset, &indices, &config, seed).map_err(|e| e.to_string())?;
    let labels = batch.full_labels();
    if batch.augmented.as_ref().map(|a| a.batch()) != Some(labels.len()) {
        return Err("augmented rows do not match the duplicated labels".into());
    }
    let masks = self_excluding_masks(&labels);
    let m = labels.len();
    for i in 0..m {
        if !masks.positive[i * m..(i + 1) * m].iter().any(|&p| p) {
            return Err(format!("anchor {i} has no positive"));
        }
    }
    Ok(())
}

/// Brute-force accuracy and macro-F1 with zero-division giving zero.
pub fn brute_metrics(y_true: &[usize], y_pred: &[usize], classes: usize) -> (f64, f64) {
    let n = y_true.len();
    let mut correct = 0;
    for i in 0..n {
        if y_true[i] == y_pred[i] {
            correct += 1;
        }
    }
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for i in 0..n {
            match (y_true[i] == c, y_pred[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let rc = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        f1_sum += if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
    }
    (accuracy, f1_sum / classes as f64)
}

/// Random labels and predictions where some classes are never predicted or
/// never present, so the zero-division path is exercised.
pub fn random_predictions(seed: u64) -> (Vec<usize>, Vec<usize>, usize) {
    let mut r = rng(seed);
    let classes = r.random_range(2..=16);
    let n = r.random_range(1..=200);
    let skip_pred = r.random_range(0..classes);
    let skip_true = r.random_range(0..classes);
    let draw = |r: &mut ChaCha8Rng, skip: usize| loop {
        let v = r.random_range(0..classes);
        if v != skip {
            break v;
        }
    };
    let y_true: Vec<usize> = (0..n).map(|_| draw(&mut r, skip_true)).collect();
    let y_pred: Vec<usize> = y_true
        .iter()
        .map(|&t| if r.random_range(0.0..1.0) < 0.6 && t != skip_pred { t } else { draw(&mut r, skip_pred) })
        .collect();
    (y_true, y_pred, classes)
}

pub fn check_metrics(seed: u64) -> Result<(), String> {
    let (t, p, classes) = random_predictions(seed);
    let m = pitchcon::probe::compute_metrics(&t, &p, classes, None).map_err(|e| e.to_string())?;
    let (acc, f1) = brute_metrics(&t, &p, classes);
    let trace: usize = (0..classes).map(|k| m.confusion[k][k]).sum();
    let from_confusion = trace as f64 / m.total() as f64;
    if m.accuracy != acc || m.macro_f1 != f1 || from_confusion != m.accuracy {
        return Err(format!("accuracy {} / {acc} / {from_confusion}, macro-F1 {} / {f1}", m.accuracy, m.macro_f1));
    }
    Ok(())
}

/// Library losses on a real batch drawn with identity augmentation: returns
/// (clean, augmented-anchor, total) for the standard architecture.
pub fn identity_batch_losses(seed: u64, duplication: bool) -> (f64, f64, f64) {
    use pitchcon::objectives::ObjectiveKind;
    let d = normalize_speaker(&small_synth(seed, 1)).unwrap();
    let mut r = rng(seed);
    let indices: Vec<usize> = (0..8).map(|_| r.random_range(0..d.len())).collect();
    let config = TrainConfig {
        objective: Spec::new(ObjectiveKind::DualGlob),
        augment: AugmentParams::identity(),
        batch_duplication: duplication,
        ..TrainConfig::default()
    };
    let batch = make_batch::<f64>(&d, &indices, &config, seed).unwrap();
    let params = ModelParams::<f64>::init(&config.architecture(), seed).unwrap();
    let value = |kind| library_objective(&params, &batch, &Spec::new(kind));
    (value(ObjectiveKind::GlobClean), value(ObjectiveKind::GlobAugment), value(ObjectiveKind::DualGlob))
}

/// A small model with a batch of up to 16 unique rows over 2 to 16 classes.
pub fn oracle_case(seed: u64, kind: pitchcon::objectives::ObjectiveKind) -> SmallCase {
    let mut case = small_case(seed, kind);
    let mut r = rng(seed ^ 0x5EED);
    let b = r.random_range(2..=16);
    let classes = r.random_range(2..=16);
    let len = case.batch.clean.frames();
    let copies = case.batch.copies;
    case.batch = TrainBatch {
        clean: random_input(&mut r, b, len),
        augmented: Some(random_input(&mut r, b * copies, len)),
        labels: (0..b).map(|_| r.random_range(0..classes)).collect(),
        copies,
    };
    case
}
