//! Contrastive and predictive training objectives.
//!
//! Every loss here is a masked softmax cross-entropy over temperature-scaled
//! dot products, so each one reduces to choosing anchors, keys, a positive mask
//! and a denominator mask for [`Graph::contrastive_nll`]. Projections are
//! expected to be unit-norm rows, making dot products cosine similarities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EncoderInput, Graph, ModelVars, Var};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    /// Clean supervised contrast plus augmented-anchor contrast against clean keys.
    #[default]
    DualGlob,
    GlobClean,
    GlobAugment,
    CrossView,
    Unified,
    PredC,
    PredA,
    Hybrid,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 8] = [
        ObjectiveKind::DualGlob,
        ObjectiveKind::GlobClean,
        ObjectiveKind::GlobAugment,
        ObjectiveKind::CrossView,
        ObjectiveKind::Unified,
        ObjectiveKind::PredC,
        ObjectiveKind::PredA,
        ObjectiveKind::Hybrid,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ObjectiveKind::DualGlob => "dualglob",
            ObjectiveKind::GlobClean => "globclean",
            ObjectiveKind::GlobAugment => "globaugment",
            ObjectiveKind::CrossView => "crossview",
            ObjectiveKind::Unified => "unified",
            ObjectiveKind::PredC => "predc",
            ObjectiveKind::PredA => "preda",
            ObjectiveKind::Hybrid => "hybrid",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ObjectiveKind::DualGlob => "Dual-Glob",
            ObjectiveKind::GlobClean => "Glob-Clean",
            ObjectiveKind::GlobAugment => "Glob-Augment",
            ObjectiveKind::CrossView => "Cross-view SupCon",
            ObjectiveKind::Unified => "Unified SupCon",
            ObjectiveKind::PredC => "Pred-C",
            ObjectiveKind::PredA => "Pred-A",
            ObjectiveKind::Hybrid => "Hybrid",
        }
    }

    pub fn uses_augmentation(self) -> bool {
        !matches!(self, ObjectiveKind::GlobClean | ObjectiveKind::PredC)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        let alias = match norm.as_str() {
            "proposed" | "total" => Some(ObjectiveKind::DualGlob),
            "cross" | "crossviewsupcon" => Some(ObjectiveKind::CrossView),
            "unifiedsupcon" => Some(ObjectiveKind::Unified),
            _ => None,
        };
        alias
            .or_else(|| ObjectiveKind::ALL.into_iter().find(|k| k.key() == norm))
            .ok_or_else(|| Error::Input(format!("unknown objective `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub tau: f64,
    /// Weight of the clean term in the dual objective.
    pub lambda1: f64,
    /// Weight of the augmented term in the dual objective.
    pub lambda2: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec { kind: ObjectiveKind::DualGlob, tau: 0.1, lambda1: 1.0, lambda2: 1.0 }
    }
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind) -> Self {
        ObjectiveSpec { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.tau)));
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::Config("loss weights must be finite".into()));
        }
        Ok(())
    }
}

/// Positive / denominator masks, row-major `[anchors, keys]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairMasks {
    pub positive: Vec<bool>,
    pub denominator: Vec<bool>,
}

/// Same-label keys other than the anchor itself; every other key in the
/// denominator. Shared by the clean, augmented-anchor and unified forms.
pub fn self_excluding_masks(labels: &[usize]) -> PairMasks {
    let n = labels.len();
    let mut positive = vec![false; n * n];
    let mut denominator = vec![false; n * n];
    for i in 0..n {
        for k in 0..n {
            if k != i {
                denominator[i * n + k] = true;
                positive[i * n + k] = labels[i] == labels[k];
            }
        }
    }
    PairMasks { positive, denominator }
}

/// Same-label keys including the anchor's own index; all keys in the denominator.
pub fn cross_view_masks(labels: &[usize]) -> PairMasks {
    let n = labels.len();
    let positive = (0..n * n).map(|e| labels[e / n] == labels[e % n]).collect();
    PairMasks { positive, denominator: vec![true; n * n] }
}

/// Matching row index is the only positive; all keys in the denominator.
pub fn diagonal_masks(n: usize) -> PairMasks {
    let positive = (0..n * n).map(|e| e / n == e % n).collect();
    PairMasks { positive, denominator: vec![true; n * n] }
}

fn rows<T: Scalar>(g: &Graph<T>, v: Var) -> usize {
    g.shape(v).first().copied().unwrap_or(0)
}

fn masked_loss<T: Scalar>(g: &mut Graph<T>, anchors: Var, keys: Var, masks: &PairMasks, tau: f64) -> Result<Var> {
    let sim = g.matmul_nt(anchors, keys)?;
    let logits = g.scale(sim, T::of(1.0 / tau));
    g.contrastive_nll(logits, &masks.positive, &masks.denominator)
}

fn check_rows<T: Scalar>(g: &Graph<T>, a: Var, b: Var, labels: &[usize]) -> Result<()> {
    if rows(g, a) != labels.len() || rows(g, b) != labels.len() {
        return Err(Error::Contract(format!(
            "{} and {} projection rows for {} labels",
            rows(g, a),
            rows(g, b),
            labels.len()
        )));
    }
    Ok(())
}

/// Supervised contrast among clean projections.
pub fn supcon_clean<T: Scalar>(g: &mut Graph<T>, clean: Var, labels: &[usize], tau: f64) -> Result<Var> {
    check_rows(g, clean, clean, labels)?;
    if labels.len() < 2 {
        return Err(Error::UndefinedLoss(format!("need at least 2 rows, got {}", labels.len())));
    }
    masked_loss(g, clean, clean, &self_excluding_masks(labels), tau)
}

/// Augmented anchors contrasted against clean keys; row `i` of both inputs is
/// the same sample, and key `i` is excluded for anchor `i`.
pub fn supcon_aug<T: Scalar>(g: &mut Graph<T>, aug: Var, clean: Var, labels: &[usize], tau: f64) -> Result<Var> {
    check_rows(g, aug, clean, labels)?;
    masked_loss(g, aug, clean, &self_excluding_masks(labels), tau)
}

/// `lambda1 * clean + lambda2 * augmented`.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    clean: Var,
    aug: Var,
    labels: &[usize],
    spec: &ObjectiveSpec,
) -> Result<Var> {
    let lc = supcon_clean(g, clean, labels, spec.tau)?;
    let la = supcon_aug(g, aug, clean, labels, spec.tau)?;
    let lc = g.scale(lc, T::of(spec.lambda1));
    let la = g.scale(la, T::of(spec.lambda2));
    g.add(lc, la)
}

/// Clean anchors against augmented keys of the same class, denominator over
/// every augmented key.
pub fn cross_view_supcon<T: Scalar>(g: &mut Graph<T>, clean: Var, aug: Var, labels: &[usize], tau: f64) -> Result<Var> {
    check_rows(g, clean, aug, labels)?;
    masked_loss(g, clean, aug, &cross_view_masks(labels), tau)
}

/// Supervised contrast over the union of both views.
pub fn unified_supcon<T: Scalar>(g: &mut Graph<T>, clean: Var, aug: Var, labels: &[usize], tau: f64) -> Result<Var> {
    check_rows(g, clean, aug, labels)?;
    let all = g.concat_rows(clean, aug)?;
    let both: Vec<usize> = labels.iter().chain(labels).copied().collect();
    masked_loss(g, all, all, &self_excluding_masks(&both), tau)
}

/// InfoNCE between predicted and target rows with in-batch negatives.
pub fn info_nce<T: Scalar>(g: &mut Graph<T>, predicted: Var, target: Var, tau: f64) -> Result<Var> {
    let n = rows(g, predicted);
    if rows(g, target) != n {
        return Err(Error::Contract(format!("{n} predictions for {} targets", rows(g, target))));
    }
    masked_loss(g, predicted, target, &diagonal_masks(n), tau)
}

/// One training step's inputs: unique clean rows, their augmented copies laid
/// out block-wise (`copies` blocks of `labels.len()` rows) and class indices of
/// the unique rows.
#[derive(Clone, Debug)]
pub struct TrainBatch<T> {
    pub clean: EncoderInput<T>,
    pub augmented: Option<EncoderInput<T>>,
    pub labels: Vec<usize>,
    pub copies: usize,
}

impl<T: Scalar> TrainBatch<T> {
    /// Labels of the full (duplicated) batch.
    pub fn full_labels(&self) -> Vec<usize> {
        (0..self.copies).flat_map(|_| self.labels.iter().copied()).collect()
    }

    fn augmented(&self) -> Result<&EncoderInput<T>> {
        let a = self.augmented.as_ref().ok_or_else(|| Error::Contract("objective needs augmented views".into()))?;
        if a.batch() != self.labels.len() * self.copies {
            return Err(Error::Contract(format!(
                "{} augmented rows for {} x {} batch",
                a.batch(),
                self.copies,
                self.labels.len()
            )));
        }
        Ok(a)
    }
}

/// Splits every row into its first and second half in time.
pub fn halves<T: Scalar>(input: &EncoderInput<T>) -> Result<(EncoderInput<T>, EncoderInput<T>)> {
    let len = input.frames();
    if !len.is_multiple_of(2) || len == 0 {
        return Err(Error::Framing(format!("cannot split {len} frames into equal halves")));
    }
    Ok((input.window(0, len / 2)?, input.window(len / 2, len / 2)?))
}

fn repeat_rows<T: Scalar>(g: &mut Graph<T>, v: Var, copies: usize) -> Result<Var> {
    let mut out = v;
    for _ in 1..copies {
        out = g.concat_rows(out, v)?;
    }
    Ok(out)
}

fn mean<T: Scalar>(g: &mut Graph<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, T::of(1.0 / terms.len() as f64)))
}

/// Averages InfoNCE of `predicted` against each block of `targets`, or of each
/// block of `predicted` against `targets`, so every term is a one-to-one
/// pairing of `b` rows.
fn blockwise_nce<T: Scalar>(g: &mut Graph<T>, predicted: Var, targets: Var, b: usize, tau: f64) -> Result<Var> {
    let (np, nt) = (rows(g, predicted), rows(g, targets));
    let blocks = np.max(nt) / b;
    let mut terms = Vec::with_capacity(blocks);
    for c in 0..blocks {
        let p = if np == b { predicted } else { g.slice_rows(predicted, c * b, b)? };
        let t = if nt == b { targets } else { g.slice_rows(targets, c * b, b)? };
        terms.push(info_nce(g, p, t, tau)?);
    }
    mean(g, &terms)
}

/// Projections of encoded inputs.
fn projected<T: Scalar>(g: &mut Graph<T>, vars: &ModelVars, input: &EncoderInput<T>) -> Result<Var> {
    let z = vars.encode(g, input)?;
    vars.project(g, z)
}

/// Past-to-future prediction: clean only for `PredC`, both directions across
/// views for `PredA`.
pub fn predictive_loss<T: Scalar>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    batch: &TrainBatch<T>,
    spec: &ObjectiveSpec,
) -> Result<Var> {
    let b = batch.labels.len();
    let (past, future) = halves(&batch.clean)?;
    let past_p = projected(g, vars, &past)?;
    let pred_clean = vars.predict(g, past_p)?;
    let future_clean = projected(g, vars, &future)?;
    let clean_term = info_nce(g, pred_clean, future_clean, spec.tau)?;
    if spec.kind != ObjectiveKind::PredA {
        return Ok(clean_term);
    }
    let (apast, afuture) = halves(batch.augmented()?)?;
    let apast_p = projected(g, vars, &apast)?;
    let pred_aug = vars.predict(g, apast_p)?;
    let future_aug = projected(g, vars, &afuture)?;
    let aug_to_clean = blockwise_nce(g, pred_aug, future_clean, b, spec.tau)?;
    let clean_to_aug = blockwise_nce(g, pred_clean, future_aug, b, spec.tau)?;
    mean(g, &[clean_term, aug_to_clean, clean_to_aug])
}

/// Augmented-anchor contrast plus prediction of the augmented future from the
/// clean future.
pub fn hybrid_loss<T: Scalar>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    batch: &TrainBatch<T>,
    spec: &ObjectiveSpec,
) -> Result<Var> {
    let b = batch.labels.len();
    let labels = batch.full_labels();
    let aug_in = batch.augmented()?;
    let pc = projected(g, vars, &batch.clean)?;
    let pc = repeat_rows(g, pc, batch.copies)?;
    let pa = projected(g, vars, aug_in)?;
    let l_aug = supcon_aug(g, pa, pc, &labels, spec.tau)?;
    let (_, future) = halves(&batch.clean)?;
    let (_, afuture) = halves(aug_in)?;
    let fc = projected(g, vars, &future)?;
    let pred = vars.predict(g, fc)?;
    let fa = projected(g, vars, &afuture)?;
    let l_pred = blockwise_nce(g, pred, fa, b, spec.tau)?;
    g.add(l_aug, l_pred)
}

/// Builds the graph for `spec.kind` on one batch and returns the scalar loss.
pub fn objective_loss<T: Scalar>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    batch: &TrainBatch<T>,
    spec: &ObjectiveSpec,
) -> Result<Var> {
    spec.validate()?;
    if batch.clean.batch() != batch.labels.len() || batch.copies == 0 {
        return Err(Error::Contract(format!(
            "{} clean rows for {} labels ({} copies)",
            batch.clean.batch(),
            batch.labels.len(),
            batch.copies
        )));
    }
    let kind = spec.kind;
    match kind {
        ObjectiveKind::PredC | ObjectiveKind::PredA => return predictive_loss(g, vars, batch, spec),
        ObjectiveKind::Hybrid => return hybrid_loss(g, vars, batch, spec),
        _ => {}
    }
    let labels = batch.full_labels();
    let pc = projected(g, vars, &batch.clean)?;
    let pc = repeat_rows(g, pc, batch.copies)?;
    if kind == ObjectiveKind::GlobClean {
        return supcon_clean(g, pc, &labels, spec.tau);
    }
    let pa = projected(g, vars, batch.augmented()?)?;
    match kind {
        ObjectiveKind::DualGlob => total_loss(g, pc, pa, &labels, spec),
        ObjectiveKind::GlobAugment => supcon_aug(g, pa, pc, &labels, spec.tau),
        ObjectiveKind::CrossView => cross_view_supcon(g, pc, pa, &labels, spec.tau),
        ObjectiveKind::Unified => unified_supcon(g, pc, pa, &labels, spec.tau),
        _ => unreachable!("handled above"),
    }
}
