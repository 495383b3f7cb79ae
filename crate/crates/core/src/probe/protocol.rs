//! Cross-validated probing of frozen encoders and the gender protocols.

use std::borrow::Cow;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::corpus::{
    normalize_speaker, normalize_with_stats, speaker_stats, stratified_folds, Dataset, FoldAssignment, Gender,
    ToneLabel,
};
use crate::error::{Error, Result};
use crate::par::par_map;
use crate::probe::logistic::{fit_logistic, ProbeConfig};
use crate::probe::metrics::{compute_metrics, mean_sd, MetricsReport};
use crate::trainer::{extract_features, train_fold, EncoderCheckpoint, FoldRun};

/// One-hot syllable-count categories `{1, 2, 3, >=4}`.
pub const SYLLABLE_BINS: usize = 4;

/// Appends the syllable-count one-hot to every feature row.
pub fn fuse_syllable(features: &[Vec<f64>], syllable_counts: &[u32]) -> Result<Vec<Vec<f64>>> {
    if features.len() != syllable_counts.len() {
        return Err(Error::Input(format!(
            "{} feature rows for {} syllable counts",
            features.len(),
            syllable_counts.len()
        )));
    }
    features
        .iter()
        .zip(syllable_counts)
        .enumerate()
        .map(|(i, (row, &count))| {
            if count == 0 {
                return Err(Error::Input(format!("row {i}: syllable count must be at least 1")));
            }
            let mut out = row.clone();
            let bin = (count as usize).min(SYLLABLE_BINS) - 1;
            out.extend((0..SYLLABLE_BINS).map(|b| if b == bin { 1.0 } else { 0.0 }));
            Ok(out)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    pub fuse_syllables: bool,
    /// Average metrics over every retained epoch snapshot instead of using only
    /// the final one.
    pub average_tail: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Snapshots averaged into this fold's numbers.
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub name: String,
    pub folds: Vec<FoldMetrics>,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub f1_mean: f64,
    pub f1_sd: f64,
    /// Per-class metrics and confusion pooled over every fold's held-out
    /// predictions from the final snapshot.
    pub pooled: MetricsReport,
    pub fused: bool,
    pub standardized: bool,
}

/// A subset of held-out samples scored separately.
#[derive(Clone, Debug)]
pub struct TestGroup {
    pub name: String,
    pub member: Vec<bool>,
    /// Classes entering the macro average; all when `None`.
    pub macro_classes: Option<Vec<bool>>,
}

impl TestGroup {
    pub fn everything(name: &str, n: usize) -> Self {
        TestGroup { name: name.to_string(), member: vec![true; n], macro_classes: None }
    }
}

/// Classes with at least one sample in `indices`.
pub fn present_classes(dataset: &Dataset, indices: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut present = vec![false; ToneLabel::COUNT];
    for i in indices {
        present[dataset.samples[i].label.index()] = true;
    }
    present
}

fn probe_features(ckpt: &EncoderCheckpoint, dataset: &Dataset, fuse: bool) -> Result<Vec<Vec<f64>>> {
    let feats = extract_features::<f32>(ckpt, dataset)?;
    if fuse {
        let counts: Vec<u32> = dataset.samples.iter().map(|s| s.syllable_count).collect();
        fuse_syllable(&feats, &counts)
    } else {
        Ok(feats)
    }
}

type FoldOutcome = Vec<(Vec<(f64, f64)>, Vec<usize>, Vec<usize>)>;

/// Per fold: fits the probe on that fold's training rows with each snapshot
/// and scores every group's held-out rows.
fn evaluate_fold(
    dataset: &Dataset,
    snapshots: &[EncoderCheckpoint],
    folds: &FoldAssignment,
    fold: usize,
    config: &ProbeConfig,
    options: &ProbeOptions,
    groups: &[TestGroup],
) -> Result<FoldOutcome> {
    let chosen: &[EncoderCheckpoint] = if options.average_tail { snapshots } else { &snapshots[snapshots.len() - 1..] };
    let train = folds.train_indices(fold);
    let test = folds.test_indices(fold);
    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label.index()).collect();
    let mut out: FoldOutcome = groups.iter().map(|_| (Vec::new(), Vec::new(), Vec::new())).collect();
    for (si, ckpt) in chosen.iter().enumerate() {
        let feats = probe_features(ckpt, dataset, options.fuse_syllables)?;
        let xs: Vec<Vec<f64>> = train.iter().map(|&i| feats[i].clone()).collect();
        let ys: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = fit_logistic(&xs, &ys, ToneLabel::COUNT, config)?;
        if !model.converged(config.tol) {
            warn!(
                "fold {fold}: probe stopped after {} iterations with gradient norm {:.2e}",
                model.iterations, model.grad_norm
            );
        }
        for (g, group) in groups.iter().enumerate() {
            let rows: Vec<usize> = test.iter().copied().filter(|&i| group.member[i]).collect();
            let xt: Vec<Vec<f64>> = rows.iter().map(|&i| feats[i].clone()).collect();
            let yt: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            let pred = model.predict(&xt)?;
            let m = compute_metrics(&yt, &pred, ToneLabel::COUNT, group.macro_classes.as_deref())?;
            out[g].0.push((m.accuracy, m.macro_f1));
            if si == chosen.len() - 1 {
                out[g].1 = yt;
                out[g].2 = pred;
            }
        }
    }
    Ok(out)
}

/// Cross-validated probe scores for several test groups at once. `datasets`
/// gives the (possibly fold-specific) dataset view for each fold.
pub fn crossval_probe_groups(
    datasets: &[Cow<'_, Dataset>],
    checkpoints: &[Vec<EncoderCheckpoint>],
    folds: &FoldAssignment,
    config: &ProbeConfig,
    options: &ProbeOptions,
    groups: &[TestGroup],
    jobs: usize,
) -> Result<Vec<CrossValReport>> {
    if checkpoints.len() != folds.k || checkpoints.iter().any(Vec::is_empty) {
        return Err(Error::Protocol(format!(
            "expected checkpoints for {} folds, got {} (each needs at least one)",
            folds.k,
            checkpoints.len()
        )));
    }
    if datasets.len() != folds.k {
        return Err(Error::Protocol(format!("expected {} fold datasets, got {}", folds.k, datasets.len())));
    }
    let per_fold =
        par_map(folds.k, jobs, |f| evaluate_fold(&datasets[f], &checkpoints[f], folds, f, config, options, groups));
    let per_fold: Vec<FoldOutcome> = per_fold.into_iter().collect::<Result<_>>()?;
    groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let mut fold_rows = Vec::new();
            let (mut yt, mut yp) = (Vec::new(), Vec::new());
            for (f, outcome) in per_fold.iter().enumerate() {
                let (scores, t, p) = &outcome[g];
                let n = scores.len() as f64;
                fold_rows.push(FoldMetrics {
                    fold: f,
                    accuracy: scores.iter().map(|s| s.0).sum::<f64>() / n,
                    macro_f1: scores.iter().map(|s| s.1).sum::<f64>() / n,
                    evaluations: scores.len(),
                });
                yt.extend_from_slice(t);
                yp.extend_from_slice(p);
            }
            let (accuracy_mean, accuracy_sd) = mean_sd(&fold_rows.iter().map(|f| f.accuracy).collect::<Vec<_>>());
            let (f1_mean, f1_sd) = mean_sd(&fold_rows.iter().map(|f| f.macro_f1).collect::<Vec<_>>());
            Ok(CrossValReport {
                name: group.name.clone(),
                folds: fold_rows,
                accuracy_mean,
                accuracy_sd,
                f1_mean,
                f1_sd,
                pooled: compute_metrics(&yt, &yp, ToneLabel::COUNT, group.macro_classes.as_deref())?,
                fused: options.fuse_syllables,
                standardized: config.standardize,
            })
        })
        .collect()
}

/// Cross-validated probe over the whole held-out fold.
pub fn crossval_probe(
    dataset: &Dataset,
    checkpoints: &[Vec<EncoderCheckpoint>],
    folds: &FoldAssignment,
    config: &ProbeConfig,
    options: &ProbeOptions,
) -> Result<CrossValReport> {
    let views: Vec<Cow<'_, Dataset>> = (0..folds.k).map(|_| Cow::Borrowed(dataset)).collect();
    let group = TestGroup::everything("probe", dataset.len());
    let mut out = crossval_probe_groups(&views, checkpoints, folds, config, options, &[group], 1)?;
    Ok(out.remove(0))
}

/// Normalised view of `dataset` for one fold: global speaker statistics, or
/// statistics from the fold's training rows when `per_fold` is set.
pub fn fold_view<'a>(
    dataset: &'a Dataset,
    folds: &FoldAssignment,
    fold: usize,
    per_fold: bool,
) -> Result<Cow<'a, Dataset>> {
    if dataset.normalized {
        if per_fold {
            warn!("dataset is already normalised; per-fold statistics cannot be applied");
        }
        return Ok(Cow::Borrowed(dataset));
    }
    if !per_fold {
        return Ok(Cow::Owned(normalize_speaker(dataset)?));
    }
    let train = folds.train_indices(fold);
    let mut stats = dataset.speaker_stats.clone();
    for (k, v) in speaker_stats(train.iter().map(|&i| &dataset.samples[i])) {
        if !v.is_degenerate() {
            stats.insert(k, v);
        }
    }
    Ok(Cow::Owned(normalize_with_stats(dataset, &stats)?))
}

/// Encoders trained for every fold plus the fold-specific dataset views.
pub struct CvTraining<'a> {
    pub folds: FoldAssignment,
    pub views: Vec<Cow<'a, Dataset>>,
    pub runs: Vec<FoldRun>,
}

/// Trains one encoder per fold.
pub fn train_all_folds<'a>(
    dataset: &'a Dataset,
    exp: &ExperimentConfig,
    hash: &str,
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<CvTraining<'a>> {
    exp.validate()?;
    let folds = stratified_folds(dataset, exp.folds, exp.fold_seed)?;
    let views: Vec<Cow<'a, Dataset>> = if dataset.normalized || !exp.per_fold_normalization {
        let shared = fold_view(dataset, &folds, 0, false)?;
        (0..folds.k).map(|_| shared.clone()).collect()
    } else {
        (0..folds.k).map(|f| fold_view(dataset, &folds, f, true)).collect::<Result<_>>()?
    };
    let runs = par_map(folds.k, jobs, |f| {
        info!("training fold {}/{} ({})", f + 1, folds.k, exp.train.objective.kind.display_name());
        train_fold::<f32>(&views[f], &folds, f, &exp.train, hash, out_dir)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CvTraining { folds, views, runs })
}

impl CvTraining<'_> {
    pub fn snapshots(&self) -> Vec<Vec<EncoderCheckpoint>> {
        self.runs.iter().map(|r| r.tail.clone()).collect()
    }
}

/// Full train-then-probe cross-validation for one configuration.
pub fn run_crossval(
    dataset: &Dataset,
    exp: &ExperimentConfig,
    hash: &str,
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<(CrossValReport, Vec<FoldRun>)> {
    let cv = train_all_folds(dataset, exp, hash, jobs, out_dir)?;
    let options = ProbeOptions { fuse_syllables: exp.fuse_syllables, average_tail: true };
    let group = TestGroup::everything(exp.train.objective.kind.display_name(), dataset.len());
    let mut reports =
        crossval_probe_groups(&cv.views, &cv.snapshots(), &cv.folds, &exp.probe, &options, &[group], jobs)?;
    Ok((reports.remove(0), cv.runs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubgroupMode {
    /// One model trained on everyone, scored per gender.
    Unified,
    /// Separate pipelines per gender.
    GenderSpecific,
}

impl SubgroupMode {
    pub fn display_name(self) -> &'static str {
        match self {
            SubgroupMode::Unified => "Unified Model",
            SubgroupMode::GenderSpecific => "Gender-Specific Model",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub mode: SubgroupMode,
    pub gender: Gender,
    pub report: CrossValReport,
}

fn gender_groups(dataset: &Dataset) -> Vec<(Gender, TestGroup)> {
    Gender::ALL
        .iter()
        .filter_map(|&g| {
            let member: Vec<bool> = dataset.samples.iter().map(|s| s.gender == g).collect();
            if !member.iter().any(|&m| m) {
                return None;
            }
            let present = present_classes(dataset, (0..dataset.len()).filter(|&i| member[i]));
            let absent: Vec<&str> = ToneLabel::ALL.iter().filter(|l| !present[l.index()]).map(|l| l.as_str()).collect();
            if !absent.is_empty() {
                warn!("{g} subset lacks classes {}; they are left out of its macro-F1", absent.join(", "));
            }
            Some((g, TestGroup { name: g.to_string(), member, macro_classes: Some(present) }))
        })
        .collect()
}

/// Both gender protocols: a unified model scored per gender, and independent
/// pipelines on each gender's subset.
pub fn subgroup_protocols(
    dataset: &Dataset,
    exp: &ExperimentConfig,
    hash: &str,
    jobs: usize,
) -> Result<Vec<SubgroupReport>> {
    let options = ProbeOptions { fuse_syllables: exp.fuse_syllables, average_tail: true };
    let groups = gender_groups(dataset);
    if groups.is_empty() {
        return Err(Error::Protocol("no gender subsets present".into()));
    }
    let cv = train_all_folds(dataset, exp, hash, jobs, None)?;
    let tests: Vec<TestGroup> = groups.iter().map(|(_, t)| t.clone()).collect();
    let unified = crossval_probe_groups(&cv.views, &cv.snapshots(), &cv.folds, &exp.probe, &options, &tests, jobs)?;
    let mut out: Vec<SubgroupReport> = groups
        .iter()
        .zip(unified)
        .map(|((g, _), report)| SubgroupReport { mode: SubgroupMode::Unified, gender: *g, report })
        .collect();
    for (g, group) in &groups {
        let idx: Vec<usize> = (0..dataset.len()).filter(|&i| group.member[i]).collect();
        let subset = dataset.subset(&idx)?;
        let cv = train_all_folds(&subset, exp, hash, jobs, None)?;
        let test = TestGroup {
            name: g.to_string(),
            member: vec![true; subset.len()],
            macro_classes: Some(present_classes(&subset, 0..subset.len())),
        };
        let mut r = crossval_probe_groups(&cv.views, &cv.snapshots(), &cv.folds, &exp.probe, &options, &[test], jobs)?;
        out.push(SubgroupReport { mode: SubgroupMode::GenderSpecific, gender: *g, report: r.remove(0) });
    }
    Ok(out)
}
