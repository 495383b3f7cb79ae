//! One function per subcommand.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use pitchcon::augment::compose_traced;
use pitchcon::config::ExperimentConfig;
use pitchcon::corpus::{
    load_dataset, normalize_speaker, save_dataset, stratified_folds, synth_generate, Dataset, ToneLabel,
};
use pitchcon::par::par_map;
use pitchcon::probe::{
    confusion_csv, crossval_probe_groups, fold_view, fuse_syllable, per_class_table, run_crossval, subgroup_protocols,
    subgroup_table, summary_table, train_all_folds, CrossValReport, Format, ProbeOptions, SubgroupReport, TestGroup,
};
use pitchcon::rng::item_seed;
use pitchcon::trainer::{extract_features, train_fold, write_loss_csv, EncoderCheckpoint, FoldRun};
use serde::{Deserialize, Serialize};

use crate::args::*;

/// Everything a probe or sweep produced, as saved to `results.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedResults {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub reports: Vec<CrossValReport>,
    pub subgroups: Vec<SubgroupReport>,
}

const CONFIG_FILE: &str = "config.json";
const RESULTS_FILE: &str = "results.json";

fn experiment(common: &Common, flags: &ExperimentFlags, fallback: Option<&Path>) -> Result<ExperimentConfig> {
    let source = common.config.clone().or_else(|| fallback.map(Path::to_path_buf).filter(|p| p.exists()));
    let mut exp = match &source {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    flags.apply(&mut exp, common.seed);
    exp.validate()?;
    Ok(exp)
}

fn dataset(data: &DataArgs, exp: &ExperimentConfig) -> Result<Dataset> {
    match &data.input {
        Some(p) => load_dataset(p).with_context(|| format!("loading {}", p.display())),
        None => {
            info!("no --input; generating {} synthetic samples per class", exp.synth.per_class);
            Ok(synth_generate(&exp.synth, exp.train.seed)?)
        }
    }
}

fn normalized(ds: Dataset) -> Result<Dataset> {
    Ok(if ds.normalized { ds } else { normalize_speaker(&ds)? })
}

fn out_dir(common: &Common, default: &str) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dataset_summary(ds: &Dataset, format: Format, hash: &str) -> Result<String> {
    let counts = ds.class_counts();
    let mut out = String::new();
    match format {
        Format::Text => {
            writeln!(out, "# config_hash: {hash}")?;
            writeln!(
                out,
                "{} samples, {} speakers, {}",
                ds.len(),
                ds.speaker_stats.len(),
                if ds.normalized { "normalised" } else { "raw Hz" }
            )?;
            for l in ToneLabel::ALL {
                writeln!(out, "{:<6} {}", l.as_str(), counts[l.index()])?;
            }
        }
        Format::Csv => {
            writeln!(out, "# config_hash: {hash}\nclass,count")?;
            for l in ToneLabel::ALL {
                writeln!(out, "{},{}", l.as_str(), counts[l.index()])?;
            }
        }
        Format::Json => {
            let classes: serde_json::Map<String, serde_json::Value> =
                ToneLabel::ALL.iter().map(|l| (l.as_str().to_string(), counts[l.index()].into())).collect();
            let v = serde_json::json!({
                "config_hash": hash,
                "samples": ds.len(),
                "speakers": ds.speaker_stats.len(),
                "normalized": ds.normalized,
                "classes": classes,
            });
            out = serde_json::to_string_pretty(&v)? + "\n";
        }
    }
    Ok(out)
}

pub fn synth(common: &Common, args: &SynthArgs) -> Result<()> {
    let exp = experiment(common, &args.exp, None)?;
    let hash = exp.hash();
    let ds = synth_generate(&exp.synth, exp.train.seed)?;
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("synth.csv"));
    save_dataset(&ds, &path, Some(&hash))?;
    info!("wrote {} rows to {}", ds.len(), path.display());
    print!("{}", dataset_summary(&ds, common.format, &hash)?);
    Ok(())
}

pub fn ingest(common: &Common, args: &IngestArgs) -> Result<()> {
    let exp = experiment(common, &args.exp, None)?;
    let hash = exp.hash();
    let raw = load_dataset(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    if raw.normalized {
        warn!("{} is already normalised; writing it unchanged", args.input.display());
    }
    let ds = normalized(raw)?;
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("normalized.csv"));
    save_dataset(&ds, &path, Some(&hash))?;
    info!("wrote {} normalised rows to {}", ds.len(), path.display());
    print!("{}", dataset_summary(&ds, common.format, &hash)?);
    Ok(())
}

pub fn augment_preview(common: &Common, args: &PreviewArgs) -> Result<()> {
    let exp = experiment(common, &args.exp, None)?;
    let hash = exp.hash();
    let ds = normalized(dataset(&args.data, &exp)?)?;
    let frames = ds.samples[0].contour.len();
    let mut out = format!("# config_hash: {hash}\nsample,label,view,transforms");
    for i in 0..frames {
        write!(out, ",f0_{i}")?;
    }
    out.push('\n');
    let seed = exp.train.seed;
    for r in 0..args.rows.min(ds.len()) {
        let s = &ds.samples[r];
        let (aug, chosen) = compose_traced(&s.contour, exp.train.strategy, &exp.train.augment, item_seed(seed, r));
        let names: Vec<&str> = chosen.iter().map(|t| t.code()).collect();
        for (view, c, t) in [("clean", &s.contour, String::new()), ("augmented", &aug, names.join("+"))] {
            write!(out, "{r},{},{view},{t}", s.label)?;
            for (v, &m) in c.values().iter().zip(c.mask()) {
                if m {
                    write!(out, ",{v}")?;
                } else {
                    out.push(',');
                }
            }
            out.push('\n');
        }
    }
    emit(common, &out)
}

fn save_run(dir: &Path, run: &FoldRun, fold: usize, hash: &str) -> Result<()> {
    for snap in &run.tail {
        snap.save(dir.join(format!("fold{fold}_epoch{}.json", snap.epoch)))?;
    }
    write_loss_csv(dir.join(format!("fold{fold}_loss.csv")), &run.checkpoint.loss_history, hash)?;
    Ok(())
}

fn training_table(runs: &[(usize, &FoldRun)], format: Format, hash: &str) -> Result<String> {
    let mut out = String::new();
    let last = |r: &FoldRun| r.checkpoint.loss_history.last().copied();
    match format {
        Format::Text | Format::Csv => {
            writeln!(out, "# config_hash: {hash}")?;
            if format == Format::Text {
                writeln!(out, "{:<5} {:>6} {:>12}", "fold", "epochs", "final loss")?;
            } else {
                writeln!(out, "fold,epochs,final_loss")?;
            }
            for (f, r) in runs {
                let loss = last(r).map_or(String::new(), |l| format!("{l:.6}"));
                if format == Format::Text {
                    writeln!(out, "{f:<5} {:>6} {loss:>12}", r.checkpoint.epoch)?;
                } else {
                    writeln!(out, "{f},{},{loss}", r.checkpoint.epoch)?;
                }
            }
        }
        Format::Json => {
            let rows: Vec<_> = runs
                .iter()
                .map(|(f, r)| serde_json::json!({"fold": f, "epochs": r.checkpoint.epoch, "loss_history": r.checkpoint.loss_history}))
                .collect();
            out = serde_json::to_string_pretty(&serde_json::json!({"config_hash": hash, "folds": rows}))? + "\n";
        }
    }
    Ok(out)
}

pub fn train(common: &Common, args: &TrainArgs) -> Result<()> {
    let exp = experiment(common, &args.exp, None)?;
    let hash = exp.hash();
    let dir = out_dir(common, "runs")?;
    exp.save(dir.join(CONFIG_FILE))?;
    let ds = dataset(&args.data, &exp)?;
    let runs: Vec<(usize, FoldRun)> = match args.fold {
        Some(f) => {
            let folds = stratified_folds(&ds, exp.folds, exp.fold_seed)?;
            if f >= folds.k {
                bail!("fold {f} out of range for {} folds", folds.k);
            }
            let view = fold_view(&ds, &folds, f, exp.per_fold_normalization)?;
            vec![(f, train_fold::<f32>(&view, &folds, f, &exp.train, &hash, Some(&dir))?)]
        }
        None => train_all_folds(&ds, &exp, &hash, common.jobs, Some(&dir))?.runs.into_iter().enumerate().collect(),
    };
    for (f, run) in &runs {
        save_run(&dir, run, *f, &hash)?;
    }
    let refs: Vec<(usize, &FoldRun)> = runs.iter().map(|(f, r)| (*f, r)).collect();
    print!("{}", training_table(&refs, common.format, &hash)?);
    Ok(())
}

fn config_beside(path: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE)
}

pub fn features(common: &Common, args: &FeaturesArgs) -> Result<()> {
    let exp = experiment(common, &args.exp, Some(&config_beside(&args.checkpoint)))?;
    let hash = exp.hash();
    let ckpt = EncoderCheckpoint::load(&args.checkpoint, Some(&hash), args.force)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let ds = normalized(dataset(&args.data, &exp)?)?;
    let mut feats = extract_features::<f64>(&ckpt, &ds)?;
    let width = feats.first().map_or(0, Vec::len);
    if exp.fuse_syllables {
        let counts: Vec<u32> = ds.samples.iter().map(|s| s.syllable_count).collect();
        feats = fuse_syllable(&feats, &counts)?;
    }
    let mut out = format!("# config_hash: {hash}\nsample,speaker_id,label,syllable_count");
    for i in 0..width {
        write!(out, ",z_{i}")?;
    }
    if exp.fuse_syllables {
        out.push_str(",syl_1,syl_2,syl_3,syl_4plus");
    }
    out.push('\n');
    for (i, (s, row)) in ds.samples.iter().zip(&feats).enumerate() {
        write!(out, "{i},{},{},{}", s.speaker_id, s.label, s.syllable_count)?;
        for v in row {
            write!(out, ",{v}")?;
        }
        out.push('\n');
    }
    emit(common, &out)
}

/// Snapshots of one fold in epoch order.
fn fold_snapshots(dir: &Path, fold: usize, hash: &str, force: bool) -> Result<Vec<EncoderCheckpoint>> {
    let prefix = format!("fold{fold}_epoch");
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(epoch) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".json")) {
            if let Ok(e) = epoch.parse() {
                found.push((e, path));
            }
        }
    }
    if found.is_empty() {
        bail!("no checkpoint for fold {fold} in {}", dir.display());
    }
    found.sort();
    found
        .iter()
        .map(|(_, p)| EncoderCheckpoint::load(p, Some(hash), force).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn save_results(dir: &Path, results: &SavedResults) -> Result<()> {
    write(&dir.join(RESULTS_FILE), &(serde_json::to_string_pretty(results)? + "\n"))?;
    let mut table = summary_table(&results.reports, Format::Csv, &results.config_hash)?;
    if !results.subgroups.is_empty() {
        table.push_str(&subgroup_table(&results.subgroups, Format::Csv, &results.config_hash)?);
    }
    write(&dir.join("summary.csv"), &table)?;
    for (i, r) in results.reports.iter().enumerate() {
        let stem = if results.reports.len() == 1 { String::new() } else { format!("_{i}") };
        write(
            &dir.join(format!("per_class{stem}.csv")),
            &per_class_table(&r.pooled, Format::Csv, &results.config_hash)?,
        )?;
        write(&dir.join(format!("confusion{stem}.csv")), &confusion_csv(&r.pooled, &results.config_hash))?;
    }
    Ok(())
}

fn render(results: &SavedResults, format: Format, per_class: bool) -> Result<String> {
    if format == Format::Json {
        return Ok(serde_json::to_string_pretty(results)? + "\n");
    }
    let hash = &results.config_hash;
    let mut out = summary_table(&results.reports, format, hash)?;
    if !results.subgroups.is_empty() {
        out.push('\n');
        out.push_str(&subgroup_table(&results.subgroups, format, hash)?);
    }
    if per_class {
        for r in &results.reports {
            writeln!(out, "\n{}", r.name)?;
            out.push_str(&per_class_table(&r.pooled, format, hash)?);
        }
    }
    Ok(out)
}

pub fn probe(common: &Common, args: &ProbeArgs) -> Result<()> {
    let exp = experiment(common, &args.exp, Some(&args.checkpoints.join(CONFIG_FILE)))?;
    let hash = exp.hash();
    let ds = dataset(&args.data, &exp)?;
    let folds = stratified_folds(&ds, exp.folds, exp.fold_seed)?;
    let snapshots: Vec<Vec<EncoderCheckpoint>> =
        (0..folds.k).map(|f| fold_snapshots(&args.checkpoints, f, &hash, args.force)).collect::<Result<_>>()?;
    let views: Vec<Cow<'_, Dataset>> = par_map(folds.k, 1, |f| fold_view(&ds, &folds, f, exp.per_fold_normalization))
        .into_iter()
        .collect::<pitchcon::Result<_>>()?;
    let options = ProbeOptions { fuse_syllables: exp.fuse_syllables, average_tail: !args.last_only };
    let group = TestGroup::everything(exp.train.objective.kind.display_name(), ds.len());
    let reports = crossval_probe_groups(&views, &snapshots, &folds, &exp.probe, &options, &[group], common.jobs)?;
    let results = SavedResults { config_hash: hash, config: exp, reports, subgroups: Vec::new() };
    let dir = common.out.clone().unwrap_or_else(|| args.checkpoints.clone());
    fs::create_dir_all(&dir)?;
    save_results(&dir, &results)?;
    print!("{}", render(&results, common.format, false)?);
    Ok(())
}

pub fn report(common: &Common, args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let results: SavedResults =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.input.display()))?;
    let out = render(&results, common.format, args.per_class)?;
    emit(common, &out)
}

pub fn sweep(common: &Common, args: &SweepArgs) -> Result<()> {
    let base = experiment(common, &args.exp, None)?;
    let hash = base.hash();
    let ds = dataset(&args.data, &base)?;
    let objectives = or_base(&args.objectives, base.train.objective.kind);
    let strategies = or_base(&args.strategies, base.train.strategy);
    let dembs = or_base(&args.demb_list, base.train.d_emb);
    let mut configs = Vec::new();
    for &kind in &objectives {
        for &strategy in &strategies {
            for &d_emb in &dembs {
                let mut exp = base.clone();
                exp.train.objective.kind = kind;
                exp.train.strategy = strategy;
                exp.train.d_emb = d_emb;
                exp.validate()?;
                let mut name = kind.display_name().to_string();
                if strategies.len() > 1 {
                    write!(name, " {strategy}")?;
                }
                if dembs.len() > 1 {
                    write!(name, " d{d_emb}")?;
                }
                configs.push((name, exp));
            }
        }
    }
    let dir = common.out.as_ref().map(|d| fs::create_dir_all(d).map(|_| d.clone())).transpose()?;
    let mut reports = Vec::with_capacity(configs.len());
    for (name, exp) in &configs {
        info!("sweep: {name}");
        let (mut r, _) = run_crossval(&ds, exp, &exp.hash(), common.jobs, dir.as_deref())?;
        r.name = name.clone();
        reports.push(r);
    }
    let subgroups = if args.subgroups {
        let exp = &configs[0].1;
        subgroup_protocols(&ds, exp, &exp.hash(), common.jobs)?
    } else {
        Vec::new()
    };
    let results = SavedResults { config_hash: hash, config: base, reports, subgroups };
    if let Some(d) = &dir {
        save_results(d, &results)?;
    }
    print!("{}", render(&results, common.format, false)?);
    Ok(())
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}
