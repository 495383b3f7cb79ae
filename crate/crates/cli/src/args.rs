//! Command-line surface. Every experiment flag overrides the matching field of
//! the config file; absent flags leave the file (or the default) untouched.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pitchcon::augment::SelectionStrategy;
use pitchcon::config::ExperimentConfig;
use pitchcon::corpus::SynthSpec;
use pitchcon::objectives::ObjectiveKind;
use pitchcon::probe::Format;

#[derive(Parser, Debug)]
#[command(name = "pitchcon", version, about = "Contrastive F0 contour encoders and linear-probe evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus of schematic tone contours (raw Hz).
    Synth(SynthArgs),
    /// Load a corpus CSV, normalise per speaker and write it back out.
    Ingest(IngestArgs),
    /// Write clean and augmented views of a few samples as CSV.
    AugmentPreview(PreviewArgs),
    /// Train one encoder per cross-validation fold.
    Train(TrainArgs),
    /// Extract frozen-encoder features from a checkpoint.
    Features(FeaturesArgs),
    /// Cross-validated linear probe over trained checkpoints.
    Probe(ProbeArgs),
    /// Re-render a saved probe or sweep result.
    Report(ReportArgs),
    /// Train and probe several configurations and tabulate them.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (JSON); flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for data generation, augmentation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 is the deterministic reference.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Report format.
    #[arg(long, global = true, default_value = "text")]
    pub format: Format,
}

/// Overrides for the experiment config.
#[derive(Args, Debug, Clone, Default)]
pub struct ExperimentFlags {
    #[arg(long)]
    pub objective: Option<ObjectiveKind>,
    #[arg(long)]
    pub strategy: Option<SelectionStrategy>,
    /// Embedding width (64, 128, 256, 512 or 1024).
    #[arg(long)]
    pub demb: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Train on plain batches instead of batches concatenated with themselves.
    #[arg(long)]
    pub no_duplication: bool,
    #[arg(long)]
    pub keep_last: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub fold_seed: Option<u64>,
    /// Append the syllable-count one-hot to probe features.
    #[arg(long)]
    pub fuse_syllables: bool,
    /// Normalise each fold with statistics from its training split only.
    #[arg(long)]
    pub per_fold_normalization: bool,
    /// L2 strength of the logistic probe.
    #[arg(long)]
    pub probe_l2: Option<f64>,
    /// Samples per class when a synthetic corpus is generated.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Use the synthetic variant that hides phrase length.
    #[arg(long)]
    pub length_confusable: bool,
}

impl ExperimentFlags {
    pub fn apply(&self, exp: &mut ExperimentConfig, seed: Option<u64>) {
        let t = &mut exp.train;
        set(&mut t.objective.kind, self.objective);
        set(&mut t.strategy, self.strategy);
        set(&mut t.d_emb, self.demb);
        set(&mut t.epochs, self.epochs);
        set(&mut t.lr, self.lr);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.objective.tau, self.tau);
        set(&mut t.objective.lambda1, self.lambda1);
        set(&mut t.objective.lambda2, self.lambda2);
        set(&mut t.keep_last, self.keep_last);
        set(&mut t.seed, seed);
        if self.no_duplication {
            t.batch_duplication = false;
        }
        set(&mut exp.folds, self.folds);
        set(&mut exp.fold_seed, self.fold_seed);
        set(&mut exp.probe.l2_strength, self.probe_l2);
        exp.fuse_syllables |= self.fuse_syllables;
        exp.per_fold_normalization |= self.per_fold_normalization;
        if self.length_confusable {
            let per_class = exp.synth.per_class;
            exp.synth = SynthSpec { per_class, ..SynthSpec::length_confusable() };
        }
        set(&mut exp.synth.per_class, self.per_class);
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

/// Where the corpus comes from: a CSV file, or the synthetic generator.
#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Corpus CSV; a synthetic corpus is generated when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub exp: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Raw corpus CSV in Hz.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub exp: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of samples to preview.
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[command(flatten)]
    pub exp: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Train only this fold (all folds when omitted).
    #[arg(long)]
    pub fold: Option<usize>,
    #[command(flatten)]
    pub exp: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Accept a checkpoint trained under a different config.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub exp: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory written by `train`.
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// Accept checkpoints trained under a different config.
    #[arg(long)]
    pub force: bool,
    /// Use only the final snapshot of each fold instead of averaging the tail.
    #[arg(long)]
    pub last_only: bool,
    #[command(flatten)]
    pub exp: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Result file written by `probe` or `sweep`.
    #[arg(long)]
    pub input: PathBuf,
    /// Also print per-class metrics of every configuration.
    #[arg(long)]
    pub per_class: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Objectives to compare (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub objectives: Vec<ObjectiveKind>,
    /// Augmentation strategies to compare (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<SelectionStrategy>,
    /// Embedding widths to compare (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub demb_list: Vec<usize>,
    /// Also run the unified and gender-specific protocols for the first
    /// configuration.
    #[arg(long)]
    pub subgroups: bool,
    #[command(flatten)]
    pub exp: ExperimentFlags,
}
