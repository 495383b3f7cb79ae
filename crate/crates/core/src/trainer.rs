//! Per-fold encoder training, checkpoints and frozen-feature extraction.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{compose, AugmentParams, SelectionStrategy};
use crate::corpus::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::nn::encoder::EMBEDDING_WIDTHS;
use crate::nn::{embed, Architecture, EncoderInput, Graph, ModelParams, Optimizer, OptimizerConfig};
use crate::objectives::{objective_loss, ObjectiveSpec, TrainBatch};
use crate::rng::{derive, item_seed, rng};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    pub strategy: SelectionStrategy,
    pub augment: AugmentParams,
    pub d_emb: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Concatenate every mini-batch with itself before augmenting.
    pub batch_duplication: bool,
    /// Number of final-epoch snapshots retained for evaluation averaging.
    pub keep_last: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: ObjectiveSpec::default(),
            strategy: SelectionStrategy::D4,
            augment: AugmentParams::default(),
            d_emb: 64,
            lr: 1e-2,
            weight_decay: 1e-4,
            batch_size: 64,
            epochs: 50,
            seed: 42,
            batch_duplication: true,
            keep_last: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.augment.validate()?;
        self.optimizer().validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !EMBEDDING_WIDTHS.contains(&self.d_emb) {
            return Err(Error::Config(format!("d_emb must be one of {EMBEDDING_WIDTHS:?}, got {}", self.d_emb)));
        }
        if self.keep_last == 0 {
            return Err(Error::Config("keep_last must be at least 1".into()));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::standard(self.d_emb)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig { lr: self.lr, weight_decay: self.weight_decay, ..Default::default() }
    }
}

/// Encoder and head weights after some number of epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderCheckpoint {
    pub version: u32,
    pub config_hash: String,
    pub fold: usize,
    pub epoch: usize,
    pub d_emb: usize,
    pub loss_history: Vec<f64>,
    pub params: ModelParams<f64>,
}

impl EncoderCheckpoint {
    pub fn new<T: Scalar>(params: &ModelParams<T>, fold: usize, epoch: usize, history: &[f64], hash: &str) -> Self {
        EncoderCheckpoint {
            version: CHECKPOINT_VERSION,
            config_hash: hash.to_string(),
            fold,
            epoch,
            d_emb: params.arch.d_emb(),
            loss_history: history.to_vec(),
            params: params.cast(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint and, unless `force`, rejects one produced under a
    /// different configuration hash.
    pub fn load(path: impl AsRef<Path>, expected_hash: Option<&str>, force: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: EncoderCheckpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        ckpt.check_shapes()?;
        if let Some(h) = expected_hash {
            if h != ckpt.config_hash && !force {
                return Err(Error::HashMismatch { expected: h.to_string(), found: ckpt.config_hash });
            }
        }
        Ok(ckpt)
    }

    fn check_shapes(&self) -> Result<()> {
        let fresh = ModelParams::<f64>::init(&self.params.arch, 0)?;
        let ok = self.d_emb == self.params.arch.d_emb()
            && fresh.tensors().iter().zip(self.params.tensors()).all(|(a, b)| a.shape() == b.shape())
            && fresh.tensors().len() == self.params.tensors().len();
        if ok {
            Ok(())
        } else {
            Err(Error::Schema("checkpoint tensors do not match their architecture".into()))
        }
    }
}

/// Result of training one fold: the final checkpoint plus the last few epoch
/// snapshots (the final one included), oldest first.
#[derive(Clone, Debug)]
pub struct FoldRun {
    pub checkpoint: EncoderCheckpoint,
    pub tail: Vec<EncoderCheckpoint>,
}

/// Encoder-ready batch of the given dataset rows.
pub fn encoder_input<T: Scalar>(dataset: &Dataset, indices: &[usize]) -> Result<EncoderInput<T>> {
    EncoderInput::from_rows(indices.iter().map(|&i| {
        let c = &dataset.samples[i].contour;
        (c.values(), c.mask())
    }))
}

/// Assembles one training batch from dataset rows `indices`: clean rows, and
/// when the objective needs them, augmented views of the (optionally
/// duplicated) batch with per-row seeds `seed ⊕ row`.
pub fn make_batch<T: Scalar>(
    dataset: &Dataset,
    indices: &[usize],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainBatch<T>> {
    if indices.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let copies = if config.batch_duplication { 2 } else { 1 };
    let clean = encoder_input(dataset, indices)?;
    let labels = indices.iter().map(|&i| dataset.samples[i].label.index()).collect();
    let augmented = if config.objective.kind.uses_augmentation() {
        let views: Vec<_> = (0..copies * indices.len())
            .map(|r| {
                let c = &dataset.samples[indices[r % indices.len()]].contour;
                compose(c, config.strategy, &config.augment, item_seed(seed, r))
            })
            .collect();
        Some(EncoderInput::from_rows(views.iter().map(|c| (c.values(), c.mask())))?)
    } else {
        None
    };
    Ok(TrainBatch { clean, augmented, labels, copies })
}

fn write_diagnostic<T: Scalar>(
    out_dir: Option<&Path>,
    params: &ModelParams<T>,
    fold: usize,
    epoch: usize,
    history: &[f64],
    hash: &str,
) {
    if let Some(dir) = out_dir {
        let path = dir.join(format!("fold{fold}_diverged.json"));
        match EncoderCheckpoint::new(params, fold, epoch, history, hash).save(&path) {
            Ok(()) => log::error!("diagnostic checkpoint written to {}", path.display()),
            Err(e) => log::error!("could not write diagnostic checkpoint: {e}"),
        }
    }
}

fn fold_seed(config: &TrainConfig, fold: usize) -> u64 {
    derive(config.seed, 0xF01D + fold as u64)
}

/// Parameters a fold starts training from.
pub fn fold_init<T: Scalar>(config: &TrainConfig, fold: usize) -> Result<ModelParams<T>> {
    ModelParams::init(&config.architecture(), fold_seed(config, fold))
}

/// Trains encoder and heads on every sample outside `fold`.
///
/// `out_dir`, when given, receives a diagnostic checkpoint if the loss
/// diverges.
pub fn train_fold<T: Scalar>(
    dataset: &Dataset,
    folds: &FoldAssignment,
    fold: usize,
    config: &TrainConfig,
    config_hash: &str,
    out_dir: Option<&Path>,
) -> Result<FoldRun> {
    config.validate()?;
    if folds.assignment.len() != dataset.len() {
        return Err(Error::Protocol(format!(
            "fold assignment covers {} samples, dataset has {}",
            folds.assignment.len(),
            dataset.len()
        )));
    }
    if fold >= folds.k {
        return Err(Error::Protocol(format!("fold {fold} out of range for k={}", folds.k)));
    }
    let fold_seed = fold_seed(config, fold);
    let mut params = fold_init::<T>(config, fold)?;
    let mut opt = Optimizer::new(&params.tensors(), config.optimizer())?;
    let mut order = folds.train_indices(fold);
    let copies = if config.batch_duplication { 2 } else { 1 };
    let mut history = Vec::with_capacity(config.epochs);
    let first_kept = config.epochs.saturating_sub(config.keep_last - 1).max(1);
    let mut tail = Vec::new();
    if config.epochs == 0 {
        tail.push(EncoderCheckpoint::new(&params, fold, 0, &history, config_hash));
    }

    for epoch in 1..=config.epochs {
        let epoch_seed = derive(fold_seed, epoch as u64);
        order.shuffle(&mut rng(epoch_seed));
        let mut total = 0.0;
        let mut batches = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() * copies < 2 {
                continue;
            }
            let batch = make_batch::<T>(dataset, chunk, config, derive(epoch_seed, step as u64 + 1))?;
            let mut g = Graph::new();
            let vars = params.register(&mut g);
            let loss_var = objective_loss(&mut g, &vars, &batch, &config.objective)?;
            let loss = g.value(loss_var).data()[0].as_f64();
            if !loss.is_finite() {
                write_diagnostic(out_dir, &params, fold, epoch, &history, config_hash);
                return Err(Error::Diverged { epoch, step, loss });
            }
            g.backward(loss_var)?;
            let grads = vars.grads(&g);
            drop(g);
            opt.step(&mut params.tensors_mut(), &grads)?;
            if !params.is_finite() {
                write_diagnostic(out_dir, &params, fold, epoch, &history, config_hash);
                return Err(Error::Diverged { epoch, step, loss: f64::NAN });
            }
            total += loss;
            batches += 1;
            debug!("fold {fold} epoch {epoch} step {step} loss {loss:.6}");
        }
        let mean = if batches == 0 { 0.0 } else { total / batches as f64 };
        history.push(mean);
        info!("fold {fold} epoch {epoch}/{} loss {mean:.6}", config.epochs);
        if epoch >= first_kept {
            tail.push(EncoderCheckpoint::new(&params, fold, epoch, &history, config_hash));
        }
    }
    let checkpoint = tail.last().cloned().expect("at least one snapshot");
    Ok(FoldRun { checkpoint, tail })
}

/// Frozen-encoder embeddings (no heads, no augmentation), one row per sample
/// in dataset order.
pub fn extract_features<T: Scalar>(checkpoint: &EncoderCheckpoint, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    if checkpoint.d_emb != checkpoint.params.arch.d_emb() {
        return Err(Error::Contract(format!(
            "checkpoint records d_emb {} but its encoder produces {}",
            checkpoint.d_emb,
            checkpoint.params.arch.d_emb()
        )));
    }
    let params: ModelParams<T> = checkpoint.params.cast();
    let all: Vec<usize> = (0..dataset.len()).collect();
    let input = encoder_input::<T>(dataset, &all)?;
    embed(&params, &input, 256)
}

/// Writes `epoch,loss` rows preceded by a config-hash comment.
pub fn write_loss_csv(path: impl AsRef<Path>, history: &[f64], config_hash: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("# config_hash: {config_hash}\nepoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", e + 1, l));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
