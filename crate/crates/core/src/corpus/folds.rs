use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, ToneLabel};
use crate::error::{Error, Result};
use crate::rng;

/// Per-sample fold index for k-fold cross-validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    /// Indices held out in `fold`, in dataset order.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Indices used for fitting when `fold` is held out, in dataset order.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment: each class is shuffled with a seeded stream and
/// dealt round-robin. The deal position carries over between classes so total
/// fold sizes stay balanced as well.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ToneLabel::COUNT];
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class[s.label.index()].push(i);
    }
    let sparse: Vec<&str> =
        ToneLabel::ALL.iter().filter(|l| (1..k).contains(&by_class[l.index()].len())).map(|l| l.as_str()).collect();
    if !sparse.is_empty() {
        warn!("classes with fewer than {k} samples leave some folds without them: {}", sparse.join(", "));
    }

    let mut assignment = vec![0; dataset.len()];
    let mut cursor = 0usize;
    for (class, members) in by_class.iter_mut().enumerate() {
        let mut r = rng::rng(rng::derive(seed, class as u64));
        members.shuffle(&mut r);
        for &i in members.iter() {
            assignment[i] = cursor % k;
            cursor += 1;
        }
    }
    Ok(FoldAssignment { k, seed, assignment })
}
