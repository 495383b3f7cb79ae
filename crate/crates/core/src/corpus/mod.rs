//! Accentual-phrase corpus: tone labels, fixed-length F0 contours with a voiced
//! mask, speaker-wise normalisation, stratified folds and a synthetic generator.

mod folds;
mod io;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::{stratified_folds, FoldAssignment};
pub use io::{load_dataset, mask_path, save_dataset};
pub use synth::{synth_generate, SynthSpeaker, SynthSpec};

/// Frames per contour after framing.
pub const FRAMES: usize = 200;

/// Level of a single tonal target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tone {
    High,
    Low,
}

macro_rules! tone_labels {
    ($($name:ident),* $(,)?) => {
        /// The sixteen accentual-phrase tone patterns. Discriminants are the class
        /// indices used by every model and report (alphabetical order).
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum ToneLabel { $($name),* }

        impl ToneLabel {
            pub const ALL: [ToneLabel; 16] = [$(ToneLabel::$name),*];

            pub fn as_str(self) -> &'static str {
                match self { $(ToneLabel::$name => stringify!($name)),* }
            }
        }
    };
}

tone_labels!(H, HH, HHL, HHLH, HHLL, HL, HLH, HLL, L, LH, LHH, LHL, LHLH, LHLL, LL, LLH);

impl ToneLabel {
    pub const COUNT: usize = 16;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn tones(self) -> Vec<Tone> {
        self.as_str().chars().map(|c| if c == 'H' { Tone::High } else { Tone::Low }).collect()
    }

    /// Number of tonal targets, which equals the syllable count for well-formed APs
    /// of up to four syllables.
    pub fn len(self) -> usize {
        self.as_str().len()
    }
}

impl fmt::Display for ToneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        ToneLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == upper)
            .ok_or_else(|| Error::Input(format!("unknown tone label `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            other => Err(Error::Input(format!("unknown gender `{other}`"))),
        }
    }
}

/// A pitch sequence with its voiced/valid mask. Unvoiced frames always hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Contour {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl F0Contour {
    /// Builds a contour, forcing the sentinel 0 into every unvoiced frame.
    pub fn new(mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::Dimension(format!("{} values but {} mask entries", values.len(), mask.len())));
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(F0Contour { values, mask })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(&v, _)| v)
    }

    /// Applies `f` to every voiced value; unvoiced frames stay at 0.
    pub(crate) fn map_voiced(&self, mut f: impl FnMut(f64) -> f64) -> F0Contour {
        let values = self.values.iter().zip(&self.mask).map(|(&v, &m)| if m { f(v) } else { 0.0 }).collect();
        F0Contour { values, mask: self.mask.clone() }
    }

    /// Splits into the first `at` frames and the rest.
    pub fn split_at(&self, at: usize) -> (F0Contour, F0Contour) {
        let (va, vb) = self.values.split_at(at);
        let (ma, mb) = self.mask.split_at(at);
        (F0Contour { values: va.to_vec(), mask: ma.to_vec() }, F0Contour { values: vb.to_vec(), mask: mb.to_vec() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub contour: F0Contour,
    pub label: ToneLabel,
    pub speaker_id: String,
    pub gender: Gender,
    pub syllable_count: u32,
}

impl Sample {
    /// True when the tone string has more targets than the AP has syllables.
    /// Long APs carry at most four tones, so only the short side is a mismatch.
    pub fn label_mismatch(&self) -> bool {
        (self.syllable_count as usize) < self.label.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub min_hz: f64,
    pub max_hz: f64,
}

impl SpeakerStats {
    pub fn is_degenerate(&self) -> bool {
        !(self.max_hz > self.min_hz)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub speaker_stats: BTreeMap<String, SpeakerStats>,
    /// Set once values are in the normalised [0, 1] domain.
    pub normalized: bool,
}

impl Dataset {
    /// Builds a dataset and computes speaker statistics over voiced frames.
    pub fn new(samples: Vec<Sample>, normalized: bool) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mismatched = samples.iter().filter(|s| s.label_mismatch()).count();
        if mismatched > 0 {
            warn!("{mismatched} samples have a tone label inconsistent with their syllable count");
        }
        let speaker_stats = speaker_stats(samples.iter());
        Ok(Dataset { samples, speaker_stats, normalized })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<ToneLabel> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> [usize; ToneLabel::COUNT] {
        let mut counts = [0; ToneLabel::COUNT];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }

    /// Subset by sample index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples: Vec<Sample> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Dataset::new(samples, self.normalized)
    }
}

/// Per-speaker (min, max) over voiced frames. Speakers without any voiced frame
/// get a degenerate (0, 0) entry so every speaker is covered.
pub fn speaker_stats<'a>(samples: impl Iterator<Item = &'a Sample>) -> BTreeMap<String, SpeakerStats> {
    let mut stats: BTreeMap<String, Option<(f64, f64)>> = BTreeMap::new();
    for s in samples {
        let entry = stats.entry(s.speaker_id.clone()).or_insert(None);
        for v in s.contour.voiced() {
            *entry = Some(match *entry {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
    }
    stats
        .into_iter()
        .map(|(k, v)| {
            let (min_hz, max_hz) = v.unwrap_or((0.0, 0.0));
            (k, SpeakerStats { min_hz, max_hz })
        })
        .collect()
}

/// Speaker-wise min-max normalisation with the dataset's own statistics.
pub fn normalize_speaker(dataset: &Dataset) -> Result<Dataset> {
    normalize_with_stats(dataset, &dataset.speaker_stats)
}

/// Min-max normalisation with externally supplied statistics (for example,
/// statistics computed on a training fold only). Values falling outside the
/// supplied range are clamped to [0, 1].
pub fn normalize_with_stats(dataset: &Dataset, stats: &BTreeMap<String, SpeakerStats>) -> Result<Dataset> {
    let mut warned = std::collections::BTreeSet::new();
    let mut samples = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        let st = stats.get(&s.speaker_id).ok_or_else(|| Error::MissingSpeakerStats(s.speaker_id.clone()))?;
        let contour = if st.is_degenerate() {
            if warned.insert(s.speaker_id.clone()) {
                warn!("speaker `{}` has a degenerate pitch range; voiced frames set to 0.5", s.speaker_id);
            }
            s.contour.map_voiced(|_| 0.5)
        } else {
            let range = st.max_hz - st.min_hz;
            s.contour.map_voiced(|v| ((v - st.min_hz) / range).clamp(0.0, 1.0))
        };
        samples.push(Sample { contour, ..s.clone() });
    }
    Dataset::new(samples, true)
}

/// Frames a raw contour to exactly `frames` frames: right-pads short inputs with
/// unvoiced frames and linearly resamples long ones (mask by nearest neighbour).
pub fn fix_length(raw_values: &[f64], raw_mask: &[bool], frames: usize) -> Result<F0Contour> {
    if raw_values.is_empty() {
        return Err(Error::EmptyContour);
    }
    if raw_values.len() != raw_mask.len() {
        return Err(Error::Dimension(format!("{} values but {} mask entries", raw_values.len(), raw_mask.len())));
    }
    let n = raw_values.len();
    if n <= frames {
        let mut values = raw_values.to_vec();
        let mut mask = raw_mask.to_vec();
        values.resize(frames, 0.0);
        mask.resize(frames, false);
        return F0Contour::new(values, mask);
    }
    let mut values = Vec::with_capacity(frames);
    let mut mask = Vec::with_capacity(frames);
    let step = (n - 1) as f64 / (frames.max(2) - 1) as f64;
    for j in 0..frames {
        let pos = j as f64 * step;
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        let nearest = if frac <= 0.5 { lo } else { hi };
        if !raw_mask[nearest] {
            values.push(0.0);
            mask.push(false);
            continue;
        }
        let other = if nearest == lo { hi } else { lo };
        let v = if raw_mask[other] {
            raw_values[lo] + (raw_values[hi] - raw_values[lo]) * frac
        } else {
            raw_values[nearest]
        };
        values.push(v);
        mask.push(true);
    }
    F0Contour::new(values, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(speaker: &str, values: &[f64]) -> Sample {
        let mask: Vec<bool> = values.iter().map(|&v| v > 0.0).collect();
        Sample {
            contour: F0Contour::new(values.to_vec(), mask).unwrap(),
            label: ToneLabel::LH,
            speaker_id: speaker.into(),
            gender: Gender::Female,
            syllable_count: 2,
        }
    }

    #[test]
    fn sixteen_labels_round_trip() {
        let mut seen = std::collections::HashSet::new();
        for l in ToneLabel::ALL {
            assert_eq!(l.as_str().parse::<ToneLabel>().unwrap(), l);
            assert_eq!(ToneLabel::from_index(l.index()), Some(l));
            seen.insert(l.as_str());
        }
        assert_eq!(seen.len(), 16);
        assert!("HLHL".parse::<ToneLabel>().is_err());
    }

    #[test]
    fn speaker_stats_are_min_max_of_voiced() {
        let ds = Dataset::new(vec![sample("S", &[100.0, 0.0]), sample("S", &[300.0, 200.0])], false).unwrap();
        assert_eq!(ds.speaker_stats["S"], SpeakerStats { min_hz: 100.0, max_hz: 300.0 });
    }

    #[test]
    fn normalization_maps_endpoints_and_midpoint() {
        let ds = Dataset::new(vec![sample("S", &[100.0, 200.0, 300.0, 0.0])], false).unwrap();
        let n = normalize_speaker(&ds).unwrap();
        assert_eq!(n.samples[0].contour.values(), &[0.0, 0.5, 1.0, 0.0]);
        assert_eq!(n.samples[0].contour.mask(), ds.samples[0].contour.mask());
        assert_eq!(n.speaker_stats["S"], SpeakerStats { min_hz: 0.0, max_hz: 1.0 });
        // idempotent once statistics are recomputed
        assert_eq!(normalize_speaker(&n).unwrap(), n);
    }

    #[test]
    fn degenerate_speaker_maps_to_half() {
        let ds = Dataset::new(vec![sample("D", &[150.0, 150.0, 0.0])], false).unwrap();
        let n = normalize_speaker(&ds).unwrap();
        assert_eq!(n.samples[0].contour.values(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn fix_length_identity_pad_and_resample() {
        let vals: Vec<f64> = (0..200).map(|i| i as f64 + 1.0).collect();
        let mask = vec![true; 200];
        let c = fix_length(&vals, &mask, 200).unwrap();
        assert_eq!(c.values(), &vals[..]);

        let c = fix_length(&vals[..100], &mask[..100], 200).unwrap();
        assert!(c.mask()[100..].iter().all(|&m| !m));
        assert!(c.values()[100..].iter().all(|&v| v == 0.0));

        assert!(matches!(fix_length(&[], &[], 200), Err(Error::EmptyContour)));
    }

    #[test]
    fn fix_length_resampled_ramp_is_monotone_and_matches_interpolation() {
        let n = 400;
        let ramp: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let c = fix_length(&ramp, &vec![true; n], 200).unwrap();
        assert!(c.values().windows(2).all(|w| w[1] >= w[0]));
        // direct interpolation of a linear ramp is exact
        for (j, &v) in c.values().iter().enumerate() {
            assert!((v - j as f64 / 199.0).abs() < 1e-12);
        }
    }
}
