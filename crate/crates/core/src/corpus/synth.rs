//! Synthetic accentual phrases built from schematic tonal targets.
//!
//! Each tone of the label is realised on its own syllable. A syllable carries a
//! point target (low or high level plus Gaussian jitter) at its centre and the
//! contour interpolates linearly between neighbouring targets, flat before the
//! first and after the last. Syllable boundaries may carry a short unvoiced gap
//! (obstruent onset), and frames drop out at random to mimic pitch-tracking
//! loss. Values are produced in Hz inside the speaker's range.
//!
//! On top of the tonal targets every phrase draws its own register shift, pitch
//! span, declination slope and a slow wandering drift. None of these depend on
//! the label; they are what an encoder has to learn to ignore.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, F0Contour, Gender, Sample, Tone, ToneLabel, FRAMES};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpeaker {
    pub speaker_id: String,
    pub gender: Gender,
    pub min_hz: f64,
    pub max_hz: f64,
}

impl SynthSpeaker {
    pub fn new(id: &str, gender: Gender, min_hz: f64, max_hz: f64) -> Self {
        SynthSpeaker { speaker_id: id.to_string(), gender, min_hz, max_hz }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Samples generated for every label in `labels`.
    pub per_class: usize,
    pub labels: Vec<ToneLabel>,
    /// Normalised level of an L target.
    pub tone_low: f64,
    /// Normalised level of an H target.
    pub tone_high: f64,
    /// Standard deviation of the per-target level jitter.
    pub target_jitter_sd: f64,
    /// Relative half-width of the uniform syllable-duration jitter.
    pub duration_jitter: f64,
    /// Probability that a voiced frame is lost.
    pub unvoiced_dropout: f64,
    /// Standard deviation of per-frame level noise.
    pub frame_noise_sd: f64,
    /// Standard deviation of the per-phrase shift added to every target.
    pub register_sd: f64,
    /// Standard deviation of the log factor scaling the H/L distance of a phrase.
    pub span_sd: f64,
    /// Largest fall in level over the whole frame window; each phrase draws its
    /// slope uniformly between zero and this.
    pub declination: f64,
    /// Amplitude scale of the slow drift (a sum of low-frequency sinusoids).
    pub drift_sd: f64,
    /// Mean voiced frames per syllable.
    pub syllable_frames: f64,
    /// Unvoiced frames between consecutive syllables.
    pub boundary_gap: usize,
    /// Upper bound of the random unvoiced lead-in.
    pub onset_max: usize,
    /// When set, the voiced span is stretched to this many frames whatever the
    /// syllable count, which hides phrase length from the contour.
    pub fixed_span: Option<usize>,
    pub speaker_pool: Vec<SynthSpeaker>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            per_class: 100,
            labels: ToneLabel::ALL.to_vec(),
            tone_low: 0.2,
            tone_high: 0.8,
            target_jitter_sd: 0.02,
            duration_jitter: 0.3,
            unvoiced_dropout: 0.05,
            frame_noise_sd: 0.01,
            register_sd: 0.12,
            span_sd: 0.35,
            declination: 0.35,
            drift_sd: 0.08,
            syllable_frames: 40.0,
            boundary_gap: 3,
            onset_max: 10,
            fixed_span: None,
            speaker_pool: default_speakers(),
        }
    }
}

impl SynthSpec {
    /// Variant where phrase length and syllable boundaries leave no trace in the
    /// contour, so patterns differing only in how many syllables share a level
    /// (H/HH, L/LL, HL/HHLL) look alike.
    pub fn length_confusable() -> Self {
        SynthSpec { boundary_gap: 0, fixed_span: Some(160), ..SynthSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.speaker_pool.is_empty() {
            return bad("speaker_pool is empty");
        }
        if !(0.0 <= self.tone_low && self.tone_low < self.tone_high && self.tone_high <= 1.0) {
            return bad("need 0 <= tone_low < tone_high <= 1");
        }
        if !(0.0..=1.0).contains(&self.unvoiced_dropout) {
            return bad("unvoiced_dropout must be a probability");
        }
        let spreads = [self.target_jitter_sd, self.frame_noise_sd, self.register_sd, self.span_sd, self.drift_sd];
        if spreads.iter().any(|&v| !(v >= 0.0)) || !(self.declination >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return bad("duration_jitter must lie in [0, 1)");
        }
        if self.syllable_frames < 1.0 {
            return bad("syllable_frames must be at least 1");
        }
        if self.fixed_span.is_some_and(|s| s == 0 || s > FRAMES) {
            return bad("fixed_span must lie in 1..=200");
        }
        for sp in &self.speaker_pool {
            if !(sp.min_hz > 0.0 && sp.max_hz > sp.min_hz) {
                return bad(&format!("speaker `{}` needs 0 < min_hz < max_hz", sp.speaker_id));
            }
        }
        Ok(())
    }
}

/// Three female and three male voices with typical broadcast pitch ranges.
pub fn default_speakers() -> Vec<SynthSpeaker> {
    vec![
        SynthSpeaker::new("F01", Gender::Female, 170.0, 330.0),
        SynthSpeaker::new("F02", Gender::Female, 190.0, 360.0),
        SynthSpeaker::new("F03", Gender::Female, 160.0, 300.0),
        SynthSpeaker::new("M01", Gender::Male, 85.0, 170.0),
        SynthSpeaker::new("M02", Gender::Male, 95.0, 190.0),
        SynthSpeaker::new("M03", Gender::Male, 80.0, 150.0),
    ]
}

/// Generates `per_class` phrases per label, grouped by label in `spec.labels`
/// order. Byte-identical for a fixed seed.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.per_class * spec.labels.len());
    for &label in &spec.labels {
        for i in 0..spec.per_class {
            let mut r = rng::rng(rng::derive(seed, (label.index() * 1_000_003 + i) as u64));
            samples.push(synth_sample(spec, label, &mut r));
        }
    }
    Dataset::new(samples, false)
}

fn synth_sample(spec: &SynthSpec, label: ToneLabel, r: &mut rng::Rng) -> Sample {
    let speaker = spec.speaker_pool.choose(r).expect("validated non-empty pool");
    let tones = label.tones();
    let n = tones.len();
    let level_noise = Normal::new(0.0, spec.target_jitter_sd).expect("validated sd");
    let frame_noise = Normal::new(0.0, spec.frame_noise_sd).expect("validated sd");

    let mut durations: Vec<f64> = (0..n)
        .map(|_| {
            let j = if spec.duration_jitter > 0.0 {
                r.random_range(-spec.duration_jitter..=spec.duration_jitter)
            } else {
                0.0
            };
            spec.syllable_frames * (1.0 + j)
        })
        .collect();
    let onset = r.random_range(0..=spec.onset_max) as f64;
    let gaps = (spec.boundary_gap * (n - 1)) as f64;
    let voiced_total: f64 = durations.iter().sum();
    let target_total = match spec.fixed_span {
        Some(span) => (span as f64 - gaps).max(n as f64),
        None => voiced_total.min(FRAMES as f64 - onset - gaps).max(n as f64),
    };
    let scale = target_total / voiced_total;
    durations.iter_mut().for_each(|d| *d *= scale);

    let phrase = PhraseShape::draw(spec, r);
    // syllable frame intervals and target points
    let mut spans = Vec::with_capacity(n);
    let mut cursor = onset;
    for (i, &d) in durations.iter().enumerate() {
        spans.push((cursor, cursor + d));
        cursor += d;
        if i + 1 < n {
            cursor += spec.boundary_gap as f64;
        }
    }
    let targets: Vec<(f64, f64)> = spans
        .iter()
        .zip(&tones)
        .map(|(&(a, b), tone)| {
            let base = match tone {
                Tone::High => spec.tone_high,
                Tone::Low => spec.tone_low,
            };
            ((a + b) / 2.0, base + level_noise.sample(r))
        })
        .map(|(x, level)| (x, phrase.target(spec, level)))
        .collect();

    let mut values = vec![0.0; FRAMES];
    let mut mask = vec![false; FRAMES];
    for t in 0..FRAMES {
        let x = t as f64 + 0.5;
        if !spans.iter().any(|&(a, b)| x >= a && x < b) {
            continue;
        }
        if spec.unvoiced_dropout > 0.0 && r.random_bool(spec.unvoiced_dropout) {
            continue;
        }
        let level = (interpolate(&targets, x) + phrase.contour(x) + frame_noise.sample(r)).clamp(0.0, 1.0);
        values[t] = speaker.min_hz + level * (speaker.max_hz - speaker.min_hz);
        mask[t] = true;
    }
    Sample {
        contour: F0Contour::new(values, mask).expect("equal lengths"),
        label,
        speaker_id: speaker.speaker_id.clone(),
        gender: speaker.gender,
        syllable_count: n as u32,
    }
}

/// Label-independent variation drawn once per phrase.
struct PhraseShape {
    register: f64,
    span: f64,
    slope: f64,
    drift: Vec<(f64, f64, f64)>,
}

impl PhraseShape {
    fn draw(spec: &SynthSpec, r: &mut rng::Rng) -> Self {
        let register = Normal::new(0.0, spec.register_sd).expect("validated sd").sample(r);
        let span = Normal::new(0.0, spec.span_sd).expect("validated sd").sample(r).exp();
        let slope = if spec.declination > 0.0 { r.random_range(0.0..=spec.declination) } else { 0.0 };
        let amp = Normal::new(0.0, spec.drift_sd).expect("validated sd");
        // periods between a quarter and the whole of the frame window
        let drift = (1..=3)
            .map(|k| {
                let cycles = k as f64 + r.random_range(0.0..1.0);
                let phase = r.random_range(0.0..std::f64::consts::TAU);
                (amp.sample(r) / k as f64, cycles, phase)
            })
            .collect();
        PhraseShape { register, span, slope, drift }
    }

    /// Moves a tonal target by the register shift and span scaling.
    fn target(&self, spec: &SynthSpec, level: f64) -> f64 {
        let mid = (spec.tone_low + spec.tone_high) / 2.0;
        mid + (level - mid) * self.span + self.register
    }

    /// Time-varying offset at frame position `x`.
    fn contour(&self, x: f64) -> f64 {
        let u = x / FRAMES as f64;
        let wander: f64 = self.drift.iter().map(|&(a, c, p)| a * (std::f64::consts::TAU * c * u + p).sin()).sum();
        self.slope * (0.5 - u) + wander
    }
}

/// Piecewise-linear through `(position, level)` points, flat outside.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = points.windows(2).position(|w| x >= w[0].0 && x < w[1].0).unwrap_or(0);
    let (x0, y0) = points[k];
    let (x1, y1) = points[k + 1];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}
