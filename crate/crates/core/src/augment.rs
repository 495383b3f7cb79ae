//! Stochastic contour transforms and the strategies that compose them into an
//! augmented view. Every transform clamps voiced values to `[0, 1]` and never
//! turns an unvoiced frame voiced.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::corpus::F0Contour;
use crate::error::{Error, Result};
use crate::rng::{derive, rng, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transform {
    Jitter,
    Scale,
    Mask,
    MagnitudeShift,
    TimeWarp,
}

impl Transform {
    pub const FULL: [Transform; 5] =
        [Transform::Jitter, Transform::Scale, Transform::Mask, Transform::MagnitudeShift, Transform::TimeWarp];
    pub const BASIC: [Transform; 3] = [Transform::Jitter, Transform::Scale, Transform::Mask];

    pub fn code(self) -> &'static str {
        match self {
            Transform::Jitter => "J",
            Transform::Scale => "S",
            Transform::Mask => "M",
            Transform::MagnitudeShift => "MS",
            Transform::TimeWarp => "TW",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub jitter_sd: f64,
    pub scale_range: (f64, f64),
    pub mask_ratio: f64,
    pub shift_range: (f64, f64),
    /// Apply the magnitude shift multiplicatively (`x * e^b`), i.e. as a
    /// constant offset on log pitch, instead of additively.
    pub shift_log_space: bool,
    pub warp_knots: usize,
    /// Standard deviation of knot displacement, in units of the knot spacing.
    pub warp_sd: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            jitter_sd: 0.02,
            scale_range: (0.8, 1.2),
            mask_ratio: 0.2,
            shift_range: (-0.1, 0.1),
            shift_log_space: false,
            warp_knots: 4,
            warp_sd: 0.2,
        }
    }
}

impl AugmentParams {
    /// Parameters under which every transform is the identity.
    pub fn identity() -> Self {
        AugmentParams {
            jitter_sd: 0.0,
            scale_range: (1.0, 1.0),
            mask_ratio: 0.0,
            shift_range: (0.0, 0.0),
            shift_log_space: false,
            warp_knots: 4,
            warp_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(self.jitter_sd >= 0.0)
            || !range_ok(self.scale_range)
            || !range_ok(self.shift_range)
            || !(0.0..=1.0).contains(&self.mask_ratio)
            || self.warp_knots < 2
            || !(self.warp_sd >= 0.0)
        {
            return Err(Error::Config(format!("invalid augmentation parameters {self:?}")));
        }
        Ok(())
    }
}

/// How many transforms are drawn and from which pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionStrategy {
    D1,
    D2,
    D3,
    #[default]
    D4,
    D5,
    D6,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 6] = [
        SelectionStrategy::D1,
        SelectionStrategy::D2,
        SelectionStrategy::D3,
        SelectionStrategy::D4,
        SelectionStrategy::D5,
        SelectionStrategy::D6,
    ];

    /// Inclusive bounds on the number of transforms applied.
    pub fn count_range(self) -> (usize, usize) {
        match self {
            SelectionStrategy::D1 | SelectionStrategy::D5 => (1, 1),
            SelectionStrategy::D2 | SelectionStrategy::D6 => (2, 2),
            SelectionStrategy::D3 => (3, 3),
            SelectionStrategy::D4 => (2, 3),
        }
    }

    pub fn pool(self) -> &'static [Transform] {
        match self {
            SelectionStrategy::D5 | SelectionStrategy::D6 => &Transform::BASIC,
            _ => &Transform::FULL,
        }
    }

    pub fn describe(self) -> String {
        let (lo, hi) = self.count_range();
        let count = if lo == hi { lo.to_string() } else { format!("{lo}~{hi}") };
        let pool = if self.pool().len() == 5 { "Full".to_string() } else { "{J, S, M}".to_string() };
        format!("{count} random ({pool})")
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionStrategy::ALL
            .into_iter()
            .find(|d| d.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Input(format!("unknown selection strategy `{s}` (expected D1..D6)")))
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn draw_uniform(r: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).expect("validated range").sample(r)
    }
}

/// Adds independent Gaussian noise to every voiced frame.
pub fn jitter(c: &F0Contour, sd: f64, seed: u64) -> F0Contour {
    if sd == 0.0 {
        return c.map_voiced(clamp01);
    }
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sd).expect("sd is finite and non-negative");
    c.map_voiced(|v| clamp01(v + noise.sample(&mut r)))
}

/// Multiplies every voiced frame by one factor drawn from `range`.
pub fn scale(c: &F0Contour, range: (f64, f64), seed: u64) -> F0Contour {
    let f = draw_uniform(&mut rng(seed), range);
    c.map_voiced(|v| clamp01(v * f))
}

/// Unvoices `floor(ratio * voiced)` voiced frames chosen uniformly.
pub fn mask_aug(c: &F0Contour, ratio: f64, seed: u64) -> F0Contour {
    let voiced: Vec<usize> = (0..c.len()).filter(|&i| c.mask()[i]).collect();
    let n = ((ratio * voiced.len() as f64).floor() as usize).min(voiced.len());
    let mut values: Vec<f64> = c.values().iter().map(|&v| clamp01(v)).collect();
    let mut mask = c.mask().to_vec();
    for j in index::sample(&mut rng(seed), voiced.len(), n) {
        mask[voiced[j]] = false;
        values[voiced[j]] = 0.0;
    }
    F0Contour::new(values, mask).expect("lengths preserved")
}

/// Adds one constant drawn from `range` to every voiced frame (or multiplies by
/// its exponential when `log_space`).
pub fn magnitude_shift(c: &F0Contour, range: (f64, f64), log_space: bool, seed: u64) -> F0Contour {
    let b = draw_uniform(&mut rng(seed), range);
    if log_space {
        let f = b.exp();
        c.map_voiced(|v| clamp01(v * f))
    } else {
        c.map_voiced(|v| clamp01(v + b))
    }
}

/// Knot pairs `(output position, source position)` of a monotone warp of
/// `[0, len - 1]` with fixed endpoints.
pub fn warp_knots(len: usize, knots: usize, sd: f64, seed: u64) -> Vec<(f64, f64)> {
    let last = len.saturating_sub(1) as f64;
    let knots = knots.max(2);
    let spacing = last / (knots - 1) as f64;
    let anchors: Vec<f64> = (0..knots).map(|j| j as f64 * spacing).collect();
    let mut src = anchors.clone();
    if sd > 0.0 && knots > 2 {
        let mut r = rng(seed);
        let noise = Normal::new(0.0, sd * spacing).expect("finite sd");
        for s in &mut src[1..knots - 1] {
            *s = (*s + noise.sample(&mut r)).clamp(0.0, last);
        }
        src[1..knots - 1].sort_by(f64::total_cmp);
    }
    anchors.into_iter().zip(src).collect()
}

/// Evaluates a piecewise-linear warp at output position `t`.
pub fn warp_at(knots: &[(f64, f64)], t: f64) -> f64 {
    let j = knots.partition_point(|&(a, _)| a <= t).clamp(1, knots.len() - 1);
    let (a0, s0) = knots[j - 1];
    let (a1, s1) = knots[j];
    if a1 == a0 {
        return s0;
    }
    s0 + (s1 - s0) * (t - a0) / (a1 - a0)
}

/// Resamples the contour along a random monotone time warp: values linearly,
/// mask by nearest neighbour.
pub fn time_warp(c: &F0Contour, knots: usize, sd: f64, seed: u64) -> F0Contour {
    let n = c.len();
    if sd == 0.0 || n < 2 {
        return c.map_voiced(clamp01);
    }
    let kn = warp_knots(n, knots, sd, seed);
    let (vals, mask) = (c.values(), c.mask());
    let mut out_v = Vec::with_capacity(n);
    let mut out_m = Vec::with_capacity(n);
    for t in 0..n {
        let s = warp_at(&kn, t as f64).clamp(0.0, (n - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = s - lo as f64;
        let nearest = if frac <= 0.5 { lo } else { hi };
        if !mask[nearest] {
            out_v.push(0.0);
            out_m.push(false);
            continue;
        }
        let other = if nearest == lo { hi } else { lo };
        let v = if mask[other] { vals[lo] + (vals[hi] - vals[lo]) * frac } else { vals[nearest] };
        out_v.push(clamp01(v));
        out_m.push(true);
    }
    F0Contour::new(out_v, out_m).expect("lengths preserved")
}

pub fn apply(c: &F0Contour, t: Transform, params: &AugmentParams, seed: u64) -> F0Contour {
    match t {
        Transform::Jitter => jitter(c, params.jitter_sd, seed),
        Transform::Scale => scale(c, params.scale_range, seed),
        Transform::Mask => mask_aug(c, params.mask_ratio, seed),
        Transform::MagnitudeShift => magnitude_shift(c, params.shift_range, params.shift_log_space, seed),
        Transform::TimeWarp => time_warp(c, params.warp_knots, params.warp_sd, seed),
    }
}

/// Transforms `strategy` would apply under `seed`, in application order.
pub fn draw_transforms(strategy: SelectionStrategy, seed: u64) -> Vec<Transform> {
    let mut r = rng(seed);
    let (lo, hi) = strategy.count_range();
    let count = r.random_range(lo..=hi);
    let mut pool = strategy.pool().to_vec();
    pool.shuffle(&mut r);
    pool.truncate(count);
    pool
}

/// Augmented view of `c`: draws distinct transforms per `strategy` and applies
/// them in draw order.
pub fn compose(c: &F0Contour, strategy: SelectionStrategy, params: &AugmentParams, seed: u64) -> F0Contour {
    compose_traced(c, strategy, params, seed).0
}

pub fn compose_traced(
    c: &F0Contour,
    strategy: SelectionStrategy,
    params: &AugmentParams,
    seed: u64,
) -> (F0Contour, Vec<Transform>) {
    let chosen = draw_transforms(strategy, seed);
    let mut out = c.clone();
    for (step, &t) in chosen.iter().enumerate() {
        out = apply(&out, t, params, derive(seed, step as u64 + 1));
    }
    (out, chosen)
}
