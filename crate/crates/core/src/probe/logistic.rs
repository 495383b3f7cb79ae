//! Multinomial logistic regression fitted by full-batch gradient descent with
//! backtracking line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Coefficient of `0.5 * ||W||^2`; the bias is not penalised.
    pub l2_strength: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    pub seed: u64,
    /// z-score every feature on the training split before fitting.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2_strength: 1e-2, max_iters: 3000, tol: 1e-5, seed: 0, standardize: true }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength >= 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config(format!("invalid probe settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `[classes, dim]`, acting on standardised features.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub grad_norm: f64,
}

impl ProbeModel {
    pub fn converged(&self, tol: f64) -> bool {
        self.grad_norm < tol
    }

    fn standardized(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(features.len() * self.dim);
        for (r, row) in features.iter().enumerate() {
            if row.len() != self.dim {
                return Err(Error::Dimension(format!(
                    "row {r} has {} features, probe expects {}",
                    row.len(),
                    self.dim
                )));
            }
            x.extend(row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
        }
        Ok(x)
    }

    /// Class scores `[N, classes]`, row-major.
    pub fn decision(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        let x = self.standardized(features)?;
        Ok(logits(&x, features.len(), self.dim, &self.weights, &self.bias, self.classes))
    }

    /// Argmax class per row; ties go to the lowest index.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        let s = self.decision(features)?;
        Ok(s.chunks(self.classes.max(1)).map(argmax).collect())
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn logits(x: &[f64], n: usize, d: usize, w: &[f64], b: &[f64], c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * c);
    for _ in 0..n {
        out.extend_from_slice(b);
    }
    gemm(1.0, MatRef::new(x, n, d), MatRef::new(w, c, d).t(), 1.0, &mut out);
    out
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [usize],
    n: usize,
    d: usize,
    c: usize,
    l2: f64,
}

impl Problem<'_> {
    /// Mean cross-entropy plus penalty; optionally the gradient `[W | b]`.
    fn eval(&self, theta: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
        let (n, d, c) = (self.n, self.d, self.c);
        let (w, b) = theta.split_at(c * d);
        let mut s = logits(self.x, n, d, w, b, c);
        let mut loss = 0.0;
        for (row, &y) in s.chunks_mut(c).zip(self.y) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - row[y];
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - lse).exp() - if k == y { 1.0 } else { 0.0 };
            }
        }
        let inv_n = 1.0 / n as f64;
        loss = loss * inv_n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
        if let Some(g) = grad {
            g.clear();
            g.extend(w.iter().map(|v| self.l2 * v));
            g.resize(c * d + c, 0.0);
            let (gw, gb) = g.split_at_mut(c * d);
            // s now holds (softmax - onehot)
            gemm(inv_n, MatRef::new(&s, n, c).t(), MatRef::new(self.x, n, d), 1.0, gw);
            for row in s.chunks(c) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v * inv_n;
                }
            }
        }
        loss
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits a `classes`-way softmax regression.
pub fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    config.validate()?;
    let n = features.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Input(format!("{n} feature rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!("label {bad} outside {classes} classes")));
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("ragged feature matrix".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite feature value".into()));
    }
    let mut mean = vec![0.0; d];
    let mut scale = vec![1.0; d];
    if config.standardize {
        for row in features {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n as f64);
        }
        for j in 0..d {
            let var = features.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
    }
    let mut model = ProbeModel {
        classes,
        dim: d,
        weights: vec![0.0; classes * d],
        bias: vec![0.0; classes],
        mean,
        scale,
        iterations: 0,
        initial_loss: 0.0,
        final_loss: 0.0,
        grad_norm: 0.0,
    };
    let x = model.standardized(features)?;
    let prob = Problem { x: &x, y: labels, n, d, c: classes, l2: config.l2_strength };

    let mut theta = vec![0.0; classes * d + classes];
    let mut grad = Vec::new();
    let mut f = prob.eval(&theta, Some(&mut grad));
    model.initial_loss = f;
    let mut gnorm = norm(&grad);
    let mut step = 1.0;
    let mut trial = vec![0.0; theta.len()];
    let mut iters = 0;
    while iters < config.max_iters && gnorm >= config.tol {
        let g2 = gnorm * gnorm;
        loop {
            for ((t, &th), &gv) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = th - step * gv;
            }
            let ft = prob.eval(&trial, None);
            if ft <= f - 1e-4 * step * g2 || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        if step < 1e-12 {
            break;
        }
        std::mem::swap(&mut theta, &mut trial);
        f = prob.eval(&theta, Some(&mut grad));
        gnorm = norm(&grad);
        step *= 2.0;
        iters += 1;
    }
    let (w, b) = theta.split_at(classes * d);
    model.weights = w.to_vec();
    model.bias = b.to_vec();
    model.iterations = iters;
    model.final_loss = f;
    model.grad_norm = gnorm;
    Ok(model)
}
