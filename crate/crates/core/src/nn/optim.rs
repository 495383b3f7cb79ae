//! Rectified Adam with decoupled weight decay, wrapped in Lookahead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fast steps between Lookahead synchronisations.
    pub lookahead_k: usize,
    /// Interpolation factor towards the fast weights at a synchronisation.
    pub lookahead_alpha: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            lookahead_k: 5,
            lookahead_alpha: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.lookahead_k >= 1
            && (0.0..=1.0).contains(&self.lookahead_alpha);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Length of the approximated simple moving average at step `t` (1-based).
pub fn sma_length(beta2: f64, t: u64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

/// Variance rectification factor, or `None` while the moving average is too
/// short and the update falls back to bias-corrected momentum.
pub fn rectification(beta2: f64, t: u64) -> Option<f64> {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let rho = sma_length(beta2, t);
    (rho > 4.0).then(|| (((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt())
}

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    slow: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    /// Slow weights start at the current parameter values.
    pub fn new(params: &[&Tensor<T>], cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            slow: params.iter().map(|p| p.data().to_vec()).collect(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Dimension("parameter or gradient size changed".into()));
            }
        }
        self.step += 1;
        let t = self.step;
        let c = &self.cfg;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let lr = c.lr;
        let decay = T::of(1.0 - lr * c.weight_decay);
        let bc1 = 1.0 - c.beta1.powi(t as i32);
        let bc2 = 1.0 - c.beta2.powi(t as i32);
        let rect = rectification(c.beta2, t);
        let eps = T::of(c.eps);
        let momentum_step = T::of(lr / bc1);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                *w *= decay;
                match rect {
                    Some(r) => {
                        let vhat = (v[j] / T::of(bc2)).sqrt();
                        *w -= T::of(lr * r / bc1) * m[j] / (vhat + eps);
                    }
                    None => *w -= momentum_step * m[j],
                }
            }
        }
        if t.is_multiple_of(c.lookahead_k as u64) {
            let alpha = T::of(c.lookahead_alpha);
            for (p, slow) in params.iter_mut().zip(&mut self.slow) {
                for (w, s) in p.data_mut().iter_mut().zip(slow.iter_mut()) {
                    *s += alpha * (*w - *s);
                    *w = *s;
                }
            }
        }
        Ok(())
    }
}
