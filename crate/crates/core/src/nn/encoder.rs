//! Convolutional pitch encoder with masked global pooling, projection head and
//! prediction head.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;
use crate::rng::{derive, rng};
use crate::scalar::Scalar;

pub const KERNELS: [usize; 6] = [16, 12, 9, 6, 6, 6];
pub const STRIDES: [usize; 6] = [1, 2, 2, 1, 1, 1];
pub const HIDDEN_CHANNELS: [usize; 5] = [16, 32, 64, 128, 256];
pub const HEAD_WIDTH: usize = 64;
/// Embedding widths accepted by the training pipeline.
pub const EMBEDDING_WIDTHS: [usize; 5] = [64, 128, 256, 512, 1024];

/// Layer geometry of the encoder and the widths of the two heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    /// Output channels per conv layer; the last entry is the embedding width.
    pub channels: Vec<usize>,
    pub head_hidden: usize,
    pub head_out: usize,
}

impl Architecture {
    pub fn standard(d_emb: usize) -> Self {
        let mut channels = HIDDEN_CHANNELS.to_vec();
        channels.push(d_emb);
        Architecture {
            kernels: KERNELS.to_vec(),
            strides: STRIDES.to_vec(),
            channels,
            head_hidden: HEAD_WIDTH,
            head_out: HEAD_WIDTH,
        }
    }

    pub fn d_emb(&self) -> usize {
        self.channels.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kernels.len();
        if n == 0 || self.strides.len() != n || self.channels.len() != n {
            return Err(Error::Config(format!(
                "architecture needs matching non-empty kernels/strides/channels, got {}/{}/{}",
                n,
                self.strides.len(),
                self.channels.len()
            )));
        }
        if self.kernels.iter().chain(&self.strides).chain(&self.channels).any(|&v| v == 0)
            || self.head_hidden == 0
            || self.head_out == 0
        {
            return Err(Error::Config("architecture sizes must be positive".into()));
        }
        Ok(())
    }

    /// Time length after the conv stack for an input of `len` frames.
    pub fn latent_len(&self, len: usize) -> usize {
        self.strides.iter().fold(len, |l, &s| l.div_ceil(s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

/// Two dense layers with a ReLU in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub hidden: Dense<T>,
    pub out: Dense<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T> {
    pub convs: Vec<ConvLayer<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<T> {
    pub projector: Mlp<T>,
    pub predictor: Mlp<T>,
}

/// Every trainable tensor of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub arch: Architecture,
    pub encoder: EncoderParams<T>,
    pub heads: HeadParams<T>,
}

fn uniform_tensor<T: Scalar>(shape: Vec<usize>, bound: f64, r: &mut crate::rng::Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..n).map(|_| T::of(dist.sample(r))).collect();
    Tensor::new(shape, data).expect("shape matches")
}

fn dense<T: Scalar>(fin: usize, fout: usize, r: &mut crate::rng::Rng) -> Dense<T> {
    Dense {
        weight: uniform_tensor(vec![fout, fin], (6.0 / fin as f64).sqrt(), r),
        bias: uniform_tensor(vec![fout], 1.0 / (fin as f64).sqrt(), r),
    }
}

fn mlp<T: Scalar>(fin: usize, hidden: usize, fout: usize, r: &mut crate::rng::Rng) -> Mlp<T> {
    Mlp { hidden: dense(fin, hidden, r), out: dense(hidden, fout, r) }
}

impl<T: Scalar> ModelParams<T> {
    /// Fan-in scaled uniform initialisation, reproducible from `seed`.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng(derive(seed, 0x1417));
        let mut cin = 1;
        let mut convs = Vec::with_capacity(arch.kernels.len());
        for ((&k, &s), &cout) in arch.kernels.iter().zip(&arch.strides).zip(&arch.channels) {
            let fan_in = (cin * k) as f64;
            convs.push(ConvLayer {
                weight: uniform_tensor(vec![cout, cin, k], (6.0 / fan_in).sqrt(), &mut r),
                bias: uniform_tensor(vec![cout], 1.0 / fan_in.sqrt(), &mut r),
                stride: s,
            });
            cin = cout;
        }
        let heads = HeadParams {
            projector: mlp(arch.d_emb(), arch.head_hidden, arch.head_out, &mut r),
            predictor: mlp(arch.head_out, arch.head_hidden, arch.head_out, &mut r),
        };
        Ok(ModelParams { arch: arch.clone(), encoder: EncoderParams { convs }, heads })
    }

    /// Tensors in a fixed order shared by [`Self::tensors_mut`] and [`ModelVars`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for c in &self.encoder.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for m in [&self.heads.projector, &self.heads.predictor] {
            out.extend([&m.hidden.weight, &m.hidden.bias, &m.out.weight, &m.out.bias]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for c in &mut self.encoder.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for m in [&mut self.heads.projector, &mut self.heads.predictor] {
            out.push(&mut m.hidden.weight);
            out.push(&mut m.hidden.bias);
            out.push(&mut m.out.weight);
            out.push(&mut m.out.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let dense = |d: &Dense<T>| Dense { weight: d.weight.cast(), bias: d.bias.cast() };
        let mlp = |m: &Mlp<T>| Mlp { hidden: dense(&m.hidden), out: dense(&m.out) };
        ModelParams {
            arch: self.arch.clone(),
            encoder: EncoderParams {
                convs: self
                    .encoder
                    .convs
                    .iter()
                    .map(|c| ConvLayer { weight: c.weight.cast(), bias: c.bias.cast(), stride: c.stride })
                    .collect(),
            },
            heads: HeadParams { projector: mlp(&self.heads.projector), predictor: mlp(&self.heads.predictor) },
        }
    }

    /// Copies every tensor onto `g` as a trainable leaf.
    pub fn register(&self, g: &mut Graph<T>) -> ModelVars {
        let vars = self.tensors().into_iter().map(|t| g.param(t.clone())).collect();
        ModelVars { vars, n_convs: self.encoder.convs.len(), strides: self.arch.strides.clone() }
    }

    /// Wraps vars already on a graph, given in [`Self::tensors`] order, as
    /// handles for this architecture.
    pub fn bind(&self, vars: &[Var]) -> Result<ModelVars> {
        if vars.len() != self.tensors().len() {
            return Err(Error::Dimension(format!(
                "model has {} tensors, got {} vars",
                self.tensors().len(),
                vars.len()
            )));
        }
        Ok(ModelVars { vars: vars.to_vec(), n_convs: self.encoder.convs.len(), strides: self.arch.strides.clone() })
    }

    /// Copies every tensor onto `g` as a constant (inference only).
    pub fn register_frozen(&self, g: &mut Graph<T>) -> ModelVars {
        let vars = self.tensors().into_iter().map(|t| g.constant(t.clone())).collect();
        ModelVars { vars, n_convs: self.encoder.convs.len(), strides: self.arch.strides.clone() }
    }
}

/// Graph handles for a registered [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    vars: Vec<Var>,
    n_convs: usize,
    strides: Vec<usize>,
}

/// A batch of contours shaped for the encoder: `values [B, 1, L]` and a
/// row-major `mask [B * L]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput<T> {
    pub values: Tensor<T>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> EncoderInput<T> {
    /// Builds a batch from per-row values and masks of equal length. Masked
    /// frames are zeroed.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a [f64], &'a [bool])>) -> Result<Self> {
        let mut data = Vec::new();
        let mut mask = Vec::new();
        let mut len = None;
        let mut b = 0;
        for (v, m) in rows {
            if v.len() != m.len() || len.is_some_and(|l| l != v.len()) {
                return Err(Error::Dimension("encoder rows must share one length".into()));
            }
            len = Some(v.len());
            data.extend(v.iter().zip(m).map(|(&x, &keep)| if keep { T::of(x) } else { T::zero() }));
            mask.extend_from_slice(m);
            b += 1;
        }
        let len = len.unwrap_or(0);
        Ok(EncoderInput { values: Tensor::new(vec![b, 1, len], data)?, mask })
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[2]
    }

    /// Frames `start..start + len` of every row.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        let (b, l) = (self.batch(), self.frames());
        if start + len > l {
            return Err(Error::Dimension(format!("window {start}+{len} exceeds {l} frames")));
        }
        let mut data = Vec::with_capacity(b * len);
        let mut mask = Vec::with_capacity(b * len);
        for r in 0..b {
            data.extend_from_slice(&self.values.data()[r * l + start..][..len]);
            mask.extend_from_slice(&self.mask[r * l + start..][..len]);
        }
        Ok(EncoderInput { values: Tensor::new(vec![b, 1, len], data)?, mask })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.frames() != other.frames() {
            return Err(Error::Dimension("stacked batches differ in length".into()));
        }
        let mut data = self.values.data().to_vec();
        data.extend_from_slice(other.values.data());
        let mut mask = self.mask.clone();
        mask.extend_from_slice(&other.mask);
        Ok(EncoderInput { values: Tensor::new(vec![self.batch() + other.batch(), 1, self.frames()], data)?, mask })
    }
}

/// Downsamples a `[B * len]` mask by OR over each stride window.
pub fn downsample_mask(mask: &[bool], batch: usize, len: usize, stride: usize) -> Vec<bool> {
    let out_len = len.div_ceil(stride);
    let mut out = Vec::with_capacity(batch * out_len);
    for b in 0..batch {
        let row = &mask[b * len..(b + 1) * len];
        for t in 0..out_len {
            out.push(row[t * stride..((t + 1) * stride).min(len)].iter().any(|&m| m));
        }
    }
    out
}

impl ModelVars {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Accumulated gradients in parameter order; missing gradients are zeros.
    pub fn grads<T: Scalar>(&self, g: &Graph<T>) -> Vec<Vec<T>> {
        self.vars
            .iter()
            .map(|&v| g.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); g.value(v).len()]))
            .collect()
    }

    fn head(&self, which: usize) -> [Var; 4] {
        let o = 2 * self.n_convs + 4 * which;
        [self.vars[o], self.vars[o + 1], self.vars[o + 2], self.vars[o + 3]]
    }

    /// Utterance embeddings `[B, D_emb]`.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<T>, input: &EncoderInput<T>) -> Result<Var> {
        let (b, mut len) = (input.batch(), input.frames());
        let mut x = g.constant(input.values.clone());
        let mut mask = input.mask.clone();
        for i in 0..self.n_convs {
            let stride = self.strides[i];
            x = g.conv1d(x, self.vars[2 * i], self.vars[2 * i + 1], stride)?;
            x = g.relu(x);
            if stride > 1 {
                mask = downsample_mask(&mask, b, len, stride);
            }
            len = len.div_ceil(stride);
        }
        g.masked_gap(x, &mask)
    }

    fn mlp<T: Scalar>(&self, g: &mut Graph<T>, x: Var, which: usize) -> Result<Var> {
        let [w1, b1, w2, b2] = self.head(which);
        let h = g.linear(x, w1, b1)?;
        let h = g.relu(h);
        g.linear(h, w2, b2)
    }

    /// Unit-norm projections `[B, head_out]` of embeddings.
    pub fn project<T: Scalar>(&self, g: &mut Graph<T>, z: Var) -> Result<Var> {
        let h = self.mlp(g, z, 0)?;
        g.l2_normalize(h)
    }

    /// Unit-norm predictions from projections.
    pub fn predict<T: Scalar>(&self, g: &mut Graph<T>, p: Var) -> Result<Var> {
        let h = self.mlp(g, p, 1)?;
        g.l2_normalize(h)
    }
}

/// Frozen-encoder embeddings as `f64` rows, computed in chunks of `chunk` rows.
pub fn embed<T: Scalar>(params: &ModelParams<T>, input: &EncoderInput<T>, chunk: usize) -> Result<Vec<Vec<f64>>> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(input.batch());
    let len = input.frames();
    let mut start = 0;
    while start < input.batch() {
        let n = chunk.min(input.batch() - start);
        let part = EncoderInput {
            values: Tensor::new(vec![n, 1, len], input.values.data()[start * len..(start + n) * len].to_vec())?,
            mask: input.mask[start * len..(start + n) * len].to_vec(),
        };
        let mut g = Graph::new();
        let vars = params.register_frozen(&mut g);
        let z = vars.encode(&mut g, &part)?;
        let zv = g.value(z);
        out.extend((0..n).map(|r| zv.row(r).iter().map(|v| v.as_f64()).collect()));
        start += n;
    }
    Ok(out)
}
