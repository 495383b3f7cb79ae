//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the tape is a
//! valid topological order for backpropagation. Only leaves created with
//! [`Graph::param`] keep gradients between sweeps; repeated calls to
//! [`Graph::backward`] accumulate into them until [`Graph::zero_grad`].

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::{gemm, MatRef, Scalar};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        cols: Vec<T>,
    },
    Relu(Var),
    MaskedGap {
        x: Var,
        mask: Vec<bool>,
        counts: Vec<usize>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    L2Normalize {
        x: Var,
        norms: Vec<T>,
    },
    ConcatRows(Var, Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    MatMulNt(Var, Var),
    Scale(Var, T),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    /// Stores d(loss)/d(logits) computed during the forward pass.
    ContrastiveNll {
        logits: Var,
        coef: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph::new()
    }
}

const NORM_EPS: f64 = 1e-12;

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any sweep reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn dims<const N: usize>(&self, v: Var, what: &str) -> Result<[usize; N]> {
        let s = self.shape(v);
        s.try_into().map_err(|_| Error::Dimension(format!("{what}: expected rank {N}, got shape {s:?}")))
    }

    /// 1-D convolution with "same" padding followed by striding:
    /// `x [B, C_in, L]`, `w [C_out, C_in, K]`, `b [C_out]` -> `[B, C_out, ceil(L / stride)]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let [bsz, cin, len] = self.dims(x, "conv1d input")?;
        let [cout, wcin, k] = self.dims(w, "conv1d weight")?;
        let [bout] = self.dims(b, "conv1d bias")?;
        if wcin != cin || bout != cout || stride == 0 || k == 0 {
            return Err(Error::Dimension(format!(
                "conv1d: input channels {cin}, weight {:?}, bias {bout}, stride {stride}",
                self.shape(w)
            )));
        }
        let lout = len.div_ceil(stride);
        let pad = ((lout.saturating_sub(1)) * stride + k).saturating_sub(len) / 2;
        let ck = cin * k;
        let n = bsz * lout;

        let xs = self.value(x).data();
        let mut cols = vec![T::zero(); ck * n];
        for bi in 0..bsz {
            for ci in 0..cin {
                let src = &xs[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                for kk in 0..k {
                    let dst = &mut cols[(ci * k + kk) * n + bi * lout..][..lout];
                    let (t0, t1) = valid_taps(kk, pad, stride, len, lout);
                    if stride == 1 {
                        let p0 = t0 + kk - pad;
                        dst[t0..t1].copy_from_slice(&src[p0..p0 + (t1 - t0)]);
                    } else {
                        for t in t0..t1 {
                            dst[t] = src[t * stride + kk - pad];
                        }
                    }
                }
            }
        }
        let mut out_mat = vec![T::zero(); cout * n];
        gemm(T::one(), MatRef::new(self.value(w).data(), cout, ck), MatRef::new(&cols, ck, n), T::zero(), &mut out_mat);
        let bias = self.value(b).data();
        let mut out = vec![T::zero(); bsz * cout * lout];
        for bi in 0..bsz {
            for co in 0..cout {
                let src = &out_mat[co * n + bi * lout..][..lout];
                let dst = &mut out[(bi * cout + co) * lout..][..lout];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias[co];
                }
            }
        }
        let rg = self.needs(&[x, w, b]);
        let value = Tensor::new(vec![bsz, cout, lout], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b, stride, pad, cols }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    /// Mean over time restricted to `mask`-true positions: `x [B, C, L]`,
    /// `mask [B * L]` -> `[B, C]`. Rows with an all-false mask pool to zero.
    pub fn masked_gap(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let [bsz, ch, len] = self.dims(x, "masked_gap input")?;
        if mask.len() != bsz * len {
            return Err(Error::Dimension(format!(
                "masked_gap: mask has {} entries, features need {}",
                mask.len(),
                bsz * len
            )));
        }
        let counts: Vec<usize> =
            (0..bsz).map(|bi| mask[bi * len..(bi + 1) * len].iter().filter(|&&m| m).count()).collect();
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); bsz * ch];
        for bi in 0..bsz {
            if counts[bi] == 0 {
                continue;
            }
            let inv = T::one() / T::of(counts[bi] as f64);
            let m = &mask[bi * len..(bi + 1) * len];
            for c in 0..ch {
                let row = &xs[(bi * ch + c) * len..][..len];
                let s: T = row.iter().zip(m).filter(|(_, &m)| m).map(|(&v, _)| v).sum();
                out[bi * ch + c] = s * inv;
            }
        }
        let rg = self.needs(&[x]);
        let value = Tensor::new(vec![bsz, ch], out)?;
        Ok(self.push(value, Op::MaskedGap { x, mask: mask.to_vec(), counts }, rg))
    }

    /// `x [B, In] * w^T + b` with `w [Out, In]`, `b [Out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let [bsz, fin] = self.dims(x, "linear input")?;
        let [fout, win] = self.dims(w, "linear weight")?;
        let [bout] = self.dims(b, "linear bias")?;
        if win != fin || bout != fout {
            return Err(Error::Dimension(format!(
                "linear: input width {fin}, weight {:?}, bias {bout}",
                self.shape(w)
            )));
        }
        let mut out = vec![T::zero(); bsz * fout];
        for row in out.chunks_mut(fout) {
            row.copy_from_slice(self.value(b).data());
        }
        gemm(
            T::one(),
            MatRef::new(self.value(x).data(), bsz, fin),
            MatRef::new(self.value(w).data(), fout, fin).t(),
            T::one(),
            &mut out,
        );
        let rg = self.needs(&[x, w, b]);
        let value = Tensor::new(vec![bsz, fout], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Scales every row of a 2-D tensor to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let [rows, cols] = self.dims(x, "l2_normalize input")?;
        let xs = self.value(x).data();
        let eps = T::of(NORM_EPS);
        let mut norms = Vec::with_capacity(rows);
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            let d = norm.max(eps);
            for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = v / d;
            }
            norms.push(norm);
        }
        let rg = self.needs(&[x]);
        let value = Tensor::new(vec![rows, cols], out)?;
        Ok(self.push(value, Op::L2Normalize { x, norms }, rg))
    }

    /// Stacks two 2-D tensors with equal widths.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let [ra, ca] = self.dims(a, "concat_rows lhs")?;
        let [rb, cb] = self.dims(b, "concat_rows rhs")?;
        if ca != cb {
            return Err(Error::Dimension(format!("concat_rows: widths {ca} and {cb}")));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let rg = self.needs(&[a, b]);
        let value = Tensor::new(vec![ra + rb, ca], data)?;
        Ok(self.push(value, Op::ConcatRows(a, b), rg))
    }

    /// Rows `start..start + len` of a 2-D tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.dims(x, "slice_rows input")?;
        if start + len > rows {
            return Err(Error::Dimension(format!("slice_rows: {start}+{len} exceeds {rows} rows")));
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let rg = self.needs(&[x]);
        let value = Tensor::new(vec![len, cols], data)?;
        Ok(self.push(value, Op::SliceRows { x, start }, rg))
    }

    /// `a [N, D] * b[M, D]^T -> [N, M]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, da] = self.dims(a, "matmul_nt lhs")?;
        let [m, db] = self.dims(b, "matmul_nt rhs")?;
        if da != db {
            return Err(Error::Dimension(format!("matmul_nt: inner widths {da} and {db}")));
        }
        let mut out = vec![T::zero(); n * m];
        gemm(
            T::one(),
            MatRef::new(self.value(a).data(), n, da),
            MatRef::new(self.value(b).data(), m, db).t(),
            T::zero(),
            &mut out,
        );
        let rg = self.needs(&[a, b]);
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatMulNt(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let xv = self.value(x);
        let value = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v * c).collect()).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(value, Op::Scale(x, c), rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!("{what}: shapes {:?} and {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Masked multi-positive softmax cross-entropy over rows of `logits [N, M]`:
    ///
    /// `mean over anchors i of ( logsumexp_{k in D(i)} l_ik - mean_{j in P(i)} l_ij )`
    ///
    /// where `P(i)` / `D(i)` are the true entries of row `i` in `positive` /
    /// `denominator`. Anchors with an empty `P(i)` or `D(i)` are skipped; with no
    /// contributing anchor at all the loss is 0.
    pub fn contrastive_nll(&mut self, logits: Var, positive: &[bool], denominator: &[bool]) -> Result<Var> {
        let [n, m] = self.dims(logits, "contrastive_nll logits")?;
        if positive.len() != n * m || denominator.len() != n * m {
            return Err(Error::Dimension(format!(
                "contrastive_nll: masks of {} and {} entries for {n}x{m} logits",
                positive.len(),
                denominator.len()
            )));
        }
        let anchors = contributing_anchors(positive, denominator, m);
        let ls = self.value(logits).data();
        let mut coef = vec![T::zero(); n * m];
        let mut total = T::zero();
        if !anchors.is_empty() {
            let inv_a = T::one() / T::of(anchors.len() as f64);
            for &i in &anchors {
                let row = &ls[i * m..(i + 1) * m];
                let pos = &positive[i * m..(i + 1) * m];
                let den = &denominator[i * m..(i + 1) * m];
                let max = row.iter().zip(den).filter(|(_, &d)| d).map(|(&v, _)| v).fold(T::neg_infinity(), T::max);
                let z: T = row.iter().zip(den).filter(|(_, &d)| d).map(|(&v, _)| (v - max).exp()).sum();
                let lse = max + z.ln();
                let npos = pos.iter().filter(|&&p| p).count();
                let inv_p = T::one() / T::of(npos as f64);
                let mean_pos: T = row.iter().zip(pos).filter(|(_, &p)| p).map(|(&v, _)| v).sum::<T>() * inv_p;
                total += lse - mean_pos;
                let c = &mut coef[i * m..(i + 1) * m];
                for k in 0..m {
                    let mut g = T::zero();
                    if den[k] {
                        g += (row[k] - lse).exp();
                    }
                    if pos[k] {
                        g -= inv_p;
                    }
                    c[k] = g * inv_a;
                }
            }
            total *= inv_a;
        }
        let rg = self.needs(&[logits]);
        Ok(self.push(Tensor::scalar(total), Op::ContrastiveNll { logits, coef }, rg))
    }

    /// Sign pattern of every ReLU input on the tape, in tape order. Two
    /// evaluations with equal patterns lie in the same smooth piece of the
    /// network function.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                out.extend(self.nodes[x.0].value.data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    /// Reverse sweep from a scalar node; leaf gradients accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(nodes, grads, $v)
            };
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, stride, pad, cols } => {
                let [bsz, cin, len]: [usize; 3] = nodes[x.0].value.shape().try_into().unwrap();
                let [cout, _, k]: [usize; 3] = nodes[w.0].value.shape().try_into().unwrap();
                let lout = len.div_ceil(*stride);
                let n = bsz * lout;
                let ck = cin * k;
                let mut dmat = vec![T::zero(); cout * n];
                for bi in 0..bsz {
                    for co in 0..cout {
                        dmat[co * n + bi * lout..][..lout].copy_from_slice(&g[(bi * cout + co) * lout..][..lout]);
                    }
                }
                if let Some(db) = slot!(*b) {
                    for co in 0..cout {
                        db[co] += dmat[co * n..(co + 1) * n].iter().copied().sum::<T>();
                    }
                }
                if let Some(dw) = slot!(*w) {
                    gemm(T::one(), MatRef::new(&dmat, cout, n), MatRef::new(cols, ck, n).t(), T::one(), dw);
                }
                if nodes[x.0].requires_grad {
                    let mut dcols = vec![T::zero(); ck * n];
                    gemm(
                        T::one(),
                        MatRef::new(nodes[w.0].value.data(), cout, ck).t(),
                        MatRef::new(&dmat, cout, n),
                        T::zero(),
                        &mut dcols,
                    );
                    let dx = slot!(*x).expect("requires grad");
                    for bi in 0..bsz {
                        for ci in 0..cin {
                            let dst = &mut dx[(bi * cin + ci) * len..][..len];
                            for kk in 0..k {
                                let src = &dcols[(ci * k + kk) * n + bi * lout..][..lout];
                                let (t0, t1) = valid_taps(kk, *pad, *stride, len, lout);
                                if *stride == 1 {
                                    let p0 = t0 + kk - pad;
                                    for (d, &v) in dst[p0..p0 + (t1 - t0)].iter_mut().zip(&src[t0..t1]) {
                                        *d += v;
                                    }
                                } else {
                                    for t in t0..t1 {
                                        dst[t * stride + kk - pad] += src[t];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xs = nodes[x.0].value.data();
                if let Some(dx) = slot!(*x) {
                    for ((d, &v), &gv) in dx.iter_mut().zip(xs).zip(g) {
                        if v > T::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::MaskedGap { x, mask, counts } => {
                let [bsz, ch, len]: [usize; 3] = nodes[x.0].value.shape().try_into().unwrap();
                if let Some(dx) = slot!(*x) {
                    for bi in 0..bsz {
                        if counts[bi] == 0 {
                            continue;
                        }
                        let inv = T::one() / T::of(counts[bi] as f64);
                        let m = &mask[bi * len..(bi + 1) * len];
                        for c in 0..ch {
                            let gv = g[bi * ch + c] * inv;
                            let row = &mut dx[(bi * ch + c) * len..][..len];
                            for (d, &mm) in row.iter_mut().zip(m) {
                                if mm {
                                    *d += gv;
                                }
                            }
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let [bsz, fin]: [usize; 2] = nodes[x.0].value.shape().try_into().unwrap();
                let fout = nodes[b.0].value.len();
                if let Some(db) = slot!(*b) {
                    for row in g.chunks(fout) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                    }
                }
                if let Some(dw) = slot!(*w) {
                    gemm(
                        T::one(),
                        MatRef::new(g, bsz, fout).t(),
                        MatRef::new(nodes[x.0].value.data(), bsz, fin),
                        T::one(),
                        dw,
                    );
                }
                if let Some(dx) = slot!(*x) {
                    gemm(
                        T::one(),
                        MatRef::new(g, bsz, fout),
                        MatRef::new(nodes[w.0].value.data(), fout, fin),
                        T::one(),
                        dx,
                    );
                }
            }
            Op::L2Normalize { x, norms } => {
                let y = nodes[i].value.data();
                let cols = nodes[i].value.shape()[1];
                let eps = T::of(NORM_EPS);
                if let Some(dx) = slot!(*x) {
                    for (r, &norm) in norms.iter().enumerate() {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dr = &mut dx[r * cols..(r + 1) * cols];
                        if norm > eps {
                            let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                                *d += (gv - yv * dot) / norm;
                            }
                        } else {
                            for (d, &gv) in dr.iter_mut().zip(gr) {
                                *d += gv / eps;
                            }
                        }
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let na = nodes[a.0].value.len();
                if let Some(da) = slot!(*a) {
                    da.iter_mut().zip(&g[..na]).for_each(|(d, &v)| *d += v);
                }
                if let Some(db) = slot!(*b) {
                    db.iter_mut().zip(&g[na..]).for_each(|(d, &v)| *d += v);
                }
            }
            Op::SliceRows { x, start } => {
                let cols = nodes[i].value.shape()[1];
                if let Some(dx) = slot!(*x) {
                    dx[start * cols..start * cols + g.len()].iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
            }
            Op::MatMulNt(a, b) => {
                let [n, d]: [usize; 2] = nodes[a.0].value.shape().try_into().unwrap();
                let m = nodes[b.0].value.shape()[0];
                if let Some(da) = slot!(*a) {
                    gemm(T::one(), MatRef::new(g, n, m), MatRef::new(nodes[b.0].value.data(), m, d), T::one(), da);
                }
                if let Some(db) = slot!(*b) {
                    gemm(T::one(), MatRef::new(g, n, m).t(), MatRef::new(nodes[a.0].value.data(), n, d), T::one(), db);
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = slot!(*x) {
                    dx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * *c);
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = slot!(*a) {
                    da.iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
                if let Some(db) = slot!(*b) {
                    db.iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if let Some(da) = slot!(*a) {
                    da.iter_mut().zip(g).zip(bv).for_each(|((d, &gv), &y)| *d += gv * y);
                }
                if let Some(db) = slot!(*b) {
                    db.iter_mut().zip(g).zip(av).for_each(|((d, &gv), &x)| *d += gv * x);
                }
            }
            Op::Sum(x) => {
                if let Some(dx) = slot!(*x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::ContrastiveNll { logits, coef } => {
                if let Some(dl) = slot!(*logits) {
                    dl.iter_mut().zip(coef).for_each(|(d, &c)| *d += g[0] * c);
                }
            }
        }
    }
}

/// Output positions `t0..t1` whose input index `t * stride + kk - pad` falls
/// inside `0..len`.
fn valid_taps(kk: usize, pad: usize, stride: usize, len: usize, lout: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(kk).div_ceil(stride);
    // largest t with t * stride + kk < len + pad
    let t1 = if len + pad > kk { (len + pad - kk - 1) / stride + 1 } else { 0 };
    (t0.min(lout), t1.min(lout).max(t0.min(lout)))
}

/// Accumulation buffer for `v`, or None if it needs no gradient.
fn grad_slot<'a, T: Scalar>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

/// Rows of an `[N, M]` mask pair that have at least one positive and one
/// denominator entry.
pub fn contributing_anchors(positive: &[bool], denominator: &[bool], m: usize) -> Vec<usize> {
    if m == 0 {
        return Vec::new();
    }
    positive
        .chunks(m)
        .zip(denominator.chunks(m))
        .enumerate()
        .filter(|(_, (p, d))| p.iter().any(|&v| v) && d.iter().any(|&v| v))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut g = Graph::<f64>::new();
        let w = g.param(t(&[3], &[0.5, -1.0, 2.0]));
        let s = g.sum(w);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0, 1.0]);
        // a second sweep accumulates
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[2.0, 2.0, 2.0]);
        g.zero_grad();
        assert!(g.grad(w).is_none());
    }

    #[test]
    fn gradient_of_half_squared_norm_is_identity() {
        let mut g = Graph::<f64>::new();
        let data = [0.3, -1.5, 2.25, 4.0];
        let w = g.param(t(&[4], &data));
        let sq = g.mul(w, w).unwrap();
        let s = g.sum(sq);
        let half = g.scale(s, 0.5);
        g.backward(half).unwrap();
        assert_eq!(g.grad(w).unwrap(), &data);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let w = g.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn masked_gap_excludes_masked_positions() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let y = g.masked_gap(x, &[true, true, false, false]).unwrap();
        assert_eq!(g.value(y).data(), &[1.5]);
        let y = g.masked_gap(x, &[true; 4]).unwrap();
        assert_eq!(g.value(y).data(), &[2.5]);
        let y = g.masked_gap(x, &[false; 4]).unwrap();
        assert_eq!(g.value(y).data(), &[0.0]);
        let x2 = g.constant(t(&[1, 1, 4], &[1.0, 2.0, 99.0, -7.0]));
        let y2 = g.masked_gap(x2, &[true, true, false, false]).unwrap();
        assert_eq!(g.value(y2).data(), &[1.5]);
    }

    #[test]
    fn conv_output_lengths_follow_stride() {
        let mut g = Graph::<f64>::new();
        let mut x = g.constant(Tensor::zeros(vec![2, 1, 200]));
        let mut lens = vec![];
        let mut cin = 1;
        for (k, s) in [(16, 1), (12, 2), (9, 2), (6, 1), (6, 1), (6, 1)] {
            let w = g.param(Tensor::zeros(vec![3, cin, k]));
            let b = g.param(Tensor::zeros(vec![3]));
            x = g.conv1d(x, w, b, s).unwrap();
            cin = 3;
            lens.push(g.shape(x)[2]);
        }
        assert_eq!(lens, vec![200, 100, 50, 50, 50, 50]);
        assert!(g.value(x).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centred_delta_kernel_mixes_channels_only() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 2, 5], &[1.0, 2.0, 3.0, 4.0, 5.0, -1.0, 0.0, 1.0, 0.5, 2.0]));
        // kernel 3, delta at the centre tap; out = 2*ch0 - ch1
        let w = g.param(t(&[1, 2, 3], &[0.0, 2.0, 0.0, 0.0, -1.0, 0.0]));
        let b = g.param(t(&[1], &[0.0]));
        let y = g.conv1d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 4.0, 5.0, 7.5, 8.0]);
    }

    #[test]
    fn dimension_errors() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(vec![1, 2, 5]));
        let w = g.param(Tensor::zeros(vec![1, 3, 3]));
        let b = g.param(Tensor::zeros(vec![1]));
        assert!(matches!(g.conv1d(x, w, b, 1), Err(Error::Dimension(_))));
        assert!(g.masked_gap(x, &[true; 3]).is_err());
    }
}
