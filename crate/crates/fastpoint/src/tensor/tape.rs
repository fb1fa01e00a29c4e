//! Reverse-mode tape over 2-D tensor kernels.
//!
//! Every forward operation appends a node holding its output plus whatever
//! the backward pass needs. `backward` replays nodes in exact reverse
//! execution order and accumulates gradients into the [`ParamSet`].
//!
//! The op set is the closure of what the point-cloud layers compose: matmul
//! and bias for affine maps, batch norm / relu / dropout, row gathers for
//! neighbour tables, column concat for edge features and skip connections,
//! grouped max for neighbourhood and global pooling, weighted gathers for
//! distance-based interpolation, and a fused softmax cross-entropy loss.

use std::sync::Arc;

use rand::Rng as _;

use super::{Mode, ParamId, ParamSet, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::Rng;

const BN_EPS: f64 = 1e-5;

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf {
        param: Option<ParamId>,
    },
    Matmul {
        a: Var,
        b: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    Relu {
        x: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        through_stats: bool,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    GatherRows {
        x: Var,
        idx: Arc<Vec<u32>>,
    },
    ConcatCols {
        a: Var,
        b: Var,
    },
    GroupMax {
        x: Var,
        argmax: Vec<u32>,
    },
    RepeatRows {
        x: Var,
        times: usize,
    },
    WeightedGather {
        x: Var,
        idx: Arc<Vec<u32>>,
        weights: Arc<Vec<T>>,
        k: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<Vec<u32>>,
        probs: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Record of one forward computation, replayable backwards.
#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Drops all recorded nodes; reuse between steps keeps allocations low.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A value that participates in the graph but receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf { param: None })
    }

    /// Registers a parameter's current value as a leaf; `backward` will
    /// accumulate into its grad slot.
    pub fn param(&mut self, id: ParamId, params: &ParamSet<T>) -> Var {
        let value = params.get(id).value.clone();
        self.push(value, Op::Leaf { param: Some(id) })
    }

    /// `a @ b` where `b` is 2-D `[K, N]` and `a`'s last axis has size K.
    /// Leading axes of `a` are preserved.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (av.rows(), av.cols());
        if bv.shape().len() != 2 || bv.shape()[0] != k {
            return Err(Error::Shape {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let n = bv.shape()[1];
        let mut out = vec![T::zero(); m * n];
        unsafe {
            T::gemm(
                m,
                k,
                n,
                T::one(),
                av.data().as_ptr(),
                k as isize,
                1,
                bv.data().as_ptr(),
                n as isize,
                1,
                T::zero(),
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        let mut shape = av.shape().to_vec();
        if shape.is_empty() {
            shape = vec![1];
        }
        *shape.last_mut().unwrap() = n;
        let out = Tensor::from_vec(shape, out)?;
        out.debug_check_finite("matmul");
        Ok(self.push(out, Op::Matmul { a, b }))
    }

    /// Adds a length-`cols` bias vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if bv.shape().len() != 1 || bv.numel() != xv.cols() {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += bv.data()[i % cols];
        }
        let out = Tensor::from_vec(xv.shape().to_vec(), data)?;
        out.debug_check_finite("add_bias");
        Ok(self.push(out, Op::AddBias { x, bias }))
    }

    /// Elementwise `a - b`; shapes must match.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: "sub",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| *x - *y)
            .collect();
        let out = Tensor::from_vec(av.shape().to_vec(), data)?;
        out.debug_check_finite("sub");
        Ok(self.push(out, Op::Sub { a, b }))
    }

    /// Elementwise `a * b`; shapes must match.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: "mul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| *x * *y)
            .collect();
        let out = Tensor::from_vec(av.shape().to_vec(), data)?;
        out.debug_check_finite("mul");
        Ok(self.push(out, Op::Mul { a, b }))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let mut acc = T::zero();
        for &v in xv.data() {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::Sum { x })
    }

    /// Elementwise `max(0, x)`; the gradient is gated by `x > 0`.
    pub fn relu(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let out = Tensor::from_vec(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Relu { x })
    }

    /// Per-channel batch normalization over all rows (the joint batch and
    /// point axis), `eps = 1e-5`.
    ///
    /// `Train` normalizes with batch statistics and folds them into the
    /// moving estimates as `m <- decay*m + (1-decay)*batch`; `Eval` uses the
    /// moving estimates only. A constant channel collapses to `beta`.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        moving_mean: &mut Tensor<T>,
        moving_var: &mut Tensor<T>,
        decay: f64,
        mode: Mode,
    ) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        for (name, t) in [
            ("gamma", &self.nodes[gamma.0].value),
            ("beta", &self.nodes[beta.0].value),
            ("moving_mean", &*moving_mean),
            ("moving_var", &*moving_var),
        ] {
            if t.numel() != cols {
                let _ = name;
                return Err(Error::Shape {
                    op: "batch_norm",
                    lhs: xv.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        if !(0.0 < decay && decay < 1.0) {
            return Err(Error::Contract(format!(
                "batch_norm decay must lie in (0,1), got {decay}"
            )));
        }

        let (mean, var) = match mode {
            Mode::Train => {
                // Stats accumulated in f64 regardless of storage precision.
                let mut sums = vec![0.0f64; cols];
                let mut sq = vec![0.0f64; cols];
                for r in 0..rows {
                    let row = &xv.data()[r * cols..(r + 1) * cols];
                    for (c, &v) in row.iter().enumerate() {
                        let v = v.as_f64();
                        sums[c] += v;
                        sq[c] += v * v;
                    }
                }
                let n = rows as f64;
                let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
                let var: Vec<f64> = sq
                    .iter()
                    .zip(&mean)
                    .map(|(s, m)| (s / n - m * m).max(0.0))
                    .collect();
                for c in 0..cols {
                    let m = moving_mean.data()[c].as_f64();
                    let v = moving_var.data()[c].as_f64();
                    moving_mean.data_mut()[c] = T::from_f64(decay * m + (1.0 - decay) * mean[c]);
                    moving_var.data_mut()[c] = T::from_f64(decay * v + (1.0 - decay) * var[c]);
                }
                (mean, var)
            }
            Mode::Eval => (
                moving_mean.data().iter().map(|v| v.as_f64()).collect(),
                moving_var.data().iter().map(|v| v.as_f64()).collect(),
            ),
        };

        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::from_f64(1.0 / (v + BN_EPS).sqrt()))
            .collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64(m)).collect();

        let xv = &self.nodes[x.0].value;
        let mut xhat = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                xhat[r * cols + c] = (xv.data()[r * cols + c] - mean_t[c]) * inv_std[c];
            }
        }
        let (gv, bv) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[r * cols + c] = gv.data()[c] * xhat[r * cols + c] + bv.data()[c];
            }
        }
        let xhat = Tensor::from_vec(xv.shape().to_vec(), xhat)?;
        let out = Tensor::from_vec(xv.shape().to_vec(), out)?;
        out.debug_check_finite("batch_norm");
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                through_stats: mode == Mode::Train,
            },
        ))
    }

    /// Inverted dropout: in `Train` mode each element is zeroed with
    /// probability `1 - keep_prob` and survivors are scaled by `1/keep_prob`.
    /// `Eval` mode (and `keep_prob == 1`) is identity.
    pub fn dropout(&mut self, x: Var, keep_prob: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        if !(0.0 < keep_prob && keep_prob <= 1.0) {
            return Err(Error::Contract(format!(
                "dropout keep_prob must lie in (0,1], got {keep_prob}"
            )));
        }
        if mode == Mode::Eval || keep_prob == 1.0 {
            return Ok(x);
        }
        let xv = &self.nodes[x.0].value;
        let scale = T::from_f64(1.0 / keep_prob);
        let mask: Vec<T> = (0..xv.numel())
            .map(|_| {
                if rng.gen::<f64>() < keep_prob {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let data = xv
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let out = Tensor::from_vec(xv.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// `out[r, :] = x[idx[r], :]`; duplicate indices are allowed.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<u32>>) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= rows) {
            return Err(Error::Index {
                op: "gather_rows",
                index: bad as usize,
                len: rows,
            });
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            data.extend_from_slice(xv.row(i as usize));
        }
        let out = Tensor::from_vec(vec![idx.len(), cols], data)?;
        Ok(self.push(out, Op::GatherRows { x, idx }))
    }

    /// Concatenates along the channel axis; row counts must match.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows() != bv.rows() {
            return Err(Error::Shape {
                op: "concat_cols",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let out = Tensor::from_vec(vec![rows, ca + cb], data)?;
        Ok(self.push(out, Op::ConcatCols { a, b }))
    }

    /// Elementwise max over consecutive groups of `group` rows. The gradient
    /// routes to the first argmax row of each group.
    pub fn group_max(&mut self, x: Var, group: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        if group == 0 || rows % group != 0 {
            return Err(Error::Size {
                op: "group_max",
                requested: group,
                available: rows,
            });
        }
        let out_rows = rows / group;
        let mut data = vec![T::zero(); out_rows * cols];
        let mut argmax = vec![0u32; out_rows * cols];
        for g in 0..out_rows {
            let base = g * group;
            for c in 0..cols {
                let mut best = xv.data()[base * cols + c];
                let mut best_r = base;
                for r in base + 1..base + group {
                    let v = xv.data()[r * cols + c];
                    if v > best {
                        best = v;
                        best_r = r;
                    }
                }
                data[g * cols + c] = best;
                argmax[g * cols + c] = best_r as u32;
            }
        }
        let out = Tensor::from_vec(vec![out_rows, cols], data)?;
        Ok(self.push(out, Op::GroupMax { x, argmax }))
    }

    /// Repeats each row `times` times (row r maps to rows `r*times..(r+1)*times`).
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        if times == 0 {
            return Err(Error::Size {
                op: "repeat_rows",
                requested: times,
                available: 1,
            });
        }
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(rows * times * cols);
        for r in 0..rows {
            for _ in 0..times {
                data.extend_from_slice(xv.row(r));
            }
        }
        let out = Tensor::from_vec(vec![rows * times, cols], data)?;
        Ok(self.push(out, Op::RepeatRows { x, times }))
    }

    /// `out[t, :] = sum_j weights[t*k+j] * x[idx[t*k+j], :]` — the linear
    /// part of distance-weighted interpolation, with weights precomputed.
    pub fn weighted_gather(
        &mut self,
        x: Var,
        idx: Arc<Vec<u32>>,
        weights: Arc<Vec<T>>,
        k: usize,
    ) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        if k == 0 || idx.len() != weights.len() || idx.len() % k != 0 {
            return Err(Error::Size {
                op: "weighted_gather",
                requested: k,
                available: idx.len(),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= rows) {
            return Err(Error::Index {
                op: "weighted_gather",
                index: bad as usize,
                len: rows,
            });
        }
        let targets = idx.len() / k;
        let mut data = vec![T::zero(); targets * cols];
        for t in 0..targets {
            let out_row = &mut data[t * cols..(t + 1) * cols];
            for j in 0..k {
                let w = weights[t * k + j];
                let src = xv.row(idx[t * k + j] as usize);
                for (o, &s) in out_row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        let out = Tensor::from_vec(vec![targets, cols], data)?;
        out.debug_check_finite("weighted_gather");
        Ok(self.push(out, Op::WeightedGather { x, idx, weights, k }))
    }

    /// Mean over rows of `-log softmax(logits)[label]`, computed with
    /// max-subtraction. Returns a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[u32]) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        let (rows, cols) = (lv.rows(), lv.cols());
        if labels.len() != rows {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= cols) {
            return Err(Error::Index {
                op: "softmax_cross_entropy",
                index: bad as usize,
                len: cols,
            });
        }
        let mut probs = vec![T::zero(); rows * cols];
        let mut loss = 0.0f64;
        for r in 0..rows {
            let row = lv.row(r);
            let mut max = row[0];
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            let mut denom = 0.0f64;
            for &v in row {
                denom += (v - max).as_f64().exp();
            }
            let log_denom = denom.ln();
            for (c, &v) in row.iter().enumerate() {
                probs[r * cols + c] = T::from_f64(((v - max).as_f64() - log_denom).exp());
            }
            loss += log_denom - (row[labels[r] as usize] - max).as_f64();
        }
        let loss = T::from_f64(loss / rows as f64);
        let probs = Tensor::from_vec(vec![rows, cols], probs)?;
        let out = Tensor::scalar(loss);
        out.debug_check_finite("softmax_cross_entropy");
        Ok(self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: Arc::new(labels.to_vec()),
                probs,
            },
        ))
    }

    /// Smallest |input| over all relu nodes on the tape, or +inf if none.
    ///
    /// Finite-difference gradient checks need the computation to be
    /// differentiable within the probe window; an instance where every relu
    /// input clears `10 * h` in magnitude cannot hit a kink.
    pub fn min_abs_relu_input(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu { x } = node.op {
                for &v in self.nodes[x.0].value.data() {
                    let a = v.as_f64().abs();
                    if a < best {
                        best = a;
                    }
                }
            }
        }
        best
    }

    /// Runs reverse accumulation from a scalar loss, adding parameter
    /// gradients into `params`. Nodes recorded after `loss` are ignored.
    pub fn backward(&self, loss: Var, params: &mut ParamSet<T>) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(lv.shape().to_vec(), vec![T::one()]).unwrap());

        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        params.accumulate_grad(*pid, &gout);
                    }
                }
                Op::Matmul { a, b } => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k) = (av.rows(), av.cols());
                    let n = bv.shape()[1];
                    {
                        let ga = Self::slot(&mut grads, *a, av.shape());
                        unsafe {
                            // dA += dC @ B^T
                            T::gemm(
                                m,
                                n,
                                k,
                                T::one(),
                                gout.data().as_ptr(),
                                n as isize,
                                1,
                                bv.data().as_ptr(),
                                1,
                                n as isize,
                                T::one(),
                                ga.data_mut().as_mut_ptr(),
                                k as isize,
                                1,
                            );
                        }
                    }
                    {
                        let gb = Self::slot(&mut grads, *b, bv.shape());
                        unsafe {
                            // dB += A^T @ dC
                            T::gemm(
                                k,
                                m,
                                n,
                                T::one(),
                                av.data().as_ptr(),
                                1,
                                k as isize,
                                gout.data().as_ptr(),
                                n as isize,
                                1,
                                T::one(),
                                gb.data_mut().as_mut_ptr(),
                                n as isize,
                                1,
                            );
                        }
                    }
                }
                Op::AddBias { x, bias } => {
                    let cols = self.nodes[x.0].value.cols();
                    {
                        let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                        for (g, d) in gx.data_mut().iter_mut().zip(gout.data()) {
                            *g += *d;
                        }
                    }
                    let gb = Self::slot(&mut grads, *bias, self.nodes[bias.0].value.shape());
                    for (i, d) in gout.data().iter().enumerate() {
                        gb.data_mut()[i % cols] += *d;
                    }
                }
                Op::Sub { a, b } => {
                    {
                        let ga = Self::slot(&mut grads, *a, self.nodes[a.0].value.shape());
                        for (g, d) in ga.data_mut().iter_mut().zip(gout.data()) {
                            *g += *d;
                        }
                    }
                    let gb = Self::slot(&mut grads, *b, self.nodes[b.0].value.shape());
                    for (g, d) in gb.data_mut().iter_mut().zip(gout.data()) {
                        *g -= *d;
                    }
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    {
                        let ga = Self::slot(&mut grads, *a, av.shape());
                        for ((g, d), &v) in ga.data_mut().iter_mut().zip(gout.data()).zip(bv.data())
                        {
                            *g += *d * v;
                        }
                    }
                    let gb = Self::slot(&mut grads, *b, bv.shape());
                    for ((g, d), &v) in gb.data_mut().iter_mut().zip(gout.data()).zip(av.data()) {
                        *g += *d * v;
                    }
                }
                Op::Sum { x } => {
                    let d = gout.data()[0];
                    let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                    for g in gx.data_mut() {
                        *g += d;
                    }
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let gx = Self::slot(&mut grads, *x, xv.shape());
                    for ((g, d), &v) in gx.data_mut().iter_mut().zip(gout.data()).zip(xv.data()) {
                        if v > T::zero() {
                            *g += *d;
                        }
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    through_stats,
                } => {
                    let (rows, cols) = (xhat.rows(), xhat.cols());
                    let gv = &self.nodes[gamma.0].value;
                    // Per-channel reductions of dy and dy*xhat.
                    let mut sum_dy = vec![T::zero(); cols];
                    let mut sum_dy_xhat = vec![T::zero(); cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            let d = gout.data()[r * cols + c];
                            sum_dy[c] += d;
                            sum_dy_xhat[c] += d * xhat.data()[r * cols + c];
                        }
                    }
                    {
                        let gg = Self::slot(&mut grads, *gamma, gv.shape());
                        for (g, s) in gg.data_mut().iter_mut().zip(&sum_dy_xhat) {
                            *g += *s;
                        }
                    }
                    {
                        let gb = Self::slot(&mut grads, *beta, self.nodes[beta.0].value.shape());
                        for (g, s) in gb.data_mut().iter_mut().zip(&sum_dy) {
                            *g += *s;
                        }
                    }
                    let gx = Self::slot(&mut grads, *x, xhat.shape());
                    if *through_stats {
                        let n = T::from_f64(rows as f64);
                        for r in 0..rows {
                            for c in 0..cols {
                                let i = r * cols + c;
                                let term = n * gout.data()[i]
                                    - sum_dy[c]
                                    - xhat.data()[i] * sum_dy_xhat[c];
                                gx.data_mut()[i] += gv.data()[c] * inv_std[c] / n * term;
                            }
                        }
                    } else {
                        for r in 0..rows {
                            for c in 0..cols {
                                let i = r * cols + c;
                                gx.data_mut()[i] += gv.data()[c] * inv_std[c] * gout.data()[i];
                            }
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                    for ((g, d), &m) in gx.data_mut().iter_mut().zip(gout.data()).zip(mask) {
                        *g += *d * m;
                    }
                }
                Op::GatherRows { x, idx } => {
                    let cols = self.nodes[x.0].value.cols();
                    let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = &mut gx.data_mut()[i as usize * cols..(i as usize + 1) * cols];
                        let src = &gout.data()[r * cols..(r + 1) * cols];
                        for (g, d) in dst.iter_mut().zip(src) {
                            *g += *d;
                        }
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (ca, cb) = (self.nodes[a.0].value.cols(), self.nodes[b.0].value.cols());
                    let rows = self.nodes[a.0].value.rows();
                    {
                        let ga = Self::slot(&mut grads, *a, self.nodes[a.0].value.shape());
                        for r in 0..rows {
                            let src = &gout.data()[r * (ca + cb)..r * (ca + cb) + ca];
                            let dst = &mut ga.data_mut()[r * ca..(r + 1) * ca];
                            for (g, d) in dst.iter_mut().zip(src) {
                                *g += *d;
                            }
                        }
                    }
                    let gb = Self::slot(&mut grads, *b, self.nodes[b.0].value.shape());
                    for r in 0..rows {
                        let src = &gout.data()[r * (ca + cb) + ca..(r + 1) * (ca + cb)];
                        let dst = &mut gb.data_mut()[r * cb..(r + 1) * cb];
                        for (g, d) in dst.iter_mut().zip(src) {
                            *g += *d;
                        }
                    }
                }
                Op::GroupMax { x, argmax } => {
                    let cols = self.nodes[x.0].value.cols();
                    let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                    for (o, &src_row) in argmax.iter().enumerate() {
                        let c = o % cols;
                        gx.data_mut()[src_row as usize * cols + c] += gout.data()[o];
                    }
                }
                Op::RepeatRows { x, times } => {
                    let times = *times;
                    let cols = self.nodes[x.0].value.cols();
                    let rows = self.nodes[x.0].value.rows();
                    let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                    for r in 0..rows {
                        for t in 0..times {
                            let src = &gout.data()[(r * times + t) * cols..(r * times + t + 1) * cols];
                            let dst = &mut gx.data_mut()[r * cols..(r + 1) * cols];
                            for (g, d) in dst.iter_mut().zip(src) {
                                *g += *d;
                            }
                        }
                    }
                }
                Op::WeightedGather {
                    x,
                    idx,
                    weights,
                    k,
                } => {
                    let cols = self.nodes[x.0].value.cols();
                    let gx = Self::slot(&mut grads, *x, self.nodes[x.0].value.shape());
                    let targets = idx.len() / k;
                    for t in 0..targets {
                        let src = &gout.data()[t * cols..(t + 1) * cols];
                        for j in 0..*k {
                            let w = weights[t * k + j];
                            let row = idx[t * k + j] as usize;
                            let dst = &mut gx.data_mut()[row * cols..(row + 1) * cols];
                            for (g, d) in dst.iter_mut().zip(src) {
                                *g += w * *d;
                            }
                        }
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let (rows, cols) = (probs.rows(), probs.cols());
                    let scale = gout.data()[0] / T::from_f64(rows as f64);
                    let gl = Self::slot(&mut grads, *logits, probs.shape());
                    for r in 0..rows {
                        for c in 0..cols {
                            let mut p = probs.data()[r * cols + c];
                            if c == labels[r] as usize {
                                p -= T::one();
                            }
                            gl.data_mut()[r * cols + c] += scale * p;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn slot<'g>(
        grads: &'g mut [Option<Tensor<T>>],
        v: Var,
        shape: &[usize],
    ) -> &'g mut Tensor<T> {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    fn rand_tensor(shape: &[usize], r: &mut Rng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape.to_vec(), data).unwrap()
    }

    /// Keeps values away from the relu kink so central differences stay valid.
    fn rand_tensor_off_zero(shape: &[usize], r: &mut Rng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v: f64 = r.gen_range(0.1..1.0);
                if r.gen::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect();
        Tensor::from_vec(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn matmul_identity_passes_through() {
        let mut tape = Tape::<f64>::new();
        let eye = tape.constant(
            Tensor::from_rows(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ])
            .unwrap(),
        );
        let x = rand_tensor(&[3, 4], &mut rng(1));
        let xv = tape.constant(x.clone());
        let y = tape.matmul(eye, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn matmul_scalar_product() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::from_rows(&[vec![2.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![3.0]]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[6.0]);
    }

    // Naive triple-loop reference, independent of the gemm path.
    fn matmul_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[i * k + p] * b.data()[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut r = rng(2);
        let a = rand_tensor(&[4, 5], &mut r);
        let b = rand_tensor(&[5, 3], &mut r);
        let expect = matmul_oracle(&a, &b);
        let mut tape = Tape::new();
        let (av, bv) = (tape.constant(a), tape.constant(b));
        let c = tape.matmul(av, bv).unwrap();
        for (got, want) in tape.value(c).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![4, 2]));
        match tape.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4, 2]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn relu_sign_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

        let neg = tape.constant(Tensor::from_vec(vec![3], vec![-5.0, -0.1, -2.0]).unwrap());
        let z = tape.relu(neg);
        assert_eq!(tape.value(z).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_gradient_gates_by_sign() {
        let mut params = ParamSet::new();
        let id = params.add("x", Tensor::from_vec(vec![2], vec![-1.0, 2.0]).unwrap());
        let mut tape = Tape::new();
        let x = tape.param(id, &params);
        let y = tape.relu(x);
        let loss = tape.sum(y); // upstream gradient of ones
        tape.backward(loss, &mut params).unwrap();
        assert_eq!(params.get(id).grad.data(), &[0.0, 1.0]);
    }

    #[test]
    fn batch_norm_identity_statistics() {
        // Channel already has mean 0 and variance 1: output ~= input.
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(vec![2, 1], vec![-1.0, 1.0]).unwrap());
        let gamma = tape.constant(Tensor::from_vec(vec![1], vec![1.0]).unwrap());
        let beta = tape.constant(Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let mut mean = Tensor::zeros(vec![1]);
        let mut var = Tensor::full(vec![1], 1.0);
        let y = tape
            .batch_norm(x, gamma, beta, &mut mean, &mut var, 0.9, Mode::Train)
            .unwrap();
        for (got, want) in tape.value(y).data().iter().zip([-1.0, 1.0]) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn batch_norm_constant_channel_collapses_to_beta() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(vec![8, 1], 3.5));
        let gamma = tape.constant(Tensor::full(vec![1], 2.0));
        let beta = tape.constant(Tensor::full(vec![1], 0.25));
        let mut mean = Tensor::zeros(vec![1]);
        let mut var = Tensor::full(vec![1], 1.0);
        let y = tape
            .batch_norm(x, gamma, beta, &mut mean, &mut var, 0.9, Mode::Train)
            .unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 0.25).abs() < 1e-9, "constant channel gave {v}");
        }
    }

    #[test]
    fn batch_norm_moving_mean_single_update() {
        // decay 0.7, old mean 0, batch mean 1 -> 0.3
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(vec![4, 1], 1.0));
        let gamma = tape.constant(Tensor::full(vec![1], 1.0));
        let beta = tape.constant(Tensor::zeros(vec![1]));
        let mut mean = Tensor::zeros(vec![1]);
        let mut var = Tensor::full(vec![1], 1.0);
        tape.batch_norm(x, gamma, beta, &mut mean, &mut var, 0.7, Mode::Train)
            .unwrap();
        assert!((mean.data()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_train_normalizes_per_channel() {
        let mut r = rng(7);
        let x = rand_tensor(&[64, 3], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let gamma = tape.constant(Tensor::full(vec![3], 1.0));
        let beta = tape.constant(Tensor::zeros(vec![3]));
        let mut mean = Tensor::zeros(vec![3]);
        let mut var = Tensor::full(vec![3], 1.0);
        let y = tape
            .batch_norm(xv, gamma, beta, &mut mean, &mut var, 0.9, Mode::Train)
            .unwrap();
        let yv = tape.value(y);
        for c in 0..3 {
            let col: Vec<f64> = (0..64).map(|r| yv.get2(r, c)).collect();
            let m: f64 = col.iter().sum::<f64>() / 64.0;
            let v: f64 = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-5, "channel mean {m}");
            assert!((v - 1.0).abs() < 1e-3, "channel var {v}");
        }
    }

    #[test]
    fn dropout_keep_one_and_eval_are_identity() {
        let mut r = rng(3);
        let x = rand_tensor(&[4, 4], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let a = tape.dropout(xv, 1.0, Mode::Train, &mut r).unwrap();
        let b = tape.dropout(xv, 0.5, Mode::Eval, &mut r).unwrap();
        assert_eq!(tape.value(a), &x);
        assert_eq!(tape.value(b), &x);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let n = 100_000;
        let mut r = rng(4);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(vec![n], 1.0));
        let y = tape.dropout(x, 0.5, Mode::Train, &mut r).unwrap();
        let mean: f64 = tape.value(y).data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "empirical mean {mean}");
    }

    #[test]
    fn dropout_rejects_zero_keep() {
        let mut r = rng(5);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(vec![2]));
        assert!(tape.dropout(x, 0.0, Mode::Train, &mut r).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(Tensor::zeros(vec![2, 4]));
        let loss = tape.softmax_cross_entropy(logits, &[1, 3]).unwrap();
        let want = 4.0f64.ln();
        assert!((tape.value(loss).data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated_logit() {
        let mut tape = Tape::<f64>::new();
        let logits =
            tape.constant(Tensor::from_rows(&[vec![1000.0, 0.0, 0.0]]).unwrap());
        let loss = tape.softmax_cross_entropy(logits, &[0]).unwrap();
        assert!(tape.value(loss).data()[0].abs() < 1e-9);
    }

    // Direct f64 evaluation of mean(-log softmax[label]), no max trick.
    fn ce_oracle(logits: &Tensor<f64>, labels: &[u32]) -> f64 {
        let rows = logits.rows();
        let mut total = 0.0;
        for r in 0..rows {
            let row = logits.row(r);
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            let p = row[labels[r] as usize].exp() / denom;
            total += -(p.ln());
        }
        total / rows as f64
    }

    #[test]
    fn cross_entropy_matches_formula_oracle() {
        let mut r = rng(6);
        let logits = rand_tensor(&[3, 5], &mut r);
        let labels = [4u32, 0, 2];
        let want = ce_oracle(&logits, &labels);
        let mut tape = Tape::new();
        let lv = tape.constant(logits);
        let loss = tape.softmax_cross_entropy(lv, &labels).unwrap();
        assert!((tape.value(loss).data()[0] - want).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(Tensor::zeros(vec![1, 3]));
        assert!(matches!(
            tape.softmax_cross_entropy(logits, &[3]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn gather_and_group_max_semantics() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(
            Tensor::from_rows(&[vec![1.0, 10.0], vec![2.0, -3.0], vec![0.5, 7.0]]).unwrap(),
        );
        let g = tape
            .gather_rows(x, Arc::new(vec![2, 0, 2, 1]))
            .unwrap();
        assert_eq!(tape.value(g).shape(), &[4, 2]);
        assert_eq!(tape.value(g).row(0), &[0.5, 7.0]);

        let m = tape.group_max(g, 2).unwrap();
        // group 0 = rows {2, 0}, group 1 = rows {2, 1}
        assert_eq!(tape.value(m).row(0), &[1.0, 10.0]);
        assert_eq!(tape.value(m).row(1), &[2.0, 7.0]);
    }

    #[test]
    fn group_max_matches_loop_oracle() {
        let mut r = rng(8);
        let x = rand_tensor(&[5, 4], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let m = tape.group_max(xv, 5).unwrap();
        for c in 0..4 {
            let want = (0..5).map(|i| x.get2(i, c)).fold(f64::MIN, f64::max);
            assert_eq!(tape.value(m).get2(0, c), want);
        }
    }

    #[test]
    fn repeat_rows_tiles_in_group_order() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let y = tape.repeat_rows(x, 3).unwrap();
        let flat: Vec<f64> = tape.value(y).data().to_vec();
        assert_eq!(flat, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn weighted_gather_blends_rows() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![3.0, 8.0]]).unwrap());
        let y = tape
            .weighted_gather(
                x,
                Arc::new(vec![0, 1]),
                Arc::new(vec![0.25, 0.75]),
                2,
            )
            .unwrap();
        assert_eq!(tape.value(y).row(0), &[2.5, 6.0]);
    }

    /// Terminal for op-level gradient checks: dot with a fixed random tensor
    /// so upstream gradients are non-uniform.
    fn dot_terminal(tape: &mut Tape<f64>, x: Var, seed: u64) -> Var {
        let shape = tape.value(x).shape().to_vec();
        let w = tape.constant(rand_tensor(&shape, &mut rng(seed ^ 0xdead)));
        let prod = tape.mul(x, w).unwrap();
        tape.sum(prod)
    }

    #[test]
    fn per_op_gradients_match_central_differences() {
        // One compact graph per op, randomized shapes, f64, h = 1e-4.
        for trial in 0..8u64 {
            let mut r = rng(100 + trial);
            let rows = r.gen_range(2..6) * 2;
            let cols = r.gen_range(1..5);
            let inner = r.gen_range(1..5);

            // matmul + add_bias + relu
            let mut params = ParamSet::new();
            let a = params.add("a", rand_tensor_off_zero(&[rows, inner], &mut r));
            let b = params.add("b", rand_tensor_off_zero(&[inner, cols], &mut r));
            let bias = params.add("bias", rand_tensor(&[cols], &mut r));
            let report = grad_check(
                &mut params,
                |tape, ps| {
                    let av = tape.param(a, ps);
                    let bv = tape.param(b, ps);
                    let biasv = tape.param(bias, ps);
                    let mm = tape.matmul(av, bv)?;
                    let ab = tape.add_bias(mm, biasv)?;
                    let y = tape.relu(ab);
                    Ok(dot_terminal(tape, y, trial))
                },
                1e-4,
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "affine: {report:?}");

            // batch_norm in both modes, plus sub and mul
            let mut params = ParamSet::new();
            let x = params.add("x", rand_tensor(&[rows, cols], &mut r));
            let y2 = params.add("y", rand_tensor(&[rows, cols], &mut r));
            let gamma = params.add("gamma", rand_tensor_off_zero(&[cols], &mut r));
            let beta = params.add("beta", rand_tensor(&[cols], &mut r));
            for mode in [Mode::Train, Mode::Eval] {
                let report = grad_check(
                    &mut params,
                    |tape, ps| {
                        let xv = tape.param(x, ps);
                        let yv = tape.param(y2, ps);
                        let gv = tape.param(gamma, ps);
                        let bv = tape.param(beta, ps);
                        let d = tape.sub(xv, yv)?;
                        let d = tape.mul(d, xv)?;
                        let mut mean = Tensor::zeros(vec![cols]);
                        let mut var = Tensor::full(vec![cols], 1.0);
                        let n = tape.batch_norm(d, gv, bv, &mut mean, &mut var, 0.9, mode)?;
                        Ok(dot_terminal(tape, n, trial))
                    },
                    1e-4,
                )
                .unwrap();
                assert!(report.max_rel_err < 1e-4, "batch_norm {mode:?}: {report:?}");
            }

            // gather + concat + group_max + repeat + weighted_gather
            let mut params = ParamSet::new();
            let x = params.add("x", rand_tensor(&[rows, cols], &mut r));
            let idx: Arc<Vec<u32>> = Arc::new(
                (0..rows * 2)
                    .map(|_| r.gen_range(0..rows) as u32)
                    .collect(),
            );
            let widx: Arc<Vec<u32>> = Arc::new(
                (0..rows * 2)
                    .map(|_| r.gen_range(0..rows) as u32)
                    .collect(),
            );
            let w: Arc<Vec<f64>> =
                Arc::new((0..rows * 2).map(|_| r.gen_range(0.1..1.0)).collect());
            let report = grad_check(
                &mut params,
                |tape, ps| {
                    let xv = tape.param(x, ps);
                    let g = tape.gather_rows(xv, idx.clone())?;
                    let wg = tape.weighted_gather(xv, widx.clone(), w.clone(), 2)?;
                    let cc = tape.concat_cols(g, g)?;
                    let gm = tape.group_max(cc, 2)?;
                    let rep = tape.repeat_rows(wg, 2)?;
                    let rep = tape.group_max(rep, 2)?;
                    let both = tape.concat_cols(gm, rep)?;
                    Ok(dot_terminal(tape, both, trial))
                },
                1e-4,
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "gather/pool: {report:?}");

            // softmax cross-entropy
            let classes = cols.max(2);
            let mut params = ParamSet::new();
            let logits = params.add("logits", rand_tensor(&[rows, classes], &mut r));
            let labels: Vec<u32> = (0..rows).map(|_| r.gen_range(0..classes) as u32).collect();
            let report = grad_check(
                &mut params,
                |tape, ps| {
                    let lv = tape.param(logits, ps);
                    tape.softmax_cross_entropy(lv, &labels)
                },
                1e-4,
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "cross_entropy: {report:?}");
        }
    }

    #[test]
    fn dropout_gradient_with_pinned_seed() {
        let mut params = ParamSet::new();
        let x = params.add("x", rand_tensor(&[16, 4], &mut rng(11)));
        let report = grad_check(
            &mut params,
            |tape, ps| {
                let xv = tape.param(x, ps);
                let mut drop_rng = rng(42); // same mask on every call
                let y = tape.dropout(xv, 0.5, Mode::Train, &mut drop_rng)?;
                Ok(dot_terminal(tape, y, 12))
            },
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut params = ParamSet::<f64>::new();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![2, 2]));
        assert!(matches!(
            tape.backward(x, &mut params),
            Err(Error::Contract(_))
        ));
    }
}
