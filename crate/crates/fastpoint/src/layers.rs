//! Neural building blocks composed from tape primitives: shared per-point
//! MLPs, edge convolution, global max pooling and fully-connected stacks.
//!
//! Layers are split into an init step that registers parameters (stable
//! names, Glorot-uniform weights, zero biases) and a forward step that
//! records tape operations. All per-point work runs on flattened
//! `[batch * points, channels]` matrices.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Mode, ParamId, ParamSet, Scalar, StateId, Tape, Tensor, Var};
use crate::Rng;

/// Channel sizes of a shared MLP; each sublayer is affine + batch norm + ReLU
/// applied identically to every point/edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedMlpSpec {
    pub channels: Vec<usize>,
}

impl SharedMlpSpec {
    pub fn new(channels: &[usize]) -> Self {
        assert!(
            !channels.is_empty() && channels.iter().all(|&c| c >= 1),
            "shared MLP needs at least one sublayer of width >= 1"
        );
        SharedMlpSpec {
            channels: channels.to_vec(),
        }
    }

    pub fn out_channels(&self) -> usize {
        *self.channels.last().unwrap()
    }
}

/// Edge convolution: a shared MLP over `[x_i || x_j - x_i]` pairs followed by
/// max aggregation over the k neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeConvSpec {
    pub mlp: SharedMlpSpec,
    pub k: usize,
}

impl EdgeConvSpec {
    pub fn new(channels: &[usize], k: usize) -> Self {
        assert!(k >= 1, "edge convolution needs k >= 1");
        EdgeConvSpec {
            mlp: SharedMlpSpec::new(channels),
            k,
        }
    }
}

/// Parameter handles of one affine + batch-norm sublayer. The affine map
/// carries no bias: batch norm removes any constant shift and `beta` supplies
/// the learned offset instead.
#[derive(Debug, Clone)]
pub struct DenseNorm {
    pub w: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: StateId,
    pub var: StateId,
    pub in_channels: usize,
    pub out_channels: usize,
}

/// Parameter handles of a shared MLP.
#[derive(Debug, Clone)]
pub struct SharedMlp {
    pub layers: Vec<DenseNorm>,
}

impl SharedMlp {
    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().unwrap().out_channels
    }
}

/// Parameter handles of a fully-connected head: hidden affine+BN+ReLU+dropout
/// layers, then a final affine map producing logits.
#[derive(Debug, Clone)]
pub struct FcStack {
    pub hidden: Vec<DenseNorm>,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub dropout_keep: f64,
}

/// Everything a forward pass threads through the layer stack.
pub struct Ctx<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a mut ParamSet<T>,
    pub mode: Mode,
    pub bn_decay: f64,
    pub rng: &'a mut Rng,
}

/// Glorot-style uniform init: `U[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
/// Draws happen in f64 so f32 and f64 models share the same stream.
pub fn glorot_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng.gen_range(-a..a)))
        .collect();
    Tensor::from_vec(vec![fan_in, fan_out], data).unwrap()
}

/// Registers one affine + batch-norm sublayer under `name`.
pub fn init_dense_norm<T: Scalar>(
    params: &mut ParamSet<T>,
    name: &str,
    in_channels: usize,
    out_channels: usize,
    rng: &mut Rng,
) -> DenseNorm {
    DenseNorm {
        w: params.add(format!("{name}.w"), glorot_uniform(in_channels, out_channels, rng)),
        gamma: params.add(format!("{name}.gamma"), Tensor::full(vec![out_channels], T::one())),
        beta: params.add(format!("{name}.beta"), Tensor::zeros(vec![out_channels])),
        mean: params.add_state(format!("{name}.mean"), Tensor::zeros(vec![out_channels])),
        var: params.add_state(format!("{name}.var"), Tensor::full(vec![out_channels], T::one())),
        in_channels,
        out_channels,
    }
}

pub fn init_shared_mlp<T: Scalar>(
    params: &mut ParamSet<T>,
    name: &str,
    in_channels: usize,
    spec: &SharedMlpSpec,
    rng: &mut Rng,
) -> SharedMlp {
    let mut layers = Vec::with_capacity(spec.channels.len());
    let mut prev = in_channels;
    for (i, &ch) in spec.channels.iter().enumerate() {
        layers.push(init_dense_norm(params, &format!("{name}.{i}"), prev, ch, rng));
        prev = ch;
    }
    SharedMlp { layers }
}

pub fn init_fc_stack<T: Scalar>(
    params: &mut ParamSet<T>,
    name: &str,
    in_channels: usize,
    hidden: &[usize],
    out_channels: usize,
    dropout_keep: f64,
    rng: &mut Rng,
) -> FcStack {
    let mut layers = Vec::with_capacity(hidden.len());
    let mut prev = in_channels;
    for (i, &ch) in hidden.iter().enumerate() {
        layers.push(init_dense_norm(params, &format!("{name}.{i}"), prev, ch, rng));
        prev = ch;
    }
    FcStack {
        hidden: layers,
        out_w: params.add(format!("{name}.out.w"), glorot_uniform(prev, out_channels, rng)),
        out_b: params.add(format!("{name}.out.b"), Tensor::zeros(vec![out_channels])),
        dropout_keep,
    }
}

fn dense_bn_relu<T: Scalar>(ctx: &mut Ctx<'_, T>, layer: &DenseNorm, x: Var) -> Result<Var> {
    if ctx.tape.value(x).cols() != layer.in_channels {
        return Err(Error::Shape {
            op: "dense_bn_relu",
            lhs: ctx.tape.value(x).shape().to_vec(),
            rhs: vec![layer.in_channels, layer.out_channels],
        });
    }
    let w = ctx.tape.param(layer.w, ctx.params);
    let gamma = ctx.tape.param(layer.gamma, ctx.params);
    let beta = ctx.tape.param(layer.beta, ctx.params);
    let z = ctx.tape.matmul(x, w)?;
    let (mean, var) = ctx.params.state_pair_mut(layer.mean, layer.var);
    let n = ctx
        .tape
        .batch_norm(z, gamma, beta, mean, var, ctx.bn_decay, ctx.mode)?;
    Ok(ctx.tape.relu(n))
}

/// Applies the shared MLP to every row (point or edge) identically.
pub fn shared_mlp<T: Scalar>(ctx: &mut Ctx<'_, T>, mlp: &SharedMlp, x: Var) -> Result<Var> {
    let mut h = x;
    for layer in &mlp.layers {
        h = dense_bn_relu(ctx, layer, h)?;
    }
    Ok(h)
}

/// Edge convolution over precomputed neighbour tables.
///
/// `sample` lists the row of each output point in the source feature matrix;
/// `neighbors` holds `sample.len() * k` rows into the same matrix (the
/// pre-sampling set, so dropped points still contribute through their
/// neighbourhoods). Each edge gets the shared MLP applied to
/// `[x_i || x_j - x_i]` and the k results are max-pooled.
pub fn edge_conv<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    mlp: &SharedMlp,
    source_feats: Var,
    sample: &[u32],
    neighbors: Arc<Vec<u32>>,
    k: usize,
) -> Result<Var> {
    if neighbors.len() != sample.len() * k {
        return Err(Error::Size {
            op: "edge_conv",
            requested: sample.len() * k,
            available: neighbors.len(),
        });
    }
    let feat_ch = ctx.tape.value(source_feats).cols();
    if mlp.in_channels() != 2 * feat_ch {
        return Err(Error::Shape {
            op: "edge_conv",
            lhs: vec![feat_ch],
            rhs: vec![mlp.in_channels()],
        });
    }
    let mut centers = Vec::with_capacity(neighbors.len());
    for &s in sample {
        centers.extend(std::iter::repeat(s).take(k));
    }
    let c = ctx.tape.gather_rows(source_feats, Arc::new(centers))?;
    let nb = ctx.tape.gather_rows(source_feats, neighbors)?;
    let offset = ctx.tape.sub(nb, c)?;
    let edges = ctx.tape.concat_cols(c, offset)?;
    let h = shared_mlp(ctx, mlp, edges)?;
    ctx.tape.group_max(h, k)
}

/// Elementwise max over each sample's points: `[B*points, F] -> [B, F]`.
pub fn global_max_pool<T: Scalar>(
    tape: &mut Tape<T>,
    feats: Var,
    points_per_sample: usize,
) -> Result<Var> {
    tape.group_max(feats, points_per_sample)
}

/// Fully-connected head: hidden affine+BN+ReLU+dropout layers, then a final
/// affine map (logits, no activation).
pub fn fc_stack<T: Scalar>(ctx: &mut Ctx<'_, T>, fc: &FcStack, x: Var) -> Result<Var> {
    let mut h = x;
    for layer in &fc.hidden {
        h = dense_bn_relu(ctx, layer, h)?;
        h = ctx
            .tape
            .dropout(h, fc.dropout_keep, ctx.mode, ctx.rng)?;
    }
    let w = ctx.tape.param(fc.out_w, ctx.params);
    let b = ctx.tape.param(fc.out_b, ctx.params);
    let z = ctx.tape.matmul(h, w)?;
    ctx.tape.add_bias(z, b)
}
