//! The two network architectures: shape classification and semantic part
//! segmentation, assembled from geometry kernels and tape layers.
//!
//! Geometry (sampling, neighbour tables, interpolation weights) is computed
//! up front into a per-cloud plan; the differentiable forward pass then only
//! replays gathers and layer math. Batches are flattened row-wise: a batch of
//! B clouds with N points each is a `[B*N, channels]` matrix plus index
//! tables offset per sample.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, interpolation_weights, knn_search, PointCloud};
use crate::layers::{
    edge_conv, fc_stack, global_max_pool, init_fc_stack, init_shared_mlp, shared_mlp, Ctx,
    FcStack, SharedMlp, SharedMlpSpec,
};
use crate::tensor::{Mode, ParamSet, Scalar, Tape, Tensor, Var};
use crate::Rng;
use rand::Rng as _;
use rand::SeedableRng as _;

/// Centroid-magnitude threshold for rejecting unnormalized clouds when the
/// strict flag is set.
const STRICT_CENTROID_TOL: f64 = 1e-3;

/// One sampling + grouping + edge-convolution stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Points kept by farthest point sampling.
    pub sample: usize,
    /// Neighbours looked up in the pre-sampling set.
    pub k: usize,
    /// Edge-convolution MLP widths.
    pub channels: Vec<usize>,
}

/// Upsampling stage: edge convolution over the full target level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpConfig {
    pub k: usize,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_points: usize,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Shared MLP widths applied after the second stage.
    pub aggregate: Vec<usize>,
    /// Hidden widths of the fully-connected head.
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    pub dropout_keep: f64,
}

impl ClassifierConfig {
    /// The published configuration: 1024 points, stages 512 (k=20, EC 64,64)
    /// and 128 (k=15, EC 128,128), aggregate MLP (256,512,1024), head
    /// (512,256,C) with dropout keep 0.5.
    pub fn paper(num_classes: usize) -> Self {
        ClassifierConfig {
            input_points: 1024,
            stage1: StageConfig {
                sample: 512,
                k: 20,
                channels: vec![64, 64],
            },
            stage2: StageConfig {
                sample: 128,
                k: 15,
                channels: vec![128, 128],
            },
            aggregate: vec![256, 512, 1024],
            head_hidden: vec![512, 256],
            num_classes,
            dropout_keep: 0.5,
        }
    }

    /// Same layer widths, sample sizes scaled to a smaller cloud by the
    /// published ratios (N/2 and N/8), neighbour counts capped.
    pub fn scaled(input_points: usize, num_classes: usize) -> Self {
        let mut cfg = Self::paper(num_classes);
        cfg.input_points = input_points;
        cfg.stage1.sample = (input_points / 2).max(2);
        cfg.stage2.sample = (input_points / 8).max(1);
        cfg.stage1.k = cfg.stage1.k.min(input_points);
        cfg.stage2.k = cfg.stage2.k.min(cfg.stage1.sample);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.input_points >= 2
            && self.stage1.sample <= self.input_points
            && self.stage2.sample < self.stage1.sample
            && self.stage1.k >= 1
            && self.stage1.k <= self.input_points
            && self.stage2.k >= 1
            && self.stage2.k <= self.stage1.sample
            && !self.stage1.channels.is_empty()
            && !self.stage2.channels.is_empty()
            && !self.aggregate.is_empty()
            && self.num_classes >= 1
            && self.dropout_keep > 0.0
            && self.dropout_keep <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "invalid classifier config: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub input_points: usize,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Upsample to the stage-1 point count, concat stage-1 skip features.
    pub up1: UpConfig,
    /// Upsample to the full cloud, concat raw coordinates.
    pub up2: UpConfig,
    /// Neighbour count of the inverse-square-distance interpolation.
    pub interp_k: usize,
    pub head_hidden: Vec<usize>,
    pub num_part_classes: usize,
    pub dropout_keep: f64,
}

impl SegmenterConfig {
    /// The published configuration: 2048 points, the classifier encoder,
    /// upsampling 128 -> 512 -> 2048 with EC (256,256) k=15 and
    /// EC (512,512,1024) k=20, head MLP (256,256,128,C) with dropout keep 0.6.
    pub fn paper(num_part_classes: usize) -> Self {
        SegmenterConfig {
            input_points: 2048,
            stage1: StageConfig {
                sample: 512,
                k: 20,
                channels: vec![64, 64],
            },
            stage2: StageConfig {
                sample: 128,
                k: 15,
                channels: vec![128, 128],
            },
            up1: UpConfig {
                k: 15,
                channels: vec![256, 256],
            },
            up2: UpConfig {
                k: 20,
                channels: vec![512, 512, 1024],
            },
            interp_k: 3,
            head_hidden: vec![256, 256, 128],
            num_part_classes,
            dropout_keep: 0.6,
        }
    }

    /// Desk-scale variant: sample ratios N/4 and N/16 as published, widths
    /// divided by `width_div` so the segmenter trains within CPU budgets.
    pub fn scaled(input_points: usize, num_part_classes: usize, width_div: usize) -> Self {
        let d = width_div.max(1);
        let mut cfg = Self::paper(num_part_classes);
        cfg.input_points = input_points;
        cfg.stage1.sample = (input_points / 4).max(2);
        cfg.stage2.sample = (input_points / 16).max(1);
        cfg.stage1.k = cfg.stage1.k.min(input_points);
        cfg.stage2.k = cfg.stage2.k.min(cfg.stage1.sample);
        cfg.up1.k = cfg.up1.k.min(cfg.stage1.sample);
        cfg.up2.k = cfg.up2.k.min(input_points);
        cfg.interp_k = cfg.interp_k.min(cfg.stage2.sample);
        for ch in [
            &mut cfg.stage1.channels,
            &mut cfg.stage2.channels,
            &mut cfg.up1.channels,
            &mut cfg.up2.channels,
            &mut cfg.head_hidden,
        ] {
            for c in ch.iter_mut() {
                *c = (*c / d).max(4);
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.input_points >= 2
            && self.stage1.sample <= self.input_points
            && self.stage2.sample < self.stage1.sample
            && self.stage1.k >= 1
            && self.stage1.k <= self.input_points
            && self.stage2.k >= 1
            && self.stage2.k <= self.stage1.sample
            && self.up1.k >= 1
            && self.up1.k <= self.stage1.sample
            && self.up2.k >= 1
            && self.up2.k <= self.input_points
            && self.interp_k >= 1
            && self.interp_k <= self.stage2.sample
            && !self.head_hidden.is_empty()
            && self.num_part_classes >= 1
            && self.dropout_keep > 0.0
            && self.dropout_keep <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "invalid segmenter config: {self:?}"
            )))
        }
    }
}

/// Task-tagged configuration, stored as structured text in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelConfig {
    Classifier(ClassifierConfig),
    Segmenter(SegmenterConfig),
}

fn chain_count(total: &mut usize, in_ch: usize, widths: &[usize]) -> usize {
    let mut prev = in_ch;
    for &w in widths {
        *total += prev * w + 2 * w; // weights + batch-norm gamma/beta
        prev = w;
    }
    prev
}

/// Learnable scalar count implied by a classifier config, by closed-form
/// arithmetic over layer dimensions (independent of parameter construction).
pub fn classifier_param_count(cfg: &ClassifierConfig) -> usize {
    let mut total = 0;
    let c1 = chain_count(&mut total, 2 * 3, &cfg.stage1.channels);
    let c2 = chain_count(&mut total, 2 * c1, &cfg.stage2.channels);
    let agg = chain_count(&mut total, c2, &cfg.aggregate);
    let head_in = chain_count(&mut total, agg, &cfg.head_hidden);
    total + head_in * cfg.num_classes + cfg.num_classes
}

/// Learnable scalar count implied by a segmenter config.
pub fn segmenter_param_count(cfg: &SegmenterConfig) -> usize {
    let mut total = 0;
    let c1 = chain_count(&mut total, 2 * 3, &cfg.stage1.channels);
    let c2 = chain_count(&mut total, 2 * c1, &cfg.stage2.channels);
    let u1 = chain_count(&mut total, 2 * (c2 + c1), &cfg.up1.channels);
    let u2 = chain_count(&mut total, 2 * (u1 + 3), &cfg.up2.channels);
    let head_in = chain_count(&mut total, 2 * u2, &cfg.head_hidden);
    total + head_in * cfg.num_part_classes + cfg.num_part_classes
}

/// Per-cloud geometry for the classifier: sampling and neighbour tables for
/// both stages, with stage-2 indices local to the stage-1 subset.
#[derive(Debug, Clone)]
pub struct ClassifierPlan {
    s1_sample: Vec<u32>,
    s1_nbrs: Vec<u32>,
    s2_sample: Vec<u32>,
    s2_nbrs: Vec<u32>,
}

fn subset_coords<T: Scalar>(cloud: &Tensor<T>, indices: &[u32]) -> Tensor<T> {
    let mut data = Vec::with_capacity(indices.len() * 3);
    for &i in indices {
        data.extend_from_slice(cloud.row(i as usize));
    }
    Tensor::from_vec(vec![indices.len(), 3], data).unwrap()
}

/// Seed choice for farthest point sampling: random draw during training,
/// the point nearest the centroid (deterministic) during evaluation.
pub enum FpsSeed<'r> {
    Canonical,
    Random(&'r mut Rng),
}

impl FpsSeed<'_> {
    fn pick<T: Scalar>(&mut self, cloud: &PointCloud<T>) -> usize {
        match self {
            FpsSeed::Canonical => cloud.nearest_to_centroid(),
            FpsSeed::Random(rng) => rng.gen_range(0..cloud.len()),
        }
    }
}

pub fn plan_classifier<T: Scalar>(
    cfg: &ClassifierConfig,
    cloud: &PointCloud<T>,
    seed: &mut FpsSeed<'_>,
) -> Result<ClassifierPlan> {
    let s1 = farthest_point_sample(cloud, cfg.stage1.sample, seed.pick(cloud))?;
    let coords1 = subset_coords(cloud.coords(), s1.indices());
    let nbrs1 = knn_search(&coords1, cloud.coords(), cfg.stage1.k)?;

    let sub1 = PointCloud::new(coords1.clone())?;
    let s2 = farthest_point_sample(&sub1, cfg.stage2.sample, seed.pick(&sub1))?;
    let coords2 = subset_coords(&coords1, s2.indices());
    let nbrs2 = knn_search(&coords2, &coords1, cfg.stage2.k)?;

    Ok(ClassifierPlan {
        s1_sample: s1.indices().to_vec(),
        s1_nbrs: nbrs1.into_flat(),
        s2_sample: s2.indices().to_vec(),
        s2_nbrs: nbrs2.into_flat(),
    })
}

fn check_cloud<T: Scalar>(
    cloud: &PointCloud<T>,
    expected_points: usize,
    strict: bool,
) -> Result<()> {
    if cloud.len() != expected_points {
        return Err(Error::Size {
            op: "model input",
            requested: expected_points,
            available: cloud.len(),
        });
    }
    if strict && cloud.centroid_norm() > STRICT_CENTROID_TOL {
        return Err(Error::Contract(format!(
            "input cloud is not unit-sphere normalized (|centroid| = {:.2e})",
            cloud.centroid_norm()
        )));
    }
    Ok(())
}

fn offset_concat(per_cloud: &[&Vec<u32>], stride: u32) -> Arc<Vec<u32>> {
    let mut out = Vec::with_capacity(per_cloud.iter().map(|v| v.len()).sum());
    for (b, v) in per_cloud.iter().enumerate() {
        let off = b as u32 * stride;
        out.extend(v.iter().map(|&i| i + off));
    }
    Arc::new(out)
}

fn stack_coords<T: Scalar>(clouds: &[&PointCloud<T>]) -> Tensor<T> {
    let n: usize = clouds.iter().map(|c| c.len()).sum();
    let mut data = Vec::with_capacity(n * 3);
    for c in clouds {
        data.extend_from_slice(c.coords().data());
    }
    Tensor::from_vec(vec![n, 3], data).unwrap()
}

/// A flattened batch ready for the classifier forward pass.
pub struct ClassifierBatch<T> {
    pub coords: Tensor<T>,
    pub batch: usize,
    s1_sample: Arc<Vec<u32>>,
    s1_nbrs: Arc<Vec<u32>>,
    s2_sample: Arc<Vec<u32>>,
    s2_nbrs: Arc<Vec<u32>>,
}

impl<T: Scalar> ClassifierBatch<T> {
    pub fn build(
        cfg: &ClassifierConfig,
        clouds: &[&PointCloud<T>],
        mut seed: FpsSeed<'_>,
        strict: bool,
    ) -> Result<Self> {
        assert!(!clouds.is_empty(), "empty batch");
        let mut plans = Vec::with_capacity(clouds.len());
        for cloud in clouds {
            check_cloud(cloud, cfg.input_points, strict)?;
            plans.push(plan_classifier(cfg, cloud, &mut seed)?);
        }
        let n = cfg.input_points as u32;
        let m1 = cfg.stage1.sample as u32;
        let pick = |f: fn(&ClassifierPlan) -> &Vec<u32>| -> Vec<&Vec<u32>> {
            plans.iter().map(f).collect()
        };
        Ok(ClassifierBatch {
            coords: stack_coords(clouds),
            batch: clouds.len(),
            s1_sample: offset_concat(&pick(|p| &p.s1_sample), n),
            s1_nbrs: offset_concat(&pick(|p| &p.s1_nbrs), n),
            s2_sample: offset_concat(&pick(|p| &p.s2_sample), m1),
            s2_nbrs: offset_concat(&pick(|p| &p.s2_nbrs), m1),
        })
    }
}

/// Tape handles of each classifier stage output, for shape assertions and
/// feature inspection.
pub struct ClassifierTrace {
    pub stage1: Var,
    pub stage2: Var,
    pub aggregated: Var,
    pub global: Var,
    pub logits: Var,
}

struct ClassifierHandles {
    ec1: SharedMlp,
    ec2: SharedMlp,
    agg: SharedMlp,
    head: FcStack,
}

/// The classification network with its parameters.
pub struct Classifier<T: Scalar> {
    pub cfg: ClassifierConfig,
    pub params: ParamSet<T>,
    handles: ClassifierHandles,
}

impl<T: Scalar> Classifier<T> {
    /// Builds parameters in a stable order from a seeded RNG.
    pub fn init(cfg: ClassifierConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let ec1 = init_shared_mlp(
            &mut params,
            "enc1",
            2 * 3,
            &SharedMlpSpec::new(&cfg.stage1.channels),
            &mut rng,
        );
        let ec2 = init_shared_mlp(
            &mut params,
            "enc2",
            2 * ec1.out_channels(),
            &SharedMlpSpec::new(&cfg.stage2.channels),
            &mut rng,
        );
        let agg = init_shared_mlp(
            &mut params,
            "agg",
            ec2.out_channels(),
            &SharedMlpSpec::new(&cfg.aggregate),
            &mut rng,
        );
        let head = init_fc_stack(
            &mut params,
            "head",
            agg.out_channels(),
            &cfg.head_hidden,
            cfg.num_classes,
            cfg.dropout_keep,
            &mut rng,
        );
        Ok(Classifier {
            cfg,
            params,
            handles: ClassifierHandles {
                ec1,
                ec2,
                agg,
                head,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Forward pass over a prepared batch; returns per-stage tape handles
    /// with `logits` of shape `[batch, num_classes]`.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        batch: &ClassifierBatch<T>,
        mode: Mode,
        bn_decay: f64,
        rng: &mut Rng,
    ) -> Result<ClassifierTrace> {
        Self::forward_impl(
            &self.cfg,
            &self.handles,
            &mut self.params,
            tape,
            batch,
            mode,
            bn_decay,
            rng,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_impl(
        cfg: &ClassifierConfig,
        handles: &ClassifierHandles,
        params: &mut ParamSet<T>,
        tape: &mut Tape<T>,
        batch: &ClassifierBatch<T>,
        mode: Mode,
        bn_decay: f64,
        rng: &mut Rng,
    ) -> Result<ClassifierTrace> {
        let (b, m2) = (batch.batch, cfg.stage2.sample);
        let coords = tape.constant(batch.coords.clone());
        let mut ctx = Ctx {
            tape,
            params,
            mode,
            bn_decay,
            rng,
        };
        let stage1 = edge_conv(
            &mut ctx,
            &handles.ec1,
            coords,
            &batch.s1_sample,
            batch.s1_nbrs.clone(),
            cfg.stage1.k,
        )?;
        let stage2 = edge_conv(
            &mut ctx,
            &handles.ec2,
            stage1,
            &batch.s2_sample,
            batch.s2_nbrs.clone(),
            cfg.stage2.k,
        )?;
        let aggregated = shared_mlp(&mut ctx, &handles.agg, stage2)?;
        let global = global_max_pool(ctx.tape, aggregated, m2)?;
        debug_assert_eq!(ctx.tape.value(global).rows(), b);
        let logits = fc_stack(&mut ctx, &handles.head, global)?;
        Ok(ClassifierTrace {
            stage1,
            stage2,
            aggregated,
            global,
            logits,
        })
    }
}

/// Per-cloud geometry for the segmenter: the encoder plan plus interpolation
/// tables and self-graphs for both upsampling stages.
#[derive(Debug, Clone)]
pub struct SegmenterPlan {
    encoder: ClassifierPlan,
    up1_idx: Vec<u32>,
    up1_w: Vec<f64>,
    up1_nbrs: Vec<u32>,
    up2_idx: Vec<u32>,
    up2_w: Vec<f64>,
    up2_nbrs: Vec<u32>,
}

pub fn plan_segmenter<T: Scalar>(
    cfg: &SegmenterConfig,
    cloud: &PointCloud<T>,
    seed: &mut FpsSeed<'_>,
) -> Result<SegmenterPlan> {
    let enc_cfg = ClassifierConfig {
        input_points: cfg.input_points,
        stage1: cfg.stage1.clone(),
        stage2: cfg.stage2.clone(),
        aggregate: vec![1],
        head_hidden: vec![],
        num_classes: 1,
        dropout_keep: 1.0,
    };
    let encoder = plan_classifier(&enc_cfg, cloud, seed)?;
    let coords1 = subset_coords(cloud.coords(), &encoder.s1_sample);
    let coords2 = subset_coords(&coords1, &encoder.s2_sample);

    let (up1_idx, up1_w) = interpolation_weights(&coords1, &coords2, cfg.interp_k)?;
    let up1_nbrs = knn_search(&coords1, &coords1, cfg.up1.k)?.into_flat();
    let (up2_idx, up2_w) = interpolation_weights(cloud.coords(), &coords1, cfg.interp_k)?;
    let up2_nbrs = knn_search(cloud.coords(), cloud.coords(), cfg.up2.k)?.into_flat();

    Ok(SegmenterPlan {
        encoder,
        up1_idx,
        up1_w: up1_w.iter().map(|w| w.as_f64()).collect(),
        up1_nbrs,
        up2_idx,
        up2_w: up2_w.iter().map(|w| w.as_f64()).collect(),
        up2_nbrs,
    })
}

/// A flattened batch ready for the segmenter forward pass.
pub struct SegmenterBatch<T> {
    pub coords: Tensor<T>,
    pub batch: usize,
    s1_sample: Arc<Vec<u32>>,
    s1_nbrs: Arc<Vec<u32>>,
    s2_sample: Arc<Vec<u32>>,
    s2_nbrs: Arc<Vec<u32>>,
    up1_idx: Arc<Vec<u32>>,
    up1_w: Arc<Vec<T>>,
    up1_sample: Vec<u32>,
    up1_nbrs: Arc<Vec<u32>>,
    up2_idx: Arc<Vec<u32>>,
    up2_w: Arc<Vec<T>>,
    up2_sample: Vec<u32>,
    up2_nbrs: Arc<Vec<u32>>,
}

impl<T: Scalar> SegmenterBatch<T> {
    pub fn build(
        cfg: &SegmenterConfig,
        clouds: &[&PointCloud<T>],
        mut seed: FpsSeed<'_>,
        strict: bool,
    ) -> Result<Self> {
        assert!(!clouds.is_empty(), "empty batch");
        let mut plans = Vec::with_capacity(clouds.len());
        for cloud in clouds {
            check_cloud(cloud, cfg.input_points, strict)?;
            plans.push(plan_segmenter(cfg, cloud, &mut seed)?);
        }
        let n = cfg.input_points as u32;
        let m1 = cfg.stage1.sample as u32;
        let m2 = cfg.stage2.sample as u32;
        let b = clouds.len();

        let pick = |f: fn(&SegmenterPlan) -> &Vec<u32>| -> Vec<&Vec<u32>> {
            plans.iter().map(f).collect()
        };
        let weights = |f: fn(&SegmenterPlan) -> &Vec<f64>| -> Arc<Vec<T>> {
            Arc::new(
                plans
                    .iter()
                    .flat_map(|p| f(p).iter().map(|&w| T::from_f64(w)))
                    .collect::<Vec<T>>(),
            )
        };
        Ok(SegmenterBatch {
            coords: stack_coords(clouds),
            batch: b,
            s1_sample: offset_concat(&pick(|p| &p.encoder.s1_sample), n),
            s1_nbrs: offset_concat(&pick(|p| &p.encoder.s1_nbrs), n),
            s2_sample: offset_concat(&pick(|p| &p.encoder.s2_sample), m1),
            s2_nbrs: offset_concat(&pick(|p| &p.encoder.s2_nbrs), m1),
            up1_idx: offset_concat(&pick(|p| &p.up1_idx), m2),
            up1_w: weights(|p| &p.up1_w),
            up1_sample: (0..b as u32 * m1).collect(),
            up1_nbrs: offset_concat(&pick(|p| &p.up1_nbrs), m1),
            up2_idx: offset_concat(&pick(|p| &p.up2_idx), m1),
            up2_w: weights(|p| &p.up2_w),
            up2_sample: (0..b as u32 * n).collect(),
            up2_nbrs: offset_concat(&pick(|p| &p.up2_nbrs), n),
        })
    }
}

/// Tape handles of the segmenter stages; `logits` has shape
/// `[batch * input_points, num_part_classes]`, rows in input-point order.
pub struct SegmenterTrace {
    pub encoder: Var,
    pub up1: Var,
    pub up2: Var,
    pub global: Var,
    pub logits: Var,
}

struct SegmenterHandles {
    ec1: SharedMlp,
    ec2: SharedMlp,
    up1: SharedMlp,
    up2: SharedMlp,
    head: FcStack,
}

/// The semantic part segmentation network with its parameters.
pub struct Segmenter<T: Scalar> {
    pub cfg: SegmenterConfig,
    pub params: ParamSet<T>,
    handles: SegmenterHandles,
}

impl<T: Scalar> Segmenter<T> {
    pub fn init(cfg: SegmenterConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let ec1 = init_shared_mlp(
            &mut params,
            "enc1",
            2 * 3,
            &SharedMlpSpec::new(&cfg.stage1.channels),
            &mut rng,
        );
        let ec2 = init_shared_mlp(
            &mut params,
            "enc2",
            2 * ec1.out_channels(),
            &SharedMlpSpec::new(&cfg.stage2.channels),
            &mut rng,
        );
        let up1 = init_shared_mlp(
            &mut params,
            "up1",
            2 * (ec2.out_channels() + ec1.out_channels()),
            &SharedMlpSpec::new(&cfg.up1.channels),
            &mut rng,
        );
        let up2 = init_shared_mlp(
            &mut params,
            "up2",
            2 * (up1.out_channels() + 3),
            &SharedMlpSpec::new(&cfg.up2.channels),
            &mut rng,
        );
        let head = init_fc_stack(
            &mut params,
            "head",
            2 * up2.out_channels(),
            &cfg.head_hidden,
            cfg.num_part_classes,
            cfg.dropout_keep,
            &mut rng,
        );
        Ok(Segmenter {
            cfg,
            params,
            handles: SegmenterHandles {
                ec1,
                ec2,
                up1,
                up2,
                head,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        batch: &SegmenterBatch<T>,
        mode: Mode,
        bn_decay: f64,
        rng: &mut Rng,
    ) -> Result<SegmenterTrace> {
        Self::forward_impl(
            &self.cfg,
            &self.handles,
            &mut self.params,
            tape,
            batch,
            mode,
            bn_decay,
            rng,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_impl(
        cfg: &SegmenterConfig,
        handles: &SegmenterHandles,
        params: &mut ParamSet<T>,
        tape: &mut Tape<T>,
        batch: &SegmenterBatch<T>,
        mode: Mode,
        bn_decay: f64,
        rng: &mut Rng,
    ) -> Result<SegmenterTrace> {
        let (b, n) = (batch.batch, cfg.input_points);
        let coords = tape.constant(batch.coords.clone());
        let mut ctx = Ctx {
            tape,
            params,
            mode,
            bn_decay,
            rng,
        };

        let enc1 = edge_conv(
            &mut ctx,
            &handles.ec1,
            coords,
            &batch.s1_sample,
            batch.s1_nbrs.clone(),
            cfg.stage1.k,
        )?;
        let encoder = edge_conv(
            &mut ctx,
            &handles.ec2,
            enc1,
            &batch.s2_sample,
            batch.s2_nbrs.clone(),
            cfg.stage2.k,
        )?;

        // up 1: pull stage-2 features onto the stage-1 positions, concat the
        // stage-1 skip features, edge-convolve over the stage-1 self-graph.
        let pulled1 = ctx.tape.weighted_gather(
            encoder,
            batch.up1_idx.clone(),
            batch.up1_w.clone(),
            cfg.interp_k,
        )?;
        let cat1 = ctx.tape.concat_cols(pulled1, enc1)?;
        let up1 = edge_conv(
            &mut ctx,
            &handles.up1,
            cat1,
            &batch.up1_sample,
            batch.up1_nbrs.clone(),
            cfg.up1.k,
        )?;

        // up 2: pull onto every input point, concat raw coordinates as the
        // level-0 skip.
        let pulled2 = ctx.tape.weighted_gather(
            up1,
            batch.up2_idx.clone(),
            batch.up2_w.clone(),
            cfg.interp_k,
        )?;
        let cat2 = ctx.tape.concat_cols(pulled2, coords)?;
        let up2 = edge_conv(
            &mut ctx,
            &handles.up2,
            cat2,
            &batch.up2_sample,
            batch.up2_nbrs.clone(),
            cfg.up2.k,
        )?;

        // global feature tiled back onto every point
        let global = global_max_pool(ctx.tape, up2, n)?;
        let tiled = ctx.tape.repeat_rows(global, n)?;
        let fused = ctx.tape.concat_cols(up2, tiled)?;
        debug_assert_eq!(ctx.tape.value(fused).rows(), b * n);
        let logits = fc_stack(&mut ctx, &handles.head, fused)?;

        Ok(SegmenterTrace {
            encoder,
            up1,
            up2,
            global,
            logits,
        })
    }
}
