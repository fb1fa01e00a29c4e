//! Optimizer, schedules, augmentation, the training loop, and evaluation
//! metrics (accuracy and mean intersection-over-union).

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::{capture_params, restore_params, AdamBlob, Checkpoint, NamedTensor};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::models::{
    Classifier, ClassifierBatch, FpsSeed, ModelConfig, Segmenter, SegmenterBatch,
};
use crate::tensor::{Mode, ParamSet, Scalar, Tape, Tensor};
use crate::Rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// RNG stream ids so training phases draw from independent deterministic
/// streams of one base seed.
const STREAM_SPLIT: u64 = 1;
const STREAM_EPOCH_BASE: u64 = 1000;

/// First/second moment estimates per parameter, in parameter order.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let m = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape().to_vec()))
            .collect::<Vec<_>>();
        AdamState {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One bias-corrected update from the gradients accumulated in `params`;
    /// gradients are zeroed afterwards.
    pub fn apply(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer state holds {} parameters, model has {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            if self.m[i].shape() != p.value.shape() {
                return Err(Error::Contract(format!(
                    "optimizer moment shape mismatch for {}",
                    p.name
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let grads = p.grad.data();
            let values = p.value.data();
            let mut next = Vec::with_capacity(values.len());
            for j in 0..values.len() {
                let g = grads[j].as_f64();
                let mj = ADAM_BETA1 * m[j].as_f64() + (1.0 - ADAM_BETA1) * g;
                let vj = ADAM_BETA2 * v[j].as_f64() + (1.0 - ADAM_BETA2) * g * g;
                m[j] = T::from_f64(mj);
                v[j] = T::from_f64(vj);
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + ADAM_EPS);
                next.push(T::from_f64(values[j].as_f64() - update));
            }
            p.value = Tensor::from_vec(p.value.shape().to_vec(), next)?;
        }
        params.zero_grads();
        Ok(())
    }
}

/// Moments as named blobs for checkpoints (f32 training state).
pub fn adam_to_blob(adam: &AdamState<f32>, params: &ParamSet<f32>) -> AdamBlob {
    let name = |prefix: &str, i: usize| format!("{prefix}.{}", params.get_name(i));
    AdamBlob {
        step: adam.step,
        m: adam
            .m
            .iter()
            .enumerate()
            .map(|(i, t)| NamedTensor {
                name: name("m", i),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
        v: adam
            .v
            .iter()
            .enumerate()
            .map(|(i, t)| NamedTensor {
                name: name("v", i),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    }
}

pub fn adam_from_blob(blob: &AdamBlob, params: &ParamSet<f32>) -> Result<AdamState<f32>> {
    if blob.m.len() != params.len() || blob.v.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "optimizer blob holds {} moments, model has {} parameters",
            blob.m.len(),
            params.len()
        )));
    }
    let tensors = |blobs: &[NamedTensor]| -> Result<Vec<Tensor<f32>>> {
        blobs
            .iter()
            .map(|b| Tensor::from_vec(b.shape.clone(), b.data.clone()))
            .collect()
    };
    Ok(AdamState {
        step: blob.step,
        m: tensors(&blob.m)?,
        v: tensors(&blob.v)?,
    })
}

/// Learning rate: 0.001 halved every 20 epochs, floored at 1e-5.
pub fn lr_at_epoch(epoch: usize) -> f64 {
    (0.001 * 0.5f64.powi((epoch / 20) as i32)).max(1e-5)
}

/// Batch-norm decay: starts at 0.7 and approaches 0.99 on the same 20-epoch
/// period as the learning rate.
pub fn bn_decay_at_epoch(epoch: usize) -> f64 {
    (1.0 - 0.3 * 0.5f64.powi((epoch / 20) as i32)).min(0.99)
}

/// Jitter clip bound, per coordinate.
pub const JITTER_CLIP: f64 = 0.05;
pub const JITTER_SIGMA: f64 = 0.01;

/// Rotation about the vertical (z) axis, uniform scale, then clipped
/// per-coordinate Gaussian jitter, with explicit inputs (testable core).
pub fn augment_parts<T: Scalar>(
    cloud: &PointCloud<T>,
    angle: f64,
    scale: f64,
    mut jitter: impl FnMut() -> f64,
) -> PointCloud<T> {
    let (sin, cos) = angle.sin_cos();
    let pts: Vec<[T; 3]> = (0..cloud.len())
        .map(|i| {
            let p = cloud.point(i);
            let (x, y, z) = (p[0].as_f64(), p[1].as_f64(), p[2].as_f64());
            let rx = cos * x - sin * y;
            let ry = sin * x + cos * y;
            [
                T::from_f64(rx * scale + jitter().clamp(-JITTER_CLIP, JITTER_CLIP)),
                T::from_f64(ry * scale + jitter().clamp(-JITTER_CLIP, JITTER_CLIP)),
                T::from_f64(z * scale + jitter().clamp(-JITTER_CLIP, JITTER_CLIP)),
            ]
        })
        .collect();
    PointCloud::from_points(&pts).expect("augmentation keeps points finite")
}

/// Training augmentation: random rotation in [0, 2pi) about the vertical
/// axis, uniform scale in [0.8, 1.25], Gaussian jitter (sigma 0.01, clipped
/// to +-0.05), applied in that order.
pub fn augment<T: Scalar>(cloud: &PointCloud<T>, rng: &mut Rng) -> PointCloud<T> {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let scale = rng.gen_range(0.8..1.25);
    let normal = Normal::new(0.0, JITTER_SIGMA).expect("valid sigma");
    augment_parts(cloud, angle, scale, || normal.sample(rng))
}

/// A trainable network of either task.
pub enum Model {
    Classifier(Classifier<f32>),
    Segmenter(Segmenter<f32>),
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        Ok(match config {
            ModelConfig::Classifier(cfg) => Model::Classifier(Classifier::init(cfg, seed)?),
            ModelConfig::Segmenter(cfg) => Model::Segmenter(Segmenter::init(cfg, seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Classifier(m) => ModelConfig::Classifier(m.cfg.clone()),
            Model::Segmenter(m) => ModelConfig::Segmenter(m.cfg.clone()),
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Model::Classifier(_) => TaskKind::Classification,
            Model::Segmenter(_) => TaskKind::Segmentation,
        }
    }

    pub fn params(&self) -> &ParamSet<f32> {
        match self {
            Model::Classifier(m) => &m.params,
            Model::Segmenter(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f32> {
        match self {
            Model::Classifier(m) => &mut m.params,
            Model::Segmenter(m) => &mut m.params,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().scalar_count()
    }
}

/// Everything that persists across epochs and restarts.
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState<f32>,
    /// Completed epochs.
    pub epoch: u32,
    pub seed: u64,
}

impl TrainState {
    pub fn new(model: Model, seed: u64) -> TrainState {
        let adam = AdamState::new(model.params());
        TrainState {
            model,
            adam,
            epoch: 0,
            seed,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let (params, state) = capture_params(self.model.params());
        Checkpoint {
            config: self.model.config(),
            params,
            state,
            epoch: self.epoch,
            optimizer: Some(adam_to_blob(&self.adam, self.model.params())),
            seed: self.seed,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<TrainState> {
        let mut model = Model::init(ckpt.config.clone(), ckpt.seed)?;
        restore_params(model.params_mut(), &ckpt.params, &ckpt.state)?;
        let adam = match &ckpt.optimizer {
            Some(blob) => adam_from_blob(blob, model.params())?,
            None => AdamState::new(model.params()),
        };
        Ok(TrainState {
            model,
            adam,
            epoch: ckpt.epoch,
            seed: ckpt.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    pub bn_decay: f64,
    pub train_loss: f32,
    pub train_acc: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    /// One append-only log line: `epoch, lr, bn_decay, train_loss,
    /// train_acc, wall_seconds`.
    pub fn log_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.epoch, self.lr, self.bn_decay, self.train_loss, self.train_acc, self.wall_seconds
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Train until this many epochs are completed (total, not additional).
    pub epochs: usize,
    pub batch_size: usize,
    pub strict_norm: bool,
    /// Random rotation/scale/jitter before each step.
    pub augment: bool,
}

/// Deterministically shuffles `0..n` and splits by the given positive
/// fractions (which must sum to 1 within 1e-9).
pub fn split_indices(
    n: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "split fractions must be positive and sum to 1, got {a},{b},{c}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_train = (n as f64 * a).round() as usize;
    let n_val = ((n as f64 * b).round() as usize).min(n - n_train);
    let val_end = n_train + n_val;
    Ok((
        order[..n_train].to_vec(),
        order[n_train..val_end].to_vec(),
        order[val_end..].to_vec(),
    ))
}

fn epoch_rng(seed: u64, epoch: u32) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_EPOCH_BASE + epoch as u64);
    rng
}

fn argmax_row(row: &[f32]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Runs training epochs `state.epoch .. opts.epochs`, shuffling and
/// augmenting per epoch, updating with Adam at the scheduled learning rate,
/// and (optionally) writing a checkpoint and a log line after each epoch.
/// The final short batch of each epoch is dropped.
pub fn train(
    state: &mut TrainState,
    data: &Dataset,
    train_indices: &[usize],
    opts: &TrainOptions,
    ckpt_path: Option<&Path>,
    log_path: Option<&Path>,
) -> Result<Vec<EpochRecord>> {
    if data.is_empty() || train_indices.is_empty() {
        return Err(Error::Size {
            op: "train",
            requested: 1,
            available: 0,
        });
    }
    if data.task != state.model.task() {
        return Err(Error::Contract(format!(
            "dataset task {:?} does not match model task {:?}",
            data.task,
            state.model.task()
        )));
    }
    if opts.batch_size == 0 || opts.batch_size > train_indices.len() {
        return Err(Error::Size {
            op: "train batch size",
            requested: opts.batch_size,
            available: train_indices.len(),
        });
    }
    if opts.strict_norm {
        for &i in train_indices {
            let cloud = &data.shapes[i].cloud;
            if cloud.centroid_norm() > 1e-3 {
                return Err(Error::Contract(format!(
                    "shape {i} is not unit-sphere normalized (|centroid| = {:.2e})",
                    cloud.centroid_norm()
                )));
            }
        }
    }

    let mut records = Vec::new();
    if let (Some(path), true) = (ckpt_path, state.epoch == 0 && opts.epochs == 0) {
        state.to_checkpoint().save(path)?;
    }

    while (state.epoch as usize) < opts.epochs {
        let start = Instant::now();
        let epoch = state.epoch;
        let mut rng = epoch_rng(state.seed, epoch);
        let lr = lr_at_epoch(epoch as usize);
        let bn_decay = bn_decay_at_epoch(epoch as usize);

        let mut order = train_indices.to_vec();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }

        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        let mut correct = 0usize;
        let mut total = 0usize;

        for chunk in order.chunks_exact(opts.batch_size) {
            let clouds: Vec<PointCloud<f32>> = chunk
                .iter()
                .map(|&i| {
                    let c = &data.shapes[i].cloud;
                    if opts.augment {
                        augment(c, &mut rng)
                    } else {
                        c.clone()
                    }
                })
                .collect();
            let refs: Vec<&PointCloud<f32>> = clouds.iter().collect();
            let mut tape = Tape::new();
            match &mut state.model {
                Model::Classifier(model) => {
                    let labels: Vec<u32> = chunk.iter().map(|&i| data.shapes[i].class).collect();
                    let batch =
                        ClassifierBatch::build(&model.cfg, &refs, FpsSeed::Random(&mut rng), false)?;
                    let trace = model.forward(&mut tape, &batch, Mode::Train, bn_decay, &mut rng)?;
                    let loss = tape.softmax_cross_entropy(trace.logits, &labels)?;
                    loss_sum += tape.value(loss).data()[0] as f64;
                    let logits = tape.value(trace.logits);
                    for (r, &label) in labels.iter().enumerate() {
                        if argmax_row(logits.row(r)) == label {
                            correct += 1;
                        }
                        total += 1;
                    }
                    tape.backward(loss, &mut model.params)?;
                    state.adam.apply(&mut model.params, lr)?;
                }
                Model::Segmenter(model) => {
                    let labels: Vec<u32> = chunk
                        .iter()
                        .flat_map(|&i| data.shapes[i].parts.iter().copied())
                        .collect();
                    let batch =
                        SegmenterBatch::build(&model.cfg, &refs, FpsSeed::Random(&mut rng), false)?;
                    let trace = model.forward(&mut tape, &batch, Mode::Train, bn_decay, &mut rng)?;
                    let loss = tape.softmax_cross_entropy(trace.logits, &labels)?;
                    loss_sum += tape.value(loss).data()[0] as f64;
                    let logits = tape.value(trace.logits);
                    for (r, &label) in labels.iter().enumerate() {
                        if argmax_row(logits.row(r)) == label {
                            correct += 1;
                        }
                        total += 1;
                    }
                    tape.backward(loss, &mut model.params)?;
                    state.adam.apply(&mut model.params, lr)?;
                }
            }
            batches += 1;
        }

        state.epoch += 1;
        let record = EpochRecord {
            epoch: state.epoch,
            lr,
            bn_decay,
            train_loss: (loss_sum / batches.max(1) as f64) as f32,
            train_acc: correct as f64 / total.max(1) as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(path) = ckpt_path {
            state.to_checkpoint().save(path)?;
        }
        if let Some(path) = log_path {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(format!("opening log {}", path.display()), e))?;
            writeln!(file, "{}", record.log_line())
                .map_err(|e| Error::io(format!("appending log {}", path.display()), e))?;
        }
        records.push(record);
    }
    Ok(records)
}

/// Evaluation metrics. Classification fills the accuracy fields;
/// segmentation additionally fills the per-category and mean mIoU.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    /// Unweighted mean over classes present in the ground truth.
    pub mean_class_accuracy: f64,
    /// None marks a class with no ground-truth instances (excluded from the
    /// mean).
    pub per_class_accuracy: Vec<Option<f64>>,
    pub per_category_miou: Vec<Option<f64>>,
    /// Shape-weighted mean over all shapes.
    pub mean_miou: Option<f64>,
}

/// Accuracy tallies from ground-truth and predicted class ids.
pub fn classification_report(gt: &[u32], pred: &[u32], num_classes: usize) -> EvalReport {
    assert_eq!(gt.len(), pred.len());
    let mut per_class_total = vec![0usize; num_classes];
    let mut per_class_correct = vec![0usize; num_classes];
    let mut correct = 0usize;
    for (&g, &p) in gt.iter().zip(pred) {
        per_class_total[g as usize] += 1;
        if g == p {
            per_class_correct[g as usize] += 1;
            correct += 1;
        }
    }
    let per_class_accuracy: Vec<Option<f64>> = per_class_total
        .iter()
        .zip(&per_class_correct)
        .map(|(&t, &c)| if t == 0 { None } else { Some(c as f64 / t as f64) })
        .collect();
    let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
    EvalReport {
        overall_accuracy: correct as f64 / gt.len().max(1) as f64,
        mean_class_accuracy: present.iter().sum::<f64>() / present.len().max(1) as f64,
        per_class_accuracy,
        per_category_miou: Vec::new(),
        mean_miou: None,
    }
}

/// Intersection-over-union scheme: per shape, IoU of every part its
/// category owns (empty-union parts count as 1); the shape score is the mean
/// over those parts; a category's mIoU is the mean over its shapes; the
/// reported mean is shape-weighted over all shapes. Also tallies point-level
/// accuracy over part labels.
pub fn segmentation_report(
    gt: &[Vec<u32>],
    pred: &[Vec<u32>],
    categories: &[u32],
    category_parts: &[Vec<u32>],
    num_parts: usize,
) -> Result<EvalReport> {
    assert_eq!(gt.len(), pred.len());
    assert_eq!(gt.len(), categories.len());
    let mut cat_scores: Vec<Vec<f64>> = vec![Vec::new(); category_parts.len()];
    let mut all_scores = Vec::with_capacity(gt.len());
    let mut point_correct = 0usize;
    let mut point_total = 0usize;
    let mut per_part_total = vec![0usize; num_parts];
    let mut per_part_correct = vec![0usize; num_parts];

    for ((g, p), &cat) in gt.iter().zip(pred).zip(categories) {
        assert_eq!(g.len(), p.len());
        let parts = &category_parts[cat as usize];
        for &label in g {
            if !parts.contains(&label) {
                return Err(Error::data(
                    0,
                    format!("ground-truth part {label} outside category {cat}'s part set"),
                ));
            }
        }
        let mut iou_sum = 0.0f64;
        for &part in parts {
            let mut inter = 0usize;
            let mut union = 0usize;
            for (&gl, &pl) in g.iter().zip(p) {
                let in_g = gl == part;
                let in_p = pl == part;
                if in_g && in_p {
                    inter += 1;
                }
                if in_g || in_p {
                    union += 1;
                }
            }
            iou_sum += if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            };
        }
        let shape_iou = iou_sum / parts.len() as f64;
        cat_scores[cat as usize].push(shape_iou);
        all_scores.push(shape_iou);

        for (&gl, &pl) in g.iter().zip(p) {
            per_part_total[gl as usize] += 1;
            if gl == pl {
                per_part_correct[gl as usize] += 1;
                point_correct += 1;
            }
            point_total += 1;
        }
    }

    let per_class_accuracy: Vec<Option<f64>> = per_part_total
        .iter()
        .zip(&per_part_correct)
        .map(|(&t, &c)| if t == 0 { None } else { Some(c as f64 / t as f64) })
        .collect();
    let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
    Ok(EvalReport {
        overall_accuracy: point_correct as f64 / point_total.max(1) as f64,
        mean_class_accuracy: present.iter().sum::<f64>() / present.len().max(1) as f64,
        per_class_accuracy,
        per_category_miou: cat_scores
            .iter()
            .map(|s| {
                if s.is_empty() {
                    None
                } else {
                    Some(s.iter().sum::<f64>() / s.len() as f64)
                }
            })
            .collect(),
        mean_miou: Some(all_scores.iter().sum::<f64>() / all_scores.len().max(1) as f64),
    })
}

/// Deterministic classification predictions: inference mode, canonical
/// farthest-point-sampling seed.
pub fn predict_classes(
    model: &mut Classifier<f32>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<u32>> {
    let mut rng = Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let refs: Vec<&PointCloud<f32>> =
            chunk.iter().map(|&i| &data.shapes[i].cloud).collect();
        let batch = ClassifierBatch::build(&model.cfg, &refs, FpsSeed::Canonical, false)?;
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &batch, Mode::Eval, 0.9, &mut rng)?;
        let logits = tape.value(trace.logits);
        for r in 0..chunk.len() {
            out.push(argmax_row(logits.row(r)));
        }
    }
    Ok(out)
}

/// Deterministic per-point part predictions, restricted to each shape's
/// category part set.
pub fn predict_parts(
    model: &mut Segmenter<f32>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<Vec<u32>>> {
    let mut rng = Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(indices.len());
    let n = model.cfg.input_points;
    for chunk in indices.chunks(batch_size.max(1)) {
        let refs: Vec<&PointCloud<f32>> =
            chunk.iter().map(|&i| &data.shapes[i].cloud).collect();
        let batch = SegmenterBatch::build(&model.cfg, &refs, FpsSeed::Canonical, false)?;
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &batch, Mode::Eval, 0.9, &mut rng)?;
        let logits = tape.value(trace.logits);
        for (b, &i) in chunk.iter().enumerate() {
            let allowed = &data.category_parts[data.shapes[i].class as usize];
            let mut shape_pred = Vec::with_capacity(n);
            for point in 0..n {
                let row = logits.row(b * n + point);
                let mut best = allowed[0];
                for &part in allowed {
                    if row[part as usize] > row[best as usize] {
                        best = part;
                    }
                }
                shape_pred.push(best);
            }
            out.push(shape_pred);
        }
    }
    Ok(out)
}

/// Classification metrics over a dataset split (deterministic).
pub fn evaluate_classification(
    model: &mut Classifier<f32>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<EvalReport> {
    let pred = predict_classes(model, data, indices, batch_size)?;
    let gt: Vec<u32> = indices.iter().map(|&i| data.shapes[i].class).collect();
    Ok(classification_report(&gt, &pred, data.num_classes))
}

/// Segmentation mIoU (and point accuracy) over a dataset split.
pub fn evaluate_segmentation_miou(
    model: &mut Segmenter<f32>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<EvalReport> {
    let pred = predict_parts(model, data, indices, batch_size)?;
    let gt: Vec<Vec<u32>> = indices
        .iter()
        .map(|&i| data.shapes[i].parts.clone())
        .collect();
    let categories: Vec<u32> = indices.iter().map(|&i| data.shapes[i].class).collect();
    segmentation_report(&gt, &pred, &categories, &data.category_parts, data.num_parts)
}
