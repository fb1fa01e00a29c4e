//! Dataset container format, unit-sphere normalization, and synthetic
//! desk-scale dataset generators.
//!
//! The on-disk layout is little-endian throughout: an ASCII magic
//! `FPNN-DATA-1`, fixed-width header counts, a category-to-parts map for
//! segmentation, then per shape `N x 3` f32 coordinates followed by one u32
//! class id (classification) or `N` u32 part ids (segmentation).

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::tensor::{Scalar, Tensor};
use crate::Rng;

pub const DATA_MAGIC: &[u8; 11] = b"FPNN-DATA-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Segmentation,
}

impl TaskKind {
    fn code(self) -> u32 {
        match self {
            TaskKind::Classification => 0,
            TaskKind::Segmentation => 1,
        }
    }

    fn from_code(c: u32, offset: u64) -> Result<Self> {
        match c {
            0 => Ok(TaskKind::Classification),
            1 => Ok(TaskKind::Segmentation),
            other => Err(Error::data(offset, format!("unknown task kind {other}"))),
        }
    }
}

/// One labeled shape. `class` is the object class (classification) or the
/// category (segmentation, derived from the part labels); `parts` is empty
/// for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub cloud: PointCloud<f32>,
    pub class: u32,
    pub parts: Vec<u32>,
}

/// An in-memory dataset with its label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskKind,
    pub points_per_shape: usize,
    /// Object classes (classification) or categories (segmentation).
    pub num_classes: usize,
    /// Total part labels across all categories (0 for classification).
    pub num_parts: usize,
    /// Part ids owned by each category; disjoint across categories.
    pub category_parts: Vec<Vec<u32>>,
    pub shapes: Vec<Shape>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// The category owning a part id, or None if out of range.
    pub fn category_of_part(&self, part: u32) -> Option<u32> {
        for (c, parts) in self.category_parts.iter().enumerate() {
            if parts.contains(&part) {
                return Some(c as u32);
            }
        }
        None
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DATA_MAGIC);
        for v in [
            self.task.code(),
            self.shapes.len() as u32,
            self.points_per_shape as u32,
            3u32,
            self.num_classes as u32,
            self.num_parts as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if self.task == TaskKind::Segmentation {
            for parts in &self.category_parts {
                out.extend_from_slice(&(parts.len() as u32).to_le_bytes());
                for &p in parts {
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
        }
        for shape in &self.shapes {
            for &v in shape.cloud.coords().data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            match self.task {
                TaskKind::Classification => out.extend_from_slice(&shape.class.to_le_bytes()),
                TaskKind::Segmentation => {
                    for &p in &shape.parts {
                        out.extend_from_slice(&p.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(DATA_MAGIC.len(), "magic")?;
        if magic != DATA_MAGIC {
            return Err(Error::data(0, "bad magic, not a dataset file".to_string()));
        }
        let task = TaskKind::from_code(r.u32("task kind")?, r.pos - 4);
        let task = task?;
        let shape_count = r.u32("shape count")? as usize;
        let points = r.u32("points per shape")? as usize;
        let dims = r.u32("feature dims")?;
        if dims != 3 {
            return Err(Error::data(
                r.pos - 4,
                format!("unsupported feature dims {dims}, expected 3"),
            ));
        }
        let num_classes = r.u32("class count")? as usize;
        let num_parts = r.u32("part count")? as usize;

        let mut category_parts = Vec::new();
        if task == TaskKind::Segmentation {
            let mut seen = vec![false; num_parts];
            for c in 0..num_classes {
                let len = r.u32("category part-list length")? as usize;
                let mut parts = Vec::with_capacity(len);
                for _ in 0..len {
                    let p = r.u32("part id")?;
                    if p as usize >= num_parts {
                        return Err(Error::data(
                            r.pos - 4,
                            format!("part id {p} outside declared range {num_parts}"),
                        ));
                    }
                    if seen[p as usize] {
                        return Err(Error::data(
                            r.pos - 4,
                            format!("part id {p} assigned to two categories"),
                        ));
                    }
                    seen[p as usize] = true;
                    parts.push(p);
                }
                if parts.is_empty() {
                    return Err(Error::data(r.pos, format!("category {c} has no parts")));
                }
                category_parts.push(parts);
            }
        }

        let label_words = match task {
            TaskKind::Classification => 1,
            TaskKind::Segmentation => points,
        };
        let expect = r.pos as usize + shape_count * (points * 3 * 4 + label_words * 4);
        if bytes.len() != expect {
            return Err(Error::data(
                r.pos,
                format!("body length mismatch: expected {expect} bytes, file has {}", bytes.len()),
            ));
        }

        let mut shapes = Vec::with_capacity(shape_count);
        for _ in 0..shape_count {
            let mut coords = Vec::with_capacity(points * 3);
            for _ in 0..points * 3 {
                coords.push(r.f32("coordinate")?);
            }
            let cloud = PointCloud::new(Tensor::from_vec(vec![points, 3], coords)?)?;
            match task {
                TaskKind::Classification => {
                    let class = r.u32("class label")?;
                    if class as usize >= num_classes {
                        return Err(Error::data(
                            r.pos - 4,
                            format!("class label {class} outside declared range {num_classes}"),
                        ));
                    }
                    shapes.push(Shape {
                        cloud,
                        class,
                        parts: Vec::new(),
                    });
                }
                TaskKind::Segmentation => {
                    let mut parts = Vec::with_capacity(points);
                    for _ in 0..points {
                        let p = r.u32("part label")?;
                        if p as usize >= num_parts {
                            return Err(Error::data(
                                r.pos - 4,
                                format!("part label {p} outside declared range {num_parts}"),
                            ));
                        }
                        parts.push(p);
                    }
                    let ds_probe = Dataset {
                        task,
                        points_per_shape: points,
                        num_classes,
                        num_parts,
                        category_parts: category_parts.clone(),
                        shapes: Vec::new(),
                    };
                    let class = ds_probe.category_of_part(parts[0]).ok_or_else(|| {
                        Error::data(r.pos, format!("part {} not in any category", parts[0]))
                    })?;
                    for &p in &parts {
                        if !category_parts[class as usize].contains(&p) {
                            return Err(Error::data(
                                r.pos,
                                format!("shape mixes parts of different categories ({p})"),
                            ));
                        }
                    }
                    shapes.push(Shape { cloud, class, parts });
                }
            }
        }
        Ok(Dataset {
            task,
            points_per_shape: points,
            num_classes,
            num_parts,
            category_parts,
            shapes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes())
            .map_err(|e| Error::io(format!("writing dataset {}", path.as_ref().display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| Error::io(format!("reading dataset {}", path.as_ref().display()), e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: u64,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let start = self.pos as usize;
        if start + n > self.bytes.len() {
            return Err(Error::data(
                self.pos,
                format!(
                    "truncated while reading {what}: expected {n} bytes, {} remain",
                    self.bytes.len() - start
                ),
            ));
        }
        self.pos += n as u64;
        Ok(&self.bytes[start..start + n])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Centers a cloud at its centroid and scales so the farthest point has norm
/// one. A degenerate cloud (max norm < 1e-12) is centered only. Math runs in
/// f64 and casts back, so the result is idempotent to storage precision.
pub fn normalize_unit_sphere<T: Scalar>(cloud: &PointCloud<T>) -> PointCloud<T> {
    let c = cloud.centroid();
    let n = cloud.len();
    let mut centered = Vec::with_capacity(n * 3);
    let mut max_sq = 0.0f64;
    for i in 0..n {
        let p = cloud.point(i);
        let q = [p[0].as_f64() - c[0], p[1].as_f64() - c[1], p[2].as_f64() - c[2]];
        max_sq = max_sq.max(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
        centered.push(q);
    }
    let scale = if max_sq.sqrt() < 1e-12 {
        1.0
    } else {
        1.0 / max_sq.sqrt()
    };
    let pts: Vec<[T; 3]> = centered
        .iter()
        .map(|q| {
            [
                T::from_f64(q[0] * scale),
                T::from_f64(q[1] * scale),
                T::from_f64(q[2] * scale),
            ]
        })
        .collect();
    PointCloud::from_points(&pts).expect("normalization preserves validity")
}

/// A closed surface with area-uniform sampling.
#[derive(Debug, Clone)]
pub enum SurfacePrimitive {
    Sphere { radius: f64, center: [f64; 3] },
    Cube { half: f64, center: [f64; 3] },
    /// Axis-aligned with z; includes both caps.
    Cylinder { radius: f64, height: f64, center: [f64; 3] },
    /// Ring around the z axis.
    Torus { major: f64, minor: f64, center: [f64; 3] },
}

impl SurfacePrimitive {
    pub fn area(&self) -> f64 {
        match self {
            SurfacePrimitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            SurfacePrimitive::Cube { half, .. } => 24.0 * half * half,
            SurfacePrimitive::Cylinder { radius, height, .. } => {
                2.0 * PI * radius * height + 2.0 * PI * radius * radius
            }
            SurfacePrimitive::Torus { major, minor, .. } => 4.0 * PI * PI * major * minor,
        }
    }

    /// One point uniform over the surface area.
    pub fn sample(&self, rng: &mut Rng) -> [f64; 3] {
        match *self {
            SurfacePrimitive::Sphere { radius, center } => {
                let z: f64 = rng.gen_range(-1.0..=1.0);
                let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                let r = (1.0 - z * z).sqrt();
                [
                    center[0] + radius * r * phi.cos(),
                    center[1] + radius * r * phi.sin(),
                    center[2] + radius * z,
                ]
            }
            SurfacePrimitive::Cube { half, center } => {
                let face = rng.gen_range(0..6u8);
                let u: f64 = rng.gen_range(-half..half);
                let v: f64 = rng.gen_range(-half..half);
                let p = match face {
                    0 => [half, u, v],
                    1 => [-half, u, v],
                    2 => [u, half, v],
                    3 => [u, -half, v],
                    4 => [u, v, half],
                    _ => [u, v, -half],
                };
                [center[0] + p[0], center[1] + p[1], center[2] + p[2]]
            }
            SurfacePrimitive::Cylinder {
                radius,
                height,
                center,
            } => {
                let side = 2.0 * PI * radius * height;
                let cap = PI * radius * radius;
                let pick: f64 = rng.gen_range(0.0..side + 2.0 * cap);
                let p = if pick < side {
                    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                    let z: f64 = rng.gen_range(-height / 2.0..height / 2.0);
                    [radius * phi.cos(), radius * phi.sin(), z]
                } else {
                    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                    let r = radius * rng.gen::<f64>().sqrt();
                    let z = if pick < side + cap {
                        height / 2.0
                    } else {
                        -height / 2.0
                    };
                    [r * phi.cos(), r * phi.sin(), z]
                };
                [center[0] + p[0], center[1] + p[1], center[2] + p[2]]
            }
            SurfacePrimitive::Torus {
                major,
                minor,
                center,
            } => {
                // area element is proportional to major + minor*cos(theta);
                // rejection-sample theta against that density
                let theta = loop {
                    let t: f64 = rng.gen_range(0.0..2.0 * PI);
                    let accept = (major + minor * t.cos()) / (major + minor);
                    if rng.gen::<f64>() < accept {
                        break t;
                    }
                };
                let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                let ring = major + minor * theta.cos();
                [
                    center[0] + ring * phi.cos(),
                    center[1] + ring * phi.sin(),
                    center[2] + minor * theta.sin(),
                ]
            }
        }
    }
}

/// Classification class: a primitive kind with per-shape size jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassSpec {
    Sphere,
    Cube,
    Cylinder,
    Torus,
}

impl ClassSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassSpec::Sphere => "sphere",
            ClassSpec::Cube => "cube",
            ClassSpec::Cylinder => "cylinder",
            ClassSpec::Torus => "torus",
        }
    }

    fn build(&self, rng: &mut Rng) -> SurfacePrimitive {
        let o = [0.0; 3];
        match self {
            ClassSpec::Sphere => SurfacePrimitive::Sphere {
                radius: rng.gen_range(0.6..1.0),
                center: o,
            },
            ClassSpec::Cube => SurfacePrimitive::Cube {
                half: rng.gen_range(0.5..0.9),
                center: o,
            },
            ClassSpec::Cylinder => SurfacePrimitive::Cylinder {
                radius: rng.gen_range(0.3..0.55),
                height: rng.gen_range(1.2..1.9),
                center: o,
            },
            ClassSpec::Torus => SurfacePrimitive::Torus {
                major: rng.gen_range(0.6..0.9),
                minor: rng.gen_range(0.15..0.3),
                center: o,
            },
        }
    }
}

pub fn default_classification_specs() -> Vec<ClassSpec> {
    vec![
        ClassSpec::Sphere,
        ClassSpec::Cube,
        ClassSpec::Cylinder,
        ClassSpec::Torus,
    ]
}

/// Segmentation category: a composite of labeled primitive parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositeSpec {
    /// Two balls joined by a rod: parts {ball, rod}.
    Dumbbell,
    /// Box head on a cylinder handle: parts {head, handle}.
    Hammer,
    /// Disk base, thin pole, spherical shade: parts {base, pole, shade}.
    Lamp,
}

impl CompositeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CompositeSpec::Dumbbell => "dumbbell",
            CompositeSpec::Hammer => "hammer",
            CompositeSpec::Lamp => "lamp",
        }
    }

    pub fn part_names(&self) -> &'static [&'static str] {
        match self {
            CompositeSpec::Dumbbell => &["ball", "rod"],
            CompositeSpec::Hammer => &["head", "handle"],
            CompositeSpec::Lamp => &["base", "pole", "shade"],
        }
    }

    /// Primitives with local part indices (0-based within the category).
    fn build(&self, rng: &mut Rng) -> Vec<(SurfacePrimitive, u32)> {
        match self {
            CompositeSpec::Dumbbell => {
                let ball = rng.gen_range(0.28..0.42);
                let rod_len = rng.gen_range(0.9..1.4);
                let rod_r = rng.gen_range(0.07..0.13);
                vec![
                    (
                        SurfacePrimitive::Sphere {
                            radius: ball,
                            center: [0.0, 0.0, rod_len / 2.0 + ball * 0.7],
                        },
                        0,
                    ),
                    (
                        SurfacePrimitive::Sphere {
                            radius: ball,
                            center: [0.0, 0.0, -(rod_len / 2.0 + ball * 0.7)],
                        },
                        0,
                    ),
                    (
                        SurfacePrimitive::Cylinder {
                            radius: rod_r,
                            height: rod_len,
                            center: [0.0, 0.0, 0.0],
                        },
                        1,
                    ),
                ]
            }
            CompositeSpec::Hammer => {
                let head = rng.gen_range(0.22..0.34);
                let handle_len = rng.gen_range(1.0..1.5);
                let handle_r = rng.gen_range(0.06..0.12);
                vec![
                    (
                        SurfacePrimitive::Cube {
                            half: head,
                            center: [0.0, 0.0, handle_len / 2.0 + head * 0.8],
                        },
                        0,
                    ),
                    (
                        SurfacePrimitive::Cylinder {
                            radius: handle_r,
                            height: handle_len,
                            center: [0.0, 0.0, 0.0],
                        },
                        1,
                    ),
                ]
            }
            CompositeSpec::Lamp => {
                let base_r = rng.gen_range(0.3..0.45);
                let pole_len = rng.gen_range(0.8..1.2);
                let shade = rng.gen_range(0.25..0.4);
                vec![
                    (
                        SurfacePrimitive::Cylinder {
                            radius: base_r,
                            height: 0.08,
                            center: [0.0, 0.0, -pole_len / 2.0],
                        },
                        0,
                    ),
                    (
                        SurfacePrimitive::Cylinder {
                            radius: 0.05,
                            height: pole_len,
                            center: [0.0, 0.0, 0.0],
                        },
                        1,
                    ),
                    (
                        SurfacePrimitive::Sphere {
                            radius: shade,
                            center: [0.0, 0.0, pole_len / 2.0 + shade * 0.6],
                        },
                        2,
                    ),
                ]
            }
        }
    }
}

pub fn default_segmentation_specs() -> Vec<CompositeSpec> {
    vec![
        CompositeSpec::Dumbbell,
        CompositeSpec::Hammer,
        CompositeSpec::Lamp,
    ]
}

fn gaussian_jitter(p: [f64; 3], noise: f64, rng: &mut Rng) -> [f64; 3] {
    if noise <= 0.0 {
        return p;
    }
    let dist = Normal::new(0.0, noise).expect("valid sigma");
    [
        p[0] + dist.sample(rng),
        p[1] + dist.sample(rng),
        p[2] + dist.sample(rng),
    ]
}

fn to_f32_cloud(points: &[[f64; 3]]) -> PointCloud<f32> {
    let pts: Vec<[f32; 3]> = points
        .iter()
        .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
        .collect();
    PointCloud::from_points(&pts).expect("generator produces finite points")
}

/// Uniform-surface-sampled primitives, jittered, normalized; deterministic
/// per seed.
pub fn generate_classification_dataset(
    specs: &[ClassSpec],
    shapes_per_class: usize,
    points_per_shape: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if specs.len() < 2 {
        return Err(Error::Size {
            op: "generate_classification_dataset",
            requested: specs.len(),
            available: 2,
        });
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut shapes = Vec::with_capacity(specs.len() * shapes_per_class);
    for (class, spec) in specs.iter().enumerate() {
        for _ in 0..shapes_per_class {
            let prim = spec.build(&mut rng);
            let pts: Vec<[f64; 3]> = (0..points_per_shape)
                .map(|_| gaussian_jitter(prim.sample(&mut rng), noise, &mut rng))
                .collect();
            let cloud = normalize_unit_sphere(&to_f32_cloud(&pts));
            shapes.push(Shape {
                cloud,
                class: class as u32,
                parts: Vec::new(),
            });
        }
    }
    Ok(Dataset {
        task: TaskKind::Classification,
        points_per_shape,
        num_classes: specs.len(),
        num_parts: 0,
        category_parts: Vec::new(),
        shapes,
    })
}

/// Composite shapes with ground-truth part labels from the generating
/// primitive; points are distributed over parts by surface area.
pub fn generate_segmentation_dataset(
    specs: &[CompositeSpec],
    shapes_per_category: usize,
    points_per_shape: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(Error::Size {
            op: "generate_segmentation_dataset",
            requested: 0,
            available: 1,
        });
    }
    let mut category_parts = Vec::new();
    let mut next_part = 0u32;
    for spec in specs {
        let n = spec.part_names().len() as u32;
        category_parts.push((next_part..next_part + n).collect::<Vec<u32>>());
        next_part += n;
    }

    let mut rng = Rng::seed_from_u64(seed);
    let mut shapes = Vec::with_capacity(specs.len() * shapes_per_category);
    for (cat, spec) in specs.iter().enumerate() {
        for _ in 0..shapes_per_category {
            let prims = spec.build(&mut rng);
            let total_area: f64 = prims.iter().map(|(p, _)| p.area()).sum();
            let mut pts = Vec::with_capacity(points_per_shape);
            let mut parts = Vec::with_capacity(points_per_shape);
            for _ in 0..points_per_shape {
                let mut pick = rng.gen_range(0.0..total_area);
                let mut chosen = prims.len() - 1;
                for (i, (p, _)) in prims.iter().enumerate() {
                    if pick < p.area() {
                        chosen = i;
                        break;
                    }
                    pick -= p.area();
                }
                let (prim, local_part) = &prims[chosen];
                pts.push(gaussian_jitter(prim.sample(&mut rng), noise, &mut rng));
                parts.push(category_parts[cat][*local_part as usize]);
            }
            let cloud = normalize_unit_sphere(&to_f32_cloud(&pts));
            shapes.push(Shape {
                cloud,
                class: cat as u32,
                parts,
            });
        }
    }
    Ok(Dataset {
        task: TaskKind::Segmentation,
        points_per_shape,
        num_classes: specs.len(),
        num_parts: next_part as usize,
        category_parts,
        shapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_idempotent_and_single_point() {
        let cloud = PointCloud::from_points(&[[3.0f32, -1.0, 2.0]]).unwrap();
        let n = normalize_unit_sphere(&cloud);
        assert_eq!(n.point(0), [0.0, 0.0, 0.0]);

        let mut rng = Rng::seed_from_u64(1);
        let pts: Vec<[f32; 3]> = (0..50)
            .map(|_| {
                [
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                ]
            })
            .collect();
        let cloud = PointCloud::from_points(&pts).unwrap();
        let once = normalize_unit_sphere(&cloud);
        let twice = normalize_unit_sphere(&once);
        for i in 0..50 {
            for a in 0..3 {
                assert!((once.point(i)[a] - twice.point(i)[a]).abs() < 1e-6);
            }
        }
        assert!(once.centroid_norm() < 1e-5);
        assert!(once.max_norm() <= 1.0 + 1e-5);
    }

    #[test]
    fn normalize_cube_corners() {
        let corners: Vec<[f32; 3]> = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { 5.0 } else { -5.0 },
                    if i & 2 == 0 { 5.0 } else { -5.0 },
                    if i & 4 == 0 { 5.0 } else { -5.0 },
                ]
            })
            .collect();
        let cloud = PointCloud::from_points(&corners).unwrap();
        let n = normalize_unit_sphere(&cloud);
        for i in 0..8 {
            let p = n.point(i);
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "corner {i} norm {norm}");
        }
    }

    #[test]
    fn normalize_canonicalizes_scale_and_translation() {
        let mut rng = Rng::seed_from_u64(2);
        for _ in 0..10 {
            let pts: Vec<[f32; 3]> = (0..20)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            let s: f32 = rng.gen_range(0.1..5.0);
            let t = [
                rng.gen_range(-3.0..3.0f32),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let moved: Vec<[f32; 3]> = pts
                .iter()
                .map(|p| [p[0] * s + t[0], p[1] * s + t[1], p[2] * s + t[2]])
                .collect();
            let a = normalize_unit_sphere(&PointCloud::from_points(&pts).unwrap());
            let b = normalize_unit_sphere(&PointCloud::from_points(&moved).unwrap());
            for i in 0..20 {
                for x in 0..3 {
                    assert!((a.point(i)[x] - b.point(i)[x]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn sphere_samples_lie_on_the_sphere() {
        let mut rng = Rng::seed_from_u64(3);
        let prim = SurfacePrimitive::Sphere {
            radius: 0.8,
            center: [0.0; 3],
        };
        for _ in 0..200 {
            let p = prim.sample(&mut rng);
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let specs = default_classification_specs();
        let a = generate_classification_dataset(&specs, 3, 32, 0.01, 42).unwrap();
        let b = generate_classification_dataset(&specs, 3, 32, 0.01, 42).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = generate_classification_dataset(&specs, 3, 32, 0.01, 43).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn classification_round_trip_is_bit_identical() {
        let ds =
            generate_classification_dataset(&default_classification_specs(), 2, 16, 0.01, 7)
                .unwrap();
        let bytes = ds.to_bytes();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, ds);
    }

    #[test]
    fn segmentation_round_trip_and_label_invariants() {
        let specs = default_segmentation_specs();
        let ds = generate_segmentation_dataset(&specs, 4, 64, 0.01, 9).unwrap();
        let bytes = ds.to_bytes();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);

        // every shape's labels are inside its category's part set
        for shape in &ds.shapes {
            let allowed = &ds.category_parts[shape.class as usize];
            assert!(shape.parts.iter().all(|p| allowed.contains(p)));
        }
        // every declared part occurs somewhere in the dataset
        let mut hist = vec![0usize; ds.num_parts];
        for shape in &ds.shapes {
            for &p in &shape.parts {
                hist[p as usize] += 1;
            }
        }
        assert!(hist.iter().all(|&c| c > 0), "part histogram {hist:?}");
    }

    #[test]
    fn dumbbell_has_two_part_labels() {
        let ds = generate_segmentation_dataset(&[CompositeSpec::Dumbbell], 1, 128, 0.0, 5)
            .unwrap();
        let mut used: Vec<u32> = ds.shapes[0].parts.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used, vec![0, 1]);
    }

    #[test]
    fn truncated_file_reports_expected_vs_actual() {
        let ds =
            generate_classification_dataset(&default_classification_specs(), 2, 8, 0.0, 1)
                .unwrap();
        let mut bytes = ds.to_bytes();
        bytes.truncate(bytes.len() - 5);
        match Dataset::from_bytes(&bytes) {
            Err(Error::Data { reason, .. }) => {
                assert!(reason.contains("expected"), "reason: {reason}")
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected_before_body() {
        let mut bytes = generate_classification_dataset(
            &default_classification_specs(),
            2,
            8,
            0.0,
            1,
        )
        .unwrap()
        .to_bytes();
        bytes[0] = b'X';
        match Dataset::from_bytes(&bytes) {
            Err(Error::Data { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_rejected() {
        let ds =
            generate_classification_dataset(&default_classification_specs(), 1, 8, 0.0, 1)
                .unwrap();
        let mut bytes = ds.to_bytes();
        let len = bytes.len();
        bytes[len - 4..].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            Dataset::from_bytes(&bytes),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn header_counts_survive_round_trip() {
        let ds = generate_classification_dataset(&default_classification_specs(), 5, 24, 0.01, 3)
            .unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back.len(), 4 * 5);
        assert_eq!(back.points_per_shape, 24);
        assert_eq!(back.num_classes, 4);
    }
}
