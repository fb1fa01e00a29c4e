//! Pure geometric kernels: farthest point sampling, k-nearest-neighbour
//! search against the pre-sampling set, and inverse-square-distance feature
//! interpolation.
//!
//! Everything here is deterministic: distance ties are always broken by
//! ascending source index, so identical inputs give bit-identical outputs.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Squared-distance threshold under which a target is treated as coincident
/// with a source point and gets its feature verbatim.
const COINCIDENT_SQ: f64 = 1e-10;

/// Softening constant added to squared distances in interpolation weights.
const INTERP_EPS: f64 = 1e-8;

/// An `N x 3` set of spatial coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    coords: Tensor<T>,
}

impl<T: Scalar> PointCloud<T> {
    /// Wraps an `N x 3` tensor; rejects empty or non-finite input.
    pub fn new(coords: Tensor<T>) -> Result<Self> {
        if coords.shape().len() != 2 || coords.cols() != 3 || coords.rows() == 0 {
            return Err(Error::Shape {
                op: "PointCloud::new",
                lhs: coords.shape().to_vec(),
                rhs: vec![0, 3],
            });
        }
        if !coords.all_finite() {
            return Err(Error::Contract(
                "point cloud contains non-finite coordinates".into(),
            ));
        }
        Ok(PointCloud { coords })
    }

    pub fn from_points(points: &[[T; 3]]) -> Result<Self> {
        let mut data = Vec::with_capacity(points.len() * 3);
        for p in points {
            data.extend_from_slice(p);
        }
        Self::new(Tensor::from_vec(vec![points.len(), 3], data)?)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires N >= 1
    }

    pub fn coords(&self) -> &Tensor<T> {
        &self.coords
    }

    pub fn point(&self, i: usize) -> [T; 3] {
        let row = self.coords.row(i);
        [row[0], row[1], row[2]]
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0f64; 3];
        for i in 0..self.len() {
            let p = self.coords.row(i);
            for a in 0..3 {
                c[a] += p[a].as_f64();
            }
        }
        let n = self.len() as f64;
        c.map(|v| v / n)
    }

    pub fn max_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.len() {
            let p = self.coords.row(i);
            let n = p.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
            if n > best {
                best = n;
            }
        }
        best.sqrt()
    }

    /// Centroid magnitude; near zero for a unit-sphere-normalized cloud.
    pub fn centroid_norm(&self) -> f64 {
        let c = self.centroid();
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }

    /// Index of the point nearest the centroid (ties to the smallest index).
    /// Serves as the canonical farthest-point-sampling seed in evaluation.
    pub fn nearest_to_centroid(&self) -> usize {
        let c = self.centroid();
        let mut best = f64::INFINITY;
        let mut best_i = 0;
        for i in 0..self.len() {
            let p = self.coords.row(i);
            let d = (0..3)
                .map(|a| {
                    let diff = p[a].as_f64() - c[a];
                    diff * diff
                })
                .sum::<f64>();
            if d < best {
                best = d;
                best_i = i;
            }
        }
        best_i
    }
}

/// Ordered, distinct indices into a source point set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndices {
    indices: Vec<u32>,
}

impl SampleIndices {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `M x k` neighbour table; row i holds the k source indices nearest query i,
/// sorted by nondecreasing distance with ties broken by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    table: Vec<u32>,
    k: usize,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.table.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.table[i * self.k..(i + 1) * self.k]
    }

    pub fn flat(&self) -> &[u32] {
        &self.table
    }

    pub fn into_flat(self) -> Vec<u32> {
        self.table
    }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc += d * d;
    }
    acc
}

/// Entry `(i, j)` is the squared Euclidean distance between row i of `a` and
/// row j of `b`; both must share the feature dimension.
pub fn pairwise_sq_dist<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op: "pairwise_sq_dist",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, n) = (a.rows(), b.rows());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let ra = a.row(i);
        for j in 0..n {
            out[i * n + j] = sq_dist(ra, b.row(j));
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

/// Greedy max-min subset selection: starting from `seed_index`, repeatedly
/// picks the point with the largest squared distance to the already-selected
/// set, breaking ties by smallest index.
pub fn farthest_point_sample<T: Scalar>(
    cloud: &PointCloud<T>,
    m: usize,
    seed_index: usize,
) -> Result<SampleIndices> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(Error::Size {
            op: "farthest_point_sample",
            requested: m,
            available: n,
        });
    }
    if seed_index >= n {
        return Err(Error::Index {
            op: "farthest_point_sample",
            index: seed_index,
            len: n,
        });
    }
    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut min_d = vec![T::infinity(); n];
    let mut last = seed_index;
    selected.push(seed_index as u32);
    taken[seed_index] = true;

    for _ in 1..m {
        let last_row = cloud.coords.row(last).to_vec();
        let mut best = T::neg_infinity();
        let mut best_i = usize::MAX;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = sq_dist(cloud.coords.row(i), &last_row);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best {
                best = min_d[i];
                best_i = i;
            }
        }
        selected.push(best_i as u32);
        taken[best_i] = true;
        last = best_i;
    }
    Ok(SampleIndices { indices: selected })
}

/// For each query row, the `k` nearest source rows in squared Euclidean
/// distance (a query present in the source set finds itself first).
pub fn knn_search<T: Scalar>(
    queries: &Tensor<T>,
    source: &Tensor<T>,
    k: usize,
) -> Result<NeighborIndex> {
    if queries.cols() != source.cols() {
        return Err(Error::Shape {
            op: "knn_search",
            lhs: queries.shape().to_vec(),
            rhs: source.shape().to_vec(),
        });
    }
    let n = source.rows();
    if k == 0 || k > n {
        return Err(Error::Size {
            op: "knn_search",
            requested: k,
            available: n,
        });
    }
    let m = queries.rows();
    let mut table = vec![0u32; m * k];
    let mut scratch: Vec<(T, u32)> = Vec::with_capacity(n);
    let cmp = |a: &(T, u32), b: &(T, u32)| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    };
    for qi in 0..m {
        let q = queries.row(qi);
        scratch.clear();
        for si in 0..n {
            scratch.push((sq_dist(q, source.row(si)), si as u32));
        }
        if k < n {
            scratch.select_nth_unstable_by(k - 1, cmp);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(cmp);
        for (j, (_, idx)) in scratch.iter().enumerate() {
            table[qi * k + j] = *idx;
        }
    }
    Ok(NeighborIndex { table, k })
}

/// Inverse-square-distance weights for pulling features from `sources` onto
/// `targets`: each target's k nearest sources get normalized weights
/// `1/(d^2 + 1e-8)`. A coincident source (d^2 < 1e-10) takes the full weight.
/// Returns flat `targets.rows() x k` index and weight tables.
pub fn interpolation_weights<T: Scalar>(
    targets: &Tensor<T>,
    sources: &Tensor<T>,
    k: usize,
) -> Result<(Vec<u32>, Vec<T>)> {
    let nbrs = knn_search(targets, sources, k)?;
    let m = targets.rows();
    let mut weights = vec![T::zero(); m * k];
    let mut w = vec![0.0f64; k];
    for t in 0..m {
        let row = nbrs.row(t);
        let d0 = sq_dist(targets.row(t), sources.row(row[0] as usize)).as_f64();
        if d0 < COINCIDENT_SQ {
            weights[t * k] = T::one();
            continue;
        }
        let mut total = 0.0f64;
        for (j, &s) in row.iter().enumerate() {
            let d = sq_dist(targets.row(t), sources.row(s as usize)).as_f64();
            w[j] = 1.0 / (d + INTERP_EPS);
            total += w[j];
        }
        for j in 0..k {
            weights[t * k + j] = T::from_f64(w[j] / total);
        }
    }
    Ok((nbrs.into_flat(), weights))
}

/// Distance-weighted average of source features onto target positions
/// (normalized inverse-square weights over the k nearest sources).
pub fn interpolate_features<T: Scalar>(
    targets: &Tensor<T>,
    sources: &Tensor<T>,
    source_feats: &Tensor<T>,
    k: usize,
) -> Result<Tensor<T>> {
    if source_feats.rows() != sources.rows() {
        return Err(Error::Shape {
            op: "interpolate_features",
            lhs: sources.shape().to_vec(),
            rhs: source_feats.shape().to_vec(),
        });
    }
    let (idx, w) = interpolation_weights(targets, sources, k)?;
    let (m, cols) = (targets.rows(), source_feats.cols());
    let mut out = vec![T::zero(); m * cols];
    for t in 0..m {
        let dst = &mut out[t * cols..(t + 1) * cols];
        for j in 0..k {
            let weight = w[t * k + j];
            let src = source_feats.row(idx[t * k + j] as usize);
            for (o, &s) in dst.iter_mut().zip(src) {
                *o += weight * s;
            }
        }
    }
    Tensor::from_vec(vec![m, cols], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn rng(seed: u64) -> crate::Rng {
        crate::Rng::seed_from_u64(seed)
    }

    fn random_cloud(n: usize, r: &mut crate::Rng) -> PointCloud<f64> {
        let data = (0..n * 3).map(|_| r.gen_range(-1.0..1.0)).collect();
        PointCloud::new(Tensor::from_vec(vec![n, 3], data).unwrap()).unwrap()
    }

    #[test]
    fn pairwise_single_point_is_zero() {
        let a = Tensor::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let d = pairwise_sq_dist(&a, &a).unwrap();
        assert_eq!(d.data(), &[0.0]);
    }

    #[test]
    fn pairwise_three_four_five() {
        let a = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0, 4.0, 0.0]]).unwrap();
        let d = pairwise_sq_dist(&a, &b).unwrap();
        assert_eq!(d.data(), &[25.0]);
    }

    #[test]
    fn pairwise_matches_loop_oracle() {
        let mut r = rng(1);
        let a = random_cloud(6, &mut r);
        let b = random_cloud(4, &mut r);
        let d = pairwise_sq_dist(a.coords(), b.coords()).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                let (pa, pb) = (a.point(i), b.point(j));
                let want: f64 = (0..3).map(|x| (pa[x] - pb[x]) * (pa[x] - pb[x])).sum();
                assert!((d.get2(i, j) - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn fps_collinear_picks_far_end() {
        let cloud = PointCloud::from_points(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
        ])
        .unwrap();
        let s = farthest_point_sample(&cloud, 2, 0).unwrap();
        assert_eq!(s.indices(), &[0, 3]);
    }

    #[test]
    fn fps_m_one_returns_seed() {
        let mut r = rng(2);
        let cloud = random_cloud(9, &mut r);
        for seed in [0, 4, 8] {
            let s = farthest_point_sample(&cloud, 1, seed).unwrap();
            assert_eq!(s.indices(), &[seed as u32]);
        }
    }

    #[test]
    fn fps_exhaustion_is_a_permutation() {
        let mut r = rng(3);
        let cloud = random_cloud(12, &mut r);
        let s = farthest_point_sample(&cloud, 12, 5).unwrap();
        let mut seen = vec![false; 12];
        for &i in s.indices() {
            assert!(!seen[i as usize], "index repeated");
            seen[i as usize] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn fps_rejects_oversample() {
        let cloud = PointCloud::from_points(&[[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            farthest_point_sample(&cloud, 3, 0),
            Err(Error::Size { .. })
        ));
    }

    /// Exhaustive per-step argmax: recompute every unselected point's
    /// min-distance-to-selected from scratch. Independent of the incremental
    /// update in the implementation.
    fn fps_step_oracle(cloud: &PointCloud<f64>, selected: &[u32]) -> u32 {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = u32::MAX;
        for i in 0..cloud.len() as u32 {
            if selected.contains(&i) {
                continue;
            }
            let p = cloud.point(i as usize);
            let d = selected
                .iter()
                .map(|&s| {
                    let q = cloud.point(s as usize);
                    (0..3).map(|a| (p[a] - q[a]) * (p[a] - q[a])).sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            if d > best {
                best = d;
                best_i = i;
            }
        }
        best_i
    }

    #[test]
    fn fps_matches_per_step_oracle() {
        let mut r = rng(4);
        for _ in 0..50 {
            let n = r.gen_range(2..=16usize);
            let m = r.gen_range(1..=4.min(n));
            let seed = r.gen_range(0..n);
            let cloud = random_cloud(n, &mut r);
            let got = farthest_point_sample(&cloud, m, seed).unwrap();
            let mut want = vec![seed as u32];
            while want.len() < m {
                want.push(fps_step_oracle(&cloud, &want));
            }
            assert_eq!(got.indices(), &want[..]);
        }
    }

    #[test]
    fn fps_covering_radius_nonincreasing() {
        let mut r = rng(5);
        let cloud = random_cloud(24, &mut r);
        let mut prev = f64::INFINITY;
        for m in 1..=24 {
            let s = farthest_point_sample(&cloud, m, 3).unwrap();
            let radius = (0..24)
                .map(|p| {
                    s.indices()
                        .iter()
                        .map(|&i| {
                            let (a, b) = (cloud.point(p), cloud.point(i as usize));
                            (0..3)
                                .map(|x| (a[x] - b[x]) * (a[x] - b[x]))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            assert!(radius <= prev + 1e-12, "radius grew: {radius} > {prev}");
            prev = radius;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn knn_self_query_finds_itself_first() {
        let mut r = rng(6);
        let cloud = random_cloud(10, &mut r);
        let nbrs = knn_search(cloud.coords(), cloud.coords(), 1).unwrap();
        for i in 0..10 {
            assert_eq!(nbrs.row(i), &[i as u32]);
        }
    }

    #[test]
    fn knn_line_example() {
        let source = Tensor::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![3.0, 0.0, 0.0],
        ])
        .unwrap();
        let query = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let nbrs = knn_search(&query, &source, 2).unwrap();
        assert_eq!(nbrs.row(0), &[0, 1]);
    }

    #[test]
    fn knn_k_equals_n_is_sorted_permutation() {
        let mut r = rng(7);
        let cloud = random_cloud(8, &mut r);
        let q = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let nbrs = knn_search(&q, cloud.coords(), 8).unwrap();
        let mut seen = vec![false; 8];
        let mut prev = -1.0f64;
        for &i in nbrs.row(0) {
            seen[i as usize] = true;
            let p = cloud.point(i as usize);
            let d: f64 = [(p[0] - 0.1), (p[1] - 0.2), (p[2] - 0.3)]
                .iter()
                .map(|v| v * v)
                .sum();
            assert!(d >= prev);
            prev = d;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn knn_rejects_k_beyond_source() {
        let source = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            knn_search(&source, &source, 2),
            Err(Error::Size { .. })
        ));
    }

    /// Full-sort oracle with the same tie rule.
    fn knn_oracle(queries: &Tensor<f64>, source: &Tensor<f64>, k: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for qi in 0..queries.rows() {
            let mut all: Vec<(f64, u32)> = (0..source.rows())
                .map(|si| (sq_dist(queries.row(qi), source.row(si)), si as u32))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            out.extend(all[..k].iter().map(|(_, i)| *i));
        }
        out
    }

    #[test]
    fn knn_matches_full_sort_oracle() {
        let mut r = rng(8);
        for _ in 0..30 {
            let n = r.gen_range(1..=64usize);
            let m = r.gen_range(1..=16usize);
            let k = r.gen_range(1..=n);
            let source = random_cloud(n, &mut r);
            let queries = random_cloud(m, &mut r);
            let got = knn_search(queries.coords(), source.coords(), k).unwrap();
            let want = knn_oracle(queries.coords(), source.coords(), k);
            assert_eq!(got.flat(), &want[..]);
        }
    }

    #[test]
    fn interpolation_coincident_source_is_verbatim() {
        let sources = Tensor::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let feats = Tensor::from_rows(&[vec![5.0, -2.0], vec![7.0, 9.0]]).unwrap();
        let targets = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let out = interpolate_features(&targets, &sources, &feats, 2).unwrap();
        assert_eq!(out.row(0), &[7.0, 9.0]);
    }

    #[test]
    fn interpolation_equidistant_sources_average() {
        let sources = Tensor::from_rows(&[vec![-1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let feats = Tensor::from_rows(&[vec![2.0f64], vec![6.0]]).unwrap();
        let targets = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let out = interpolate_features(&targets, &sources, &feats, 2).unwrap();
        assert!((out.data()[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_matches_direct_formula() {
        // sources at distance 1 and 2: weights 1 and 1/4 -> (4 f1 + f2) / 5
        let sources = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        let feats = Tensor::from_rows(&[vec![10.0f64], vec![-20.0]]).unwrap();
        let targets = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let out = interpolate_features(&targets, &sources, &feats, 2).unwrap();
        // independent evaluation of the weighted average in f64
        let (w1, w2) = (1.0 / (1.0 + 1e-8), 1.0 / (4.0 + 1e-8));
        let want = (w1 * 10.0 + w2 * -20.0) / (w1 + w2);
        assert!((out.data()[0] - want).abs() < 1e-9);
        assert!((out.data()[0] - (4.0 * 10.0 - 20.0) / 5.0).abs() < 1e-6);
    }

    #[test]
    fn interpolation_weights_partition_of_unity_and_hull() {
        let mut r = rng(9);
        for _ in 0..20 {
            let s = random_cloud(12, &mut r);
            let t = random_cloud(5, &mut r);
            let feats_data: Vec<f64> = (0..12 * 4).map(|_| r.gen_range(-3.0..3.0)).collect();
            let feats = Tensor::from_vec(vec![12, 4], feats_data).unwrap();
            let k = 3;
            let (idx, w) = interpolation_weights(t.coords(), s.coords(), k).unwrap();
            let out = interpolate_features(t.coords(), s.coords(), &feats, k).unwrap();
            for ti in 0..5 {
                let total: f64 = w[ti * k..(ti + 1) * k].iter().sum();
                assert!((total - 1.0).abs() < 1e-6, "weights sum to {total}");
                for c in 0..4 {
                    let vals: Vec<f64> = idx[ti * k..(ti + 1) * k]
                        .iter()
                        .map(|&i| feats.get2(i as usize, c))
                        .collect();
                    let (lo, hi) = (
                        vals.iter().cloned().fold(f64::INFINITY, f64::min),
                        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    );
                    let v = out.get2(ti, c);
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{v} outside [{lo},{hi}]");
                }
            }
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let mut r1 = rng(10);
        let mut r2 = rng(10);
        let c1 = random_cloud(20, &mut r1);
        let c2 = random_cloud(20, &mut r2);
        assert_eq!(
            farthest_point_sample(&c1, 7, 2).unwrap(),
            farthest_point_sample(&c2, 7, 2).unwrap()
        );
        assert_eq!(
            knn_search(c1.coords(), c1.coords(), 4).unwrap(),
            knn_search(c2.coords(), c2.coords(), 4).unwrap()
        );
    }
}
