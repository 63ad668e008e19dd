//! Joint/separate differential-entropy alignment quality.
//!
//! Each point gets the differential entropy of a Gaussian fitted to its
//! radius neighborhood. Averaging over the union of two clouds gives the
//! joint entropy; averaging each cloud on its own gives the separate
//! entropy. Their difference is near zero for aligned pairs and grows with
//! misalignment.

use std::cmp::Ordering;
use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::QualityFeatureVector;
use crate::geometry::{Point, PointCloud, NeighborhoodIndex};

/// Relative determinant below which a covariance counts as singular when
/// no entropy floor is configured.
const SINGULAR_REL_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoralParams {
    /// Smallest neighborhood radius, meters.
    pub r_min: f64,
    /// Largest neighborhood radius, meters.
    pub r_max: f64,
    /// Angular sensor resolution in radians; 0 disables the range-dependent radius.
    pub alpha: f64,
    /// Additive floor inside the entropy logarithm.
    pub epsilon: f64,
    /// Fraction of lowest-entropy points dropped before aggregating.
    pub e_reject: f64,
    pub aggregate: Aggregate,
    /// Minimum neighborhood size; `None` means `dim + 2`.
    pub min_neighbors: Option<usize>,
}

impl Default for CoralParams {
    fn default() -> Self {
        Self::fixed_radius(0.3)
    }
}

impl CoralParams {
    pub fn fixed_radius(r: f64) -> Self {
        Self {
            r_min: r,
            r_max: r,
            alpha: 0.0,
            epsilon: 0.0,
            e_reject: 0.0,
            aggregate: Aggregate::Mean,
            min_neighbors: None,
        }
    }

    /// Dense indoor/outdoor lidar benchmark setting: r = 0.3 m, 20 % rejection.
    pub fn lidar_benchmark() -> Self {
        Self {
            e_reject: 0.2,
            ..Self::fixed_radius(0.3)
        }
    }

    /// Range-adaptive spinning-lidar setting (0.92° vertical resolution).
    pub fn spinning_lidar() -> Self {
        Self {
            r_min: 0.2,
            r_max: 1.0,
            alpha: 0.92_f64.to_radians(),
            e_reject: 0.2,
            ..Self::fixed_radius(0.2)
        }
    }

    /// Radar setting: r = 1 m, no rejection, no floor.
    pub fn radar() -> Self {
        Self::fixed_radius(1.0)
    }

    pub fn min_neighbors_for(&self, dim: usize) -> usize {
        self.min_neighbors.unwrap_or(dim + 2)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(Error::params("require 0 < r_min <= r_max"));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.alpha) {
            return Err(Error::params("alpha must lie in [0, pi/2)"));
        }
        if !(0.0..1.0).contains(&self.e_reject) {
            return Err(Error::params("e_reject must lie in [0, 1)"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::params("epsilon must be finite and >= 0"));
        }
        if self.min_neighbors_for(dim) < dim + 1 {
            return Err(Error::params(format!("min_neighbors must be >= {}", dim + 1)));
        }
        Ok(())
    }
}

/// Population mean and covariance (upper triangle, row-major `[xx, xy, xz, yy, yz, zz]`).
pub(crate) fn moments(points: &[Point]) -> (Point, [f64; 6]) {
    let n = points.len() as f64;
    let mut mean = Point::zeros();
    for p in points {
        mean += p;
    }
    mean /= n;
    let mut c = [0.0; 6];
    for p in points {
        let d = p - mean;
        c[0] += d.x * d.x;
        c[1] += d.x * d.y;
        c[2] += d.x * d.z;
        c[3] += d.y * d.y;
        c[4] += d.y * d.z;
        c[5] += d.z * d.z;
    }
    for v in &mut c {
        *v /= n;
    }
    (mean, c)
}

fn determinant(c: &[f64; 6], dim: usize) -> f64 {
    let [xx, xy, xz, yy, yz, zz] = *c;
    if dim == 2 {
        xx * yy - xy * xy
    } else {
        xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)
    }
}

fn cmp_points(a: &Point, b: &Point) -> Ordering {
    a.x.total_cmp(&b.x)
        .then_with(|| a.y.total_cmp(&b.y))
        .then_with(|| a.z.total_cmp(&b.z))
}

/// Differential entropy `½·ln((2πe)^N·det Σ + ε)` of the population
/// covariance of `neighbors`, or `None` (INVALID) when there are fewer than
/// `min_neighbors` points or, with `ε = 0`, the covariance is singular.
///
/// The result does not depend on the order of `neighbors`.
pub fn point_entropy(neighbors: &[Point], dim: usize, epsilon: f64, min_neighbors: usize) -> Option<f64> {
    let mut sorted = neighbors.to_vec();
    entropy_of_sorted(&mut sorted, dim, epsilon, min_neighbors)
}

fn entropy_of_sorted(pts: &mut [Point], dim: usize, epsilon: f64, min_neighbors: usize) -> Option<f64> {
    if pts.len() < min_neighbors || pts.is_empty() {
        return None;
    }
    pts.sort_unstable_by(cmp_points);
    let (_, c) = moments(pts);
    let det = determinant(&c, dim);
    let trace = c[0] + c[3] + if dim == 3 { c[5] } else { 0.0 };
    let scale = (trace / dim as f64).powi(dim as i32);
    let singular = !(trace > 0.0) || det <= SINGULAR_REL_DET * scale;
    let k = (2.0 * PI * E).powi(dim as i32);
    if epsilon > 0.0 {
        let det = if singular { det.max(0.0) } else { det };
        Some(0.5 * (k * det + epsilon).ln())
    } else if singular {
        None
    } else {
        Some(0.5 * (k * det).ln())
    }
}

/// Neighborhood radius for a point observed from `sensor_origin`.
pub fn effective_radius(p: &Point, sensor_origin: &Point, params: &CoralParams) -> f64 {
    if params.alpha == 0.0 {
        return params.r_min;
    }
    let d = (p - sensor_origin).norm();
    (d * params.alpha.sin()).clamp(params.r_min, params.r_max)
}

/// Per-point entropies of a cloud and their robust aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Entropy per point in nats; `None` marks INVALID.
    pub per_point: Vec<Option<f64>>,
    /// Valid points removed by lowest-entropy rejection.
    pub rejected: Vec<bool>,
    /// Mean or median of the valid, non-rejected entropies (nats/point).
    pub aggregate: f64,
    /// Number of valid (non-INVALID) entropies.
    pub n_valid: usize,
    /// Number of entropies that entered the aggregate.
    pub n_used: usize,
}

impl EntropyReport {
    pub fn valid_mask(&self) -> Vec<bool> {
        self.per_point.iter().map(Option::is_some).collect()
    }
}

/// Computes the entropy of every point in `target`, with neighbors drawn
/// from `search`. `origin_of(k)` gives the sensor origin that observed
/// point `k`, which sets its radius.
pub fn per_point_entropies<F>(target: &[Point], origin_of: F, search: &NeighborhoodIndex, dim: usize, params: &CoralParams) -> Vec<Option<f64>>
where
    F: Fn(usize) -> Point + Sync,
{
    let min_n = params.min_neighbors_for(dim);
    (0..target.len())
        .into_par_iter()
        .map_init(
            Vec::new,
            |scratch: &mut Vec<Point>, k| {
                let p = &target[k];
                let r = effective_radius(p, &origin_of(k), params);
                search.radius_points_into(p, r, scratch);
                entropy_of_sorted(scratch, dim, params.epsilon, min_n)
            },
        )
        .collect()
}

/// Drops INVALID entries, rejects the `⌊e_reject·n_valid⌋` lowest entropies
/// (ties by index) and aggregates the rest.
pub fn aggregate_entropies(per_point: Vec<Option<f64>>, e_reject: f64, aggregate: Aggregate) -> Result<EntropyReport> {
    let mut valid: Vec<(f64, usize)> = per_point
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.map(|h| (h, i)))
        .collect();
    if valid.is_empty() {
        return Err(Error::NoValidEntropies);
    }
    valid.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_valid = valid.len();
    let n_reject = (e_reject * n_valid as f64).floor() as usize;
    let mut rejected = vec![false; per_point.len()];
    for &(_, i) in &valid[..n_reject] {
        rejected[i] = true;
    }
    let kept: Vec<f64> = valid[n_reject..].iter().map(|v| v.0).collect();
    let agg = match aggregate {
        // summed in sorted order so the value depends only on the multiset
        Aggregate::Mean => kept.iter().sum::<f64>() / kept.len() as f64,
        Aggregate::Median => median_sorted(&kept),
    };
    Ok(EntropyReport {
        per_point,
        rejected,
        aggregate: agg,
        n_valid,
        n_used: kept.len(),
    })
}

pub(crate) fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-point entropies of `target` against `search` plus their aggregate.
pub fn cloud_entropy<F>(target: &[Point], origin_of: F, search: &NeighborhoodIndex, dim: usize, params: &CoralParams) -> Result<EntropyReport>
where
    F: Fn(usize) -> Point + Sync,
{
    params.validate(dim)?;
    let per_point = per_point_entropies(target, origin_of, search, dim, params);
    aggregate_entropies(per_point, params.e_reject, params.aggregate)
}

/// Alignment quality of a cloud pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    /// `h_joint - h_sep`, nats/point.
    pub q: f64,
    pub h_joint: f64,
    pub h_sep: f64,
    /// Joint-minus-separate entropy per point of `Pa` followed by `Pb`.
    pub per_point_quality: Vec<Option<f64>>,
    pub joint: EntropyReport,
    pub separate: EntropyReport,
    pub params: CoralParams,
}

/// Per-point entropies over the union `Pa ∪ Pb` (points of `Pa` first),
/// each point using its own cloud's sensor origin for the radius.
fn joint_entropies(pa: &PointCloud, pb: &PointCloud, params: &CoralParams) -> Result<Vec<Option<f64>>> {
    let dim = pa.dim();
    let na = pa.len();
    let (oa, ob) = (pa.origin(), pb.origin());
    let joint_pts = pa.concat(pb)?.points().to_vec();
    let joint_index = NeighborhoodIndex::from_points(joint_pts.clone(), dim)?;
    Ok(per_point_entropies(&joint_pts, |k| if k < na { oa } else { ob }, &joint_index, dim, params))
}

/// Entropy of the joint cloud alone (the mean-map-entropy pass).
pub fn joint_entropy(pa: &PointCloud, pb: &PointCloud, params: &CoralParams) -> Result<EntropyReport> {
    if pa.dim() != pb.dim() {
        return Err(Error::DimMismatch {
            expected: pa.dim(),
            got: pb.dim(),
        });
    }
    params.validate(pa.dim())?;
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptyCloud);
    }
    aggregate_entropies(joint_entropies(pa, pb, params)?, params.e_reject, params.aggregate)
}

/// Joint and separate entropies of a pair and their difference.
pub fn coral_quality(pa: &PointCloud, pb: &PointCloud, params: &CoralParams) -> Result<QualityResult> {
    if pa.dim() != pb.dim() {
        return Err(Error::DimMismatch {
            expected: pa.dim(),
            got: pb.dim(),
        });
    }
    let dim = pa.dim();
    params.validate(dim)?;
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (oa, ob) = (pa.origin(), pb.origin());
    let joint_h = joint_entropies(pa, pb, params)?;

    let index_a = NeighborhoodIndex::from_points(pa.points().to_vec(), dim)?;
    let index_b = NeighborhoodIndex::from_points(pb.points().to_vec(), dim)?;
    let mut sep_h = per_point_entropies(pa.points(), |_| oa, &index_a, dim, params);
    sep_h.extend(per_point_entropies(pb.points(), |_| ob, &index_b, dim, params));

    let per_point_quality = joint_h
        .iter()
        .zip(&sep_h)
        .map(|(j, s)| match (j, s) {
            (Some(j), Some(s)) => Some(j - s),
            _ => None,
        })
        .collect();
    let joint = aggregate_entropies(joint_h, params.e_reject, params.aggregate)?;
    let separate = aggregate_entropies(sep_h, params.e_reject, params.aggregate)?;
    Ok(QualityResult {
        q: joint.aggregate - separate.aggregate,
        h_joint: joint.aggregate,
        h_sep: separate.aggregate,
        per_point_quality,
        joint,
        separate,
        params: params.clone(),
    })
}

/// Ratio `Q_misaligned / Q_aligned` used to calibrate parameters.
///
/// Returns `+∞` when `Q_aligned <= 0 < Q_misaligned` and NaN when both are
/// non-positive.
pub fn separability_ratio(q_aligned: f64, q_misaligned: f64) -> f64 {
    if q_aligned > 0.0 {
        q_misaligned / q_aligned
    } else if q_misaligned > 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

pub fn quality_separability(aligned: &QualityResult, misaligned: &QualityResult) -> f64 {
    separability_ratio(aligned.q, misaligned.q)
}

/// Classifier inputs `(H_joint, H_sep)`.
pub fn coral_features(pa: &PointCloud, pb: &PointCloud, params: &CoralParams) -> Result<QualityFeatureVector> {
    let r = coral_quality(pa, pb, params)?;
    Ok(QualityFeatureVector::two(r.h_joint, r.h_sep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, build_index, RigidTransform};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z)
    }

    #[test]
    fn collinear_is_invalid() {
        let pts = [p(0.0, 0.0, 0.0), p(1.0, 1.0, 0.0), p(2.0, 2.0, 0.0)];
        assert_eq!(point_entropy(&pts, 2, 0.0, 3), None);
    }

    #[test]
    fn octahedron_entropy() {
        let pts = [
            p(1.0, 0.0, 0.0),
            p(-1.0, 0.0, 0.0),
            p(0.0, 1.0, 0.0),
            p(0.0, -1.0, 0.0),
            p(0.0, 0.0, 1.0),
            p(0.0, 0.0, -1.0),
            p(0.0, 0.0, 0.0),
        ];
        // oracle: population variance per axis = 2/7, no cross terms
        let var = 2.0 / 7.0;
        let want = 0.5 * ((2.0 * PI * E).powi(3) * var * var * var).ln();
        let got = point_entropy(&pts, 3, 0.0, 5).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 2.3777).abs() < 1e-3);
    }

    #[test]
    fn too_few_neighbors_is_invalid() {
        let pts = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)];
        assert_eq!(point_entropy(&pts, 2, 0.0, 4), None);
        assert!(point_entropy(&pts, 2, 0.0, 3).is_some());
    }

    #[test]
    fn epsilon_floors_singular_neighborhoods() {
        let pts = [p(0.0, 0.0, 0.0), p(1.0, 1.0, 0.0), p(2.0, 2.0, 0.0), p(3.0, 3.0, 0.0)];
        let h = point_entropy(&pts, 2, 1e-8, 4).unwrap();
        assert!((h - 0.5 * 1e-8f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn radius_rules() {
        let mut params = CoralParams::fixed_radius(0.2);
        params.r_max = 1.0;
        assert_eq!(effective_radius(&p(500.0, 0.0, 0.0), &Point::zeros(), &params), 0.2);
        params.alpha = 0.016057;
        let r = effective_radius(&p(30.0, 0.0, 0.0), &Point::zeros(), &params);
        assert!((r - 30.0 * 0.016057f64.sin()).abs() < 1e-15);
        assert!((r - 0.4817).abs() < 1e-4);
        assert_eq!(effective_radius(&p(1000.0, 0.0, 0.0), &Point::zeros(), &params), 1.0);
    }

    #[test]
    fn rejection_arithmetic() {
        let per = vec![Some(3.0), Some(1.0), None, Some(4.0), Some(2.0)];
        let r = aggregate_entropies(per, 0.5, Aggregate::Mean).unwrap();
        assert_eq!(r.aggregate, 3.5);
        assert_eq!(r.n_valid, 4);
        assert_eq!(r.n_used, 2);
        assert_eq!(r.rejected, vec![false, true, false, false, true]);
    }

    #[test]
    fn rejection_ties_by_index() {
        let r = aggregate_entropies(vec![Some(1.0), Some(1.0), Some(1.0)], 0.34, Aggregate::Mean).unwrap();
        assert_eq!(r.rejected, vec![true, false, false]);
    }

    #[test]
    fn median_of_even_count() {
        let per = vec![Some(1.0), Some(2.0), Some(3.0), Some(100.0)];
        let med = aggregate_entropies(per.clone(), 0.0, Aggregate::Median).unwrap();
        let mean = aggregate_entropies(per, 0.0, Aggregate::Mean).unwrap();
        assert_eq!(med.aggregate, 2.5);
        assert_eq!(mean.aggregate, 26.5);
    }

    #[test]
    fn isolated_points_have_no_valid_entropy() {
        let c = PointCloud::from_coords(2, &[0.0, 0.0, 5.0, 0.0, 0.0, 5.0], &[0.0, 0.0]).unwrap();
        let idx = build_index(&c).unwrap();
        let err = cloud_entropy(c.points(), |_| c.origin(), &idx, 2, &CoralParams::fixed_radius(0.1));
        assert!(matches!(err, Err(Error::NoValidEntropies)));
    }

    fn noisy_plane(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pts = (0..n)
            .map(|_| p(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), noise.sample(&mut rng)))
            .collect();
        PointCloud::new(3, pts, p(2.0, 2.0, 1.5)).unwrap()
    }

    #[test]
    fn index_path_matches_brute_force_neighborhoods() {
        let cloud = noisy_plane(1000, 3);
        let params = CoralParams::fixed_radius(0.25);
        let idx = build_index(&cloud).unwrap();
        let report = cloud_entropy(cloud.points(), |_| cloud.origin(), &idx, 3, &params).unwrap();
        // oracle: neighborhoods by exhaustive scan, mean summed in sorted order
        let r2 = 0.25 * 0.25;
        let brute: Vec<Option<f64>> = cloud
            .points()
            .iter()
            .map(|q| {
                let nb: Vec<Point> = cloud
                    .points()
                    .iter()
                    .filter(|x| crate::geometry::dist2(x, q) <= r2)
                    .copied()
                    .collect();
                point_entropy(&nb, 3, 0.0, 5)
            })
            .collect();
        assert_eq!(report.per_point, brute);
        let mut vals: Vec<f64> = brute.iter().flatten().copied().collect();
        vals.sort_by(f64::total_cmp);
        assert_eq!(report.aggregate, vals.iter().sum::<f64>() / vals.len() as f64);
    }

    #[test]
    fn duplicate_pair_has_zero_quality() {
        let a = noisy_plane(600, 9);
        let params = CoralParams::fixed_radius(0.4);
        let r = coral_quality(&a, &a.clone(), &params).unwrap();
        assert!(r.q.abs() < 1e-12, "{}", r.q);
        assert!(r.per_point_quality.iter().flatten().all(|q| q.abs() < 1e-12));
    }

    #[test]
    fn quality_is_symmetric_bitwise() {
        let a = noisy_plane(500, 1);
        let b = apply_transform(&noisy_plane(500, 2), &RigidTransform::from_xyz_yaw(0.05, 0.0, 0.02, 0.01)).unwrap();
        let params = CoralParams::lidar_benchmark();
        let ab = coral_quality(&a, &b, &params).unwrap();
        let ba = coral_quality(&b, &a, &params).unwrap();
        assert_eq!(ab.q.to_bits(), ba.q.to_bits());
    }

    #[test]
    fn features_are_joint_and_separate() {
        let a = noisy_plane(400, 4);
        let b = noisy_plane(400, 5);
        let params = CoralParams::fixed_radius(0.4);
        let f = coral_features(&a, &b, &params).unwrap();
        let r = coral_quality(&a, &b, &params).unwrap();
        assert_eq!(f.x1 - f.x2, r.q);
        assert_eq!(f.arity, 2);
        // validity must not depend on the doubled neighbor count
        let params = CoralParams { min_neighbors: Some(4), ..params };
        let same = coral_features(&a, &a, &params).unwrap();
        assert!((same.x1 - same.x2).abs() < 1e-12);
    }

    #[test]
    fn separability_sentinels() {
        assert!((separability_ratio(0.1, 0.43) - 4.3).abs() < 1e-12);
        assert_eq!(separability_ratio(0.2, 0.2), 1.0);
        assert_eq!(separability_ratio(-0.1, 0.2), f64::INFINITY);
        assert_eq!(separability_ratio(0.0, 0.2), f64::INFINITY);
        assert!(separability_ratio(-0.1, -0.2).is_nan());
    }

    #[test]
    fn params_validation() {
        let p = CoralParams { e_reject: 1.0, ..Default::default() };
        assert!(p.validate(3).is_err());
        let p = CoralParams { r_min: 0.5, r_max: 0.4, ..Default::default() };
        assert!(p.validate(3).is_err());
        let p = CoralParams { min_neighbors: Some(3), ..Default::default() };
        assert!(p.validate(3).is_err());
        assert!(p.validate(2).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scaling_shifts_entropy_by_n_ln_s(s in 0.2f64..5.0, seed in 0u64..1000) {
            let a = noisy_plane(150, seed);
            let b = noisy_plane(150, seed + 7);
            let params = CoralParams::fixed_radius(0.6);
            let scaled = |c: &PointCloud| {
                let pts = c.points().iter().map(|x| x * s).collect();
                PointCloud::new(3, pts, c.origin() * s).unwrap()
            };
            let mut sp = params.clone();
            sp.r_min *= s;
            sp.r_max *= s;
            let base = coral_quality(&a, &b, &params);
            let big = coral_quality(&scaled(&a), &scaled(&b), &sp);
            if let (Ok(base), Ok(big)) = (base, big) {
                prop_assert!((base.q - big.q).abs() < 1e-9);
                for (h0, h1) in base.joint.per_point.iter().zip(&big.joint.per_point) {
                    if let (Some(h0), Some(h1)) = (h0, h1) {
                        prop_assert!((h1 - h0 - 3.0 * s.ln()).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
