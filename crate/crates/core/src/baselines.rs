//! Comparison metrics: mean map entropy, median CorAl, NDT likelihood,
//! NDT with cell entropy, grid surface residuals and raw point-to-point.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::entropy::{coral_features, joint_entropy, moments, Aggregate, CoralParams};
use crate::error::{Error, Result};
use crate::features::QualityFeatureVector;
use crate::geometry::{dist2, voxel_key, NeighborhoodIndex, Point, PointCloud};

/// Eigenvalues below this fraction of the largest are raised to it.
pub const EIGEN_FLOOR_RATIO: f64 = 1e-3;

/// `x₁ = H_joint` with the mean aggregate, `x₂ = 0`.
pub fn mme_features(pa: &PointCloud, pb: &PointCloud, params: &CoralParams) -> Result<QualityFeatureVector> {
    let params = CoralParams {
        aggregate: Aggregate::Mean,
        ..params.clone()
    };
    Ok(QualityFeatureVector::one(joint_entropy(pa, pb, &params)?.aggregate))
}

/// CorAl features with the median aggregate.
pub fn coral_median_features(pa: &PointCloud, pb: &PointCloud, params: &CoralParams) -> Result<QualityFeatureVector> {
    let params = CoralParams {
        aggregate: Aggregate::Median,
        ..params.clone()
    };
    coral_features(pa, pb, &params)
}

/// Symmetric covariance with eigenvalues floored at `EIGEN_FLOOR_RATIO·λ_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedCov {
    /// Regularized covariance; the unused z block is zero in 2D.
    pub cov: Matrix3<f64>,
    pub inverse: Matrix3<f64>,
    pub log_det: f64,
    /// Eigenvalues ascending, `dim` long.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors matching `eigenvalues`.
    pub eigenvectors: Vec<Vector3<f64>>,
}

impl RegularizedCov {
    /// `None` when the covariance is identically zero.
    pub fn new(c: &[f64; 6], dim: usize) -> Option<Self> {
        let [xx, xy, xz, yy, yz, zz] = *c;
        let mut pairs: Vec<(f64, Vector3<f64>)> = if dim == 2 {
            let e = Matrix2::new(xx, xy, xy, yy).symmetric_eigen();
            (0..2)
                .map(|i| {
                    let v = e.eigenvectors.column(i);
                    (e.eigenvalues[i], Vector3::new(v[0], v[1], 0.0))
                })
                .collect()
        } else {
            let e = Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz).symmetric_eigen();
            (0..3).map(|i| (e.eigenvalues[i], e.eigenvectors.column(i).into_owned())).collect()
        };
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lmax = pairs[dim - 1].0;
        if !(lmax > 0.0) {
            return None;
        }
        let floor = EIGEN_FLOOR_RATIO * lmax;
        let mut cov = Matrix3::zeros();
        let mut inverse = Matrix3::zeros();
        let mut log_det = 0.0;
        let mut eigenvalues = Vec::with_capacity(dim);
        let mut eigenvectors = Vec::with_capacity(dim);
        for (l, v) in pairs {
            let l = l.max(floor);
            let v = v.normalize();
            let outer = v * v.transpose();
            cov += outer * l;
            inverse += outer / l;
            log_det += l.ln();
            eigenvalues.push(l);
            eigenvectors.push(v);
        }
        Some(Self {
            cov,
            inverse,
            log_det,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn mahalanobis2(&self, d: &Vector3<f64>) -> f64 {
        d.dot(&(self.inverse * d))
    }

    /// Differential entropy `½·ln((2πe)^N det Σ)`.
    pub fn entropy(&self, dim: usize) -> f64 {
        0.5 * (dim as f64 * (2.0 * PI * E).ln() + self.log_det)
    }
}

/// One NDT cell: Gaussian fitted to the points of a voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct NdtCell {
    pub mean: Point,
    pub cov: RegularizedCov,
    pub count: usize,
}

impl NdtCell {
    /// Gaussian density of `p` under this cell.
    pub fn density(&self, p: &Point, dim: usize) -> f64 {
        let d = p - self.mean;
        let log_norm = -0.5 * (dim as f64 * (2.0 * PI).ln() + self.cov.log_det);
        (log_norm - 0.5 * self.cov.mahalanobis2(&d)).exp()
    }
}

/// Voxelized Gaussian model of a cloud. Voxels are laid out in the sensor
/// frame of the cloud it was built from; cell moments are in the common
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NdtGrid {
    pub voxel: f64,
    pub dim: usize,
    pub cells: BTreeMap<[i64; 3], NdtCell>,
    frame: PointCloud,
}

impl NdtGrid {
    /// Voxel key of a common-frame point in this grid's layout.
    pub fn key_of(&self, p: &Point) -> [i64; 3] {
        voxel_key(&self.frame.to_sensor_frame(p), self.voxel, self.dim)
    }
}

pub fn min_cell_points(dim: usize) -> usize {
    dim + 2
}

/// Groups point indices by voxel in the cloud's own sensor frame.
fn bucket(cloud: &PointCloud, cell: f64) -> BTreeMap<[i64; 3], Vec<Point>> {
    let mut cells: BTreeMap<[i64; 3], Vec<Point>> = BTreeMap::new();
    for p in cloud.points() {
        let key = voxel_key(&cloud.to_sensor_frame(p), cell, cloud.dim());
        cells.entry(key).or_default().push(*p);
    }
    cells
}

fn check_cell_size(v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::params(format!("cell size must be positive, got {v}")));
    }
    Ok(())
}

pub fn build_ndt(pa: &PointCloud, voxel: f64) -> Result<NdtGrid> {
    check_cell_size(voxel)?;
    let dim = pa.dim();
    let min_pts = min_cell_points(dim);
    let cells: BTreeMap<_, _> = bucket(pa, voxel)
        .into_iter()
        .filter(|(_, pts)| pts.len() >= min_pts)
        .filter_map(|(key, pts)| {
            let (mean, c) = moments(&pts);
            RegularizedCov::new(&c, dim).map(|cov| {
                (
                    key,
                    NdtCell {
                        mean,
                        cov,
                        count: pts.len(),
                    },
                )
            })
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::NoQualifyingCells);
    }
    let frame = PointCloud::with_pose(dim, Vec::new(), pa.origin(), *pa.orientation())?;
    Ok(NdtGrid { voxel, dim, cells, frame })
}

fn neighbor_offsets(dim: usize) -> Vec<[i64; 3]> {
    let z = if dim == 3 { -1..=1 } else { 0..=0 };
    let mut out = Vec::new();
    for dx in -1..=1 {
        for dy in -1..=1 {
            for dz in z.clone() {
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

/// Per overlapping point of `pb`: the nearest (by mean distance) occupied
/// cell in its 3^N voxel neighborhood. Ties go to the smaller key.
fn ndt_matches(grid: &NdtGrid, pb: &PointCloud) -> Result<Vec<(Point, [i64; 3])>> {
    if pb.dim() != grid.dim {
        return Err(Error::DimMismatch {
            expected: grid.dim,
            got: pb.dim(),
        });
    }
    let offsets = neighbor_offsets(grid.dim);
    let mut out = Vec::new();
    for p in pb.points() {
        let k = grid.key_of(p);
        let mut best: Option<(f64, [i64; 3])> = None;
        for o in &offsets {
            let key = [k[0] + o[0], k[1] + o[1], k[2] + o[2]];
            if let Some(cell) = grid.cells.get(&key) {
                let d = dist2(p, &cell.mean);
                let better = match best {
                    None => true,
                    Some((bd, bk)) => d < bd || (d == bd && key < bk),
                };
                if better {
                    best = Some((d, key));
                }
            }
        }
        if let Some((_, key)) = best {
            out.push((*p, key));
        }
    }
    if out.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(out)
}

fn mean_density(grid: &NdtGrid, matches: &[(Point, [i64; 3])]) -> f64 {
    let sum: f64 = matches.iter().map(|(p, key)| grid.cells[key].density(p, grid.dim)).sum();
    sum / matches.len() as f64
}

/// Mean Gaussian likelihood of the overlapping points of `pb`.
pub fn ndt_score(grid: &NdtGrid, pb: &PointCloud) -> Result<QualityFeatureVector> {
    let m = ndt_matches(grid, pb)?;
    Ok(QualityFeatureVector::one(mean_density(grid, &m)))
}

/// NDT score plus the mean entropy of the matched cells, each counted once.
pub fn rel_ndt_features(grid: &NdtGrid, pb: &PointCloud) -> Result<QualityFeatureVector> {
    let m = ndt_matches(grid, pb)?;
    let s = mean_density(grid, &m);
    let used: BTreeSet<[i64; 3]> = m.iter().map(|(_, k)| *k).collect();
    let h: f64 = used.iter().map(|k| grid.cells[k].cov.entropy(grid.dim)).sum();
    Ok(QualityFeatureVector::two(s, h / used.len() as f64))
}

/// Oriented surface sample of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFeature {
    pub key: [i64; 3],
    pub mean: Point,
    pub normal: Vector3<f64>,
    pub cov: RegularizedCov,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSurfaceFeatures {
    pub cell_size: f64,
    pub dim: usize,
    pub features: Vec<SurfaceFeature>,
}

/// Points the normal toward the sensor; if it is exactly perpendicular,
/// makes its first nonzero component positive.
fn canonical_normal(n: Vector3<f64>, mean: &Point, origin: &Point) -> Vector3<f64> {
    let s = n.dot(&(origin - mean));
    if s < 0.0 {
        return -n;
    }
    if s == 0.0 {
        if let Some(c) = n.iter().find(|c| **c != 0.0) {
            if *c < 0.0 {
                return -n;
            }
        }
    }
    n
}

pub fn grid_surface_features(cloud: &PointCloud, cell_size: f64) -> Result<GridSurfaceFeatures> {
    grid_surface_features_with(cloud, cell_size, min_cell_points(cloud.dim()))
}

pub fn grid_surface_features_with(cloud: &PointCloud, cell_size: f64, min_points: usize) -> Result<GridSurfaceFeatures> {
    check_cell_size(cell_size)?;
    let dim = cloud.dim();
    let origin = cloud.origin();
    let features: Vec<SurfaceFeature> = bucket(cloud, cell_size)
        .into_iter()
        .filter(|(_, pts)| pts.len() >= min_points.max(1))
        .filter_map(|(key, pts)| {
            let (mean, c) = moments(&pts);
            let cov = RegularizedCov::new(&c, dim)?;
            let normal = canonical_normal(cov.eigenvectors[0], &mean, &origin);
            Some(SurfaceFeature {
                key,
                mean,
                normal,
                cov,
                count: pts.len(),
            })
        })
        .collect();
    if features.is_empty() {
        return Err(Error::NoQualifyingCells);
    }
    Ok(GridSurfaceFeatures { cell_size, dim, features })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ResidualKind {
    P2P,
    P2L,
    P2D,
}

/// For each element of `query`, the nearest point of `index` within
/// `radius` (ties by lower index).
fn nearest_matches(index: &NeighborhoodIndex, query: &[Point], radius: f64) -> Vec<(usize, usize)> {
    query
        .iter()
        .enumerate()
        .filter_map(|(j, q)| index.nearest_within(q, radius).map(|(i, _)| (i, j)))
        .collect()
}

/// Residuals of `fb` against `fa`, each `b` matched to its nearest `a`
/// within `assoc_radius`. Returns `(sum, count, sum/count)`.
pub fn residual_features(
    fa: &GridSurfaceFeatures,
    fb: &GridSurfaceFeatures,
    kind: ResidualKind,
    assoc_radius: f64,
) -> Result<QualityFeatureVector> {
    if fa.dim != fb.dim {
        return Err(Error::DimMismatch {
            expected: fa.dim,
            got: fb.dim,
        });
    }
    let index = NeighborhoodIndex::from_points(fa.features.iter().map(|f| f.mean).collect(), fa.dim)?;
    let qb: Vec<Point> = fb.features.iter().map(|f| f.mean).collect();
    let matches = nearest_matches(&index, &qb, assoc_radius);
    if matches.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let sum: f64 = matches
        .iter()
        .map(|&(i, j)| {
            let a = &fa.features[i];
            let d = fb.features[j].mean - a.mean;
            match kind {
                ResidualKind::P2P => d.norm_squared(),
                ResidualKind::P2L => a.normal.dot(&d).powi(2),
                ResidualKind::P2D => a.cov.mahalanobis2(&d),
            }
        })
        .sum();
    let n = matches.len() as f64;
    Ok(QualityFeatureVector::three(sum, n, sum / n))
}

/// Mean squared nearest-neighbor distance from `pb` to `pa` on raw points.
pub fn cen_p2p_features(pa: &PointCloud, pb: &PointCloud, assoc_radius: f64) -> Result<QualityFeatureVector> {
    if pa.dim() != pb.dim() {
        return Err(Error::DimMismatch {
            expected: pa.dim(),
            got: pb.dim(),
        });
    }
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NeighborhoodIndex::from_points(pa.points().to_vec(), pa.dim())?;
    let matches = nearest_matches(&index, pb.points(), assoc_radius);
    if matches.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let sum: f64 = matches.iter().map(|&(i, j)| dist2(&pb.points()[j], &pa.points()[i])).sum();
    Ok(QualityFeatureVector::one(sum / matches.len() as f64))
}

/// Quality metrics selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    Coral,
    CoralMedian,
    Mme,
    Ndt,
    RelNdt,
    CfearP2p,
    CfearP2l,
    CfearP2d,
    CenP2p,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Coral,
        Metric::CoralMedian,
        Metric::Mme,
        Metric::Ndt,
        Metric::RelNdt,
        Metric::CfearP2p,
        Metric::CfearP2l,
        Metric::CfearP2d,
        Metric::CenP2p,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Coral => "coral",
            Metric::CoralMedian => "coral-median",
            Metric::Mme => "mme",
            Metric::Ndt => "ndt",
            Metric::RelNdt => "rel-ndt",
            Metric::CfearP2p => "cfear-p2p",
            Metric::CfearP2l => "cfear-p2l",
            Metric::CfearP2d => "cfear-p2d",
            Metric::CenP2p => "cen-p2p",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Metric::Coral | Metric::CoralMedian | Metric::RelNdt => 2,
            Metric::Mme | Metric::Ndt | Metric::CenP2p => 1,
            Metric::CfearP2p | Metric::CfearP2l | Metric::CfearP2d => 3,
        }
    }

    /// Metrics that work on dense k-strongest returns rather than peak
    /// features when fed from radar.
    pub fn uses_dense_radar_points(self) -> bool {
        matches!(self, Metric::CfearP2p | Metric::CfearP2l | Metric::CfearP2d | Metric::CenP2p)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.name().to_string()
    }
}

/// Parameters for every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub coral: CoralParams,
    /// NDT voxel size; `None` means `2·r_min`.
    pub ndt_voxel: Option<f64>,
    /// Cell size for grid surface features.
    pub surface_cell: f64,
    /// Association radius for residual metrics.
    pub assoc_radius: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            coral: CoralParams::default(),
            ndt_voxel: None,
            surface_cell: 3.0,
            assoc_radius: 3.0,
        }
    }
}

impl MetricParams {
    pub fn with_coral(coral: CoralParams) -> Self {
        Self { coral, ..Self::default() }
    }

    pub fn ndt_voxel(&self) -> f64 {
        self.ndt_voxel.unwrap_or(2.0 * self.coral.r_min)
    }
}

/// Classifier features of `metric` for a pair expressed in a common frame.
pub fn metric_features(metric: Metric, pa: &PointCloud, pb: &PointCloud, params: &MetricParams) -> Result<QualityFeatureVector> {
    let p = params;
    match metric {
        Metric::Coral => coral_features(pa, pb, &p.coral),
        Metric::CoralMedian => coral_median_features(pa, pb, &p.coral),
        Metric::Mme => mme_features(pa, pb, &p.coral),
        Metric::Ndt => ndt_score(&build_ndt(pa, p.ndt_voxel())?, pb),
        Metric::RelNdt => rel_ndt_features(&build_ndt(pa, p.ndt_voxel())?, pb),
        Metric::CfearP2p | Metric::CfearP2l | Metric::CfearP2d => {
            let kind = match metric {
                Metric::CfearP2p => ResidualKind::P2P,
                Metric::CfearP2l => ResidualKind::P2L,
                _ => ResidualKind::P2D,
            };
            let fa = grid_surface_features(pa, p.surface_cell)?;
            let fb = grid_surface_features(pb, p.surface_cell)?;
            residual_features(&fa, &fb, kind, p.assoc_radius)
        }
        Metric::CenP2p => cen_p2p_features(pa, pb, p.assoc_radius),
    }
}
