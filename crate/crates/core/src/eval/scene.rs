//! Synthetic lidar-like scenes: a fixed set of surfaces or point clusters
//! and a sensor trajectory. Each scan resamples the geometry from scratch
//! so two scans never share points.

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::AlignedPair;
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, Point, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// Floor, ceiling, four walls and a few box obstacles.
    StructuredRoom,
    /// Floor plus scattered point clusters.
    SemiStructured,
    /// Point clusters only.
    Cluttered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub kind: SceneKind,
    /// 2 or 3. In 2D only the walls (as lines) or clusters are generated.
    pub dim: usize,
    /// Scene size along x, y, z in meters.
    pub extents: [f64; 3],
    /// Expected points per m² of surface (per m of line in 2D).
    pub density: f64,
    /// Gaussian measurement noise, meters.
    pub sigma: f64,
    pub seed: u64,
    pub n_poses: usize,
    /// Distance between consecutive poses, meters.
    pub step: f64,
    pub max_range: f64,
    pub sensor_height: f64,
    pub n_obstacles: usize,
    pub n_clusters: usize,
    /// Spread of each cluster, meters.
    pub cluster_sigma: f64,
    /// Expected points per cluster and scan.
    pub cluster_points: f64,
    /// Per-axis multipliers of `cluster_sigma`; each cluster gets a random
    /// orientation. `[1, 1, 1]` gives round clusters.
    pub cluster_aspect: [f64; 3],
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            kind: SceneKind::StructuredRoom,
            dim: 3,
            extents: [12.0, 8.0, 3.0],
            density: 40.0,
            sigma: 0.01,
            seed: 0,
            n_poses: 20,
            step: 0.5,
            max_range: 15.0,
            sensor_height: 1.2,
            n_obstacles: 3,
            n_clusters: 80,
            cluster_sigma: 0.08,
            cluster_points: 30.0,
            cluster_aspect: [1.0; 3],
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::params(m.to_string()));
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::BadDimension(self.dim));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be non-negative");
        }
        if self.extents.iter().take(self.dim).any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("extents must be positive");
        }
        if self.n_poses == 0 || !(self.step >= 0.0) || !(self.max_range > 0.0) {
            return bad("need at least one pose, step >= 0 and max_range > 0");
        }
        if self.kind != SceneKind::StructuredRoom
            && !(self.cluster_sigma > 0.0
                && self.n_clusters > 0
                && self.cluster_points > 0.0
                && self.cluster_aspect.iter().all(|a| *a > 0.0 && a.is_finite()))
        {
            return bad("cluster scenes need n_clusters, cluster_sigma and cluster_points > 0");
        }
        Ok(())
    }
}

/// A sampled surface element of the scene.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Parallelogram `origin + s·u + t·v`, `s, t ∈ [0, 1]` (in 2D `v = 0`:
    /// a segment).
    Patch { origin: Point, u: Vector3<f64>, v: Vector3<f64> },
    /// Gaussian cluster `center + axes·g`, `g ~ N(0, I)`.
    Cluster { center: Point, axes: Matrix3<f64> },
}

impl Primitive {
    /// Expected number of samples at `density` (points per m² or per m),
    /// or `cluster_points` for a cluster.
    fn expected_count(&self, density: f64, cluster_points: f64, dim: usize) -> f64 {
        match self {
            Primitive::Patch { u, v, .. } => {
                let size = if dim == 2 { u.norm() } else { u.cross(v).norm() };
                density * size
            }
            Primitive::Cluster { .. } => cluster_points,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, spec: &SyntheticSceneSpec, out: &mut Vec<Point>) {
        let (noise, dim) = (spec.sigma, spec.dim);
        let lambda = self.expected_count(spec.density, spec.cluster_points, dim);
        let n = if lambda > 0.0 {
            Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
        } else {
            0
        };
        let std = Normal::new(0.0, 1.0).unwrap();
        let gauss = |rng: &mut ChaCha8Rng, s: f64| {
            let mut g = Vector3::new(std.sample(rng), std.sample(rng), std.sample(rng)) * s;
            if dim == 2 {
                g.z = 0.0;
            }
            g
        };
        for _ in 0..n {
            let p = match self {
                Primitive::Patch { origin, u, v } => {
                    let s: f64 = rng.random();
                    let t: f64 = if dim == 2 { 0.0 } else { rng.random() };
                    origin + u * s + v * t
                }
                Primitive::Cluster { center, axes } => center + axes * gauss(rng, 1.0),
            };
            let p = if noise > 0.0 { p + gauss(rng, noise) } else { p };
            out.push(p);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SyntheticSceneSpec,
    pub primitives: Vec<Primitive>,
    /// Sensor poses in the world frame.
    pub poses: Vec<RigidTransform>,
}

fn patch(o: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Primitive {
    Primitive::Patch {
        origin: Point::from(o),
        u: Vector3::from(u),
        v: Vector3::from(v),
    }
}

/// Vertical faces and top of an axis-aligned box standing on the floor.
fn box_faces(min: [f64; 2], size: [f64; 2], h: f64, dim: usize) -> Vec<Primitive> {
    let [x, y] = min;
    let [sx, sy] = size;
    let up = if dim == 3 { [0.0, 0.0, h] } else { [0.0; 3] };
    let mut out = vec![
        patch([x, y, 0.0], [sx, 0.0, 0.0], up),
        patch([x, y + sy, 0.0], [sx, 0.0, 0.0], up),
        patch([x, y, 0.0], [0.0, sy, 0.0], up),
        patch([x + sx, y, 0.0], [0.0, sy, 0.0], up),
    ];
    if dim == 3 {
        out.push(patch([x, y, h], [sx, 0.0, 0.0], [0.0, sy, 0.0]));
    }
    out
}

/// Closed loop around the scene center, heading along the path.
fn trajectory(spec: &SyntheticSceneSpec) -> Vec<RigidTransform> {
    let [lx, ly, _] = spec.extents;
    let (cx, cy) = (lx / 2.0, ly / 2.0);
    let (rx, ry) = (lx / 4.0, ly / 4.0);
    let perimeter = PI * (3.0 * (rx + ry) - ((3.0 * rx + ry) * (rx + 3.0 * ry)).sqrt());
    let z = if spec.dim == 3 { spec.sensor_height } else { 0.0 };
    (0..spec.n_poses)
        .map(|i| {
            let phi = 2.0 * PI * (i as f64 * spec.step) / perimeter;
            let (x, y) = (cx + rx * phi.cos(), cy + ry * phi.sin());
            let yaw = (ry * phi.cos()).atan2(-rx * phi.sin());
            if spec.dim == 2 {
                RigidTransform::planar(x, y, yaw)
            } else {
                RigidTransform::from_xyz_yaw(x, y, z, yaw)
            }
        })
        .collect()
}

fn near_path(poses: &[RigidTransform], x: f64, y: f64, clearance: f64) -> bool {
    poses.iter().any(|p| {
        let t = p.translation();
        (t.x - x).hypot(t.y - y) < clearance
    })
}

/// Builds the scene geometry and trajectory; deterministic per seed.
pub fn synth_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [lx, ly, lz] = spec.extents;
    let dim = spec.dim;
    let poses = trajectory(spec);
    let mut prims = Vec::new();
    let up = if dim == 3 { [0.0, 0.0, lz] } else { [0.0; 3] };
    if spec.kind == SceneKind::StructuredRoom {
        prims.push(patch([0.0; 3], [lx, 0.0, 0.0], up));
        prims.push(patch([0.0, ly, 0.0], [lx, 0.0, 0.0], up));
        prims.push(patch([0.0; 3], [0.0, ly, 0.0], up));
        prims.push(patch([lx, 0.0, 0.0], [0.0, ly, 0.0], up));
        if dim == 3 {
            prims.push(patch([0.0; 3], [lx, 0.0, 0.0], [0.0, ly, 0.0]));
            prims.push(patch([0.0, 0.0, lz], [lx, 0.0, 0.0], [0.0, ly, 0.0]));
        }
        let mut placed = 0;
        let mut tries = 0;
        while placed < spec.n_obstacles && tries < 1000 {
            tries += 1;
            let size = [rng.random_range(0.4..1.2), rng.random_range(0.4..1.2)];
            let (hx, hy) = (lx - size[0] - 0.3, ly - size[1] - 0.3);
            if hx <= 0.3 || hy <= 0.3 {
                continue;
            }
            let min = [rng.random_range(0.3..hx), rng.random_range(0.3..hy)];
            let (cx, cy) = (min[0] + size[0] / 2.0, min[1] + size[1] / 2.0);
            if near_path(&poses, cx, cy, 1.0 + size[0].max(size[1])) {
                continue;
            }
            let h = rng.random_range(0.6..1.0) * lz;
            prims.extend(box_faces(min, size, h, dim));
            placed += 1;
        }
    } else {
        if spec.kind == SceneKind::SemiStructured && dim == 3 {
            prims.push(patch([0.0; 3], [lx, 0.0, 0.0], [0.0, ly, 0.0]));
        }
        let mut placed = 0;
        let mut tries = 0;
        while placed < spec.n_clusters && tries < 100 * spec.n_clusters {
            tries += 1;
            let x = rng.random_range(0.0..lx);
            let y = rng.random_range(0.0..ly);
            if near_path(&poses, x, y, 0.5) {
                continue;
            }
            let z = if dim == 3 { rng.random_range(0.2..lz.max(0.4)) } else { 0.0 };
            let sigma = spec.cluster_sigma * rng.random_range(0.7..1.3);
            let scale = Matrix3::from_diagonal(&(Vector3::from(spec.cluster_aspect) * sigma));
            let axes = if dim == 3 {
                let std = Normal::new(0.0, 1.0).unwrap();
                let q = Vector4::from_fn(|_, _| std.sample(&mut rng));
                UnitQuaternion::from_quaternion(q.into()).to_rotation_matrix().into_inner() * scale
            } else {
                let yaw = rng.random_range(-PI..PI);
                let (s, c) = yaw.sin_cos();
                Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 0.0) * scale
            };
            prims.push(Primitive::Cluster {
                center: Point::new(x, y, z),
                axes,
            });
            placed += 1;
        }
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        primitives: prims,
        poses,
    })
}

impl SyntheticScene {
    fn sample_world(&self, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for p in &self.primitives {
            p.sample(&mut rng, &self.spec, &mut pts);
        }
        pts
    }

    /// One independent sample of the whole scene in the world frame.
    pub fn map(&self) -> PointCloud {
        let pts = self.sample_world(self.spec.seed ^ 0x6d61_7000);
        PointCloud::new(self.spec.dim, pts, Point::zeros()).expect("scene dimension is validated")
    }

    /// Scan `i` in its sensor frame: a fresh sample of the scene limited to
    /// `max_range` around the pose.
    pub fn scan(&self, i: usize) -> PointCloud {
        let pose = &self.poses[i];
        let seed = self.spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1);
        let c = pose.translation();
        let r2 = self.spec.max_range * self.spec.max_range;
        let inv = pose.inverse();
        let pts: Vec<Point> = self
            .sample_world(seed)
            .into_iter()
            .filter(|p| (p - c).norm_squared() <= r2)
            .map(|p| inv.apply(&p))
            .collect();
        PointCloud::new(self.spec.dim, pts, Point::zeros())
            .expect("scene dimension is validated")
            .with_id(format!("scan_{i:04}"))
    }

    pub fn scans(&self) -> Vec<PointCloud> {
        (0..self.poses.len()).into_par_iter().map(|i| self.scan(i)).collect()
    }
}

/// Index pairs `(i, j)`: for each `i` the first `j > i` whose pose lies at
/// least `spacing` away. Spacing 0 gives consecutive pairs.
pub fn spacing_pairs(poses: &[RigidTransform], spacing: f64) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for i in 0..poses.len() {
        let ti = poses[i].translation();
        if let Some(j) = (i + 1..poses.len()).find(|&j| (poses[j].translation() - ti).norm() >= spacing) {
            out.push((i, j));
        }
    }
    if out.is_empty() {
        return Err(Error::SpacingUnreachable(spacing));
    }
    Ok(out)
}

/// Ground-truth pairs with `a` moved to the world frame and `b` left in its
/// sensor frame.
pub fn make_pairs(scans: &[PointCloud], poses: &[RigidTransform], index_pairs: &[(usize, usize)]) -> Result<Vec<AlignedPair>> {
    index_pairs
        .iter()
        .map(|&(i, j)| {
            Ok(AlignedPair {
                id: format!("{i}-{j}"),
                a: apply_transform(&scans[i], &poses[i])?,
                b: scans[j].clone(),
                t_gt: poses[j],
            })
        })
        .collect()
}
