use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::cloud::{check_dim, Point, PointCloud};
use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform `p -> R p + t` in 2D or 3D.
///
/// 2D transforms are stored as rotations about `z` with a zero `z`
/// translation, so they act on the embedded planar points unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    dim: usize,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(dim: usize, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_dim(dim)?;
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::NotARotation);
        }
        if dim == 2
            && (rotation[(2, 2)] != 1.0
                || rotation[(0, 2)] != 0.0
                || rotation[(1, 2)] != 0.0
                || translation.z != 0.0)
        {
            return Err(Error::params("2D transform must be a rotation about z"));
        }
        Ok(Self {
            dim,
            rotation,
            translation,
        })
    }

    /// Planar pose `(x, y, yaw)`.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            dim: 2,
            rotation: yaw_matrix(yaw),
            translation: Vector3::new(x, y, 0.0),
        }
    }

    /// 3D pose from a translation and a yaw about the vertical axis.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            dim: 3,
            rotation: yaw_matrix(yaw),
            translation: Vector3::new(x, y, z),
        }
    }

    /// 3D pose from a translation and a (normalized) quaternion `w, x, y, z`.
    pub fn from_quaternion(t: Vector3<f64>, q: [f64; 4]) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        let n = quat.norm();
        if !(n.is_finite() && (n - 1.0).abs() < 1e-6) {
            return Err(Error::data(format!("quaternion norm {n} is not 1")));
        }
        let r = UnitQuaternion::from_quaternion(quat).to_rotation_matrix();
        Ok(Self {
            dim: 3,
            rotation: *r.matrix(),
            translation: t,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Yaw angle about the vertical axis.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        [q.w, q.i, q.j, q.k]
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            dim: self.dim.max(other.dim),
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            dim: self.dim,
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

pub(crate) fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Maps every point and the sensor pose through `t`; order is preserved.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> Result<PointCloud> {
    if cloud.dim() != t.dim {
        return Err(Error::DimMismatch {
            expected: cloud.dim(),
            got: t.dim,
        });
    }
    let mut out = cloud.clone();
    for p in out.points_mut().iter_mut() {
        *p = t.apply(p);
    }
    out.set_pose(t.apply(&cloud.origin()), t.rotation * cloud.orientation());
    Ok(out)
}

/// Induces a sensor-frame offset on a ground-truth pose: the sensor moves by
/// `e_d` along `direction` (expressed in the sensor frame) and yaws by
/// `e_theta` about its vertical axis. `axis` is ignored in 2D; in 3D only
/// the vertical axis `(0, 0, 1)` is used by the protocols, but any unit axis
/// is accepted.
pub fn perturb(
    t_true: &RigidTransform,
    e_d: f64,
    direction: &Vector3<f64>,
    e_theta: f64,
    axis: Option<&Vector3<f64>>,
) -> Result<RigidTransform> {
    let n = direction.norm();
    if !((n - 1.0).abs() <= 1e-9) {
        return Err(Error::NonUnitDirection(n));
    }
    if t_true.dim == 2 && direction.z != 0.0 {
        return Err(Error::params("2D perturbation direction must lie in the plane"));
    }
    let rotation = match (t_true.dim, axis) {
        (3, Some(a)) => {
            let an = a.norm();
            if !((an - 1.0).abs() <= 1e-9) {
                return Err(Error::NonUnitDirection(an));
            }
            *Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(*a), e_theta).matrix()
        }
        _ => yaw_matrix(e_theta),
    };
    let delta = RigidTransform {
        dim: t_true.dim,
        rotation,
        translation: direction * e_d,
    };
    Ok(t_true.compose(&delta))
}

/// The four symmetric planar offsets used by the radar protocol:
/// forward, backward, left, right of the sensor heading.
pub fn symmetric_offsets() -> [Vector3<f64>; 4] {
    [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
    ]
}
