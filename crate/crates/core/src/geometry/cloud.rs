use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 2D or 3D. 2D points keep `z == 0`.
pub type Point = Vector3<f64>;

/// Ordered 2D or 3D point cloud with the pose of the sensor that produced it.
///
/// Points are stored as 3-vectors; for `dim == 2` the third coordinate is
/// always zero. Point order is stable and every per-point output in this
/// crate is index-aligned with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    points: Vec<Point>,
    origin: Point,
    /// Sensor orientation in the cloud's frame (rotation about z in 2D).
    orientation: Matrix3<f64>,
    pub id: String,
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::BadDimension(dim))
    }
}

impl PointCloud {
    /// Builds a cloud, validating that every point is finite and 2D points
    /// have a zero `z`.
    pub fn new(dim: usize, points: Vec<Point>, origin: Point) -> Result<Self> {
        Self::with_pose(dim, points, origin, Matrix3::identity())
    }

    pub fn with_pose(
        dim: usize,
        mut points: Vec<Point>,
        mut origin: Point,
        orientation: Matrix3<f64>,
    ) -> Result<Self> {
        check_dim(dim)?;
        for (i, p) in points.iter_mut().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            if dim == 2 {
                p.z = 0.0;
            }
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::data("non-finite sensor origin"));
        }
        if dim == 2 {
            origin.z = 0.0;
        }
        Ok(Self {
            dim,
            points,
            origin,
            orientation,
            id: String::new(),
        })
    }

    /// Convenience constructor from coordinate slices (`dim` values each).
    pub fn from_coords(dim: usize, coords: &[f64], origin: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::data(format!(
                "coordinate buffer length {} is not a multiple of {dim}",
                coords.len()
            )));
        }
        if origin.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: origin.len(),
            });
        }
        let points = coords.chunks_exact(dim).map(to_point).collect();
        Self::new(dim, points, to_point(origin))
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn orientation(&self) -> &Matrix3<f64> {
        &self.orientation
    }

    /// Concatenation `self` followed by `other`; keeps `self`'s pose.
    pub fn concat(&self, other: &PointCloud) -> Result<PointCloud> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut points = Vec::with_capacity(self.len() + other.len());
        points.extend_from_slice(&self.points);
        points.extend_from_slice(&other.points);
        Ok(PointCloud {
            dim: self.dim,
            points,
            origin: self.origin,
            orientation: self.orientation,
            id: self.id.clone(),
        })
    }

    /// Maps a world point into the sensor frame of this cloud.
    pub fn to_sensor_frame(&self, p: &Point) -> Point {
        self.orientation.transpose() * (p - self.origin)
    }

    /// Voxel-grid downsampling: one centroid per occupied voxel, voxels
    /// visited in ascending key order.
    pub fn voxel_downsample(&self, voxel: f64) -> Result<PointCloud> {
        if !(voxel > 0.0) {
            return Err(Error::params("voxel size must be positive"));
        }
        let mut cells: BTreeMap<[i64; 3], (Point, usize)> = BTreeMap::new();
        for p in &self.points {
            let key = voxel_key(&self.to_sensor_frame(p), voxel, self.dim);
            let e = cells.entry(key).or_insert((Point::zeros(), 0));
            e.0 += p;
            e.1 += 1;
        }
        let points = cells.into_values().map(|(s, n)| s / n as f64).collect();
        Ok(PointCloud {
            dim: self.dim,
            points,
            origin: self.origin,
            orientation: self.orientation,
            id: self.id.clone(),
        })
    }

    pub(crate) fn set_pose(&mut self, origin: Point, orientation: Matrix3<f64>) {
        self.origin = origin;
        self.orientation = orientation;
    }

    pub(crate) fn points_mut(&mut self) -> &mut Vec<Point> {
        &mut self.points
    }
}

pub(crate) fn to_point(c: &[f64]) -> Point {
    Point::new(c[0], c[1], if c.len() > 2 { c[2] } else { 0.0 })
}

/// Integer voxel coordinate of a point; unused axes stay 0.
pub(crate) fn voxel_key(p: &Point, voxel: f64, dim: usize) -> [i64; 3] {
    let mut key = [0i64; 3];
    for (d, k) in key.iter_mut().enumerate().take(dim) {
        *k = (p[d] / voxel).floor() as i64;
    }
    key
}

/// Squared Euclidean distance. Every radius test in the crate goes through
/// this function so index queries and brute-force scans agree bit-for-bit.
#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}
