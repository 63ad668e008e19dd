//! Point clouds, rigid transforms and the radius-query index shared by
//! every quality measure.

mod cloud;
mod index;
pub mod io;
mod transform;

pub use cloud::{dist2, Point, PointCloud};
pub(crate) use cloud::voxel_key;
pub use index::{build_index, NeighborhoodIndex};
pub use transform::{apply_transform, perturb, symmetric_offsets, RigidTransform};
