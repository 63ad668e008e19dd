//! Alignment-quality assessment for 2D/3D point-cloud pairs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod classifier;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod radar;

pub use baselines::{metric_features, Metric, MetricParams};
pub use classifier::{predict, train, ClassifierModel, LabeledPair};
pub use entropy::{coral_features, coral_quality, CoralParams, QualityResult};
pub use error::{Error, ErrorKind, Result};
pub use features::QualityFeatureVector;
pub use geometry::{PointCloud, RigidTransform};
