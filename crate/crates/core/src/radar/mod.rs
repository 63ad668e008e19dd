//! Spinning FMCW radar front end: k-strongest masking and radar intensity
//! peak (RIP) extraction on polar sweeps, then conversion to Cartesian
//! point clouds.
//!
//! Bin numbers follow the polar model: azimuth bins run `1..=N_a` with
//! angle `θ = 2π·a/N_a`, range bins run `1..=N_r` at range `r·γ`.

mod image;
mod rip;

pub use image::{read_polar_image, write_polar_png, PolarRadarImage, RadarImageMeta};
pub use rip::{
    extract_rip, k_strongest, k_strongest_cloud, region_strength, to_cartesian, RadarFilterParams, RipFeature,
    RipFeatureSet,
};
