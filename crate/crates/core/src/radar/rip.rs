use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::PolarRadarImage;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarFilterParams {
    /// Maximum masked bins per azimuth.
    pub k: usize,
    /// Expected noise level; bins and region strengths must exceed it.
    pub z_min: f64,
    /// Half-width of the region-strength window, in bins.
    pub w: usize,
    /// Features closer than this (meters) are dropped.
    pub min_range: f64,
}

impl Default for RadarFilterParams {
    fn default() -> Self {
        Self {
            k: 12,
            z_min: 70.0,
            w: 2,
            min_range: 2.5,
        }
    }
}

impl RadarFilterParams {
    /// Setting used for the oriented-surface-point baselines (`z_min = 60`).
    pub fn surface_points() -> Self {
        Self {
            z_min: 60.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::params("k must be >= 1"));
        }
        if !(self.z_min > 0.0) || !(self.min_range > 0.0) {
            return Err(Error::params("z_min and min_range must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipFeature {
    /// 1-based range bin.
    pub range_bin: usize,
    /// 1-based azimuth bin.
    pub azimuth_bin: usize,
    /// Windowed mean intensity at the peak.
    pub strength: f64,
}

/// Peaks ordered by azimuth, then range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RipFeatureSet {
    pub features: Vec<RipFeature>,
}

impl RipFeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Up to `k` strongest bins above `z_min`, ties broken toward lower range.
/// Returns 1-based bin numbers in ascending order.
pub fn k_strongest(row: &[f64], k: usize, z_min: f64) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..row.len()).filter(|&i| row[i] > z_min).collect();
    let by_strength = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, by_strength);
        cand.truncate(k);
    }
    let mut bins: Vec<usize> = cand.into_iter().map(|i| i + 1).collect();
    bins.sort_unstable();
    bins
}

/// Mean intensity over bins `r-w ..= r+w`, clamped to the row; `r` is 1-based.
pub fn region_strength(row: &[f64], r: usize, w: usize) -> Result<f64> {
    if r == 0 || r > row.len() {
        return Err(Error::data(format!("range bin {r} outside 1..={}", row.len())));
    }
    Ok(window_mean(row, r - 1, w))
}

fn window_mean(row: &[f64], i: usize, w: usize) -> f64 {
    let lo = i.saturating_sub(w);
    let hi = (i + w).min(row.len() - 1);
    row[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
}

fn row_features(row: &[f64], azimuth_bin: usize, params: &RadarFilterParams) -> Vec<RipFeature> {
    let w = params.w;
    let n = row.len();
    let mut out = Vec::new();
    for r in k_strongest(row, params.k, params.z_min) {
        let i = r - 1;
        let s = window_mean(row, i, w);
        if !(s > params.z_min) {
            continue;
        }
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        let mut keep = true;
        for j in lo..=hi {
            if j == i {
                continue;
            }
            let sj = window_mean(row, j, w);
            // a tie on the left means the plateau was already claimed
            if sj > s || (j < i && sj == s) {
                keep = false;
                break;
            }
        }
        if keep {
            out.push(RipFeature {
                range_bin: r,
                azimuth_bin,
                strength: s,
            });
        }
    }
    out
}

/// Masks each azimuth with k-strongest, then keeps masked bins whose
/// region strength is a local maximum above `z_min`.
pub fn extract_rip(image: &PolarRadarImage, params: &RadarFilterParams) -> RipFeatureSet {
    let features = (0..image.n_azimuth())
        .into_par_iter()
        .flat_map_iter(|a| row_features(image.row(a), a + 1, params))
        .collect();
    RipFeatureSet { features }
}

fn polar_point(range_bin: usize, azimuth_bin: usize, gamma: f64, n_azimuth: usize) -> Point {
    let range = range_bin as f64 * gamma;
    let theta = TAU * azimuth_bin as f64 / n_azimuth as f64;
    Point::new(range * theta.cos(), range * theta.sin(), 0.0)
}

/// Cartesian sensor-frame cloud of the features, dropping those closer than `min_range`.
pub fn to_cartesian(features: &RipFeatureSet, gamma: f64, n_azimuth: usize, min_range: f64) -> PointCloud {
    let points = features
        .features
        .iter()
        .filter(|f| f.range_bin as f64 * gamma >= min_range)
        .map(|f| polar_point(f.range_bin, f.azimuth_bin, gamma, n_azimuth))
        .collect();
    PointCloud::new(2, points, Point::zeros()).expect("polar points are finite")
}

/// Every k-strongest bin as a Cartesian point (the dense mask used by the
/// surface-point baselines).
pub fn k_strongest_cloud(image: &PolarRadarImage, k: usize, z_min: f64, min_range: f64) -> PointCloud {
    let gamma = image.gamma();
    let n_az = image.n_azimuth();
    let points: Vec<Point> = (0..n_az)
        .into_par_iter()
        .flat_map_iter(|a| {
            k_strongest(image.row(a), k, z_min)
                .into_iter()
                .filter(|&r| r as f64 * gamma >= min_range)
                .map(move |r| polar_point(r, a + 1, gamma, n_az))
        })
        .collect();
    PointCloud::new(2, points, Point::zeros()).expect("polar points are finite")
}
