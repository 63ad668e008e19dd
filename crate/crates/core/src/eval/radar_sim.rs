//! Polar radar sweeps simulated along a street: building facades with
//! gaps and setbacks plus poles, one range pulse per azimuth at the first
//! hit, and sub-threshold background noise.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::radar::PolarRadarImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSimSpec {
    pub seed: u64,
    pub n_azimuth: usize,
    pub n_range: usize,
    /// Range resolution, meters per bin.
    pub gamma: f64,
    pub n_scans: usize,
    /// Distance driven between sweeps, meters.
    pub step: f64,
    /// Street width between the facade lines, meters.
    pub street_width: f64,
    pub n_poles: usize,
    pub pole_radius: f64,
    /// Peak intensity of a return before jitter.
    pub amplitude: f64,
    /// Pulse width in range bins.
    pub pulse_sigma: f64,
    /// Gaussian range error of each return, meters.
    pub range_jitter: f64,
    /// Background noise is uniform on `[0, noise_max)`.
    pub noise_max: f64,
}

impl Default for RadarSimSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_azimuth: 400,
            n_range: 1000,
            gamma: 0.05,
            n_scans: 40,
            step: 1.5,
            street_width: 16.0,
            n_poles: 40,
            pole_radius: 0.15,
            amplitude: 160.0,
            pulse_sigma: 1.5,
            range_jitter: 0.08,
            noise_max: 55.0,
        }
    }
}

impl RadarSimSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_azimuth > 0
            && self.n_range > 0
            && self.gamma > 0.0
            && self.n_scans > 0
            && self.step >= 0.0
            && self.street_width > 0.0
            && self.pole_radius > 0.0
            && self.amplitude > 0.0
            && self.pulse_sigma > 0.0
            && self.range_jitter >= 0.0
            && self.noise_max >= 0.0;
        if !ok {
            return Err(Error::params("invalid radar simulation spec"));
        }
        Ok(())
    }

    fn street_length(&self) -> f64 {
        self.n_scans as f64 * self.step + 2.0 * self.n_range as f64 * self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Obstacle {
    Segment(Vector2<f64>, Vector2<f64>),
    Pole(Vector2<f64>, f64),
}

impl Obstacle {
    /// Ray parameter of the first hit along `o + t·d`, `t > 0`.
    fn hit(&self, o: &Vector2<f64>, d: &Vector2<f64>) -> Option<f64> {
        match *self {
            Obstacle::Segment(a, b) => {
                let e = b - a;
                let den = d.x * e.y - d.y * e.x;
                if den.abs() < 1e-12 {
                    return None;
                }
                let w = a - o;
                let t = (w.x * e.y - w.y * e.x) / den;
                let s = (w.x * d.y - w.y * d.x) / den;
                (t > 1e-9 && (0.0..=1.0).contains(&s)).then_some(t)
            }
            Obstacle::Pole(c, r) => {
                let w = o - c;
                let b = w.dot(d);
                let disc = b * b - (w.norm_squared() - r * r);
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                (t > 1e-9).then_some(t)
            }
        }
    }
}

/// Simulated sweeps with their ground-truth planar poses.
#[derive(Debug, Clone)]
pub struct RadarSequence {
    pub images: Vec<PolarRadarImage>,
    pub poses: Vec<RigidTransform>,
}

fn build_world(spec: &RadarSimSpec, rng: &mut ChaCha8Rng) -> Vec<Obstacle> {
    let len = spec.street_length();
    let x0 = -(spec.n_range as f64) * spec.gamma;
    let half = spec.street_width / 2.0;
    let mut world = Vec::new();
    for side in [-1.0, 1.0] {
        let mut x = x0;
        let mut prev_y = side * half;
        while x < x0 + len {
            let seg = rng.random_range(4.0..14.0);
            let setback = if rng.random_bool(0.4) { rng.random_range(0.5..3.0) } else { 0.0 };
            let y = side * (half + setback);
            // wall joining the previous facade line
            world.push(Obstacle::Segment(Vector2::new(x, prev_y), Vector2::new(x, y)));
            world.push(Obstacle::Segment(Vector2::new(x, y), Vector2::new(x + seg, y)));
            x += seg;
            prev_y = y;
            if rng.random_bool(0.3) {
                // gap with a side street wall behind it
                let gap = rng.random_range(2.0..6.0);
                let back = side * (half + rng.random_range(4.0..8.0));
                world.push(Obstacle::Segment(Vector2::new(x, y), Vector2::new(x, back)));
                world.push(Obstacle::Segment(Vector2::new(x + gap, back), Vector2::new(x + gap, y)));
                x += gap;
            }
        }
    }
    for _ in 0..spec.n_poles {
        let x = rng.random_range(x0..x0 + len);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let y = side * rng.random_range(half * 0.45..half - 0.5);
        world.push(Obstacle::Pole(Vector2::new(x, y), spec.pole_radius));
    }
    world
}

fn render(spec: &RadarSimSpec, world: &[Obstacle], pose: &RigidTransform, seed: u64) -> Result<PolarRadarImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, spec.range_jitter.max(0.0)).unwrap();
    let (na, nr) = (spec.n_azimuth, spec.n_range);
    let mut data = vec![0.0; na * nr];
    for v in data.iter_mut() {
        *v = if spec.noise_max > 0.0 { rng.random_range(0.0..spec.noise_max) } else { 0.0 };
    }
    let t = pose.translation();
    let o = Vector2::new(t.x, t.y);
    let yaw = pose.yaw();
    let max_range = nr as f64 * spec.gamma;
    for a in 1..=na {
        let theta = yaw + 2.0 * PI * a as f64 / na as f64;
        let d = Vector2::new(theta.cos(), theta.sin());
        let hit = world
            .iter()
            .filter_map(|w| w.hit(&o, &d))
            .min_by(f64::total_cmp);
        let Some(range) = hit else { continue };
        let range = range + jitter.sample(&mut rng);
        if range <= 0.0 || range >= max_range {
            continue;
        }
        // mild falloff with range so far returns stay above the noise floor
        let amp = spec.amplitude * rng.random_range(0.85..1.15) * (1.0 - 0.3 * range / max_range);
        let center = range / spec.gamma;
        let row = &mut data[(a - 1) * nr..a * nr];
        let span = (4.0 * spec.pulse_sigma).ceil() as i64;
        let c = center.round() as i64;
        for b in (c - span).max(1)..=(c + span).min(nr as i64) {
            let x = (b as f64 - center) / spec.pulse_sigma;
            let v = amp * (-0.5 * x * x).exp();
            let cell = &mut row[b as usize - 1];
            *cell = cell.max(v);
        }
    }
    PolarRadarImage::new(data, na, nr, spec.gamma)
}

/// Simulates `n_scans` sweeps driving down the street.
pub fn simulate_radar(spec: &RadarSimSpec) -> Result<RadarSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let world = build_world(spec, &mut rng);
    let poses: Vec<RigidTransform> = (0..spec.n_scans)
        .map(|i| {
            let x = i as f64 * spec.step;
            let wobble = 0.8 * (x / 25.0).sin();
            let heading = (0.8 / 25.0 * (x / 25.0).cos()).atan();
            RigidTransform::planar(x, wobble, heading)
        })
        .collect();
    let images = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut img = render(spec, &world, pose, spec.seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(i as u64 + 1))?;
            img.id = format!("sweep_{i:04}");
            img.timestamp = Some(i as f64 * 0.25);
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadarSequence { images, poses })
}

/// Image with isolated Gaussian pulses on sub-threshold uniform noise.
/// Returns the image and the 1-based `(azimuth, range)` bin of every apex.
pub fn synthetic_pulse_image(
    n_azimuth: usize,
    n_range: usize,
    pulses_per_row: usize,
    noise_max: f64,
    seed: u64,
) -> Result<(PolarRadarImage, Vec<(usize, usize)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..n_azimuth * n_range).map(|_| rng.random_range(0.0..noise_max.max(1e-9))).collect();
    let mut apexes = Vec::new();
    let sigma = 1.5;
    let spacing = n_range / pulses_per_row.max(1);
    for a in 1..=n_azimuth {
        let row = &mut data[(a - 1) * n_range..a * n_range];
        for k in 0..pulses_per_row {
            // one pulse per slot, kept clear of the slot edges
            let lo = k * spacing + 12;
            let hi = (k + 1) * spacing - 12;
            if hi <= lo {
                continue;
            }
            let apex = rng.random_range(lo..hi);
            let amp = rng.random_range(120.0..250.0);
            for b in apex.saturating_sub(8).max(1)..=(apex + 8).min(n_range) {
                let x = (b as f64 - apex as f64) / sigma;
                let v = amp * (-0.5 * x * x).exp();
                row[b - 1] = row[b - 1].max(v);
            }
            apexes.push((a, apex));
        }
    }
    Ok((PolarRadarImage::new(data, n_azimuth, n_range, 0.05)?, apexes))
}
