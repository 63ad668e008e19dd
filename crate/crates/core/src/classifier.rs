//! Self-supervised logistic-regression alignment classifier.
//!
//! Training samples come from ground-truth aligned pairs: each pair gives
//! one aligned sample and one or more samples with a known injected pose
//! error. The model is `p = 1/(1+e^{-z})`, `z = β₀ + Σ βⱼ·x̂ⱼ` on z-scored
//! features, and a pair is called aligned when `p ≥ t_h`.

use std::f64::consts::PI;

use log::warn;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{metric_features, Metric, MetricParams};
use crate::error::{Error, Result};
use crate::features::QualityFeatureVector;
use crate::geometry::{apply_transform, perturb, symmetric_offsets, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Aligned,
    Misaligned,
}

impl Label {
    fn target(self) -> f64 {
        match self {
            Label::Aligned => 1.0,
            Label::Misaligned => 0.0,
        }
    }
}

/// Pose error injected into a sample, in the sensor frame of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct InducedOffset {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dtheta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub features: QualityFeatureVector,
    pub label: Label,
    pub weight: f64,
    pub pair_id: String,
    pub offset: InducedOffset,
}

impl LabeledPair {
    pub fn new(features: QualityFeatureVector, label: Label) -> Self {
        Self {
            features,
            label,
            weight: 1.0,
            pair_id: String::new(),
            offset: InducedOffset::default(),
        }
    }
}

/// Ground-truth aligned pair: `a` in the common frame, `b` in its own sensor
/// frame and `t_gt` placing `b` into the common frame.
#[derive(Debug, Clone)]
pub struct AlignedPair {
    pub id: String,
    pub a: PointCloud,
    pub b: PointCloud,
    pub t_gt: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// One misaligned sample per pair: random planar direction plus a yaw error.
    Lidar,
    /// Four misaligned samples per pair: ±e_d along and across the heading.
    Radar,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lidar" => Ok(Protocol::Lidar),
            "radar" => Ok(Protocol::Radar),
            _ => Err(Error::params(format!("unknown protocol `{s}`"))),
        }
    }
}

/// Magnitude of the injected errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    /// Translation error, meters.
    pub e_d: f64,
    /// Yaw error, radians.
    #[serde(default)]
    pub e_theta: f64,
}

impl ErrorSpec {
    pub fn lidar() -> Self {
        Self {
            e_d: 0.1,
            e_theta: 0.57_f64.to_radians(),
        }
    }

    pub fn radar(e_d: f64) -> Self {
        Self { e_d, e_theta: 0.0 }
    }

    pub fn validate(&self, protocol: Protocol) -> Result<()> {
        if !(self.e_d >= 0.0 && self.e_d.is_finite() && self.e_theta.is_finite()) {
            return Err(Error::params("error magnitudes must be finite and e_d >= 0"));
        }
        let zero = match protocol {
            Protocol::Lidar => self.e_d == 0.0 && self.e_theta == 0.0,
            Protocol::Radar => self.e_d == 0.0,
        };
        if zero {
            return Err(Error::ZeroErrorMisalignment);
        }
        Ok(())
    }
}

/// A sample whose metric evaluation failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub pair_id: String,
    pub label: Label,
    pub offset: InducedOffset,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub samples: Vec<LabeledPair>,
    pub skipped: Vec<SkippedSample>,
}

/// Sets weights inversely proportional to class frequency so both classes
/// carry equal total weight (and the weights average to 1).
pub fn balance_weights(samples: &mut [LabeledPair]) {
    let n = samples.len() as f64;
    let n_pos = samples.iter().filter(|s| s.label == Label::Aligned).count() as f64;
    let n_neg = n - n_pos;
    for s in samples {
        let c = if s.label == Label::Aligned { n_pos } else { n_neg };
        s.weight = n / (2.0 * c);
    }
}

/// The perturbations each pair receives under `protocol`.
pub fn protocol_offsets(protocol: Protocol, spec: &ErrorSpec, n_pairs: usize, seed: u64) -> Vec<Vec<InducedOffset>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|_| match protocol {
            Protocol::Lidar => {
                let phi = rng.random_range(0.0..2.0 * PI);
                vec![InducedOffset {
                    dx: spec.e_d * phi.cos(),
                    dy: spec.e_d * phi.sin(),
                    dz: 0.0,
                    dtheta: spec.e_theta,
                }]
            }
            Protocol::Radar => symmetric_offsets()
                .iter()
                .map(|d| InducedOffset {
                    dx: spec.e_d * d.x,
                    dy: spec.e_d * d.y,
                    dz: 0.0,
                    dtheta: spec.e_theta,
                })
                .collect(),
        })
        .collect()
}

fn place_b(pair: &AlignedPair, off: &InducedOffset) -> Result<PointCloud> {
    let t = if *off == InducedOffset::default() {
        pair.t_gt
    } else {
        let v = Vector3::new(off.dx, off.dy, off.dz);
        let e_d = v.norm();
        let dir = if e_d > 0.0 { v / e_d } else { Vector3::x() };
        perturb(&pair.t_gt, e_d, &dir, off.dtheta, None)?
    };
    apply_transform(&pair.b, &t)
}

/// Features of one pair with `b` placed at `t_gt` perturbed by `off`.
pub fn pair_features(pair: &AlignedPair, off: &InducedOffset, metric: Metric, params: &MetricParams) -> Result<QualityFeatureVector> {
    metric_features(metric, &pair.a, &place_b(pair, off)?, params)
}

/// Builds a labeled, class-balanced training set from aligned pairs.
///
/// Samples whose metric fails are logged and returned in `skipped`.
pub fn generate_training_set(
    pairs: &[AlignedPair],
    protocol: Protocol,
    spec: &ErrorSpec,
    metric: Metric,
    params: &MetricParams,
    seed: u64,
) -> Result<TrainingSet> {
    spec.validate(protocol)?;
    let offsets = protocol_offsets(protocol, spec, pairs.len(), seed);
    let jobs: Vec<(usize, Label, InducedOffset)> = offsets
        .iter()
        .enumerate()
        .flat_map(|(i, offs)| {
            std::iter::once((i, Label::Aligned, InducedOffset::default()))
                .chain(offs.iter().map(move |o| (i, Label::Misaligned, *o)))
        })
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(i, label, off)| (i, label, off, pair_features(&pairs[i], &off, metric, params)))
        .collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, label, offset, res) in results {
        let pair_id = pairs[i].id.clone();
        match res {
            Ok(features) => samples.push(LabeledPair {
                features,
                label,
                weight: 1.0,
                pair_id,
                offset,
            }),
            Err(e) => {
                warn!("skipping {label:?} sample of pair {pair_id}: {e}");
                skipped.push(SkippedSample {
                    pair_id,
                    label,
                    offset,
                    reason: e.to_string(),
                });
            }
        }
    }
    balance_weights(&mut samples);
    Ok(TrainingSet { samples, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub lr: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// L2 penalty on the non-intercept betas; 0 disables it.
    pub l2: f64,
    pub t_h: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lr: 0.1,
            max_iters: 5000,
            tol: 1e-8,
            l2: 0.0,
            t_h: 0.5,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.tol >= 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::params("lr must be positive, tol and l2 non-negative"));
        }
        if !(self.t_h > 0.0 && self.t_h < 1.0) {
            return Err(Error::params(format!("t_h must lie in (0, 1), got {}", self.t_h)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub final_lr: f64,
    pub n_samples: usize,
    pub params: TrainParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub metric_name: String,
    pub arity: usize,
    /// `β₀` followed by one coefficient per feature.
    pub betas: Vec<f64>,
    pub t_h: f64,
    pub norm_means: Vec<f64>,
    pub norm_scales: Vec<f64>,
    pub train_meta: Option<TrainMeta>,
    /// Metric parameters the features were computed with, so a model can
    /// score new pairs the same way.
    #[serde(default)]
    pub metric_params: Option<MetricParams>,
}

impl ClassifierModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (1..=3).contains(&self.arity)
            && self.betas.len() == self.arity + 1
            && self.norm_means.len() == self.arity
            && self.norm_scales.len() == self.arity
            && self.betas.iter().chain(&self.norm_means).all(|v| v.is_finite())
            && self.norm_scales.iter().all(|s| *s > 0.0 && s.is_finite())
            && self.t_h > 0.0
            && self.t_h < 1.0;
        if !ok {
            return Err(Error::params("malformed classifier model"));
        }
        Ok(())
    }

    /// Linear predictor `z` for raw features.
    pub fn logit(&self, features: &QualityFeatureVector) -> Result<f64> {
        if features.arity != self.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                got: features.arity,
            });
        }
        let x = features.values();
        Ok(self.betas[0]
            + (0..self.arity)
                .map(|j| self.betas[j + 1] * (x[j] - self.norm_means[j]) / self.norm_scales[j])
                .sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p: f64,
    pub label: Label,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn predict(model: &ClassifierModel, features: &QualityFeatureVector) -> Result<Prediction> {
    let p = sigmoid(model.logit(features)?);
    let label = if p >= model.t_h { Label::Aligned } else { Label::Misaligned };
    Ok(Prediction { p, label })
}

/// Z-scored design rows, targets and weights.
#[derive(Debug, Clone)]
pub struct Design {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Weighted per-feature mean and standard deviation; zero spread maps to 1.
pub fn weighted_normalization(data: &[LabeledPair]) -> (Vec<f64>, Vec<f64>) {
    let arity = data[0].features.arity;
    let wsum: f64 = data.iter().map(|s| s.weight).sum();
    let mut means = vec![0.0; arity];
    let mut scales = vec![0.0; arity];
    for j in 0..arity {
        let m = data.iter().map(|s| s.weight * s.features.values()[j]).sum::<f64>() / wsum;
        let var = data
            .iter()
            .map(|s| s.weight * (s.features.values()[j] - m).powi(2))
            .sum::<f64>()
            / wsum;
        means[j] = m;
        scales[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    (means, scales)
}

pub fn design(data: &[LabeledPair], means: &[f64], scales: &[f64]) -> Design {
    Design {
        rows: data
            .iter()
            .map(|s| {
                s.features
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(j, x)| (x - means[j]) / scales[j])
                    .collect()
            })
            .collect(),
        targets: data.iter().map(|s| s.label.target()).collect(),
        weights: data.iter().map(|s| s.weight).collect(),
    }
}

/// Weighted mean negative log-likelihood (plus `½·l2·Σβⱼ²` over the
/// non-intercept betas) and its gradient.
pub fn loss_and_gradient(betas: &[f64], d: &Design, l2: f64) -> (f64, Vec<f64>) {
    let wsum: f64 = d.weights.iter().sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; betas.len()];
    for ((x, &y), &w) in d.rows.iter().zip(&d.targets).zip(&d.weights) {
        let z = betas[0] + x.iter().zip(&betas[1..]).map(|(a, b)| a * b).sum::<f64>();
        loss += w * (softplus(z) - y * z);
        let r = w * (sigmoid(z) - y);
        grad[0] += r;
        for (g, xj) in grad[1..].iter_mut().zip(x) {
            *g += r * xj;
        }
    }
    loss /= wsum;
    for g in &mut grad {
        *g /= wsum;
    }
    for j in 1..betas.len() {
        loss += 0.5 * l2 * betas[j] * betas[j];
        grad[j] += l2 * betas[j];
    }
    (loss, grad)
}

fn check_training_data(data: &[LabeledPair]) -> Result<usize> {
    let Some(first) = data.first() else {
        return Err(Error::SingleClass);
    };
    let arity = first.features.arity;
    for s in data {
        s.features.validate()?;
        if s.features.arity != arity {
            return Err(Error::ArityMismatch {
                expected: arity,
                got: s.features.arity,
            });
        }
        if !(s.weight > 0.0 && s.weight.is_finite()) {
            return Err(Error::data("sample weights must be positive"));
        }
    }
    let has = |l| data.iter().any(|s| s.label == l);
    if !has(Label::Aligned) || !has(Label::Misaligned) {
        return Err(Error::SingleClass);
    }
    Ok(arity)
}

/// Full-batch gradient descent on the weighted NLL of z-scored features.
///
/// A step that raises the loss is rejected and the learning rate halved.
pub fn train(data: &[LabeledPair], metric_name: &str, hyper: &TrainParams) -> Result<ClassifierModel> {
    hyper.validate()?;
    let arity = check_training_data(data)?;
    let (norm_means, norm_scales) = weighted_normalization(data);
    let d = design(data, &norm_means, &norm_scales);
    let mut betas = vec![0.0; arity + 1];
    let (mut loss, mut grad) = loss_and_gradient(&betas, &d, hyper.l2);
    let mut lr = hyper.lr;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < hyper.max_iters {
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        if grad.iter().all(|g| g.abs() < hyper.tol) {
            converged = true;
            break;
        }
        iterations += 1;
        let trial: Vec<f64> = betas.iter().zip(&grad).map(|(b, g)| b - lr * g).collect();
        let (l, g) = loss_and_gradient(&trial, &d, hyper.l2);
        if l <= loss {
            betas = trial;
            loss = l;
            grad = g;
        } else {
            lr *= 0.5;
            if lr < f64::EPSILON * hyper.lr {
                break;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let model = ClassifierModel {
        metric_name: metric_name.to_string(),
        arity,
        betas,
        t_h: hyper.t_h,
        norm_means,
        norm_scales,
        train_meta: Some(TrainMeta {
            iterations,
            converged,
            final_loss: loss,
            final_lr: lr,
            n_samples: data.len(),
            params: *hyper,
        }),
        metric_params: None,
    };
    if model.betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    Ok(model)
}

/// Weighted accuracy of `model` on `data`.
pub fn weighted_accuracy(model: &ClassifierModel, data: &[LabeledPair]) -> Result<f64> {
    let mut hit = 0.0;
    let mut total = 0.0;
    for s in data {
        if predict(model, &s.features)?.label == s.label {
            hit += s.weight;
        }
        total += s.weight;
    }
    Ok(hit / total)
}
