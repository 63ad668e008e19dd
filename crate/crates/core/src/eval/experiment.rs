//! Experiment orchestration: labeled sets, k-fold or train/test evaluation,
//! error-magnitude and scan-spacing sweeps, and timing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::dataset::{load_source, radar_cloud, sequence_pairs, DataSource, RadarFrontEnd, Sequence};
use super::metrics::{auc_trapezoid, mean_std, roc_curve, weighted_accuracy, Confusion, RocPoint};
use crate::baselines::{metric_features, Metric, MetricParams};
use crate::classifier::{
    balance_weights, generate_training_set, predict, train, AlignedPair, ErrorSpec, Label, LabeledPair, Protocol,
    SkippedSample, TrainParams,
};
use crate::error::{Error, Result};
use crate::geometry::apply_transform;
use crate::radar::RadarFilterParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Contiguous folds over the pair sequence.
    Kfold(usize),
    /// Train on `data`, test on `test_data`.
    TrainTest,
}

/// Timing options. Timings vary run to run, so they are off by default to
/// keep reports reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub threads: usize,
    pub max_pairs: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            threads: 1,
            max_pairs: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub protocol: Protocol,
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub params: MetricParams,
    #[serde(default)]
    pub radar_filter: RadarFilterParams,
    #[serde(default = "RadarFilterParams::surface_points")]
    pub radar_dense_filter: RadarFilterParams,
    /// Error magnitudes; `e_d_sweep` overrides `error.e_d` when set.
    pub error: ErrorSpec,
    #[serde(default)]
    pub e_d_sweep: Option<Vec<f64>>,
    #[serde(default = "default_spacings")]
    pub spacings: Vec<f64>,
    pub split: Split,
    pub data: DataSource,
    #[serde(default)]
    pub test_data: Option<DataSource>,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub timing: Option<TimingConfig>,
}

fn default_spacings() -> Vec<f64> {
    vec![0.0]
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::params("no metrics listed"));
        }
        if let Split::Kfold(k) = self.split {
            if k < 2 {
                return Err(Error::params("k-fold needs k >= 2"));
            }
        }
        if self.split == Split::TrainTest && self.test_data.is_none() {
            return Err(Error::params("train-test split needs test_data"));
        }
        self.train.validate()?;
        self.radar_filter.validate()?;
        self.radar_dense_filter.validate()?;
        for e in self.e_d_values() {
            ErrorSpec { e_d: e, ..self.error }.validate(self.protocol)?;
        }
        Ok(())
    }

    pub fn e_d_values(&self) -> Vec<f64> {
        self.e_d_sweep.clone().unwrap_or_else(|| vec![self.error.e_d])
    }

    fn front_end(&self) -> RadarFrontEnd {
        RadarFrontEnd {
            peaks: self.radar_filter,
            dense: self.radar_dense_filter,
        }
    }
}

/// Error tier names for the standard sweep magnitudes.
pub fn error_tier(e_d: f64) -> Option<&'static str> {
    const TIERS: [(f64, &str); 3] = [(0.3, "small"), (0.5, "medium"), (0.7, "large")];
    TIERS.iter().find(|(v, _)| (v - e_d).abs() < 1e-9).map(|t| t.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub metric: Metric,
    /// Class-weighted accuracy, mean over folds.
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub auc: f64,
    pub auc_std: f64,
    pub fold_accuracies: Vec<f64>,
    pub fold_aucs: Vec<f64>,
    /// ROC of the pooled held-out probabilities.
    pub roc: Vec<RocPoint>,
    /// Pooled held-out counts at the model threshold.
    pub confusion: Confusion,
    pub n_samples: usize,
    pub skipped: Vec<SkippedSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub e_d: f64,
    pub e_theta: f64,
    pub tier: Option<String>,
    pub spacing: f64,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub metric: Metric,
    pub stage: String,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub threads: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub split: Split,
    pub entries: Vec<SweepEntry>,
    pub timing: Vec<TimingRow>,
}

struct Held {
    p: Vec<f64>,
    positive: Vec<bool>,
    predicted: Vec<bool>,
}

fn test_on(model: &crate::classifier::ClassifierModel, test: &[LabeledPair]) -> Result<Held> {
    let mut h = Held {
        p: Vec::new(),
        positive: Vec::new(),
        predicted: Vec::new(),
    };
    for s in test {
        let pr = predict(model, &s.features)?;
        h.p.push(pr.p);
        h.positive.push(s.label == Label::Aligned);
        h.predicted.push(pr.label == Label::Aligned);
    }
    Ok(h)
}

fn class_counts(s: &[LabeledPair]) -> (usize, usize) {
    let pos = s.iter().filter(|x| x.label == Label::Aligned).count();
    (pos, s.len() - pos)
}

fn ensure_classes(s: &[LabeledPair], what: &str) -> Result<()> {
    let (p, n) = class_counts(s);
    if p < 2 || n < 2 {
        return Err(Error::InsufficientPairs(format!("{what} has {p} aligned and {n} misaligned samples")));
    }
    Ok(())
}

/// Balanced accuracy and AUC of a model on a held-out set.
fn score_fold(h: &Held, test: &[LabeledPair]) -> (f64, f64) {
    let mut t = test.to_vec();
    balance_weights(&mut t);
    let w: Vec<f64> = t.iter().map(|s| s.weight).collect();
    let acc = weighted_accuracy(&h.predicted, &h.positive, &w);
    let auc = auc_trapezoid(&roc_curve(&h.p, &h.positive));
    (acc, auc)
}

fn assemble(metric: Metric, t_h: f64, folds: Vec<(f64, f64)>, pooled: Held, n_samples: usize, skipped: Vec<SkippedSample>) -> MethodReport {
    let accs: Vec<f64> = folds.iter().map(|f| f.0).collect();
    let aucs: Vec<f64> = folds.iter().map(|f| f.1).collect();
    let (accuracy, accuracy_std) = mean_std(&accs);
    let (auc, auc_std) = mean_std(&aucs);
    let mut roc = roc_curve(&pooled.p, &pooled.positive);
    roc[0].threshold = f64::MAX;
    MethodReport {
        metric,
        accuracy,
        accuracy_std,
        auc,
        auc_std,
        fold_accuracies: accs,
        fold_aucs: aucs,
        roc,
        confusion: Confusion::at(&pooled.p, &pooled.positive, t_h),
        n_samples,
        skipped,
    }
}

/// K-fold evaluation with folds contiguous in pair order, so all samples of
/// one pair land in the same fold.
pub fn evaluate_kfold(
    metric: Metric,
    pairs: &[AlignedPair],
    samples: &[LabeledPair],
    skipped: Vec<SkippedSample>,
    k: usize,
    hyper: &TrainParams,
) -> Result<MethodReport> {
    if pairs.len() < k {
        return Err(Error::InsufficientPairs(format!("{} pairs for {k} folds", pairs.len())));
    }
    let index: HashMap<&str, usize> = pairs.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let fold_of = |s: &LabeledPair| index[s.pair_id.as_str()] * k / pairs.len();
    let mut folds = Vec::new();
    let mut pooled = Held {
        p: Vec::new(),
        positive: Vec::new(),
        predicted: Vec::new(),
    };
    for f in 0..k {
        let (test, mut tr): (Vec<LabeledPair>, Vec<LabeledPair>) = samples.iter().cloned().partition(|s| fold_of(s) == f);
        ensure_classes(&test, &format!("fold {f}"))?;
        ensure_classes(&tr, &format!("training set of fold {f}"))?;
        balance_weights(&mut tr);
        let model = train(&tr, metric.name(), hyper)?;
        let held = test_on(&model, &test)?;
        folds.push(score_fold(&held, &test));
        pooled.p.extend(&held.p);
        pooled.positive.extend(&held.positive);
        pooled.predicted.extend(&held.predicted);
    }
    Ok(assemble(metric, hyper.t_h, folds, pooled, samples.len(), skipped))
}

/// Train on one labeled set, test on another.
pub fn evaluate_train_test(
    metric: Metric,
    train_set: &[LabeledPair],
    test_set: &[LabeledPair],
    skipped: Vec<SkippedSample>,
    hyper: &TrainParams,
) -> Result<MethodReport> {
    ensure_classes(train_set, "training set")?;
    ensure_classes(test_set, "test set")?;
    let mut tr = train_set.to_vec();
    balance_weights(&mut tr);
    let model = train(&tr, metric.name(), hyper)?;
    let held = test_on(&model, test_set)?;
    let fold = score_fold(&held, test_set);
    Ok(assemble(metric, hyper.t_h, vec![fold], held, train_set.len() + test_set.len(), skipped))
}

/// Mean/σ wall time in milliseconds of `f` over `items`, run on a pool of
/// `threads` workers.
fn time_stage<T, F>(items: &[T], threads: usize, f: F) -> Result<(f64, f64)>
where
    T: Sync,
    F: Fn(&T) -> Result<()> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::params(e.to_string()))?;
    let ms = pool.install(|| {
        items
            .iter()
            .map(|it| {
                let t0 = Instant::now();
                f(it)?;
                Ok(t0.elapsed().as_secs_f64() * 1e3)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(mean_std(&ms))
}

/// Timing of front-end feature extraction (radar only) and of the quality
/// measure for aligned pairs.
pub fn timing_bench(
    metric: Metric,
    seqs: &[Sequence],
    pairs: &[AlignedPair],
    params: &MetricParams,
    fe: &RadarFrontEnd,
    cfg: &TimingConfig,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    let images: Vec<_> = seqs
        .iter()
        .filter_map(|s| match s {
            Sequence::Radar { images, .. } => Some(images.iter()),
            _ => None,
        })
        .flatten()
        .take(cfg.max_pairs)
        .collect();
    if !images.is_empty() {
        let dense = metric.uses_dense_radar_points();
        let (m, s) = time_stage(&images, cfg.threads, |im| {
            radar_cloud(im, dense, fe);
            Ok(())
        })?;
        rows.push(TimingRow {
            metric,
            stage: "feature_extraction".into(),
            mean_ms: m,
            std_ms: s,
            threads: cfg.threads,
            n: images.len(),
        });
    }
    let subset = &pairs[..pairs.len().min(cfg.max_pairs)];
    let placed: Vec<_> = subset
        .iter()
        .map(|p| Ok((p.a.clone(), apply_transform(&p.b, &p.t_gt)?)))
        .collect::<Result<_>>()?;
    let (m, s) = time_stage(&placed, cfg.threads, |(a, b)| metric_features(metric, a, b, params).map(|_| ()))?;
    rows.push(TimingRow {
        metric,
        stage: "quality_measure".into(),
        mean_ms: m,
        std_ms: s,
        threads: cfg.threads,
        n: placed.len(),
    });
    Ok(rows)
}

/// Runs every (spacing, e_d, metric) combination of the config. Relative
/// data paths resolve against `base`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let fe = cfg.front_end();
    let seqs = load_source(&cfg.data, base)?;
    let test_seqs = match &cfg.test_data {
        Some(src) => Some(load_source(src, base)?),
        None => None,
    };
    let mut entries = Vec::new();
    let mut timing = Vec::new();
    for &spacing in &cfg.spacings {
        let mut per_metric_pairs: HashMap<bool, (Vec<AlignedPair>, Option<Vec<AlignedPair>>)> = HashMap::new();
        for dense in [false, true] {
            if !cfg.metrics.iter().any(|m| m.uses_dense_radar_points() == dense) {
                continue;
            }
            let pairs = sequence_pairs(&seqs, spacing, dense, &fe)?;
            let test = match &test_seqs {
                Some(t) => Some(sequence_pairs(t, spacing, dense, &fe)?),
                None => None,
            };
            per_metric_pairs.insert(dense, (pairs, test));
        }
        for e_d in cfg.e_d_values() {
            let spec = ErrorSpec { e_d, ..cfg.error };
            let mut methods = Vec::new();
            for &metric in &cfg.metrics {
                let (pairs, test_pairs) = &per_metric_pairs[&metric.uses_dense_radar_points()];
                info!("{metric}: e_d={e_d} spacing={spacing} on {} pairs", pairs.len());
                let set = generate_training_set(pairs, cfg.protocol, &spec, metric, &cfg.params, cfg.seed)?;
                let report = match cfg.split {
                    Split::Kfold(k) => evaluate_kfold(metric, pairs, &set.samples, set.skipped, k, &cfg.train)?,
                    Split::TrainTest => {
                        let test_pairs = test_pairs.as_ref().expect("validated");
                        let test = generate_training_set(test_pairs, cfg.protocol, &spec, metric, &cfg.params, cfg.seed ^ 1)?;
                        let mut skipped = set.skipped;
                        skipped.extend(test.skipped);
                        evaluate_train_test(metric, &set.samples, &test.samples, skipped, &cfg.train)?
                    }
                };
                methods.push(report);
            }
            entries.push(SweepEntry {
                e_d,
                e_theta: spec.e_theta,
                tier: error_tier(e_d).map(str::to_string),
                spacing,
                methods,
            });
        }
        if let Some(t) = &cfg.timing {
            for &metric in &cfg.metrics {
                let (pairs, _) = &per_metric_pairs[&metric.uses_dense_radar_points()];
                timing.extend(timing_bench(metric, &seqs, pairs, &cfg.params, &fe, t)?);
            }
        }
    }
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        protocol: cfg.protocol,
        split: cfg.split,
        entries,
        timing,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per (entry, metric).
    pub fn accuracy_csv(&self) -> String {
        let mut s = String::from("metric,e_d,tier,spacing,accuracy,accuracy_std,auc,auc_std,n_samples,n_skipped\n");
        for e in &self.entries {
            for m in &e.methods {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    m.metric,
                    e.e_d,
                    e.tier.as_deref().unwrap_or(""),
                    e.spacing,
                    m.accuracy,
                    m.accuracy_std,
                    m.auc,
                    m.auc_std,
                    m.n_samples,
                    m.skipped.len()
                )
                .unwrap();
            }
        }
        s
    }

    /// Every ROC point of every (entry, metric).
    pub fn roc_csv(&self) -> String {
        let mut s = String::from("metric,e_d,spacing,threshold,fpr,tpr\n");
        for e in &self.entries {
            for m in &e.methods {
                for p in &m.roc {
                    writeln!(s, "{},{},{},{},{},{}", m.metric, e.e_d, e.spacing, p.threshold, p.fpr, p.tpr).unwrap();
                }
            }
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("metric,stage,mean_ms,std_ms,threads,n\n");
        for t in &self.timing {
            writeln!(s, "{},{},{},{},{},{}", t.metric, t.stage, t.mean_ms, t.std_ms, t.threads, t.n).unwrap();
        }
        s
    }
}
