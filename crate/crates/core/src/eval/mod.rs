//! Synthetic data, dataset loaders, evaluation metrics and experiment runs.

pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod radar_sim;
pub mod scene;

pub use dataset::{load_cloud_file, load_source, read_manifest, sequence_pairs, DataSource, RadarFrontEnd, Sequence};
pub use experiment::{
    error_tier, evaluate_kfold, evaluate_train_test, run_experiment, timing_bench, ExperimentConfig, ExperimentReport,
    MethodReport, Split, SweepEntry, TimingConfig, TimingRow,
};
pub use metrics::{auc_rank, auc_trapezoid, roc_curve, Confusion, RocPoint};
pub use radar_sim::{simulate_radar, synthetic_pulse_image, RadarSequence, RadarSimSpec};
pub use scene::{make_pairs, spacing_pairs, synth_scene, SceneKind, SyntheticScene, SyntheticSceneSpec};
