use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use coral::baselines::{metric_features, Metric, MetricParams};
use coral::classifier::{
    balance_weights, generate_training_set, predict, train, weighted_accuracy, ErrorSpec, Protocol, TrainParams,
};
use coral::entropy::{coral_quality, Aggregate};
use coral::error::{Error, ErrorKind, Result};
use coral::eval::{
    load_cloud_file, read_manifest, run_experiment, simulate_radar, synth_scene, ExperimentConfig, RadarSimSpec,
    SyntheticSceneSpec,
};
use coral::geometry::io::{write_cloud, write_poses, Pose};
use coral::geometry::{apply_transform, PointCloud, RigidTransform};
use coral::radar::{
    extract_rip, k_strongest_cloud, read_polar_image, to_cartesian, write_polar_png, RadarFilterParams, RadarImageMeta,
};
use coral::ClassifierModel;

#[derive(Parser)]
#[command(name = "coral", version, about = "Alignment quality of point-cloud pairs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Quality measure of one cloud pair.
    Assess(AssessArgs),
    /// Radar peak (or k-strongest) point cloud from one polar sweep.
    RadarExtract(RadarExtractArgs),
    /// Self-supervised classifier training from a pair manifest.
    Train(TrainArgs),
    /// Aligned/misaligned decision for one pair.
    Classify(ClassifyArgs),
    /// Run an experiment config and write the report.
    Eval(EvalArgs),
    /// Write a synthetic lidar scene or radar sequence to disk.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Dimension of CSV clouds.
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Pose applied to `b` first: `x,y,theta` or `x,y,z,qw,qx,qy,qz`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pose_b: Option<Vec<f64>>,
    /// Voxel-grid downsampling of both clouds, meters.
    #[arg(long)]
    voxel: Option<f64>,
}

#[derive(Args)]
struct AssessArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value = "coral")]
    metric: Metric,
    /// Metric parameters (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Write per-point entropies and qualities here (CorAl metrics only).
    #[arg(long)]
    per_point: Option<PathBuf>,
}

#[derive(Args)]
struct RadarExtractArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Filter parameters (JSON with k, z_min, w, min_range).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Keep every k-strongest return instead of peaks only.
    #[arg(long)]
    dense: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// CSV rows `a,b,<pose of b in a>`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    protocol: Protocol,
    #[arg(long, default_value = "coral")]
    metric: Metric,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Induced translation error, meters (lidar 0.1, radar 0.3 by default).
    #[arg(long)]
    e_d: Option<f64>,
    /// Induced heading error, radians (lidar protocol only).
    #[arg(long, allow_hyphen_values = true)]
    e_theta: Option<f64>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Optimizer settings (JSON).
    #[arg(long)]
    train_params: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    model: PathBuf,
    /// Overrides the metric parameters stored in the model.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
enum SynthSpec {
    Scene(SyntheticSceneSpec),
    Radar(RadarSimSpec),
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn metric_params(path: Option<&PathBuf>) -> Result<MetricParams> {
    path.map_or_else(|| Ok(MetricParams::default()), |p| read_json(p))
}

fn pose_from(vals: &[f64]) -> Result<RigidTransform> {
    match *vals {
        [x, y, th] => Ok(RigidTransform::planar(x, y, th)),
        [x, y, z, qw, qx, qy, qz] => RigidTransform::from_quaternion([x, y, z].into(), [qw, qx, qy, qz]),
        _ => Err(Error::InvalidParams(format!("--pose-b takes 3 or 7 values, got {}", vals.len()))),
    }
}

fn load_pair(args: &PairArgs) -> Result<(PointCloud, PointCloud)> {
    let mut a = load_cloud_file(&args.a, args.dim)?;
    let mut b = load_cloud_file(&args.b, args.dim)?;
    if let Some(v) = &args.pose_b {
        b = apply_transform(&b, &pose_from(v)?)?;
    }
    if let Some(v) = args.voxel {
        a = a.voxel_downsample(v)?;
        b = b.voxel_downsample(v)?;
    }
    info!("a: {} points, b: {} points", a.len(), b.len());
    Ok((a, b))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn assess(args: &AssessArgs) -> Result<()> {
    let (a, b) = load_pair(&args.pair)?;
    let params = metric_params(args.params.as_ref())?;
    if !matches!(args.metric, Metric::Coral | Metric::CoralMedian) {
        if args.per_point.is_some() {
            warn!("--per-point is only available for coral and coral-median");
        }
        let features = metric_features(args.metric, &a, &b, &params)?;
        return print_json(&json!({ "metric": args.metric, "features": features.values() }));
    }
    let mut cp = params.coral.clone();
    if args.metric == Metric::CoralMedian {
        cp.aggregate = Aggregate::Median;
    }
    let r = coral_quality(&a, &b, &cp)?;
    if let Some(path) = &args.per_point {
        let points: Vec<[f64; 3]> = a.points().iter().chain(b.points()).map(|p| [p.x, p.y, p.z]).collect();
        let per_point = json!({
            "dim": a.dim(),
            "n_a": a.len(),
            "points": points,
            "quality": r.per_point_quality,
            "joint_entropy": r.joint.per_point,
            "separate_entropy": r.separate.per_point,
        });
        ensure_parent(path)?;
        fs::write(path, serde_json::to_string(&per_point)?)?;
    }
    print_json(&json!({
        "metric": args.metric,
        "features": [r.h_joint, r.h_sep],
        "q": r.q,
        "h_joint": r.h_joint,
        "h_sep": r.h_sep,
        "n_valid_joint": r.joint.n_valid,
        "n_valid_sep": r.separate.n_valid,
    }))
}

fn radar_extract(args: &RadarExtractArgs) -> Result<()> {
    let meta = RadarImageMeta::read(&args.meta)?;
    let image = read_polar_image(&args.image, &meta)?;
    let fp: RadarFilterParams = match &args.params {
        Some(p) => read_json(p)?,
        None if args.dense => RadarFilterParams::surface_points(),
        None => RadarFilterParams::default(),
    };
    fp.validate()?;
    let cloud = if args.dense {
        k_strongest_cloud(&image, fp.k, fp.z_min, fp.min_range)
    } else {
        to_cartesian(&extract_rip(&image, &fp), image.gamma(), image.n_azimuth(), fp.min_range)
    };
    ensure_parent(&args.out)?;
    write_cloud(&cloud, &args.out)?;
    print_json(&json!({ "points": cloud.len(), "out": args.out }))
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let pairs = read_manifest(&args.pairs)?;
    let params = metric_params(args.params.as_ref())?;
    let hyper: TrainParams = match &args.train_params {
        Some(p) => read_json(p)?,
        None => TrainParams::default(),
    };
    hyper.validate()?;
    let mut spec = match args.protocol {
        Protocol::Lidar => ErrorSpec::lidar(),
        Protocol::Radar => ErrorSpec::radar(0.3),
    };
    if let Some(e) = args.e_d {
        spec.e_d = e;
    }
    if let Some(e) = args.e_theta {
        spec.e_theta = e;
    }
    let mut set = generate_training_set(&pairs, args.protocol, &spec, args.metric, &params, args.seed)?;
    balance_weights(&mut set.samples);
    let mut model = train(&set.samples, args.metric.name(), &hyper)?;
    model.metric_params = Some(params);
    let acc = weighted_accuracy(&model, &set.samples)?;
    ensure_parent(&args.out)?;
    fs::write(&args.out, model.to_json()?)?;
    print_json(&json!({
        "metric": args.metric,
        "pairs": pairs.len(),
        "samples": set.samples.len(),
        "skipped": set.skipped.len(),
        "training_accuracy": acc,
        "out": args.out,
    }))
}

fn classify(args: &ClassifyArgs) -> Result<()> {
    let model = ClassifierModel::from_json(&fs::read_to_string(&args.model)?)?;
    let metric: Metric = model.metric_name.parse()?;
    let params = match (&args.params, &model.metric_params) {
        (Some(p), _) => read_json(p)?,
        (None, Some(p)) => p.clone(),
        (None, None) => MetricParams::default(),
    };
    let (a, b) = load_pair(&args.pair)?;
    let f = metric_features(metric, &a, &b, &params)?;
    let pr = predict(&model, &f)?;
    print_json(&json!({
        "metric": metric,
        "features": f.values(),
        "p": pr.p,
        "label": pr.label,
    }))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_json(&fs::read_to_string(&args.config)?)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let report = run_experiment(&cfg, base)?;
    ensure_parent(&args.out)?;
    fs::write(&args.out, report.to_json()?)?;
    fs::write(sibling(&args.out, "accuracy"), report.accuracy_csv())?;
    fs::write(sibling(&args.out, "roc"), report.roc_csv())?;
    if !report.timing.is_empty() {
        fs::write(sibling(&args.out, "timing"), report.timing_csv())?;
    }
    print!("{}", report.accuracy_csv());
    Ok(())
}

/// Manifest row placing scan `b` in the frame of scan `a`.
fn manifest_row(a: &str, b: &str, pose_a: &RigidTransform, pose_b: &RigidTransform) -> String {
    let rel = pose_a.inverse().compose(pose_b);
    let t = rel.translation();
    if rel.dim() == 2 {
        format!("{a}.pc,{b}.pc,{},{},{}\n", t.x, t.y, rel.yaw())
    } else {
        let q = rel.quaternion();
        format!("{a}.pc,{b}.pc,{},{},{},{},{},{},{}\n", t.x, t.y, t.z, q[0], q[1], q[2], q[3])
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec: SynthSpec = read_json(&args.spec)?;
    fs::create_dir_all(&args.out)?;
    let mut poses = Vec::new();
    match spec {
        SynthSpec::Scene(s) => {
            let scene = synth_scene(&s)?;
            write_cloud(&scene.map(), args.out.join("map.pc"))?;
            let scans = scene.scans();
            let mut manifest = String::from(if s.dim == 2 { "a,b,x,y,theta_rad\n" } else { "a,b,x,y,z,qw,qx,qy,qz\n" });
            for (i, scan) in scans.iter().enumerate() {
                write_cloud(scan, args.out.join(format!("{}.pc", scan.id)))?;
                poses.push(Pose {
                    id: scan.id.clone(),
                    transform: scene.poses[i],
                });
                if i > 0 {
                    manifest.push_str(&manifest_row(&scans[i - 1].id, &scan.id, &scene.poses[i - 1], &scene.poses[i]));
                }
            }
            if scans.len() > 1 {
                fs::write(args.out.join("pairs.csv"), manifest)?;
            }
        }
        SynthSpec::Radar(s) => {
            let seq = simulate_radar(&s)?;
            for (img, pose) in seq.images.iter().zip(&seq.poses) {
                write_polar_png(img, args.out.join(format!("{}.png", img.id)))?;
                poses.push(Pose {
                    id: img.id.clone(),
                    transform: *pose,
                });
            }
            let meta = RadarImageMeta {
                gamma: s.gamma,
                n_azimuth: s.n_azimuth,
                n_range: s.n_range,
                timestamp: None,
                header_columns: 0,
                range_major: false,
            };
            fs::write(args.out.join("radar.json"), serde_json::to_string_pretty(&meta)?)?;
        }
    }
    write_poses(&poses, args.out.join("poses.csv"))?;
    print_json(&json!({ "scans": poses.len(), "out": args.out }))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Assess(a) => assess(a),
        Cmd::RadarExtract(a) => radar_extract(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Classify(a) => classify(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Data => ExitCode::from(2),
                ErrorKind::Config => ExitCode::from(3),
            }
        }
    }
}
