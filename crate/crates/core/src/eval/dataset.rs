//! Scan sequences from synthetic generators or files on disk.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::radar_sim::{simulate_radar, RadarSimSpec};
use super::scene::{make_pairs, spacing_pairs, synth_scene, SyntheticSceneSpec};
use crate::classifier::AlignedPair;
use crate::error::{Error, Result};
use crate::geometry::io::{read_cloud, read_csv_cloud, read_poses};
use crate::geometry::{apply_transform, Point, PointCloud, RigidTransform};
use crate::radar::{extract_rip, k_strongest_cloud, read_polar_image, to_cartesian, PolarRadarImage, RadarFilterParams, RadarImageMeta};

/// Where an experiment's scans come from. Relative paths resolve against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// One sequence per scene spec.
    Synthetic { scenes: Vec<SyntheticSceneSpec> },
    /// One simulated radar sequence per spec.
    RadarSynthetic { sequences: Vec<RadarSimSpec> },
    /// Lidar clouds `<dir>/<id>.pc` or `<id>.csv` listed in a pose file.
    LidarDir {
        dir: PathBuf,
        #[serde(default = "default_poses")]
        poses: String,
        #[serde(default = "default_dim")]
        dim: usize,
        /// Clouds are stored in the world frame rather than the sensor frame.
        #[serde(default)]
        world_frame: bool,
    },
    /// Polar radar images `<dir>/<id>.<ext>` listed in a pose file, with one
    /// JSON sidecar for the whole sequence.
    RadarDir {
        dir: PathBuf,
        #[serde(default = "default_poses")]
        poses: String,
        #[serde(default = "default_meta")]
        meta: String,
        #[serde(default = "default_ext")]
        ext: String,
    },
    /// Explicit pairs from a manifest CSV.
    Manifest { path: PathBuf },
}

fn default_poses() -> String {
    "poses.csv".into()
}
fn default_meta() -> String {
    "radar.json".into()
}
fn default_ext() -> String {
    "png".into()
}
fn default_dim() -> usize {
    3
}

/// Scans in their sensor frames with world poses.
#[derive(Debug, Clone)]
pub enum Sequence {
    Lidar {
        scans: Vec<PointCloud>,
        poses: Vec<RigidTransform>,
    },
    Radar {
        images: Vec<PolarRadarImage>,
        poses: Vec<RigidTransform>,
    },
    Pairs(Vec<AlignedPair>),
}

impl Sequence {
    pub fn is_radar(&self) -> bool {
        matches!(self, Sequence::Radar { .. })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a `.csv` cloud (sensor at the origin) or a PCLOUD file.
pub fn load_cloud_file(path: &Path, dim: usize) -> Result<PointCloud> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv_cloud(path, dim, Point::zeros())
    } else {
        read_cloud(path)
    }
}

fn find_with_ext(dir: &Path, id: &str, exts: &[&str]) -> Result<PathBuf> {
    exts.iter()
        .map(|e| dir.join(format!("{id}.{e}")))
        .find(|p| p.exists())
        .ok_or_else(|| Error::data(format!("no scan file for `{id}` in {}", dir.display())))
}

pub fn load_source(source: &DataSource, base: &Path) -> Result<Vec<Sequence>> {
    match source {
        DataSource::Synthetic { scenes } => scenes
            .iter()
            .map(|spec| {
                let scene = synth_scene(spec)?;
                Ok(Sequence::Lidar {
                    scans: scene.scans(),
                    poses: scene.poses.clone(),
                })
            })
            .collect(),
        DataSource::RadarSynthetic { sequences } => sequences
            .iter()
            .map(|spec| {
                let seq = simulate_radar(spec)?;
                Ok(Sequence::Radar {
                    images: seq.images,
                    poses: seq.poses,
                })
            })
            .collect(),
        DataSource::LidarDir {
            dir,
            poses,
            dim,
            world_frame,
        } => {
            let dir = resolve(base, dir);
            let poses = read_poses(dir.join(poses))?;
            let scans = poses
                .par_iter()
                .map(|p| {
                    let cloud = load_cloud_file(&find_with_ext(&dir, &p.id, &["pc", "csv"])?, *dim)?;
                    if *world_frame {
                        let local = apply_transform(&cloud, &p.transform.inverse())?;
                        Ok(PointCloud::new(*dim, local.points().to_vec(), Point::zeros())?.with_id(p.id.clone()))
                    } else {
                        Ok(cloud)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![Sequence::Lidar {
                scans,
                poses: poses.into_iter().map(|p| p.transform).collect(),
            }])
        }
        DataSource::RadarDir { dir, poses, meta, ext } => {
            let dir = resolve(base, dir);
            let poses = read_poses(dir.join(poses))?;
            let meta = RadarImageMeta::read(dir.join(meta))?;
            let images = poses
                .par_iter()
                .map(|p| read_polar_image(dir.join(format!("{}.{ext}", p.id)), &meta))
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![Sequence::Radar {
                images,
                poses: poses.into_iter().map(|p| p.transform).collect(),
            }])
        }
        DataSource::Manifest { path } => Ok(vec![Sequence::Pairs(read_manifest(resolve(base, path))?)]),
    }
}

/// Reads `a,b,x,y,theta_rad` (2D) or `a,b,x,y,z,qw,qx,qy,qz` (3D) rows. The
/// transform places `b`'s sensor frame into `a`'s frame, which serves as the
/// common frame. Cloud paths are relative to the manifest.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<AlignedPair>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if i == 0 && rec.get(2).is_some_and(|t| t.parse::<f64>().is_err()) {
            continue;
        }
        let vals: Vec<f64> = rec
            .iter()
            .skip(2)
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("expected a number, found `{t}`"))))
            .collect::<Result<_>>()?;
        let (dim, t_gt) = match vals.len() {
            3 => (2, RigidTransform::planar(vals[0], vals[1], vals[2])),
            7 => (
                3,
                RigidTransform::from_quaternion(Vector3::new(vals[0], vals[1], vals[2]), [vals[3], vals[4], vals[5], vals[6]])
                    .map_err(|e| err(e.to_string()))?,
            ),
            n => return Err(err(format!("expected 3 or 7 pose values, found {n}"))),
        };
        let a_path = base.join(rec.get(0).unwrap_or_default());
        let b_path = base.join(rec.get(1).unwrap_or_default());
        let a = load_cloud_file(&a_path, dim)?;
        let b = load_cloud_file(&b_path, dim)?;
        pairs.push(AlignedPair {
            id: format!("{}-{}", a.id, b.id),
            a,
            b,
            t_gt,
        });
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientPairs(format!("manifest {} lists no pairs", path.display())));
    }
    Ok(pairs)
}

/// Which radar front end turns sweeps into clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarFrontEnd {
    /// Peak features, used by CorAl, MME and NDT.
    pub peaks: RadarFilterParams,
    /// Dense k-strongest returns, used by the surface and point baselines.
    pub dense: RadarFilterParams,
}

impl Default for RadarFrontEnd {
    fn default() -> Self {
        Self {
            peaks: RadarFilterParams::default(),
            dense: RadarFilterParams::surface_points(),
        }
    }
}

pub fn radar_cloud(image: &PolarRadarImage, dense: bool, fe: &RadarFrontEnd) -> PointCloud {
    let cloud = if dense {
        k_strongest_cloud(image, fe.dense.k, fe.dense.z_min, fe.dense.min_range)
    } else {
        to_cartesian(&extract_rip(image, &fe.peaks), image.gamma(), image.n_azimuth(), fe.peaks.min_range)
    };
    cloud.with_id(image.id.clone())
}

/// Ground-truth pairs of every sequence at the given scan spacing. Pair ids
/// carry the sequence index so they stay unique.
pub fn sequence_pairs(seqs: &[Sequence], spacing: f64, dense_radar: bool, fe: &RadarFrontEnd) -> Result<Vec<AlignedPair>> {
    let mut out = Vec::new();
    let mut reachable = false;
    for (s, seq) in seqs.iter().enumerate() {
        let mut pairs = match seq {
            Sequence::Pairs(p) => {
                reachable = true;
                p.clone()
            }
            Sequence::Lidar { scans, poses } => match spacing_pairs(poses, spacing) {
                Ok(idx) => {
                    reachable = true;
                    make_pairs(scans, poses, &idx)?
                }
                Err(Error::SpacingUnreachable(_)) => continue,
                Err(e) => return Err(e),
            },
            Sequence::Radar { images, poses } => match spacing_pairs(poses, spacing) {
                Ok(idx) => {
                    reachable = true;
                    let clouds: Vec<PointCloud> = images.par_iter().map(|im| radar_cloud(im, dense_radar, fe)).collect();
                    make_pairs(&clouds, poses, &idx)?
                }
                Err(Error::SpacingUnreachable(_)) => continue,
                Err(e) => return Err(e),
            },
        };
        for p in &mut pairs {
            p.id = format!("s{s}:{}", p.id);
        }
        out.extend(pairs);
    }
    if !reachable {
        return Err(Error::SpacingUnreachable(spacing));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::io::{write_cloud, write_poses, Pose};
    use crate::radar::write_polar_png;

    #[test]
    fn manifest_2d_and_3d() {
        let dir = tempfile::tempdir().unwrap();
        let c2 = PointCloud::from_coords(2, &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        let c3 = PointCloud::from_coords(3, &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        write_cloud(&c2, dir.path().join("a.pc")).unwrap();
        write_cloud(&c2, dir.path().join("b.pc")).unwrap();
        write_cloud(&c3, dir.path().join("c.pc")).unwrap();
        std::fs::write(dir.path().join("b.csv"), "x,y\n0,0\n2,0\n").unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "a,b,x,y,theta_rad\na.pc,b.pc,1.0,0.5,0.1\na.pc,b.csv,0,0,0\n").unwrap();
        let pairs = read_manifest(&m).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].t_gt.dim(), 2);
        assert_eq!(pairs[1].b.points()[1], Point::new(2.0, 0.0, 0.0));
        std::fs::write(&m, "c.pc,c.pc,1,2,3,1,0,0,0\n").unwrap();
        assert_eq!(read_manifest(&m).unwrap()[0].t_gt.dim(), 3);
        std::fs::write(&m, "c.pc,c.pc,1,2\n").unwrap();
        assert!(matches!(read_manifest(&m), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn lidar_dir_in_world_frame() {
        let dir = tempfile::tempdir().unwrap();
        let pose = RigidTransform::from_xyz_yaw(5.0, 1.0, 0.0, 0.3);
        let local = PointCloud::from_coords(3, &[1.0, 0.0, 0.0, 0.0, 2.0, 1.0], &[0.0; 3]).unwrap();
        let world = apply_transform(&local, &pose).unwrap();
        write_cloud(&world, dir.path().join("s0.pc")).unwrap();
        write_poses(&[Pose { id: "s0".into(), transform: pose }], dir.path().join("poses.csv")).unwrap();
        let src = DataSource::LidarDir {
            dir: dir.path().to_path_buf(),
            poses: default_poses(),
            dim: 3,
            world_frame: true,
        };
        let seqs = load_source(&src, Path::new(".")).unwrap();
        let Sequence::Lidar { scans, .. } = &seqs[0] else { panic!() };
        for (p, q) in scans[0].points().iter().zip(local.points()) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn radar_dir_loads() {
        let dir = tempfile::tempdir().unwrap();
        let img = PolarRadarImage::new(vec![10.0; 8 * 50], 8, 50, 0.1).unwrap();
        let mut poses = Vec::new();
        for i in 0..3 {
            let id = format!("r{i}");
            write_polar_png(&img, dir.path().join(format!("{id}.png"))).unwrap();
            poses.push(Pose {
                id,
                transform: RigidTransform::planar(i as f64, 0.0, 0.0),
            });
        }
        write_poses(&poses, dir.path().join("poses.csv")).unwrap();
        std::fs::write(dir.path().join("radar.json"), r#"{"gamma":0.1,"n_azimuth":8,"n_range":50}"#).unwrap();
        let src: DataSource = serde_json::from_str(&format!(r#"{{"type":"radar-dir","dir":{:?}}}"#, dir.path())).unwrap();
        let seqs = load_source(&src, Path::new(".")).unwrap();
        let Sequence::Radar { images, poses } = &seqs[0] else { panic!() };
        assert_eq!((images.len(), poses.len()), (3, 3));
    }
}
