//! Point-cloud and pose file formats.
//!
//! Point clouds are ASCII: a header line `PCLOUD <dim> <count> <ox> <oy> [<oz>]`
//! followed by one whitespace-separated point per line. Poses are CSV rows
//! `id,x,y,theta_rad` (2D) or `id,x,y,z,qw,qx,qy,qz` (3D).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::Vector3;

use super::cloud::{to_point, Point, PointCloud};
use super::transform::RigidTransform;
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("expected a number, found `{tok}`")))
}

/// Serializes a cloud; floats use the shortest round-trip representation.
pub fn format_cloud(cloud: &PointCloud) -> String {
    let dim = cloud.dim();
    let o = cloud.origin();
    let mut s = String::with_capacity(cloud.len() * 24 * dim);
    write!(s, "PCLOUD {dim} {} {} {}", cloud.len(), o.x, o.y).unwrap();
    if dim == 3 {
        write!(s, " {}", o.z).unwrap();
    }
    s.push('\n');
    for p in cloud.points() {
        if dim == 3 {
            writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
        } else {
            writeln!(s, "{} {}", p.x, p.y).unwrap();
        }
    }
    s
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_cloud(cloud))?;
    Ok(())
}

pub fn parse_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing PCLOUD header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"PCLOUD") {
        return Err(parse_err(path, hl + 1, "missing PCLOUD header"));
    }
    let dim: usize = toks
        .get(1)
        .and_then(|t| t.parse().ok())
        .filter(|d| *d == 2 || *d == 3)
        .ok_or_else(|| parse_err(path, hl + 1, "dimension must be 2 or 3"))?;
    let count: usize = toks
        .get(2)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, hl + 1, "bad point count"))?;
    if toks.len() != 3 + dim {
        return Err(parse_err(path, hl + 1, format!("expected {dim} origin coordinates")));
    }
    let origin: Vec<f64> = toks[3..]
        .iter()
        .map(|t| parse_f64(path, hl + 1, t))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(count);
    for (ln, line) in lines {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| parse_f64(path, ln + 1, t))
            .collect::<Result<_>>()?;
        if vals.len() != dim {
            return Err(parse_err(path, ln + 1, format!("expected {dim} coordinates, found {}", vals.len())));
        }
        points.push(to_point(&vals));
    }
    if points.len() != count {
        return Err(parse_err(
            path,
            hl + 1,
            format!("header declares {count} points, found {}", points.len()),
        ));
    }
    PointCloud::new(dim, points, to_point(&origin))
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(parse_cloud(&text, path)?.with_id(stem))
}

/// Reads a delimited text cloud (e.g. the ETH registration benchmark's CSV
/// scans). Columns named `x`, `y`, `z` are used when a header is present;
/// otherwise the first `dim` columns. The sensor origin is `origin`.
pub fn read_csv_cloud(path: impl AsRef<Path>, dim: usize, origin: Point) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let split = |l: &str| -> Vec<String> {
        l.split([',', ' ', '\t', ';'])
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    };
    let head = split(&first);
    let named: Option<Vec<usize>> = ["x", "y", "z"][..dim]
        .iter()
        .map(|n| head.iter().position(|h| h.eq_ignore_ascii_case(n)))
        .collect();
    let (cols, mut pending) = match named {
        Some(cols) => (cols, None),
        None => ((0..dim).collect(), Some(first)),
    };
    let mut points = Vec::new();
    let mut ln = 1;
    loop {
        let line = match pending.take() {
            Some(l) => l,
            None => match lines.next() {
                Some(l) => {
                    ln += 1;
                    l?
                }
                None => break,
            },
        };
        let toks = split(&line);
        if toks.is_empty() {
            continue;
        }
        let mut c = [0.0; 3];
        for (d, &col) in cols.iter().enumerate() {
            let tok = toks
                .get(col)
                .ok_or_else(|| parse_err(path, ln, "missing coordinate column"))?;
            c[d] = parse_f64(path, ln, tok)?;
        }
        points.push(Point::new(c[0], c[1], c[2]));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(PointCloud::new(dim, points, origin)?.with_id(stem))
}

/// A named pose from a pose file.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub id: String,
    pub transform: RigidTransform,
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    let dim = poses.first().map_or(2, |p| p.transform.dim());
    if dim == 2 {
        s.push_str("id,x,y,theta_rad\n");
    } else {
        s.push_str("id,x,y,z,qw,qx,qy,qz\n");
    }
    for p in poses {
        let t = p.transform.translation();
        if dim == 2 {
            writeln!(s, "{},{},{},{}", p.id, t.x, t.y, p.transform.yaw()).unwrap();
        } else {
            let q = p.transform.quaternion();
            writeln!(s, "{},{},{},{},{},{},{},{}", p.id, t.x, t.y, t.z, q[0], q[1], q[2], q[3]).unwrap();
        }
    }
    s
}

pub fn write_poses(poses: &[Pose], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_poses(poses))?;
    Ok(())
}

/// Parses pose rows; a header row is accepted and skipped.
pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut poses = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if i == 0 && rec.get(1).is_some_and(|t| t.parse::<f64>().is_err()) {
            continue;
        }
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|t| parse_f64(path, line, t))
            .collect::<Result<_>>()?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let transform = match vals.len() {
            3 => RigidTransform::planar(vals[0], vals[1], vals[2]),
            7 => RigidTransform::from_quaternion(
                Vector3::new(vals[0], vals[1], vals[2]),
                [vals[3], vals[4], vals[5], vals[6]],
            )
            .map_err(|e| parse_err(path, line, e.to_string()))?,
            n => return Err(parse_err(path, line, format!("expected 3 or 7 pose values, found {n}"))),
        };
        poses.push(Pose { id, transform });
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_round_trip_is_exact() {
        let c = PointCloud::from_coords(3, &[0.1, 1.0 / 3.0, -2e-9, 1e10, 5.5, 7.25], &[0.5, 0.25, 1.0]).unwrap();
        let back = parse_cloud(&format_cloud(&c), Path::new("mem")).unwrap();
        assert_eq!(back.points(), c.points());
        assert_eq!(back.origin(), c.origin());
    }

    #[test]
    fn header_shape() {
        let c = PointCloud::from_coords(2, &[1.0, 2.0], &[0.5, -1.0]).unwrap();
        assert_eq!(format_cloud(&c), "PCLOUD 2 1 0.5 -1\n1 2\n");
    }

    #[test]
    fn bad_count_reports_line() {
        let err = parse_cloud("PCLOUD 2 3 0 0\n1 2\n", Path::new("x.pc")).unwrap_err();
        assert!(err.to_string().contains("x.pc:1"), "{err}");
        let err = parse_cloud("PCLOUD 2 1 0 0\n1 2 3\n", Path::new("x.pc")).unwrap_err();
        assert!(err.to_string().contains("x.pc:2"), "{err}");
    }

    #[test]
    fn poses_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p2 = vec![Pose {
            id: "a".into(),
            transform: RigidTransform::planar(1.0, 2.0, 0.5),
        }];
        write_poses(&p2, dir.path().join("p2.csv")).unwrap();
        let back = read_poses(dir.path().join("p2.csv")).unwrap();
        assert_eq!(back[0].id, "a");
        assert!((back[0].transform.yaw() - 0.5).abs() < 1e-15);
        let p3 = vec![Pose {
            id: "b".into(),
            transform: RigidTransform::from_xyz_yaw(1.0, 2.0, 3.0, -0.7),
        }];
        write_poses(&p3, dir.path().join("p3.csv")).unwrap();
        let back = read_poses(dir.path().join("p3.csv")).unwrap();
        assert!((back[0].transform.rotation() - p3[0].transform.rotation()).abs().max() < 1e-12);
    }

    #[test]
    fn csv_cloud_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("Hokuyo_0.csv");
        std::fs::write(&path, "t, x, y, z, intensity\n0, 1.0, 2.0, 3.0, 9\n0, 4.0, 5.0, 6.0, 9\n").unwrap();
        let c = read_csv_cloud(&path, 3, Point::zeros()).unwrap();
        assert_eq!(c.points()[1], Point::new(4.0, 5.0, 6.0));
        assert_eq!(c.id, "Hokuyo_0");
    }
}
