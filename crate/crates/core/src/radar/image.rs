use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polar sweep: `n_azimuth × n_range` non-negative intensities, row-major
/// (row = azimuth, column = range).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarRadarImage {
    intensities: Vec<f64>,
    n_azimuth: usize,
    n_range: usize,
    gamma: f64,
    pub id: String,
    pub timestamp: Option<f64>,
}

impl PolarRadarImage {
    pub fn new(intensities: Vec<f64>, n_azimuth: usize, n_range: usize, gamma: f64) -> Result<Self> {
        if n_azimuth == 0 || n_range == 0 {
            return Err(Error::data("radar image needs at least one azimuth and one range bin"));
        }
        if intensities.len() != n_azimuth * n_range {
            return Err(Error::data(format!(
                "expected {} intensities, got {}",
                n_azimuth * n_range,
                intensities.len()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::data("range resolution must be positive"));
        }
        if let Some(i) = intensities.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::data(format!("intensity #{i} is negative or non-finite")));
        }
        Ok(Self {
            intensities,
            n_azimuth,
            n_range,
            gamma,
            id: String::new(),
            timestamp: None,
        })
    }

    pub fn n_azimuth(&self) -> usize {
        self.n_azimuth
    }

    pub fn n_range(&self) -> usize {
        self.n_range
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Maximum range `N_r·γ`.
    pub fn max_range(&self) -> f64 {
        self.n_range as f64 * self.gamma
    }

    /// Intensities of the 0-based azimuth row `a`.
    pub fn row(&self, a: usize) -> &[f64] {
        &self.intensities[a * self.n_range..(a + 1) * self.n_range]
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }
}

/// JSON sidecar describing a polar image file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarImageMeta {
    pub gamma: f64,
    pub n_azimuth: usize,
    pub n_range: usize,
    #[serde(default)]
    pub timestamp: Option<f64>,
    /// Leading per-row columns that hold metadata rather than intensities
    /// (the Oxford polar PNGs carry 11).
    #[serde(default)]
    pub header_columns: usize,
    /// The file stores range along rows and azimuth along columns.
    #[serde(default)]
    pub range_major: bool,
}

impl RadarImageMeta {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Loads a polar sweep from an 8-bit grayscale PNG or a CSV matrix.
pub fn read_polar_image(path: impl AsRef<Path>, meta: &RadarImageMeta) -> Result<PolarRadarImage> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("txt"));
    let (rows, cols, values) = if is_csv {
        read_csv_matrix(path)?
    } else {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        (h as usize, w as usize, img.into_raw().into_iter().map(f64::from).collect())
    };
    let (n_a, n_r) = (meta.n_azimuth, meta.n_range);
    let mut out = Vec::with_capacity(n_a * n_r);
    if meta.range_major {
        if rows < n_r + meta.header_columns || cols != n_a {
            return Err(Error::data(format!("image is {rows}x{cols}, sidecar expects range-major {n_r}x{n_a}")));
        }
        for a in 0..n_a {
            for r in 0..n_r {
                out.push(values[(r + meta.header_columns) * cols + a]);
            }
        }
    } else {
        if rows != n_a || cols < n_r + meta.header_columns {
            return Err(Error::data(format!("image is {rows}x{cols}, sidecar expects {n_a}x{n_r}")));
        }
        for a in 0..n_a {
            let start = a * cols + meta.header_columns;
            out.extend_from_slice(&values[start..start + n_r]);
        }
    }
    let mut img = PolarRadarImage::new(out, n_a, n_r, meta.gamma)?;
    img.timestamp = meta.timestamp;
    img.id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(img)
}

fn read_csv_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split([',', ' ', '\t'])
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: ln + 1,
                    msg: format!("expected a number, found `{t}`"),
                })
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: ln + 1,
                    msg: format!("expected {c} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), values))
}

/// Writes the sweep as an 8-bit PNG (values clamped to 0..=255).
pub fn write_polar_png(image: &PolarRadarImage, path: impl AsRef<Path>) -> Result<()> {
    let mut img = GrayImage::new(image.n_range() as u32, image.n_azimuth() as u32);
    for a in 0..image.n_azimuth() {
        for (r, v) in image.row(a).iter().enumerate() {
            img.put_pixel(r as u32, a as u32, Luma([v.round().clamp(0.0, 255.0) as u8]));
        }
    }
    img.save(path)?;
    Ok(())
}
