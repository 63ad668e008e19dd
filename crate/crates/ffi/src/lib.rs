//! C ABI over the `coral` library.
//!
//! Clouds and models are opaque handles owned by the caller and released
//! with their `_free` function. Every fallible call returns a
//! [`CoralStatus`]; on failure [`coral_last_error`] describes the problem
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coral::baselines::{metric_features, Metric, MetricParams};
use coral::classifier::{predict, ClassifierModel, Label};
use coral::entropy::{self, Aggregate, CoralParams};
use coral::error::{Error, ErrorKind};
use coral::features::QualityFeatureVector;
use coral::geometry::io::{read_cloud, write_cloud};
use coral::geometry::{apply_transform, PointCloud, RigidTransform};
use coral::radar::{extract_rip, k_strongest_cloud, to_cartesian, PolarRadarImage, RadarFilterParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoralStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad or insufficient input data.
    DataError = 2,
    /// Bad parameters.
    ConfigError = 3,
    /// A buffer passed in is too small.
    BufferTooSmall = 4,
    Panic = 5,
}

/// Point cloud handle.
pub struct CoralCloud(PointCloud);

/// Trained classifier handle.
pub struct CoralModel(ClassifierModel);

/// Neighborhood and aggregation settings of the entropy measure.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CoralEntropyParams {
    pub r_min: f64,
    pub r_max: f64,
    /// Angular resolution in radians; 0 keeps the radius fixed at `r_min`.
    pub alpha: f64,
    pub epsilon: f64,
    pub e_reject: f64,
    /// 0 = mean, 1 = median.
    pub aggregate: u32,
    /// 0 selects the default of `dim + 2`.
    pub min_neighbors: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CoralQuality {
    pub q: f64,
    pub h_joint: f64,
    pub h_sep: f64,
    pub n_valid_joint: usize,
    pub n_valid_sep: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CoralRadarParams {
    pub k: usize,
    pub z_min: f64,
    pub w: usize,
    pub min_range: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> CoralStatus {
    set_error(e.to_string());
    match e.kind() {
        ErrorKind::Data => CoralStatus::DataError,
        ErrorKind::Config => CoralStatus::ConfigError,
    }
}

fn null(what: &str) -> CoralStatus {
    set_error(format!("`{what}` is null"));
    CoralStatus::NullPointer
}

/// Runs `f`, turning panics into [`CoralStatus::Panic`].
fn guard(f: impl FnOnce() -> CoralStatus) -> CoralStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            CoralStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(s: *const c_char, what: &str) -> Result<&'a str, CoralStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("`{what}` is not valid UTF-8"));
        CoralStatus::ConfigError
    })
}

fn to_params(p: &CoralEntropyParams) -> Result<CoralParams, CoralStatus> {
    let aggregate = match p.aggregate {
        0 => Aggregate::Mean,
        1 => Aggregate::Median,
        n => return Err(fail(Error::InvalidParams(format!("unknown aggregate {n}")))),
    };
    Ok(CoralParams {
        r_min: p.r_min,
        r_max: p.r_max,
        alpha: p.alpha,
        epsilon: p.epsilon,
        e_reject: p.e_reject,
        aggregate,
        min_neighbors: (p.min_neighbors > 0).then_some(p.min_neighbors),
    })
}

unsafe fn box_cloud(c: PointCloud, out: *mut *mut CoralCloud) -> CoralStatus {
    *out = Box::into_raw(Box::new(CoralCloud(c)));
    CoralStatus::Ok
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn coral_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn coral_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fixed 0.3 m radius, no floor, no rejection, mean aggregate.
#[no_mangle]
pub extern "C" fn coral_params_default() -> CoralEntropyParams {
    let p = CoralParams::default();
    CoralEntropyParams {
        r_min: p.r_min,
        r_max: p.r_max,
        alpha: p.alpha,
        epsilon: p.epsilon,
        e_reject: p.e_reject,
        aggregate: 0,
        min_neighbors: 0,
    }
}

#[no_mangle]
pub extern "C" fn coral_radar_params_default() -> CoralRadarParams {
    let p = RadarFilterParams::default();
    CoralRadarParams {
        k: p.k,
        z_min: p.z_min,
        w: p.w,
        min_range: p.min_range,
    }
}

/// Builds a cloud from `n` points stored row-major (`n * dim` doubles).
/// `origin` holds `dim` doubles or is null for the zero origin.
///
/// # Safety
/// `coords` must point to `n * dim` doubles, `origin` to `dim` doubles or be
/// null, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_new(
    dim: usize,
    coords: *const f64,
    n: usize,
    origin: *const f64,
    out: *mut *mut CoralCloud,
) -> CoralStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        if coords.is_null() && n > 0 {
            return null("coords");
        }
        if dim != 2 && dim != 3 {
            return fail(Error::BadDimension(dim));
        }
        let xs = if n == 0 { &[][..] } else { std::slice::from_raw_parts(coords, n * dim) };
        let zero = [0.0; 3];
        let o = if origin.is_null() { &zero[..dim] } else { std::slice::from_raw_parts(origin, dim) };
        match PointCloud::from_coords(dim, xs, o) {
            Ok(c) => box_cloud(c, out),
            Err(e) => fail(e),
        }
    })
}

/// Reads a PCLOUD text file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_read(path: *const c_char, out: *mut *mut CoralCloud) -> CoralStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let path = match cstr(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_cloud(path) {
            Ok(c) => box_cloud(c, out),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `cloud` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_write(cloud: *const CoralCloud, path: *const c_char) -> CoralStatus {
    guard(|| {
        let Some(c) = cloud.as_ref() else { return null("cloud") };
        let path = match cstr(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_cloud(&c.0, path) {
            Ok(()) => CoralStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_free(cloud: *mut CoralCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_len(cloud: *const CoralCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// 2 or 3; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_dim(cloud: *const CoralCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.dim())
}

/// Copies the points row-major into `out`, which holds `cap` doubles.
///
/// # Safety
/// `cloud` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_coords(cloud: *const CoralCloud, out: *mut f64, cap: usize) -> CoralStatus {
    guard(|| {
        let Some(c) = cloud.as_ref() else { return null("cloud") };
        let dim = c.0.dim();
        let need = c.0.len() * dim;
        if cap < need {
            set_error(format!("buffer holds {cap} values, {need} needed"));
            return CoralStatus::BufferTooSmall;
        }
        if need == 0 {
            return CoralStatus::Ok;
        }
        if out.is_null() {
            return null("out");
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (row, p) in dst.chunks_exact_mut(dim).zip(c.0.points()) {
            row.copy_from_slice(&p.as_slice()[..dim]);
        }
        CoralStatus::Ok
    })
}

/// New cloud with `cloud` moved by the rigid transform given as a
/// translation `t` (3 doubles) and unit quaternion `q = (w, x, y, z)`.
/// For 2D clouds the rotation must be about z and `t[2]` is ignored.
///
/// # Safety
/// `cloud` must be a live handle, `t` and `q` must hold 3 and 4 doubles,
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coral_cloud_transform(
    cloud: *const CoralCloud,
    t: *const f64,
    q: *const f64,
    out: *mut *mut CoralCloud,
) -> CoralStatus {
    guard(|| {
        let Some(c) = cloud.as_ref() else { return null("cloud") };
        if t.is_null() || q.is_null() || out.is_null() {
            return null("t, q or out");
        }
        let t = std::slice::from_raw_parts(t, 3);
        let q = std::slice::from_raw_parts(q, 4);
        let tr = if c.0.dim() == 2 {
            if q[1].abs() > 1e-9 || q[2].abs() > 1e-9 {
                return fail(Error::NotARotation);
            }
            let yaw = 2.0 * q[3].atan2(q[0]);
            RigidTransform::planar(t[0], t[1], yaw)
        } else {
            match RigidTransform::from_quaternion([t[0], t[1], t[2]].into(), [q[0], q[1], q[2], q[3]]) {
                Ok(tr) => tr,
                Err(e) => return fail(e),
            }
        };
        match apply_transform(&c.0, &tr) {
            Ok(moved) => box_cloud(moved, out),
            Err(e) => fail(e),
        }
    })
}

unsafe fn pair<'a>(a: *const CoralCloud, b: *const CoralCloud) -> Result<(&'a PointCloud, &'a PointCloud), CoralStatus> {
    match (a.as_ref(), b.as_ref()) {
        (Some(a), Some(b)) => Ok((&a.0, &b.0)),
        _ => Err(null("a or b")),
    }
}

unsafe fn read_params(params: *const CoralEntropyParams) -> Result<CoralParams, CoralStatus> {
    match params.as_ref() {
        Some(p) => to_params(p),
        None => Ok(CoralParams::default()),
    }
}

/// Joint and separate entropies of the pair `a`, `b` (both in a common
/// frame) and their difference. `params` may be null for the defaults.
///
/// # Safety
/// `a` and `b` must be live handles, `params` null or valid, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn coral_quality(
    a: *const CoralCloud,
    b: *const CoralCloud,
    params: *const CoralEntropyParams,
    out: *mut CoralQuality,
) -> CoralStatus {
    guard(|| {
        let (a, b) = match pair(a, b) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if out.is_null() {
            return null("out");
        }
        let p = match read_params(params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match entropy::coral_quality(a, b, &p) {
            Ok(r) => {
                *out = CoralQuality {
                    q: r.q,
                    h_joint: r.h_joint,
                    h_sep: r.h_sep,
                    n_valid_joint: r.joint.n_valid,
                    n_valid_sep: r.separate.n_valid,
                };
                CoralStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Per-point quality for the points of `a` followed by those of `b`; NaN
/// marks points without a valid entropy. `out` must hold
/// `len(a) + len(b)` doubles.
///
/// # Safety
/// `a` and `b` must be live handles, `params` null or valid, and `out`
/// must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn coral_per_point_quality(
    a: *const CoralCloud,
    b: *const CoralCloud,
    params: *const CoralEntropyParams,
    out: *mut f64,
    cap: usize,
) -> CoralStatus {
    guard(|| {
        let (a, b) = match pair(a, b) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let need = a.len() + b.len();
        if cap < need {
            set_error(format!("buffer holds {cap} values, {need} needed"));
            return CoralStatus::BufferTooSmall;
        }
        if out.is_null() {
            return null("out");
        }
        let p = match read_params(params) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match entropy::coral_quality(a, b, &p) {
            Ok(r) => {
                let dst = std::slice::from_raw_parts_mut(out, need);
                for (d, q) in dst.iter_mut().zip(&r.per_point_quality) {
                    *d = q.unwrap_or(f64::NAN);
                }
                CoralStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Classifier inputs of any metric (`coral`, `coral-median`, `mme`,
/// `ndt`, `rel-ndt`, `cfear-p2p`, `cfear-p2l`, `cfear-p2d`, `cen-p2p`).
/// `params_json` may be null for the defaults. Writes up to 3 values to
/// `out` and their count to `arity`.
///
/// # Safety
/// `a` and `b` must be live handles, strings NUL-terminated, `out` must
/// hold 3 doubles and `arity` be writable.
#[no_mangle]
pub unsafe extern "C" fn coral_metric_features(
    a: *const CoralCloud,
    b: *const CoralCloud,
    metric: *const c_char,
    params_json: *const c_char,
    out: *mut f64,
    arity: *mut usize,
) -> CoralStatus {
    guard(|| {
        let (a, b) = match pair(a, b) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if out.is_null() || arity.is_null() {
            return null("out or arity");
        }
        let name = match cstr(metric, "metric") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let metric: Metric = match name.parse() {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        let params: MetricParams = if params_json.is_null() {
            MetricParams::default()
        } else {
            let s = match cstr(params_json, "params_json") {
                Ok(s) => s,
                Err(s) => return s,
            };
            match serde_json::from_str(s) {
                Ok(p) => p,
                Err(e) => return fail(e.into()),
            }
        };
        match metric_features(metric, a, b, &params) {
            Ok(f) => {
                let v = f.values();
                std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(&v);
                *arity = v.len();
                CoralStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Radar point cloud from a polar sweep of `n_azimuth` rows by `n_range`
/// range bins (row-major), range resolution `gamma` meters per bin. With
/// `dense` every k-strongest return is kept, otherwise only intensity
/// peaks. `params` may be null for the defaults.
///
/// # Safety
/// `intensities` must hold `n_azimuth * n_range` doubles, `params` be null
/// or valid, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coral_radar_extract(
    intensities: *const f64,
    n_azimuth: usize,
    n_range: usize,
    gamma: f64,
    params: *const CoralRadarParams,
    dense: bool,
    out: *mut *mut CoralCloud,
) -> CoralStatus {
    guard(|| {
        if intensities.is_null() || out.is_null() {
            return null("intensities or out");
        }
        let fp = params.as_ref().map_or_else(RadarFilterParams::default, |p| RadarFilterParams {
            k: p.k,
            z_min: p.z_min,
            w: p.w,
            min_range: p.min_range,
        });
        if let Err(e) = fp.validate() {
            return fail(e);
        }
        let data = std::slice::from_raw_parts(intensities, n_azimuth * n_range).to_vec();
        let image = match PolarRadarImage::new(data, n_azimuth, n_range, gamma) {
            Ok(i) => i,
            Err(e) => return fail(e),
        };
        let cloud = if dense {
            k_strongest_cloud(&image, fp.k, fp.z_min, fp.min_range)
        } else {
            to_cartesian(&extract_rip(&image, &fp), gamma, n_azimuth, fp.min_range)
        };
        box_cloud(cloud, out)
    })
}

/// Loads a model written by `coral train`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coral_model_from_json(json: *const c_char, out: *mut *mut CoralModel) -> CoralStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let s = match cstr(json, "json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match ClassifierModel::from_json(s) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(CoralModel(m)));
                CoralStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coral_model_free(model: *mut CoralModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Probability that a pair with these features is aligned, and the
/// thresholded decision.
///
/// # Safety
/// `model` must be a live handle, `features` must hold `n` doubles, and
/// `p` and `aligned` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coral_model_predict(
    model: *const CoralModel,
    features: *const f64,
    n: usize,
    p: *mut f64,
    aligned: *mut bool,
) -> CoralStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        if features.is_null() || p.is_null() || aligned.is_null() {
            return null("features, p or aligned");
        }
        let f = match QualityFeatureVector::from_slice(std::slice::from_raw_parts(features, n)) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        match predict(&m.0, &f) {
            Ok(pr) => {
                *p = pr.p;
                *aligned = pr.label == Label::Aligned;
                CoralStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Computes the model's metric on `a`, `b` with the parameters stored in
/// the model, then classifies.
///
/// # Safety
/// `model`, `a` and `b` must be live handles; `p` and `aligned` writable.
#[no_mangle]
pub unsafe extern "C" fn coral_model_classify(
    model: *const CoralModel,
    a: *const CoralCloud,
    b: *const CoralCloud,
    p: *mut f64,
    aligned: *mut bool,
) -> CoralStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        let (a, b) = match pair(a, b) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if p.is_null() || aligned.is_null() {
            return null("p or aligned");
        }
        let metric: Metric = match m.0.metric_name.parse() {
            Ok(x) => x,
            Err(e) => return fail(e),
        };
        let params = m.0.metric_params.clone().unwrap_or_default();
        let pr = match metric_features(metric, a, b, &params).and_then(|f| predict(&m.0, &f)) {
            Ok(pr) => pr,
            Err(e) => return fail(e),
        };
        *p = pr.p;
        *aligned = pr.label == Label::Aligned;
        CoralStatus::Ok
    })
}
