//! C ABI over `vloc_core`.
//!
//! Conventions: every fallible call returns a `VlocStatus` and writes its
//! result through an out-pointer. On failure the thread's last error message
//! is set and can be read with `vloc_last_error_message`. Handles are opaque,
//! created by a `*_new` function and released with the matching `*_free`.
//! Panics never cross the boundary; they surface as `VLOC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vloc_core::coverage::coverage_percent;
use vloc_core::geo::{haversine_distance, GeoCoordinate, Region, SpatialIndex};
use vloc_core::mobility::{MovementKind, TransitionMatrix};
use vloc_core::routing::{timestamp_path, Path};
use vloc_core::visits::{analyze_path, AnalysisParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Geo = 3,
    Model = 4,
    Routing = 5,
    Analysis = 6,
    Coverage = 7,
    Panic = 8,
}

/// Transition matrix over the five place categories.
pub struct VlocMatrix {
    inner: TransitionMatrix,
}

/// Virtual locations behind a spatial index.
pub struct VlocLocations {
    coords: Vec<GeoCoordinate>,
    index: SpatialIndex,
}

/// Visit parameters for `vloc_analyze_path`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VlocVisitParams {
    /// Vicinity radius, meters.
    pub r_v: f64,
    /// Minimum visiting time, seconds.
    pub t_v_min: f64,
    /// Walking speed, m/s.
    pub speed: f64,
}

/// Per-path visit metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VlocPathReport {
    pub length_m: f64,
    pub duration_s: f64,
    pub distinct_visited: usize,
    pub parallel_median: f64,
    pub parallel_max: u32,
    pub accumulated_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type FfiResult = Result<(), (VlocStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult) -> VlocStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VlocStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {msg}"));
            VlocStatus::Panic
        }
    }
}

fn null(name: &str) -> (VlocStatus, String) {
    (VlocStatus::NullPointer, format!("{name} is null"))
}

fn err<E: std::fmt::Display>(status: VlocStatus) -> impl Fn(E) -> (VlocStatus, String) {
    move |e| (status, e.to_string())
}

/// Borrows `n` elements, allowing a null pointer only when `n` is zero.
unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], (VlocStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn coords(lats: *const f64, lons: *const f64, n: usize) -> Result<Vec<GeoCoordinate>, (VlocStatus, String)> {
    let lats = slice(lats, n, "lats")?;
    let lons = slice(lons, n, "lons")?;
    lats.iter()
        .zip(lons)
        .map(|(&lat, &lon)| GeoCoordinate::new(lat, lon).map_err(err(VlocStatus::Geo)))
        .collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vloc_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Length in bytes of the last error message, excluding the NUL; 0 if none.
#[no_mangle]
pub extern "C" fn vloc_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vloc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |s| s.as_bytes());
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Great-circle distance in meters.
///
/// # Safety
/// `out_m` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vloc_haversine_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out_m: *mut f64) -> VlocStatus {
    guard(|| {
        if out_m.is_null() {
            return Err(null("out_m"));
        }
        let a = GeoCoordinate::new(lat1, lon1).map_err(err(VlocStatus::Geo))?;
        let b = GeoCoordinate::new(lat2, lon2).map_err(err(VlocStatus::Geo))?;
        *out_m = haversine_distance(a, b);
        Ok(())
    })
}

/// Builds the category transition matrix from five place counts (Home,
/// Work, Food, Entertainment, Others) and self-transition mass `epsilon`.
///
/// # Safety
/// `counts` must point to 5 values; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vloc_matrix_new(counts: *const u64, epsilon: f64, out: *mut *mut VlocMatrix) -> VlocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let c = slice(counts, 5, "counts")?;
        let mut arr = [0usize; 5];
        for (a, &v) in arr.iter_mut().zip(c) {
            *a = usize::try_from(v).map_err(err(VlocStatus::InvalidArgument))?;
        }
        let inner = TransitionMatrix::build(arr, epsilon).map_err(err(VlocStatus::Model))?;
        *out = Box::into_raw(Box::new(VlocMatrix { inner }));
        Ok(())
    })
}

/// Writes the 25 entries row by row.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid for 25 writes.
#[no_mangle]
pub unsafe extern "C" fn vloc_matrix_entries(m: *const VlocMatrix, out: *mut f64) -> VlocStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("matrix"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        for (i, row) in m.inner.rows().iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                *out.add(i * 5 + j) = w;
            }
        }
        Ok(())
    })
}

/// Stationary distribution by power iteration to tolerance `tol`.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid for 5 writes.
#[no_mangle]
pub unsafe extern "C" fn vloc_matrix_stationary(m: *const VlocMatrix, tol: f64, out: *mut f64) -> VlocStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("matrix"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err((VlocStatus::InvalidArgument, format!("tolerance {tol} must be positive")));
        }
        let pi = m.inner.stationary(tol).map_err(err(VlocStatus::Model))?;
        for (k, &v) in pi.0.iter().enumerate() {
            *out.add(k) = v;
        }
        Ok(())
    })
}

/// Releases a matrix handle; null is ignored.
///
/// # Safety
/// `m` must be null or a handle from `vloc_matrix_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vloc_matrix_free(m: *mut VlocMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Indexes `n` virtual locations around `origin` with grid cell `cell_m`.
///
/// # Safety
/// `lats`/`lons` must hold `n` values; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vloc_locations_new(
    lats: *const f64,
    lons: *const f64,
    n: usize,
    origin_lat: f64,
    origin_lon: f64,
    cell_m: f64,
    out: *mut *mut VlocLocations,
) -> VlocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let pts = coords(lats, lons, n)?;
        let origin = GeoCoordinate::new(origin_lat, origin_lon).map_err(err(VlocStatus::Geo))?;
        let index = SpatialIndex::build(origin, cell_m, &pts).map_err(err(VlocStatus::Geo))?;
        *out = Box::into_raw(Box::new(VlocLocations { coords: pts, index }));
        Ok(())
    })
}

/// Number of indexed locations; 0 for null.
///
/// # Safety
/// `locs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vloc_locations_len(locs: *const VlocLocations) -> usize {
    locs.as_ref().map_or(0, |l| l.coords.len())
}

/// Releases a locations handle; null is ignored.
///
/// # Safety
/// `locs` must be null or a handle from `vloc_locations_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vloc_locations_free(locs: *mut VlocLocations) {
    if !locs.is_null() {
        drop(Box::from_raw(locs));
    }
}

/// Walks the polyline of `n` waypoints at constant speed and reports its
/// visits to the indexed locations.
///
/// # Safety
/// `locs` must be a live handle; `lats`/`lons` must hold `n` values;
/// `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vloc_analyze_path(
    locs: *const VlocLocations,
    lats: *const f64,
    lons: *const f64,
    n: usize,
    params: *const VlocVisitParams,
    out: *mut VlocPathReport,
) -> VlocStatus {
    guard(|| {
        let locs = locs.as_ref().ok_or_else(|| null("locations"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let waypoints = coords(lats, lons, n)?;
        let path = Path::new(0, MovementKind::Nonrecurring, waypoints, ("start", "end")).map_err(err(VlocStatus::Routing))?;
        let length_m = path.length_m();
        let tp = timestamp_path(path, p.speed, *locs.index.projection()).map_err(err(VlocStatus::Routing))?;
        let ap = AnalysisParams {
            r_v: p.r_v,
            t_v_min: p.t_v_min,
            speed: p.speed,
            ..AnalysisParams::default()
        };
        let report = analyze_path(&tp, &locs.index, &ap).map_err(err(VlocStatus::Analysis))?;
        *out = VlocPathReport {
            length_m,
            duration_s: tp.duration(),
            distinct_visited: report.distinct_visited,
            parallel_median: report.parallel_median,
            parallel_max: report.parallel_max,
            accumulated_s: report.accumulated_seconds,
        };
        Ok(())
    })
}

/// Percentage of a bounding box within `r_v` of any indexed location, on a
/// raster of `raster_m` cells.
///
/// # Safety
/// `locs` must be a live handle; `out_percent` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn vloc_coverage_percent(
    locs: *const VlocLocations,
    min_lat: f64,
    max_lat: f64,
    min_lon: f64,
    max_lon: f64,
    r_v: f64,
    raster_m: f64,
    out_percent: *mut f64,
) -> VlocStatus {
    guard(|| {
        let locs = locs.as_ref().ok_or_else(|| null("locations"))?;
        if out_percent.is_null() {
            return Err(null("out_percent"));
        }
        let region = Region::bbox(min_lat, max_lat, min_lon, max_lon).map_err(err(VlocStatus::Geo))?;
        let res = coverage_percent(&locs.coords, &region, r_v, raster_m).map_err(err(VlocStatus::Coverage))?;
        *out_percent = res.percent;
        Ok(())
    })
}
