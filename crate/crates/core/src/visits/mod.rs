//! Visits of a walking user at virtual locations: exact entry/exit times
//! against a radius, concurrent-visit step series and per-path summaries.

pub mod analysis;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoCoordinate, PlanarPoint, SpatialIndex};
use crate::routing::{TimedPath, DEFAULT_WALKING_SPEED};

/// Sub-intervals closer than this are merged.
pub const MERGE_GAP_S: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisitError {
    #[error("path projected around {path} but index around {index}")]
    OriginMismatch { path: GeoCoordinate, index: GeoCoordinate },
    #[error("invalid analysis parameter {name} = {value}: must be positive")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("cannot aggregate an empty set of path reports")]
    EmptyAggregate,
    #[error("sweep list {0} is empty")]
    EmptySweep(&'static str),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    /// Vicinity radius, meters.
    pub r_v: f64,
    /// Minimum visiting time, seconds.
    pub t_v_min: f64,
    /// Maximum path length, kilometers.
    pub l_max: f64,
    /// Walking speed, m/s.
    pub speed: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            r_v: 100.0,
            t_v_min: 60.0,
            l_max: 3.0,
            speed: DEFAULT_WALKING_SPEED,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<(), VisitError> {
        for (name, value) in [("r_v", self.r_v), ("t_v_min", self.t_v_min), ("l_max", self.l_max), ("speed", self.speed)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(VisitError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitInterval {
    /// Item number of the location in the index.
    pub location: usize,
    pub t_enter: f64,
    pub t_exit: f64,
}

impl VisitInterval {
    pub fn duration(&self) -> f64 {
        self.t_exit - self.t_enter
    }
}

/// Times in `[t0, t1]` at which the point moving linearly from `a` to `b`
/// is within `r` of `c`.
fn segment_disk_interval(a: PlanarPoint, b: PlanarPoint, t0: f64, t1: f64, c: PlanarPoint, r: f64) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (fx, fy) = (a.x - c.x, a.y - c.y);
    let qa = dx * dx + dy * dy;
    let qb = 2.0 * (fx * dx + fy * dy);
    let qc = fx * fx + fy * fy - r * r;
    if qa == 0.0 {
        return (qc <= 0.0).then_some((t0, t1));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Cancellation-free pair of roots.
    let q = -0.5 * (qb + qb.signum() * sq);
    let (mut s0, mut s1) = if q == 0.0 { (0.0, 0.0) } else { (q / qa, qc / q) };
    if s0 > s1 {
        std::mem::swap(&mut s0, &mut s1);
    }
    let (s0, s1) = (s0.max(0.0), s1.min(1.0));
    if s0 > s1 {
        return None;
    }
    Some((t0 + s0 * (t1 - t0), t0 + s1 * (t1 - t0)))
}

/// Maximal presence intervals per location, before the minimum-time
/// filter. Ordered by `(t_enter, location)`.
pub fn presence_intervals(tp: &TimedPath, index: &SpatialIndex, r_v: f64) -> Result<Vec<VisitInterval>, VisitError> {
    if tp.projection.origin() != index.origin() {
        return Err(VisitError::OriginMismatch {
            path: tp.projection.origin(),
            index: index.origin(),
        });
    }
    let mut per_loc: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for k in 1..tp.planar.len() {
        let (a, b) = (tp.planar[k - 1], tp.planar[k]);
        let lo = PlanarPoint::new(a.x.min(b.x) - r_v, a.y.min(b.y) - r_v);
        let hi = PlanarPoint::new(a.x.max(b.x) + r_v, a.y.max(b.y) + r_v);
        for loc in index.query_planar_box(lo, hi) {
            if let Some(iv) = segment_disk_interval(a, b, tp.arrival[k - 1], tp.arrival[k], index.planar(loc), r_v) {
                per_loc.entry(loc).or_default().push(iv);
            }
        }
    }
    let mut out = Vec::new();
    for (loc, mut ivs) in per_loc {
        ivs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut cur = ivs[0];
        for iv in ivs.into_iter().skip(1) {
            if iv.0 <= cur.1 + MERGE_GAP_S {
                cur.1 = cur.1.max(iv.1);
            } else {
                out.push(VisitInterval { location: loc, t_enter: cur.0, t_exit: cur.1 });
                cur = iv;
            }
        }
        out.push(VisitInterval { location: loc, t_enter: cur.0, t_exit: cur.1 });
    }
    sort_intervals(&mut out);
    Ok(out)
}

fn sort_intervals(v: &mut [VisitInterval]) {
    v.sort_by(|x, y| x.t_enter.total_cmp(&y.t_enter).then(x.location.cmp(&y.location)));
}

/// Keeps intervals lasting at least `t_v_min` seconds.
pub fn qualifying(intervals: &[VisitInterval], t_v_min: f64) -> Vec<VisitInterval> {
    intervals.iter().copied().filter(|iv| iv.duration() >= t_v_min).collect()
}

/// Qualifying visits along a timed path.
pub fn detect_visits(tp: &TimedPath, index: &SpatialIndex, params: &AnalysisParams) -> Result<Vec<VisitInterval>, VisitError> {
    params.validate()?;
    Ok(qualifying(&presence_intervals(tp, index, params.r_v)?, params.t_v_min))
}

/// Distinct locations with at least one interval.
pub fn visited_location_count(intervals: &[VisitInterval]) -> usize {
    intervals.iter().map(|iv| iv.location).collect::<BTreeSet<_>>().len()
}

/// Piecewise-constant count of concurrent visits. The value is 0 before
/// the first breakpoint and becomes `values[i]` at `breakpoints[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSeries {
    pub breakpoints: Vec<f64>,
    pub values: Vec<u32>,
}

impl StepSeries {
    pub fn value_at(&self, t: f64) -> u32 {
        match self.breakpoints.partition_point(|b| *b <= t) {
            0 => 0,
            k => self.values[k - 1],
        }
    }

    pub fn max(&self) -> u32 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// `(value, time spent at value)` over `[0, duration]`, ascending by value.
    pub fn time_at_values(&self, duration: f64) -> BTreeMap<u32, f64> {
        let mut acc = BTreeMap::new();
        let mut prev_t = 0.0;
        let mut prev_v = 0;
        for (b, v) in self.breakpoints.iter().zip(&self.values) {
            let b = b.clamp(0.0, duration);
            *acc.entry(prev_v).or_insert(0.0) += b - prev_t;
            prev_t = b;
            prev_v = *v;
        }
        *acc.entry(prev_v).or_insert(0.0) += (duration - prev_t).max(0.0);
        acc.retain(|_, t| *t > 0.0);
        acc
    }

    /// Integral of the series over `[0, duration]`.
    pub fn integral(&self, duration: f64) -> f64 {
        self.time_at_values(duration).iter().map(|(v, t)| *v as f64 * t).sum()
    }
}

pub fn parallel_visits_series(intervals: &[VisitInterval]) -> StepSeries {
    let mut events: Vec<(f64, i64)> = Vec::with_capacity(2 * intervals.len());
    for iv in intervals {
        events.push((iv.t_enter, 1));
        events.push((iv.t_exit, -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut series = StepSeries::default();
    let mut level: i64 = 0;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            level += events[i].1;
            i += 1;
        }
        let prev = series.values.last().copied().unwrap_or(0) as i64;
        if level != prev {
            series.breakpoints.push(t);
            series.values.push(level as u32);
        }
    }
    series
}

/// Time-weighted median and maximum of the series over `[0, duration]`.
///
/// When the half-duration mark falls exactly between two values, the
/// midpoint of the two is returned.
pub fn parallel_visits_summary(series: &StepSeries, duration: f64) -> (f64, u32) {
    if !(duration > 0.0) {
        return (0.0, series.max());
    }
    let times = series.time_at_values(duration);
    let half = duration / 2.0;
    let mut below = 0.0;
    let mut low = None;
    let mut high = 0;
    for (&v, &t) in &times {
        // `below` is the time spent strictly under v.
        if below <= half {
            high = v;
        }
        below += t;
        if low.is_none() && below >= half {
            low = Some(v);
        }
    }
    let low = low.unwrap_or(high);
    let median = if high > low { (low + high) as f64 / 2.0 } else { low as f64 };
    (median, series.max())
}

/// Sum of interval durations; simultaneous visits count multiply.
pub fn accumulated_visiting_time(intervals: &[VisitInterval]) -> f64 {
    intervals.iter().fold(0.0, |acc, iv| acc + iv.duration())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathVisitReport {
    pub path_id: usize,
    pub intervals: Vec<VisitInterval>,
    pub distinct_visited: usize,
    pub parallel_median: f64,
    pub parallel_max: u32,
    pub accumulated_seconds: f64,
}

impl PathVisitReport {
    pub fn from_intervals(path_id: usize, intervals: Vec<VisitInterval>, duration: f64) -> Self {
        let series = parallel_visits_series(&intervals);
        let (parallel_median, parallel_max) = parallel_visits_summary(&series, duration);
        Self {
            path_id,
            distinct_visited: visited_location_count(&intervals),
            parallel_median,
            parallel_max,
            accumulated_seconds: accumulated_visiting_time(&intervals),
            intervals,
        }
    }
}

pub fn analyze_path(tp: &TimedPath, index: &SpatialIndex, params: &AnalysisParams) -> Result<PathVisitReport, VisitError> {
    let intervals = detect_visits(tp, index, params)?;
    Ok(PathVisitReport::from_intervals(tp.path.id, intervals, tp.duration()))
}
