//! Endpoint pairs to polylines, length filtering and constant-speed timing.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, GeoCoordinate, GeoError, LocalProjection, PlanarPoint};
use crate::mobility::MovementKind;

/// 5 km/h in m/s.
pub const DEFAULT_WALKING_SPEED: f64 = 5_000.0 / 3_600.0;
pub const DEFAULT_CDF_BIN_KM: f64 = 0.25;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("no recorded route from {start} to {end}")]
    MissingRoute { start: String, end: String },
    #[error("route from {start} to {end} has zero length")]
    DegeneratePath { start: String, end: String },
    #[error("invalid route from {start} to {end}: {reason}")]
    InvalidRoute { start: String, end: String, reason: String },
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("maximum path length must be positive, got {0}")]
    InvalidMaxLength(f64),
    #[error("{path}: line {line}: {message}")]
    Format { path: String, line: u64, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A place as seen by a path provider.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub id: &'a str,
    pub geo: GeoCoordinate,
}

/// Source of walking polylines. The returned list starts at `start`, ends
/// at `end` and has at least two points.
pub trait PathProvider: Sync {
    fn route(&self, start: Endpoint<'_>, end: Endpoint<'_>) -> Result<Vec<GeoCoordinate>, RoutingError>;

    fn name(&self) -> &'static str;
}

/// Direct line between the endpoints.
#[derive(Debug, Clone, Copy, Default)]
pub struct StraightLine;

impl PathProvider for StraightLine {
    fn route(&self, start: Endpoint<'_>, end: Endpoint<'_>) -> Result<Vec<GeoCoordinate>, RoutingError> {
        Ok(vec![start.geo, end.geo])
    }

    fn name(&self) -> &'static str {
        "straight"
    }
}

/// East-then-north dogleg: start, the corner at (start.lat, end.lon), end.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridWalk;

impl PathProvider for GridWalk {
    fn route(&self, start: Endpoint<'_>, end: Endpoint<'_>) -> Result<Vec<GeoCoordinate>, RoutingError> {
        let corner = GeoCoordinate::new(start.geo.lat(), end.geo.lon())?;
        let mut pts = vec![start.geo, corner, end.geo];
        pts.dedup();
        Ok(pts)
    }

    fn name(&self) -> &'static str {
        "grid"
    }
}

/// Pre-computed directions keyed by `(start_id, end_id)`.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    routes: HashMap<(String, String), Vec<GeoCoordinate>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReplayRecord {
    start_id: String,
    end_id: String,
    waypoints: Vec<(f64, f64)>,
}

impl ReplayProvider {
    pub fn insert(&mut self, start_id: &str, end_id: &str, waypoints: Vec<GeoCoordinate>) {
        self.routes.insert((start_id.to_string(), end_id.to_string()), waypoints);
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// JSONL, one `{start_id, end_id, waypoints: [[lat, lon], ...]}` per line.
    pub fn read_jsonl<R: BufRead>(reader: R, label: &str) -> Result<Self, RoutingError> {
        let mut out = Self::default();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fmt = |message: String| RoutingError::Format {
                path: label.to_string(),
                line: k as u64 + 1,
                message,
            };
            let rec: ReplayRecord = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
            let pts = rec
                .waypoints
                .iter()
                .map(|&(lat, lon)| GeoCoordinate::new(lat, lon))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| fmt(e.to_string()))?;
            if pts.len() < 2 {
                return Err(fmt("a route needs at least two waypoints".into()));
            }
            out.insert(&rec.start_id, &rec.end_id, pts);
        }
        Ok(out)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), RoutingError> {
        let mut keys: Vec<_> = self.routes.keys().collect();
        keys.sort();
        for k in keys {
            let rec = ReplayRecord {
                start_id: k.0.clone(),
                end_id: k.1.clone(),
                waypoints: self.routes[k].iter().map(|c| (*c).into()).collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable"))?;
        }
        Ok(())
    }
}

impl PathProvider for ReplayProvider {
    fn route(&self, start: Endpoint<'_>, end: Endpoint<'_>) -> Result<Vec<GeoCoordinate>, RoutingError> {
        self.routes
            .get(&(start.id.to_string(), end.id.to_string()))
            .cloned()
            .ok_or_else(|| RoutingError::MissingRoute {
                start: start.id.to_string(),
                end: end.id.to_string(),
            })
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// A polyline with cumulative haversine distance at every waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: usize,
    pub kind: MovementKind,
    pub waypoints: Vec<GeoCoordinate>,
    /// Starts at 0, strictly increasing.
    pub cumulative: Vec<f64>,
}

impl Path {
    /// Validates the waypoint list; consecutive duplicates are removed
    /// and a route collapsing to a single point is rejected.
    pub fn new(id: usize, kind: MovementKind, waypoints: Vec<GeoCoordinate>, labels: (&str, &str)) -> Result<Self, RoutingError> {
        let invalid = |reason: &str| RoutingError::InvalidRoute {
            start: labels.0.to_string(),
            end: labels.1.to_string(),
            reason: reason.to_string(),
        };
        if waypoints.len() < 2 {
            return Err(invalid("fewer than two waypoints"));
        }
        let mut pts: Vec<GeoCoordinate> = Vec::with_capacity(waypoints.len());
        let mut cumulative = Vec::with_capacity(waypoints.len());
        for p in waypoints {
            match pts.last() {
                None => {
                    pts.push(p);
                    cumulative.push(0.0);
                }
                Some(&prev) => {
                    let d = haversine_distance(prev, p);
                    if d > 0.0 {
                        cumulative.push(cumulative.last().copied().unwrap_or(0.0) + d);
                        pts.push(p);
                    }
                }
            }
        }
        if pts.len() < 2 {
            return Err(RoutingError::DegeneratePath {
                start: labels.0.to_string(),
                end: labels.1.to_string(),
            });
        }
        Ok(Self {
            id,
            kind,
            waypoints: pts,
            cumulative,
        })
    }

    pub fn length_m(&self) -> f64 {
        *self.cumulative.last().expect("at least two waypoints")
    }

    pub fn length_km(&self) -> f64 {
        self.length_m() / 1_000.0
    }
}

pub fn route(
    provider: &dyn PathProvider,
    id: usize,
    kind: MovementKind,
    start: Endpoint<'_>,
    end: Endpoint<'_>,
) -> Result<Path, RoutingError> {
    let pts = provider.route(start, end)?;
    if pts.first() != Some(&start.geo) || pts.last() != Some(&end.geo) {
        return Err(RoutingError::InvalidRoute {
            start: start.id.to_string(),
            end: end.id.to_string(),
            reason: "waypoints do not start and end at the endpoints".into(),
        });
    }
    Path::new(id, kind, pts, (start.id, end.id))
}

/// Paths no longer than `l_max_km`, order preserved.
pub fn filter_by_length(paths: &[Path], l_max_km: f64) -> Result<Vec<&Path>, RoutingError> {
    if !(l_max_km > 0.0) {
        return Err(RoutingError::InvalidMaxLength(l_max_km));
    }
    Ok(paths.iter().filter(|p| p.length_km() <= l_max_km).collect())
}

/// A path walked at constant speed, with its waypoints in a local plane.
#[derive(Debug, Clone)]
pub struct TimedPath {
    pub path: Path,
    pub speed: f64,
    /// Seconds at each waypoint; `arrival[0] == 0`.
    pub arrival: Vec<f64>,
    pub projection: LocalProjection,
    pub planar: Vec<PlanarPoint>,
}

impl TimedPath {
    pub fn duration(&self) -> f64 {
        *self.arrival.last().expect("at least two waypoints")
    }

    /// Linear interpolation in the local plane; `t` is clamped to the path.
    pub fn position_at(&self, t: f64) -> PlanarPoint {
        let t = t.clamp(0.0, self.duration());
        let k = match self.arrival.binary_search_by(|a| a.total_cmp(&t)) {
            Ok(i) => return self.planar[i],
            Err(i) => i.clamp(1, self.arrival.len() - 1),
        };
        let (t0, t1) = (self.arrival[k - 1], self.arrival[k]);
        let (a, b) = (self.planar[k - 1], self.planar[k]);
        let f = (t - t0) / (t1 - t0);
        PlanarPoint::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
    }
}

pub fn timestamp_path(path: Path, speed: f64, projection: LocalProjection) -> Result<TimedPath, RoutingError> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(RoutingError::InvalidSpeed(speed));
    }
    let planar = path
        .waypoints
        .iter()
        .map(|p| projection.project(*p))
        .collect::<Result<Vec<_>, _>>()?;
    let arrival = path.cumulative.iter().map(|d| d / speed).collect();
    Ok(TimedPath {
        path,
        speed,
        arrival,
        projection,
        planar,
    })
}

/// `(bin_km, paths with length <= bin)` for bins `w, 2w, ...` up to the
/// first bin holding every path.
pub fn path_length_cdf(lengths_km: &[f64], bin_width_km: f64) -> Vec<(f64, usize)> {
    if lengths_km.is_empty() || !(bin_width_km > 0.0) {
        return Vec::new();
    }
    let max = lengths_km.iter().copied().fold(0.0, f64::max);
    let n_bins = ((max / bin_width_km).ceil() as usize).max(1);
    let mut bins: Vec<f64> = (1..=n_bins).map(|k| k as f64 * bin_width_km).collect();
    if *bins.last().unwrap() < max {
        bins.push((n_bins + 1) as f64 * bin_width_km);
    }
    path_length_cdf_at(lengths_km, &bins)
}

/// Cumulative counts at explicit ascending bin edges.
pub fn path_length_cdf_at(lengths_km: &[f64], bins: &[f64]) -> Vec<(f64, usize)> {
    if lengths_km.is_empty() {
        return Vec::new();
    }
    let mut sorted = lengths_km.to_vec();
    sorted.sort_by(f64::total_cmp);
    bins.iter()
        .map(|&b| (b, sorted.partition_point(|&l| l <= b)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    path_id: usize,
    kind: MovementKind,
    length_m: f64,
    waypoints: Vec<(f64, f64)>,
}

/// JSONL `{path_id, kind, length_m, waypoints: [[lat, lon], ...]}`.
pub fn write_paths_jsonl<'a, W: Write>(paths: impl IntoIterator<Item = &'a Path>, mut w: W) -> Result<(), RoutingError> {
    for p in paths {
        let rec = PathRecord {
            path_id: p.id,
            kind: p.kind,
            length_m: p.length_m(),
            waypoints: p.waypoints.iter().map(|c| (*c).into()).collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable"))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads paths back; lengths are recomputed from the waypoints.
pub fn read_paths_jsonl<R: BufRead>(reader: R, label: &str) -> Result<Vec<Path>, RoutingError> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |message: String| RoutingError::Format {
            path: label.to_string(),
            line: k as u64 + 1,
            message,
        };
        let rec: PathRecord = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
        let pts = rec
            .waypoints
            .iter()
            .map(|&(lat, lon)| GeoCoordinate::new(lat, lon))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| fmt(e.to_string()))?;
        let id = rec.path_id.to_string();
        out.push(Path::new(rec.path_id, rec.kind, pts, (&id, &id)).map_err(|e| fmt(e.to_string()))?);
    }
    Ok(out)
}
