//! Grid crawl against a places provider.
//!
//! 1. lay grid points at a fixed resolution over the region,
//! 2. radar-search each point with a radius that makes neighbouring disks overlap,
//! 3. fetch details for every distinct id,
//! 4. deduplicate by id.
//!
//! Completed cells and fetched places are appended to a JSONL checkpoint so
//! an interrupted crawl resumes without repeating detail requests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::io::PlaceRecord;
use super::{DatasetError, Place, PlaceSet};
use crate::geo::{haversine_distance, GeoCoordinate, PlanarPoint, Region};

/// Result cap of a typical radar search endpoint.
pub const DEFAULT_RESULT_CAP: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unknown place id {0:?}")]
    NotFound(String),
}

/// The seam to a places backend.
pub trait PlacesProvider: Sync {
    /// Ids of places within `radius_m` of `center`, at most [`result_cap`](Self::result_cap) of them.
    fn radar_search(&self, center: GeoCoordinate, radius_m: f64) -> Result<Vec<String>, ProviderError>;

    fn place_details(&self, id: &str) -> Result<Place, ProviderError>;

    fn result_cap(&self) -> usize {
        DEFAULT_RESULT_CAP
    }
}

/// In-memory provider backed by a fixed place list. Counts every request
/// and can inject failures; also serves as the file-backed provider.
#[derive(Debug)]
pub struct MockProvider {
    places: Vec<Place>,
    by_id: HashMap<String, usize>,
    cap: usize,
    radar_calls: AtomicUsize,
    details_ledger: Mutex<BTreeMap<String, usize>>,
    flaky_radar: AtomicUsize,
    dead_zones: Vec<(GeoCoordinate, f64)>,
    flaky_details: Mutex<HashMap<String, usize>>,
    dead_ids: HashSet<String>,
}

impl MockProvider {
    pub fn new(places: Vec<Place>) -> Self {
        let by_id = places.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        Self {
            places,
            by_id,
            cap: DEFAULT_RESULT_CAP,
            radar_calls: AtomicUsize::new(0),
            details_ledger: Mutex::new(BTreeMap::new()),
            flaky_radar: AtomicUsize::new(0),
            dead_zones: Vec::new(),
            flaky_details: Mutex::new(HashMap::new()),
            dead_ids: HashSet::new(),
        }
    }

    pub fn from_set(set: &PlaceSet) -> Self {
        Self::new(set.places().to_vec())
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// The next `n` radar requests fail with a transport error.
    pub fn with_flaky_radar(self, n: usize) -> Self {
        self.flaky_radar.store(n, Ordering::SeqCst);
        self
    }

    /// Radar requests centred within `radius_m` of `center` always fail.
    pub fn with_dead_zone(mut self, center: GeoCoordinate, radius_m: f64) -> Self {
        self.dead_zones.push((center, radius_m));
        self
    }

    /// The next `n` detail requests for `id` fail.
    pub fn with_flaky_details(self, id: &str, n: usize) -> Self {
        self.flaky_details.lock().unwrap().insert(id.to_string(), n);
        self
    }

    /// Detail requests for `id` always fail.
    pub fn with_dead_id(mut self, id: &str) -> Self {
        self.dead_ids.insert(id.to_string());
        self
    }

    pub fn radar_calls(&self) -> usize {
        self.radar_calls.load(Ordering::SeqCst)
    }

    /// Detail requests per id, including failed ones.
    pub fn details_ledger(&self) -> BTreeMap<String, usize> {
        self.details_ledger.lock().unwrap().clone()
    }
}

impl PlacesProvider for MockProvider {
    fn radar_search(&self, center: GeoCoordinate, radius_m: f64) -> Result<Vec<String>, ProviderError> {
        self.radar_calls.fetch_add(1, Ordering::SeqCst);
        if self
            .flaky_radar
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ProviderError::Transport("injected radar failure".into()));
        }
        if self.dead_zones.iter().any(|(c, r)| haversine_distance(*c, center) <= *r) {
            return Err(ProviderError::Transport("radar endpoint unreachable".into()));
        }
        let mut hits: Vec<(f64, &str)> = self
            .places
            .iter()
            .filter_map(|p| {
                let d = haversine_distance(center, p.geo);
                (d <= radius_m).then_some((d, p.id.as_str()))
            })
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        Ok(hits.into_iter().take(self.cap).map(|(_, id)| id.to_string()).collect())
    }

    fn place_details(&self, id: &str) -> Result<Place, ProviderError> {
        *self.details_ledger.lock().unwrap().entry(id.to_string()).or_default() += 1;
        if self.dead_ids.contains(id) {
            return Err(ProviderError::Transport(format!("details for {id} unavailable")));
        }
        {
            let mut flaky = self.flaky_details.lock().unwrap();
            if let Some(n) = flaky.get_mut(id) {
                if *n > 0 {
                    *n -= 1;
                    return Err(ProviderError::Transport("injected details failure".into()));
                }
            }
        }
        self.by_id
            .get(id)
            .map(|&i| self.places[i].clone())
            .ok_or_else(|| ProviderError::NotFound(id.to_string()))
    }

    fn result_cap(&self) -> usize {
        self.cap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Truncated,
    Failed,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Truncated => "truncated",
            CellStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub i: usize,
    pub j: usize,
    pub status: CellStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CrawlOptions {
    pub grid_resolution_m: f64,
    /// Extra fraction on top of the half cell diagonal.
    pub radius_margin: f64,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub parallelism: usize,
    /// Minimum spacing between any two provider requests.
    pub min_request_interval: Duration,
    pub checkpoint: Option<PathBuf>,
}

impl CrawlOptions {
    pub fn new(grid_resolution_m: f64) -> Self {
        Self {
            grid_resolution_m,
            radius_margin: 0.1,
            max_attempts: 4,
            backoff_base: Duration::from_millis(200),
            parallelism: 4,
            min_request_interval: Duration::ZERO,
            checkpoint: None,
        }
    }

    pub fn search_radius(&self) -> f64 {
        self.grid_resolution_m * std::f64::consts::SQRT_2 / 2.0 * (1.0 + self.radius_margin)
    }
}

#[derive(Debug, Clone)]
pub struct CrawlOutcome {
    pub places: PlaceSet,
    /// One entry per grid cell, ordered by `(i, j)`.
    pub cells: Vec<CellReport>,
    /// Detail requests issued by this run (retries included).
    pub detail_requests: usize,
}

impl CrawlOutcome {
    pub fn count(&self, status: CellStatus) -> usize {
        self.cells.iter().filter(|c| c.status == status).count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LedgerEntry {
    Cell {
        i: usize,
        j: usize,
        status: CellStatus,
        ids: Vec<String>,
    },
    Place {
        place: PlaceRecord,
    },
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

fn with_retries<T>(
    opts: &CrawlOptions,
    limiter: &RateLimiter,
    requests: &AtomicUsize,
    mut f: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let attempts = opts.max_attempts.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        if attempt > 0 && !opts.backoff_base.is_zero() {
            std::thread::sleep(opts.backoff_base * 2u32.saturating_pow(attempt - 1));
        }
        limiter.wait();
        requests.fetch_add(1, Ordering::Relaxed);
        match f() {
            Ok(v) => return Ok(v),
            // Missing ids will not appear on retry.
            Err(e @ ProviderError::NotFound(_)) => return Err(e),
            Err(e) => {
                log::debug!("provider request failed (attempt {}): {e}", attempt + 1);
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

struct Checkpoint {
    file: Option<File>,
    path: PathBuf,
}

impl Checkpoint {
    fn append(&mut self, entry: &LedgerEntry) -> Result<(), DatasetError> {
        if let Some(f) = &mut self.file {
            let line = serde_json::to_string(entry).expect("ledger entry serializes");
            writeln!(f, "{line}").map_err(|source| DatasetError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), DatasetError> {
        if let Some(f) = &mut self.file {
            f.flush().map_err(|source| DatasetError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }
}

type Resumed = (BTreeMap<(usize, usize), (CellStatus, Vec<String>)>, BTreeMap<String, Place>);

fn load_checkpoint(path: &Path) -> Result<Resumed, DatasetError> {
    let mut cells = BTreeMap::new();
    let mut fetched = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((cells, fetched)),
        Err(source) => {
            return Err(DatasetError::Io {
                path: path.display().to_string(),
                source,
            })
        }
    };
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line from an interrupted write is ignored.
        let Ok(entry) = serde_json::from_str::<LedgerEntry>(&line) else {
            log::warn!("{}: ignoring unreadable checkpoint line {}", path.display(), k + 1);
            continue;
        };
        match entry {
            LedgerEntry::Cell { i, j, status, ids } => {
                cells.insert((i, j), (status, ids));
            }
            LedgerEntry::Place { place } => {
                if let Ok(p) = place.into_place() {
                    fetched.insert(p.id.clone(), p);
                }
            }
        }
    }
    Ok((cells, fetched))
}

/// Grid cells `(i, j)` with their centres; cells not touching the region
/// polygon are skipped.
pub fn grid_cells(region: &Region, resolution: f64) -> Vec<(usize, usize, GeoCoordinate)> {
    let proj = region.projection();
    let (sw, ne) = region.planar_bounds();
    let nx = ((ne.x - sw.x) / resolution).ceil().max(1.0) as usize;
    let ny = ((ne.y - sw.y) / resolution).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let lo = PlanarPoint::new(sw.x + i as f64 * resolution, sw.y + j as f64 * resolution);
            let hi = PlanarPoint::new(lo.x + resolution, lo.y + resolution);
            if !region.intersects_rect(lo, hi) {
                continue;
            }
            let center = PlanarPoint::new(lo.x + resolution / 2.0, lo.y + resolution / 2.0);
            if let Ok(c) = proj.unproject(center) {
                out.push((i, j, c));
            }
        }
    }
    out
}

pub fn crawl_places(
    provider: &dyn PlacesProvider,
    region: &Region,
    opts: &CrawlOptions,
) -> Result<CrawlOutcome, DatasetError> {
    if !(opts.grid_resolution_m.is_finite() && opts.grid_resolution_m > 0.0) {
        return Err(DatasetError::Schema {
            path: "<crawl options>".into(),
            line: 0,
            message: format!("grid resolution {} must be positive", opts.grid_resolution_m),
        });
    }
    let (mut done_cells, mut fetched) = match &opts.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => Default::default(),
    };
    let mut checkpoint = Checkpoint {
        file: match &opts.checkpoint {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p).map_err(|source| {
                DatasetError::Io {
                    path: p.display().to_string(),
                    source,
                }
            })?),
            None => None,
        },
        path: opts.checkpoint.clone().unwrap_or_default(),
    };
    let limiter = RateLimiter {
        interval: opts.min_request_interval,
        next: Mutex::new(Instant::now()),
    };
    let radar_requests = AtomicUsize::new(0);
    let detail_requests = AtomicUsize::new(0);
    let radius = opts.search_radius();
    let cap = provider.result_cap();

    let mut cells: BTreeMap<(usize, usize), CellReport> = BTreeMap::new();
    let mut found_by: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, j, center) in grid_cells(region, opts.grid_resolution_m) {
        let ids = match done_cells.remove(&(i, j)) {
            Some((status, ids)) if status != CellStatus::Failed => {
                cells.insert((i, j), CellReport { i, j, status, error: None });
                ids
            }
            _ => match with_retries(opts, &limiter, &radar_requests, || provider.radar_search(center, radius)) {
                Ok(ids) => {
                    let status = if ids.len() >= cap {
                        CellStatus::Truncated
                    } else {
                        CellStatus::Ok
                    };
                    checkpoint.append(&LedgerEntry::Cell {
                        i,
                        j,
                        status,
                        ids: ids.clone(),
                    })?;
                    cells.insert((i, j), CellReport { i, j, status, error: None });
                    ids
                }
                Err(e) => {
                    cells.insert(
                        (i, j),
                        CellReport {
                            i,
                            j,
                            status: CellStatus::Failed,
                            error: Some(e.to_string()),
                        },
                    );
                    Vec::new()
                }
            },
        };
        for id in ids {
            found_by.entry(id).or_default().push((i, j));
        }
    }
    checkpoint.flush()?;

    let pending: Vec<String> = found_by.keys().filter(|id| !fetched.contains_key(*id)).cloned().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .expect("thread pool");
    for chunk in pending.chunks(64) {
        let results: Vec<(String, Result<Place, ProviderError>)> = pool.install(|| {
            chunk
                .par_iter()
                .map(|id| {
                    let r = with_retries(opts, &limiter, &detail_requests, || provider.place_details(id));
                    (id.clone(), r)
                })
                .collect()
        });
        for (id, r) in results {
            match r {
                Ok(place) if place.id == id => {
                    checkpoint.append(&LedgerEntry::Place {
                        place: PlaceRecord::from(&place),
                    })?;
                    fetched.insert(id, place);
                }
                Ok(place) => {
                    mark_failed(&mut cells, &found_by[&id], format!("details for {id} returned id {}", place.id));
                }
                Err(e) => mark_failed(&mut cells, &found_by[&id], format!("details for {id}: {e}")),
            }
        }
        checkpoint.flush()?;
    }

    let places: Vec<Place> = found_by
        .keys()
        .filter_map(|id| fetched.get(id))
        .filter(|p| region.contains(p.geo))
        .cloned()
        .collect();
    Ok(CrawlOutcome {
        places: PlaceSet::new(places)?,
        cells: cells.into_values().collect(),
        detail_requests: detail_requests.load(Ordering::Relaxed),
    })
}

fn mark_failed(cells: &mut BTreeMap<(usize, usize), CellReport>, at: &[(usize, usize)], msg: String) {
    if let Some(first) = at.first() {
        if let Some(c) = cells.get_mut(first) {
            c.status = CellStatus::Failed;
            c.error.get_or_insert(msg);
        }
    }
}

/// `cell_i,cell_j,status`
pub fn write_crawl_report<W: Write>(cells: &[CellReport], writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cell_i", "cell_j", "status"])?;
    for c in cells {
        w.write_record([c.i.to_string().as_str(), &c.j.to_string(), c.status.as_str()])?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "<crawl report>".into(),
        source,
    })
}
