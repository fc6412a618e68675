use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{hex, ProviderKind, RunConfig, SourceKind};
use super::CliError;
use crate::coverage::{
    coverage_percent, fit_power_law, occupancy_histogram, square_occupancy, write_coverage_csv, write_fit_csv,
    write_occupancy_csv,
};
use crate::dataset::crawl::{crawl_places, write_crawl_report, CellStatus, CrawlOptions, MockProvider};
use crate::dataset::io::{import_places, write_csv, PlacesFormat};
use crate::dataset::{dataset_stats, filter_virtual, write_stats_csv, DatasetStats, PlaceSet};
use crate::geo::Region;
use crate::mobility::{
    generate_movements, write_movements_csv, CategoryModel, MovementKind, TransitionMatrix, DEFAULT_STATIONARY_TOL,
};
use crate::routing::{
    path_length_cdf, read_paths_jsonl, route, write_paths_jsonl, Endpoint, GridWalk, Path, PathProvider, ReplayProvider,
    RoutingError, StraightLine,
};
use crate::visits::analysis::{median, run_overlap_analysis, write_overlap_csv, write_per_path_csv, OverlapInput};

pub const PLACES_FILE: &str = "places.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const CRAWL_REPORT_FILE: &str = "crawl_report.csv";
pub const MOVEMENTS_FILE: &str = "movements.csv";
pub const PATHS_FILE: &str = "paths.jsonl";
pub const PATH_CDF_FILE: &str = "path_cdf.csv";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const OCCUPANCY_FILE: &str = "occupancy.csv";
pub const FIT_FILE: &str = "powerlaw_fit.csv";
pub const OVERLAP_FILE: &str = "overlap.csv";
pub const REPORT_FILE: &str = "report.md";
pub const PATH_CDF_CSV_HEADER: &str = "kind,length_bin_km,count";

/// Files are written to a hidden directory inside the output directory
/// and moved into place only once the whole command has succeeded.
struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    committed: bool,
}

impl Staging {
    fn new(out: &FsPath, command: &str) -> std::io::Result<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out)?;
        let dir = out.join(format!(".staging-{command}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
            created_out,
            committed: false,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&self, name: &str) -> std::io::Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    /// Staged file names with their SHA-256, sorted by name.
    fn digests(&self) -> std::io::Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            out.push((name, hex(&Sha256::digest(fs::read(entry.path())?))));
        }
        out.sort();
        Ok(out)
    }

    fn commit(mut self) -> std::io::Result<Vec<String>> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<Result<_, _>>()?;
        names.sort();
        for n in &names {
            fs::rename(self.dir.join(n), self.out.join(n))?;
        }
        fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(names)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
            if self.created_out {
                // Only removes the directory if nothing else is in it.
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
    outputs: Vec<OutputEntry>,
    details: serde_json::Value,
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

fn manifest_name(command: &str) -> String {
    format!("{command}_manifest.json")
}

/// Writes the manifest for everything staged so far and commits.
fn finish(staging: Staging, command: &str, cfg: &RunConfig, details: serde_json::Value) -> std::io::Result<Vec<String>> {
    let outputs = staging
        .digests()?
        .into_iter()
        .map(|(file, sha256)| OutputEntry { file, sha256 })
        .collect();
    let m = Manifest {
        tool: "vloc",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        config: cfg,
        outputs,
        details,
    };
    let mut w = staging.create(&manifest_name(command))?;
    serde_json::to_writer_pretty(&mut w, &m)?;
    writeln!(w)?;
    w.flush()?;
    drop(w);
    staging.commit()
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}"))),
    }
}

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub dataset: String,
    pub stats: DatasetStats,
    pub files: Vec<String>,
}

impl IngestSummary {
    /// Dataset, place count and virtual locations with their share.
    pub fn table(&self) -> String {
        format!(
            "{:<16} {:>10} {:>24}\n{:<16} {:>10} {:>24}",
            "dataset",
            "places",
            "virtual locations",
            self.dataset,
            self.stats.place_count,
            format!("{} ({:.1}%)", self.stats.virtual_count, 100.0 * self.stats.virtual_ratio),
        )
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary, CliError> {
    in_pool(cfg.threads, || ingest_inner(cfg))?
}

fn ingest_inner(cfg: &RunConfig) -> Result<IngestSummary, CliError> {
    let err = |e: &dyn std::fmt::Display| CliError::Ingest(e.to_string());
    let name = cfg.dataset_name();
    let staging = Staging::new(&cfg.output_dir(), "ingest").map_err(|e| err(&e))?;
    let mut details = serde_json::Map::new();
    details.insert("source".into(), json!(cfg.dataset.source));

    let places: PlaceSet = match cfg.dataset.source {
        SourceKind::Synth => crate::dataset::synth::generate_synthetic_city(&cfg.dataset.synth, cfg.seed).map_err(|e| err(&e))?,
        SourceKind::Import => {
            let path = cfg.dataset.path.as_ref().expect("validated");
            let outcome = import_places(path, PlacesFormat::from_path(path)).map_err(|e| err(&e))?;
            for d in &outcome.diagnostics {
                warn!("{}: skipped row {} (line {}): {}", path.display(), d.row, d.line, d.message);
            }
            details.insert("skipped_rows".into(), json!(outcome.diagnostics.len()));
            outcome.places
        }
        SourceKind::Crawl => {
            let c = &cfg.dataset.crawl;
            let path = c.provider_path.as_ref().expect("validated");
            let served = import_places(path, PlacesFormat::from_path(path)).map_err(|e| err(&e))?;
            let provider = MockProvider::from_set(&served.places).with_cap(c.result_cap);
            let mut opts = CrawlOptions::new(c.grid_resolution_m);
            opts.max_attempts = c.max_attempts;
            opts.parallelism = c.parallelism;
            opts.checkpoint = c.checkpoint.clone();
            let region = cfg.region.as_ref().expect("validated");
            let outcome = crawl_places(&provider, region, &opts).map_err(|e| err(&e))?;
            write_crawl_report(&outcome.cells, staging.create(CRAWL_REPORT_FILE).map_err(|e| err(&e))?)
                .map_err(|e| err(&e))?;
            let failed = outcome.count(CellStatus::Failed);
            if failed > 0 {
                warn!("{failed} grid cells failed; rerun with the checkpoint to resume");
            }
            details.insert(
                "cells".into(),
                json!({
                    "ok": outcome.count(CellStatus::Ok),
                    "truncated": outcome.count(CellStatus::Truncated),
                    "failed": failed,
                }),
            );
            outcome.places
        }
    };

    write_csv(&places, staging.create(PLACES_FILE).map_err(|e| err(&e))?).map_err(|e| err(&e))?;
    let stats = dataset_stats(&places);
    write_stats_csv(&name, &stats, staging.create(STATS_FILE).map_err(|e| err(&e))?).map_err(|e| err(&e))?;
    details.insert("stats".into(), json!(stats));
    let files = finish(staging, "ingest", cfg, details.into()).map_err(|e| err(&e))?;
    info!("ingested {} places ({} with websites)", stats.place_count, stats.virtual_count);
    Ok(IngestSummary {
        dataset: name,
        stats,
        files,
    })
}

fn load_places(out: &FsPath) -> Result<PlaceSet, String> {
    let path = out.join(PLACES_FILE);
    if !path.exists() {
        return Err(format!("{} not found; run `vloc ingest` first", path.display()));
    }
    import_places(&path, PlacesFormat::Csv)
        .map(|o| o.places)
        .map_err(|e| e.to_string())
}

fn provider(cfg: &RunConfig) -> Result<Box<dyn PathProvider>, String> {
    Ok(match cfg.routing.provider {
        ProviderKind::Straight => Box::new(StraightLine),
        ProviderKind::Grid => Box::new(GridWalk),
        ProviderKind::Replay => {
            let p = cfg.routing.replay_path.as_ref().expect("validated");
            let f = File::open(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Box::new(ReplayProvider::read_jsonl(BufReader::new(f), &p.display().to_string()).map_err(|e| e.to_string())?)
        }
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    in_pool(cfg.threads, || simulate_inner(cfg).map_err(CliError::Simulate))?
}

fn simulate_inner(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let out = cfg.output_dir();
    let places = load_places(&out)?;
    let provider = provider(cfg)?;
    let model = CategoryModel::from_places(&places);
    let counts = cfg.mobility.counts.unwrap_or_else(|| model.counts());
    let matrix = TransitionMatrix::build(counts, cfg.mobility.epsilon).map_err(|e| s(&e))?;
    let stationary = matrix.stationary(DEFAULT_STATIONARY_TOL).map_err(|e| s(&e))?;

    let mut movements = Vec::new();
    for kind in MovementKind::ALL {
        movements.extend(generate_movements(&model, &matrix, kind, cfg.mobility.count, cfg.seed).map_err(|e| s(&e))?);
    }

    let routed: Vec<Result<Path, RoutingError>> = movements
        .par_iter()
        .enumerate()
        .map(|(idx, m)| {
            let (a, b) = (&places[m.start], &places[m.end]);
            route(
                provider.as_ref(),
                idx,
                m.kind,
                Endpoint { id: &a.id, geo: a.geo },
                Endpoint { id: &b.id, geo: b.geo },
            )
        })
        .collect();
    let mut paths = Vec::with_capacity(routed.len());
    let mut zero_length = 0usize;
    for r in routed {
        match r {
            Ok(p) => paths.push(p),
            Err(RoutingError::DegeneratePath { start, end }) => {
                warn!("dropping zero-length path {start} -> {end}");
                zero_length += 1;
            }
            Err(e) => return Err(e.to_string()),
        }
    }

    let staging = Staging::new(&out, "simulate").map_err(|e| s(&e))?;
    write_movements_csv(&movements, &places, 0, true, staging.create(MOVEMENTS_FILE).map_err(|e| s(&e))?)
        .map_err(|e| s(&e))?;
    write_paths_jsonl(&paths, staging.create(PATHS_FILE).map_err(|e| s(&e))?).map_err(|e| s(&e))?;

    let mut cdf = staging.create(PATH_CDF_FILE).map_err(|e| s(&e))?;
    writeln!(cdf, "{PATH_CDF_CSV_HEADER}").map_err(|e| s(&e))?;
    let mut per_kind = serde_json::Map::new();
    for kind in MovementKind::ALL {
        let lengths: Vec<f64> = paths.iter().filter(|p| p.kind == kind).map(Path::length_km).collect();
        for (bin, count) in path_length_cdf(&lengths, cfg.routing.cdf_bin_km) {
            writeln!(cdf, "{kind},{bin},{count}").map_err(|e| s(&e))?;
        }
        per_kind.insert(
            kind.to_string(),
            json!({
                "movements": movements.iter().filter(|m| m.kind == kind).count(),
                "paths": lengths.len(),
                "median_length_km": median(&lengths),
            }),
        );
    }
    cdf.flush().map_err(|e| s(&e))?;
    drop(cdf);

    let details = json!({
        "epsilon": cfg.mobility.epsilon,
        "provider": cfg.routing.provider.as_str(),
        "category_counts": counts,
        "transition_matrix": matrix.rows(),
        "stationary": stationary.0,
        "zero_length_paths_dropped": zero_length,
        "kinds": per_kind,
    });
    info!("simulated {} movements, {} paths", movements.len(), paths.len());
    finish(staging, "simulate", cfg, details).map_err(|e| s(&e))
}

pub fn analyze(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    in_pool(cfg.threads, || analyze_inner(cfg).map_err(CliError::Analyze))?
}

fn analyze_inner(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let out = cfg.output_dir();
    let name = cfg.dataset_name();
    let a = &cfg.analysis;
    let places = load_places(&out)?;
    let paths_file = out.join(PATHS_FILE);
    let f = File::open(&paths_file).map_err(|e| format!("{}: {e}; run `vloc simulate` first", paths_file.display()))?;
    let paths = read_paths_jsonl(BufReader::new(f), &paths_file.display().to_string()).map_err(|e| s(&e))?;

    let region = match cfg.analysis_region() {
        Some(r) => r,
        None => {
            let pts: Vec<_> = places.iter().map(|p| p.geo).collect();
            Region::enclosing(&pts, 0.0).map_err(|e| s(&e))?
        }
    };
    let locations: Vec<_> = filter_virtual(&places).iter().map(|v| v.geo).collect();

    let coverage = a
        .r_v
        .iter()
        .map(|&r| coverage_percent(&locations, &region, r, a.raster_m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| s(&e))?;
    let occupancy = a
        .square_sides
        .iter()
        .map(|&side| square_occupancy(&locations, &region, side))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| s(&e))?;
    let mut fits = Vec::new();
    let mut unfitted = Vec::new();
    for occ in &occupancy {
        match fit_power_law(&occupancy_histogram(occ)) {
            Ok(f) => fits.push((occ.side, f)),
            Err(e) => {
                warn!("no power-law fit at side {} m: {e}", occ.side);
                unfitted.push(occ.side);
            }
        }
    }

    let input = OverlapInput {
        dataset: &name,
        paths: &paths,
        locations: &locations,
        projection: region.projection(),
        speed: cfg.routing.speed,
        min_sample: a.min_sample,
    };
    let overlap = run_overlap_analysis(&input, &a.sweep(), a.per_path).map_err(|e| s(&e))?;

    let staging = Staging::new(&out, "analyze").map_err(|e| s(&e))?;
    write_coverage_csv(&name, &coverage, staging.create(COVERAGE_FILE).map_err(|e| s(&e))?).map_err(|e| s(&e))?;
    write_occupancy_csv(&name, &occupancy, staging.create(OCCUPANCY_FILE).map_err(|e| s(&e))?).map_err(|e| s(&e))?;
    write_fit_csv(&name, &fits, staging.create(FIT_FILE).map_err(|e| s(&e))?).map_err(|e| s(&e))?;
    write_overlap_csv(&overlap.rows, staging.create(OVERLAP_FILE).map_err(|e| s(&e))?).map_err(|e| s(&e))?;
    for (row, reports) in overlap.rows.iter().zip(&overlap.per_path) {
        let file = format!("per_path_{}_r{}_t{}_l{}.csv", row.kind, row.r_v, row.t_v_min, row.l_max);
        write_per_path_csv(reports, staging.create(&file).map_err(|e| s(&e))?).map_err(|e| s(&e))?;
    }

    let insufficient: Vec<_> = overlap
        .rows
        .iter()
        .filter(|r| r.insufficient)
        .map(|r| json!({"kind": r.kind, "r_v_m": r.r_v, "t_v_min_s": r.t_v_min, "l_max_km": r.l_max, "n_paths": r.n_paths}))
        .collect();
    if !insufficient.is_empty() {
        warn!("{} result rows rest on fewer than {} paths", insufficient.len(), a.min_sample);
    }
    let details = json!({
        "region": region,
        "region_boundary": region.boundary_kind(),
        "virtual_locations": locations.len(),
        "paths": paths.len(),
        "min_sample": a.min_sample,
        "insufficient_sample_rows": insufficient,
        "sides_without_fit": unfitted,
    });
    finish(staging, "analyze", cfg, details).map_err(|e| s(&e))
}

/// Tables summarised by row count only.
const BULK_TABLES: [&str; 2] = [PLACES_FILE, MOVEMENTS_FILE];

pub fn report(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.output_dir();
    let e = |e: &dyn std::fmt::Display| CliError::Report(e.to_string());
    let manifests: Vec<String> = ["ingest", "simulate", "analyze"]
        .iter()
        .map(|c| manifest_name(c))
        .filter(|m| out.join(m).exists())
        .collect();
    if manifests.is_empty() {
        return Err(CliError::Report(format!("no manifests in {}", out.display())));
    }
    let mut tables: Vec<String> = fs::read_dir(&out)
        .map_err(|x| e(&x))?
        .filter_map(|d| d.ok())
        .map(|d| d.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    tables.sort();

    let mut doc = String::from("# vloc run summary\n");
    for m in &manifests {
        let text = fs::read_to_string(out.join(m)).map_err(|x| e(&x))?;
        doc.push_str(&format!("\n## {m}\n\n```json\n{}\n```\n", text.trim_end()));
    }
    for t in &tables {
        let text = fs::read_to_string(out.join(t)).map_err(|x| e(&x))?;
        if BULK_TABLES.contains(&t.as_str()) || t.starts_with("per_path_") {
            let rows = text.lines().count().saturating_sub(1);
            doc.push_str(&format!("\n## {t}\n\n{rows} rows\n"));
        } else {
            doc.push_str(&format!("\n## {t}\n\n```csv\n{}\n```\n", text.trim_end()));
        }
    }
    let staging = Staging::new(&out, "report").map_err(|x| e(&x))?;
    fs::write(staging.path(REPORT_FILE), doc).map_err(|x| e(&x))?;
    staging.commit().map_err(|x| e(&x))?;
    Ok(out.join(REPORT_FILE))
}
