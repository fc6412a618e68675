//! Run configuration: TOML file, command-line overrides, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::coverage::{default_sweep_m, DEFAULT_RASTER_M};
use crate::dataset::synth::SynthSpec;
use crate::geo::Region;
use crate::routing::{DEFAULT_CDF_BIN_KM, DEFAULT_WALKING_SPEED};
use crate::visits::analysis::{Sweep, DEFAULT_MIN_SAMPLE};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_MOVEMENTS_PER_KIND: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Synth,
    Import,
    Crawl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Straight,
    Grid,
    Replay,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Straight => "straight",
            Self::Grid => "grid",
            Self::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    /// Places file served by the file-backed provider.
    pub provider_path: Option<PathBuf>,
    pub grid_resolution_m: f64,
    pub result_cap: usize,
    pub max_attempts: u32,
    pub parallelism: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            provider_path: None,
            grid_resolution_m: 500.0,
            result_cap: crate::dataset::crawl::DEFAULT_RESULT_CAP,
            max_attempts: 4,
            parallelism: 4,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label used in every output table.
    pub name: Option<String>,
    pub source: SourceKind,
    /// Import source; `.jsonl` selects JSON lines, anything else CSV.
    pub path: Option<PathBuf>,
    pub synth: SynthSpec,
    pub crawl: CrawlConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub epsilon: f64,
    /// Movements per kind.
    pub count: usize,
    /// Category sizes for the transition matrix; defaults to the place counts.
    pub counts: Option<[usize; 5]>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            count: DEFAULT_MOVEMENTS_PER_KIND,
            counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub provider: ProviderKind,
    pub replay_path: Option<PathBuf>,
    /// m/s
    pub speed: f64,
    pub cdf_bin_km: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Straight,
            replay_path: None,
            speed: DEFAULT_WALKING_SPEED,
            cdf_bin_km: DEFAULT_CDF_BIN_KM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub r_v: Vec<f64>,
    pub t_v_min: Vec<f64>,
    pub l_max: Vec<f64>,
    pub raster_m: f64,
    pub square_sides: Vec<f64>,
    pub min_sample: usize,
    /// Also write one per-path table per parameter combination.
    pub per_path: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let s = Sweep::default();
        Self {
            r_v: s.r_v,
            t_v_min: s.t_v_min,
            l_max: s.l_max,
            raster_m: DEFAULT_RASTER_M,
            square_sides: default_sweep_m(),
            min_sample: DEFAULT_MIN_SAMPLE,
            per_path: false,
        }
    }
}

impl AnalysisConfig {
    pub fn sweep(&self) -> Sweep {
        Sweep {
            r_v: self.r_v.clone(),
            t_v_min: self.t_v_min.clone(),
            l_max: self.l_max.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the recorded experiment.
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub dataset: DatasetConfig,
    /// Area for coverage and occupancy; see [`RunConfig::analysis_region`].
    pub region: Option<Region>,
    pub mobility: MobilityConfig,
    pub routing: RoutingConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            output: None,
            threads: None,
            dataset: DatasetConfig::default(),
            region: None,
            mobility: MobilityConfig::default(),
            routing: RoutingConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Defaults, then the file (if any), then the overrides; validated.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        if let Some(s) = ov.seed {
            cfg.seed = s;
        }
        if let Some(o) = &ov.output {
            cfg.output = Some(o.clone());
        }
        if let Some(t) = ov.threads {
            cfg.threads = Some(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        let m = &self.mobility;
        if !(m.epsilon > 0.0 && m.epsilon < 1.0) {
            return bad(format!("mobility.epsilon = {} must lie in (0, 1)", m.epsilon));
        }
        if m.count == 0 {
            return bad("mobility.count must be positive".into());
        }
        let r = &self.routing;
        if !(r.speed.is_finite() && r.speed > 0.0) {
            return bad(format!("routing.speed = {} must be positive", r.speed));
        }
        if !(r.cdf_bin_km.is_finite() && r.cdf_bin_km > 0.0) {
            return bad(format!("routing.cdf_bin_km = {} must be positive", r.cdf_bin_km));
        }
        if r.provider == ProviderKind::Replay && r.replay_path.is_none() {
            return bad("routing.provider = \"replay\" needs routing.replay_path".into());
        }
        let a = &self.analysis;
        a.sweep().validate().map_err(|e| CliError::Usage(format!("analysis: {e}")))?;
        if a.square_sides.is_empty() || a.square_sides.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("analysis.square_sides must be a non-empty list of positive lengths".into());
        }
        let min_r = a.r_v.iter().copied().fold(f64::INFINITY, f64::min);
        if !(a.raster_m > 0.0 && a.raster_m <= min_r / 2.0) {
            return bad(format!(
                "analysis.raster_m = {} must be positive and at most half the smallest r_v ({min_r})",
                a.raster_m
            ));
        }
        let d = &self.dataset;
        match d.source {
            SourceKind::Synth => d
                .synth
                .validate()
                .map_err(|e| CliError::Usage(format!("dataset.synth: {e}")))?,
            SourceKind::Import if d.path.is_none() => return bad("dataset.source = \"import\" needs dataset.path".into()),
            SourceKind::Crawl => {
                if d.crawl.provider_path.is_none() {
                    return bad("dataset.source = \"crawl\" needs dataset.crawl.provider_path".into());
                }
                if self.region.is_none() {
                    return bad("dataset.source = \"crawl\" needs a [region]".into());
                }
                if !(d.crawl.grid_resolution_m > 0.0) || d.crawl.max_attempts == 0 || d.crawl.parallelism == 0 {
                    return bad("dataset.crawl: resolution, attempts and parallelism must be positive".into());
                }
            }
            SourceKind::Import => {}
        }
        if self.threads == Some(0) {
            return bad("--threads must be positive".into());
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.dataset.name {
            return n.clone();
        }
        match (self.dataset.source, &self.dataset.path) {
            (SourceKind::Import, Some(p)) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "imported".into()),
            (SourceKind::Crawl, _) => "crawled".into(),
            _ => "synthetic".into(),
        }
    }

    /// The configured `[region]`, else the synthetic city's region; `None`
    /// means the padded box around the places.
    pub fn analysis_region(&self) -> Option<Region> {
        self.region.clone().or_else(|| {
            (self.dataset.source == SourceKind::Synth).then(|| self.dataset.synth.region.clone())
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("vloc-out"))
    }

    /// SHA-256 of the recorded configuration, hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.mobility.epsilon, 0.1);
        assert_eq!(c.mobility.count, 5_000);
        assert_eq!(c.analysis.t_v_min, vec![60.0]);
        assert_eq!(c.analysis.l_max, vec![3.0]);
        assert_eq!(c.analysis.r_v.len(), 10);
        assert_eq!(c.dataset_name(), "synthetic");
        assert!(c.analysis_region().is_some());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\n[mobility]\nepsilon = 0.2\ncount = 10\n").unwrap();
        let c = RunConfig::load(Some(&path), &Overrides::default()).unwrap();
        assert_eq!((c.seed, c.mobility.epsilon, c.mobility.count), (5, 0.2, 10));
        assert_eq!(c.routing.speed, DEFAULT_WALKING_SPEED);
        let ov = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        assert_eq!(RunConfig::load(Some(&path), &ov).unwrap().seed, 9);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[mobility]\nepsilon = 1.0",
            "[mobility]\nepsilon = 0.0",
            "[routing]\nspeed = 0.0",
            "[analysis]\nr_v = []",
            "[analysis]\nraster_m = 20.0",
            "[dataset]\nsource = \"import\"",
            "[dataset]\nsource = \"crawl\"",
            "[routing]\nprovider = \"replay\"",
            "unknown_key = 3",
        ] {
            let c = RunConfig::from_toml(text).and_then(|c| c.validate());
            assert!(matches!(c, Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = RunConfig::with_seed(3);
        let h = a.hash();
        assert_eq!(h.len(), 64);
        a.output = Some("elsewhere".into());
        a.threads = Some(2);
        assert_eq!(a.hash(), h);
        a.seed = 4;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::with_seed(11);
        c.mobility.counts = Some([1, 2, 3, 4, 5]);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
