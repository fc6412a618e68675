//! Parameter sweeps over path sets and their aggregate tables.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{presence_intervals, qualifying, PathVisitReport, VisitError, VisitInterval};
use crate::geo::{GeoCoordinate, LocalProjection, SpatialIndex};
use crate::mobility::MovementKind;
use crate::routing::{timestamp_path, Path, RoutingError, TimedPath};

pub const OVERLAP_CSV_HEADER: &str =
    "dataset,kind,r_v_m,t_v_min_s,l_max_km,n_paths,med_visited,med_of_med_parallel,med_of_max_parallel,med_accumulated_s";
pub const PER_PATH_CSV_HEADER: &str = "path_id,distinct_visited,parallel_median,parallel_max,accumulated_s";
/// Rows built from fewer paths are flagged.
pub const DEFAULT_MIN_SAMPLE: usize = 100;

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateStats {
    pub n_paths: usize,
    pub med_visited: f64,
    pub med_of_med_parallel: f64,
    pub med_of_max_parallel: f64,
    pub med_accumulated_s: f64,
}

pub fn aggregate_reports(reports: &[PathVisitReport]) -> Result<AggregateStats, VisitError> {
    let col = |f: &dyn Fn(&PathVisitReport) -> f64| median(&reports.iter().map(f).collect::<Vec<_>>()).ok_or(VisitError::EmptyAggregate);
    Ok(AggregateStats {
        n_paths: reports.len(),
        med_visited: col(&|r| r.distinct_visited as f64)?,
        med_of_med_parallel: col(&|r| r.parallel_median)?,
        med_of_max_parallel: col(&|r| r.parallel_max as f64)?,
        med_accumulated_s: col(&|r| r.accumulated_seconds)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub r_v: Vec<f64>,
    pub t_v_min: Vec<f64>,
    pub l_max: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            r_v: (1..=10).map(|k| 25.0 * k as f64).collect(),
            t_v_min: vec![60.0],
            l_max: vec![3.0],
        }
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<(), VisitError> {
        for (name, list) in [("r_v", &self.r_v), ("t_v_min", &self.t_v_min), ("l_max", &self.l_max)] {
            if list.is_empty() {
                return Err(VisitError::EmptySweep(name));
            }
            if let Some(&value) = list.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(VisitError::InvalidParam { name, value });
            }
        }
        Ok(())
    }

    pub fn combinations(&self) -> usize {
        self.r_v.len() * self.t_v_min.len() * self.l_max.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRow {
    pub dataset: String,
    pub kind: MovementKind,
    pub r_v: f64,
    pub t_v_min: f64,
    pub l_max: f64,
    pub n_paths: usize,
    /// `None` when no path survives the length filter.
    pub stats: Option<AggregateStats>,
    pub insufficient: bool,
}

#[derive(Debug, Clone)]
pub struct OverlapInput<'a> {
    pub dataset: &'a str,
    pub paths: &'a [Path],
    pub locations: &'a [GeoCoordinate],
    /// Shared plane for paths and locations.
    pub projection: LocalProjection,
    pub speed: f64,
    pub min_sample: usize,
}

#[derive(Debug, Clone, Default)]
pub struct OverlapOutput {
    pub rows: Vec<OverlapRow>,
    /// Per-path reports for each row, when requested.
    pub per_path: Vec<Vec<PathVisitReport>>,
}

/// Rows ordered by kind, then `r_v`, `t_v_min`, `l_max` in sweep order.
/// Only kinds present in the path set produce rows.
pub fn run_overlap_analysis(input: &OverlapInput<'_>, sweep: &Sweep, keep_per_path: bool) -> Result<OverlapOutput, VisitError> {
    sweep.validate()?;
    if !(input.speed.is_finite() && input.speed > 0.0) {
        return Err(VisitError::InvalidParam { name: "speed", value: input.speed });
    }
    let timed: Vec<TimedPath> = input
        .paths
        .par_iter()
        .map(|p| timestamp_path(p.clone(), input.speed, input.projection))
        .collect::<Result<_, RoutingError>>()
        .map_err(|e| VisitError::Input(e.to_string()))?;

    // Presence intervals do not depend on t_v_min or l_max: one pass per radius.
    let presence: Vec<Vec<Vec<VisitInterval>>> = sweep
        .r_v
        .iter()
        .map(|&r| {
            let index = SpatialIndex::build(input.projection.origin(), r, input.locations)
                .map_err(|e| VisitError::Input(e.to_string()))?;
            timed
                .par_iter()
                .map(|tp| presence_intervals(tp, &index, r))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut out = OverlapOutput::default();
    for kind in MovementKind::ALL {
        if !input.paths.iter().any(|p| p.kind == kind) {
            continue;
        }
        for (ri, &r_v) in sweep.r_v.iter().enumerate() {
            for &t_v_min in &sweep.t_v_min {
                for &l_max in &sweep.l_max {
                    let reports: Vec<PathVisitReport> = timed
                        .par_iter()
                        .zip(&presence[ri])
                        .filter(|(tp, _)| tp.path.kind == kind && tp.path.length_km() <= l_max)
                        .map(|(tp, ivs)| PathVisitReport::from_intervals(tp.path.id, qualifying(ivs, t_v_min), tp.duration()))
                        .collect();
                    let stats = if reports.is_empty() { None } else { Some(aggregate_reports(&reports)?) };
                    out.rows.push(OverlapRow {
                        dataset: input.dataset.to_string(),
                        kind,
                        r_v,
                        t_v_min,
                        l_max,
                        n_paths: reports.len(),
                        stats,
                        insufficient: reports.len() < input.min_sample,
                    });
                    if keep_per_path {
                        out.per_path.push(reports);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Metric columns are left empty for rows without paths.
pub fn write_overlap_csv<W: Write>(rows: &[OverlapRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{OVERLAP_CSV_HEADER}")?;
    for r in rows {
        let metrics = match &r.stats {
            Some(s) => format!(
                "{},{},{},{}",
                s.med_visited, s.med_of_med_parallel, s.med_of_max_parallel, s.med_accumulated_s
            ),
            None => ",,,".to_string(),
        };
        writeln!(w, "{},{},{},{},{},{},{}", r.dataset, r.kind, r.r_v, r.t_v_min, r.l_max, r.n_paths, metrics)?;
    }
    w.flush()
}

pub fn write_per_path_csv<W: Write>(reports: &[PathVisitReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{PER_PATH_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.path_id, r.distinct_visited, r.parallel_median, r.parallel_max, r.accumulated_seconds
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::super::tests::{origin, planar_index, planar_path};
    use super::super::{analyze_path, AnalysisParams};
    use super::*;
    use crate::geo::PlanarPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn report(v: usize) -> PathVisitReport {
        PathVisitReport {
            path_id: v,
            intervals: Vec::new(),
            distinct_visited: v,
            parallel_median: v as f64 / 2.0,
            parallel_max: v as u32,
            accumulated_seconds: 10.0 * v as f64,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_reports(&[]), Err(VisitError::EmptyAggregate));
        let one = aggregate_reports(&[report(7)]).unwrap();
        assert_eq!(
            (one.med_visited, one.med_of_med_parallel, one.med_of_max_parallel, one.med_accumulated_s),
            (7.0, 3.5, 7.0, 70.0)
        );
        assert_eq!(aggregate_reports(&[report(1), report(3), report(100)]).unwrap().med_visited, 3.0);
        assert_eq!(aggregate_reports(&[report(4), report(1), report(3), report(2)]).unwrap().med_visited, 2.5);
    }

    #[test]
    fn sweep_validation() {
        assert_eq!(Sweep::default().combinations(), 10);
        let mut s = Sweep::default();
        s.t_v_min.clear();
        assert_eq!(s.validate(), Err(VisitError::EmptySweep("t_v_min")));
        let mut s = Sweep::default();
        s.r_v.push(-1.0);
        assert!(s.validate().is_err());
    }

    fn random_paths(rng: &mut ChaCha8Rng, n: usize) -> Vec<Path> {
        (0..n)
            .map(|i| {
                let k = rng.random_range(2..5);
                let pts: Vec<(f64, f64)> = (0..k)
                    .map(|_| (rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0)))
                    .collect();
                let mut p = planar_path(i, &pts, 1.0).path;
                if i % 2 == 0 {
                    p.kind = MovementKind::Recurring;
                }
                p
            })
            .collect()
    }

    fn random_locs(rng: &mut ChaCha8Rng, n: usize) -> Vec<GeoCoordinate> {
        let proj = LocalProjection::new(origin());
        (0..n)
            .map(|_| {
                proj.unproject(PlanarPoint::new(rng.random_range(-1_000.0..1_000.0), rng.random_range(-1_000.0..1_000.0)))
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn sweep_rows_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let paths = random_paths(&mut rng, 60);
        let locs = random_locs(&mut rng, 80);
        let input = OverlapInput {
            dataset: "t",
            paths: &paths,
            locations: &locs,
            projection: LocalProjection::new(origin()),
            speed: 1.38889,
            min_sample: 40,
        };
        let sweep = Sweep {
            l_max: vec![0.001, 3.0],
            ..Sweep::default()
        };
        let a = run_overlap_analysis(&input, &sweep, true).unwrap();
        assert_eq!(a.rows.len(), 2 * 10 * 2);
        assert_eq!(a.per_path.len(), a.rows.len());
        let b = run_overlap_analysis(&input, &sweep, false).unwrap();
        assert_eq!(a.rows, b.rows);

        for row in &a.rows {
            if row.l_max < 0.01 {
                assert_eq!(row.n_paths, 0);
                assert!(row.stats.is_none() && row.insufficient);
            } else {
                assert!(row.n_paths < 40 && row.insufficient);
            }
        }
        // med_visited non-decreasing in r_v for each kind.
        for kind in MovementKind::ALL {
            let meds: Vec<f64> = a
                .rows
                .iter()
                .filter(|r| r.kind == kind && r.l_max == 3.0)
                .map(|r| r.stats.unwrap().med_visited)
                .collect();
            assert!(meds.windows(2).all(|w| w[0] <= w[1]), "{meds:?}");
        }

        let mut buf = Vec::new();
        write_overlap_csv(&a.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], OVERLAP_CSV_HEADER);
        assert_eq!(lines.len(), a.rows.len() + 1);
        assert!(lines[1].starts_with("t,recurring,25,60,0.001,0,,,,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 10));

        let mut buf = Vec::new();
        write_per_path_csv(&a.per_path[1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), a.per_path[1].len() + 1);
    }

    #[test]
    fn per_path_metrics_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let paths = random_paths(&mut rng, 1);
            let locs = random_locs(&mut rng, 40);
            let tp = timestamp_path(paths[0].clone(), 1.38889, LocalProjection::new(origin())).unwrap();
            let radii = [25.0, 50.0, 100.0, 150.0, 250.0];
            let tmins = [1.0, 30.0, 60.0, 120.0];
            let metric = |r: f64, t: f64| {
                let idx = SpatialIndex::build(origin(), r, &locs).unwrap();
                let p = AnalysisParams { r_v: r, t_v_min: t, ..AnalysisParams::default() };
                let rep = analyze_path(&tp, &idx, &p).unwrap();
                (rep.distinct_visited as f64, rep.parallel_max as f64, rep.accumulated_seconds)
            };
            for &t in &tmins {
                let m: Vec<_> = radii.iter().map(|&r| metric(r, t)).collect();
                for w in m.windows(2) {
                    assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1 && w[0].2 <= w[1].2 + 1e-9);
                }
            }
            for &r in &radii {
                let m: Vec<_> = tmins.iter().map(|&t| metric(r, t)).collect();
                for w in m.windows(2) {
                    assert!(w[0].0 >= w[1].0 && w[0].1 >= w[1].1 && w[0].2 >= w[1].2);
                }
            }
        }
    }

    #[test]
    fn mismatched_origin_propagates() {
        let tp = planar_path(0, &[(0.0, 0.0), (100.0, 0.0)], 1.0);
        let idx = planar_index(&[(0.0, 0.0)], 10.0);
        let other = timestamp_path(tp.path.clone(), 1.0, LocalProjection::new(GeoCoordinate::new(53.0, -9.0).unwrap())).unwrap();
        assert!(presence_intervals(&tp, &idx, 10.0).is_ok());
        assert!(presence_intervals(&other, &idx, 10.0).is_err());
    }
}
