//! City-scale coverage of virtual locations: raster coverage at a radius,
//! square occupancy and a log-log power-law fit of the occupancy histogram.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geo::{GeoCoordinate, GeoError, PlanarPoint, Region, SpatialIndex};

pub const DEFAULT_RASTER_M: f64 = 10.0;
pub const COVERAGE_CSV_HEADER: &str = "dataset,r_v_m,raster_m,percent";
pub const OCCUPANCY_CSV_HEADER: &str = "dataset,side_m,k,frequency";
pub const FIT_CSV_HEADER: &str = "dataset,side_m,slope,intercept,r2";
/// `k` value of the per-side summary row in the occupancy table.
pub const NON_EMPTY_RATIO_KEY: &str = "non_empty_ratio";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("raster {raster} m is coarser than half the radius {r_v} m")]
    RasterTooCoarse { raster: f64, r_v: f64 },
    #[error("invalid {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("region has no raster cells inside it")]
    DegenerateRegion,
    #[error("power-law fit needs at least 3 positive bins, got {0}")]
    TooFewBins(usize),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Default radius and square-side sweep, meters.
pub fn default_sweep_m() -> Vec<f64> {
    (1..=10).map(|k| 25.0 * k as f64).collect()
}

fn positive(name: &'static str, value: f64) -> Result<(), CoverageError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CoverageError::InvalidParam { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageResult {
    pub r_v: f64,
    pub raster: f64,
    pub covered_cells: u64,
    pub total_cells: u64,
    pub percent: f64,
}

/// Share of raster cells (inside the region) whose center lies within
/// `r_v` of some location, in the region's local plane.
pub fn coverage_percent(locations: &[GeoCoordinate], region: &Region, r_v: f64, raster: f64) -> Result<CoverageResult, CoverageError> {
    positive("r_v", r_v)?;
    positive("raster", raster)?;
    if raster > r_v / 2.0 {
        return Err(CoverageError::RasterTooCoarse { raster, r_v });
    }
    let proj = region.projection();
    let mask = region.planar_mask();
    let (sw, ne) = (mask.sw, mask.ne);
    let nx = ((ne.x - sw.x) / raster).ceil() as i64;
    let ny = ((ne.y - sw.y) / raster).ceil() as i64;
    if nx <= 0 || ny <= 0 {
        return Err(CoverageError::DegenerateRegion);
    }
    let index = SpatialIndex::build(proj.origin(), r_v, locations)?;
    let r2 = r_v * r_v;
    let (covered, total) = (0..ny)
        .into_par_iter()
        .map(|j| {
            let y = sw.y + (j as f64 + 0.5) * raster;
            let mut covered = 0u64;
            let mut total = 0u64;
            for i in 0..nx {
                let c = PlanarPoint::new(sw.x + (i as f64 + 0.5) * raster, y);
                if !mask.contains(c) {
                    continue;
                }
                total += 1;
                let near = index
                    .query_planar_box(PlanarPoint::new(c.x - r_v, c.y - r_v), PlanarPoint::new(c.x + r_v, c.y + r_v))
                    .into_iter()
                    .any(|k| {
                        let q = index.planar(k);
                        (q.x - c.x).powi(2) + (q.y - c.y).powi(2) <= r2
                    });
                covered += near as u64;
            }
            (covered, total)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total == 0 {
        return Err(CoverageError::DegenerateRegion);
    }
    Ok(CoverageResult {
        r_v,
        raster,
        covered_cells: covered,
        total_cells: total,
        percent: covered as f64 / total as f64 * 100.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareOccupancy {
    pub side: f64,
    /// Location count for every square intersecting the region, row-major
    /// from the south-west corner.
    pub counts: Vec<usize>,
    pub non_empty_ratio: f64,
}

/// Squares needed to span `extent`; a projection round-off overshoot of an
/// exact multiple does not open a sliver row.
fn square_count(extent: f64, side: f64) -> usize {
    let k = extent / side;
    let snapped = k.round();
    let n = if (k - snapped).abs() <= 1e-9 * snapped.max(1.0) { snapped } else { k.ceil() };
    (n as usize).max(1)
}

/// Squares of side `side` laid from the region's south-west corner.
/// Locations outside the region are ignored.
pub fn square_occupancy(locations: &[GeoCoordinate], region: &Region, side: f64) -> Result<SquareOccupancy, CoverageError> {
    positive("side", side)?;
    let proj = region.projection();
    let mask = region.planar_mask();
    let (sw, ne) = (mask.sw, mask.ne);
    let nx = square_count(ne.x - sw.x, side);
    let ny = square_count(ne.y - sw.y, side);
    let mut grid = vec![0usize; nx * ny];
    for p in locations.iter().filter(|p| region.contains(**p)) {
        let q = proj.project_unchecked(*p);
        let i = (((q.x - sw.x) / side).floor().max(0.0) as usize).min(nx - 1);
        let j = (((q.y - sw.y) / side).floor().max(0.0) as usize).min(ny - 1);
        grid[j * nx + i] += 1;
    }
    let mut counts = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let lo = PlanarPoint::new(sw.x + i as f64 * side, sw.y + j as f64 * side);
            let hi = PlanarPoint::new(lo.x + side, lo.y + side);
            if grid[j * nx + i] > 0 || region.intersects_rect(lo, hi) {
                counts.push(grid[j * nx + i]);
            }
        }
    }
    let non_empty = counts.iter().filter(|c| **c > 0).count();
    Ok(SquareOccupancy {
        side,
        non_empty_ratio: if counts.is_empty() { 0.0 } else { non_empty as f64 / counts.len() as f64 },
        counts,
    })
}

/// `(k, number of squares holding exactly k locations)` for k >= 1, ascending.
pub fn occupancy_histogram(occ: &SquareOccupancy) -> Vec<(usize, usize)> {
    let mut h = BTreeMap::new();
    for &c in occ.counts.iter().filter(|c| **c > 0) {
        *h.entry(c).or_insert(0) += 1;
    }
    h.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub bins: usize,
}

/// Ordinary least squares on `(ln k, ln frequency)`.
pub fn fit_power_law(hist: &[(usize, usize)]) -> Result<PowerLawFit, CoverageError> {
    let pts: Vec<(f64, f64)> = hist.iter().map(|&(k, f)| (k as f64, f as f64)).collect();
    fit_power_law_points(&pts)
}

/// As [`fit_power_law`] for real-valued frequencies; non-positive pairs
/// are skipped.
pub fn fit_power_law_points(hist: &[(f64, f64)]) -> Result<PowerLawFit, CoverageError> {
    let pts: Vec<(f64, f64)> = hist
        .iter()
        .filter(|(k, f)| *k > 0.0 && *f > 0.0)
        .map(|&(k, f)| (k.ln(), f.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(CoverageError::TooFewBins(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(PowerLawFit {
        slope,
        intercept,
        r_squared,
        bins: pts.len(),
    })
}

pub fn write_coverage_csv<W: Write>(dataset: &str, results: &[CoverageResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{COVERAGE_CSV_HEADER}")?;
    for r in results {
        writeln!(w, "{dataset},{},{},{}", r.r_v, r.raster, r.percent)?;
    }
    w.flush()
}

/// Histogram rows per side followed by that side's non-empty ratio row.
pub fn write_occupancy_csv<W: Write>(dataset: &str, occs: &[SquareOccupancy], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{OCCUPANCY_CSV_HEADER}")?;
    for occ in occs {
        for (k, f) in occupancy_histogram(occ) {
            writeln!(w, "{dataset},{},{k},{f}", occ.side)?;
        }
        writeln!(w, "{dataset},{},{NON_EMPTY_RATIO_KEY},{}", occ.side, occ.non_empty_ratio)?;
    }
    w.flush()
}

/// Sides with too few bins for a fit are skipped.
pub fn write_fit_csv<W: Write>(dataset: &str, fits: &[(f64, PowerLawFit)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{FIT_CSV_HEADER}")?;
    for (side, f) in fits {
        writeln!(w, "{dataset},{side},{},{},{}", f.slope, f.intercept, f.r_squared)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{generate_synthetic_city, SynthSpec};
    use crate::dataset::filter_virtual;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn center() -> GeoCoordinate {
        GeoCoordinate::new(53.35, -6.26).unwrap()
    }

    #[test]
    fn empty_and_duplicate_locations() {
        let region = Region::around(center(), 400.0, 400.0).unwrap();
        assert_eq!(coverage_percent(&[], &region, 100.0, 10.0).unwrap().percent, 0.0);
        let one = coverage_percent(&[center()], &region, 100.0, 10.0).unwrap();
        let two = coverage_percent(&[center(), center()], &region, 100.0, 10.0).unwrap();
        assert_eq!(one, two);
        assert!(one.percent > 0.0 && one.percent <= 100.0);
    }

    #[test]
    fn disk_in_square() {
        let r = 100.0;
        let region = Region::around(center(), 2.0 * r, 2.0 * r).unwrap();
        let a = coverage_percent(&[center()], &region, r, r / 25.0).unwrap();
        assert_abs_diff_eq!(a.percent, 100.0 * FRAC_PI_4, epsilon = 1.0);
        let b = coverage_percent(&[center()], &region, r, r / 50.0).unwrap();
        assert!((a.percent - b.percent).abs() < 0.5);
        assert_eq!(a.total_cells, 2_500);
    }

    #[test]
    fn raster_precondition() {
        let region = Region::around(center(), 200.0, 200.0).unwrap();
        assert!(matches!(
            coverage_percent(&[center()], &region, 100.0, 60.0),
            Err(CoverageError::RasterTooCoarse { .. })
        ));
    }

    #[test]
    fn polygon_restricts_cells() {
        let region = Region::around(center(), 400.0, 400.0).unwrap();
        let (sw, ne) = (region.south_west(), GeoCoordinate::new(region.max_lat(), region.max_lon()).unwrap());
        let tri = region
            .clone()
            .with_polygon(vec![sw, GeoCoordinate::new(sw.lat(), ne.lon()).unwrap(), ne])
            .unwrap();
        let full = coverage_percent(&[], &region, 50.0, 10.0).unwrap();
        let half = coverage_percent(&[], &tri, 50.0, 10.0).unwrap();
        let ratio = half.total_cells as f64 / full.total_cells as f64;
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn coverage_monotone_in_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let region = Region::around(center(), 1_000.0, 1_000.0).unwrap();
        let proj = region.projection();
        for _ in 0..5 {
            let locs: Vec<_> = (0..30)
                .map(|_| {
                    proj.unproject(PlanarPoint::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)))
                        .unwrap()
                })
                .collect();
            let p: Vec<f64> = default_sweep_m()
                .iter()
                .map(|&r| coverage_percent(&locs, &region, r, 10.0).unwrap().percent)
                .collect();
            assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
        }
    }

    #[test]
    fn exact_multiples_open_no_sliver_squares() {
        let region = Region::around(center(), 2_000.0, 2_000.0).unwrap();
        for (side, n) in [(200.0, 100), (250.0, 64), (225.0, 81), (2_000.0, 1)] {
            let occ = square_occupancy(&[], &region, side).unwrap();
            assert_eq!(occ.counts.len(), n, "side {side}");
        }
    }

    #[test]
    fn non_empty_ratio_can_fall_between_non_nested_sides() {
        let region = Region::around(center(), 100.0, 100.0).unwrap();
        let (sw, _) = region.planar_bounds();
        let proj = region.projection();
        let locs: Vec<_> = [(10.0, 10.0), (60.0, 10.0), (10.0, 60.0), (60.0, 60.0)]
            .iter()
            .map(|&(x, y)| proj.unproject(PlanarPoint::new(sw.x + x, sw.y + y)).unwrap())
            .collect();
        let at50 = square_occupancy(&locs, &region, 50.0).unwrap().non_empty_ratio;
        let at75 = square_occupancy(&locs, &region, 75.0).unwrap().non_empty_ratio;
        assert_eq!(at50, 1.0);
        assert_eq!(at75, 0.25);
    }

    #[test]
    fn occupancy_basics() {
        let region = Region::around(center(), 1_000.0, 1_000.0).unwrap();
        let proj = region.projection();
        let near: Vec<_> = (0..7)
            .map(|k| proj.unproject(PlanarPoint::new(10.0 + k as f64, 10.0)).unwrap())
            .collect();
        let occ = square_occupancy(&near, &region, 100.0).unwrap();
        assert_eq!(occ.counts.len(), 100);
        assert_eq!(occ.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(occupancy_histogram(&occ), vec![(7, 1)]);
        let whole = square_occupancy(&near, &region, 5_000.0).unwrap();
        assert_eq!(whole.non_empty_ratio, 1.0);
        assert!(occupancy_histogram(&square_occupancy(&[], &region, 50.0).unwrap()).is_empty());
        let outside = GeoCoordinate::new(54.0, -6.26).unwrap();
        let occ = square_occupancy(&[near[0], outside], &region, 100.0).unwrap();
        assert_eq!(occ.counts.iter().sum::<usize>(), 1);
    }

    #[test]
    fn histogram_example() {
        let occ = SquareOccupancy {
            side: 1.0,
            counts: vec![1, 0, 1, 2],
            non_empty_ratio: 0.75,
        };
        assert_eq!(occupancy_histogram(&occ), vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|k| (k as f64, 1000.0 * (k as f64).powi(-2))).collect();
        let fit = fit_power_law_points(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, -2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.intercept, 1000f64.ln(), epsilon = 1e-9);
        assert!(fit.r_squared > 0.999_999);
        assert_eq!(fit.bins, 10);
        let rounded: Vec<(usize, usize)> = pts.iter().map(|p| (p.0 as usize, p.1.round() as usize)).collect();
        assert!(fit_power_law(&rounded).unwrap().slope < -1.9);
        assert_eq!(fit_power_law(&[(1, 5), (2, 3)]), Err(CoverageError::TooFewBins(2)));
        assert_eq!(fit_power_law(&[(1, 5), (2, 3), (3, 0)]), Err(CoverageError::TooFewBins(2)));
    }

    #[test]
    fn clustered_city_is_heavy_tailed() {
        let spec = SynthSpec::default();
        let set = generate_synthetic_city(&spec, 42).unwrap();
        let locs: Vec<_> = filter_virtual(&set).iter().map(|v| v.geo).collect();
        let occ = square_occupancy(&locs, &spec.region, 100.0).unwrap();
        assert_eq!(occ.counts.iter().sum::<usize>(), locs.len());
        let hist = occupancy_histogram(&occ);
        let ks: Vec<usize> = occ.counts.iter().copied().filter(|c| *c > 0).collect();
        let max = *ks.iter().max().unwrap();
        let mut sorted = ks.clone();
        sorted.sort();
        assert!(max >= 3 * sorted[sorted.len() / 2], "max {max}, hist {hist:?}");
        let fit = fit_power_law(&hist).unwrap();
        assert!(fit.slope < 0.0);
    }

    #[test]
    fn csv_shapes() {
        let occ = SquareOccupancy {
            side: 50.0,
            counts: vec![1, 0, 1, 2],
            non_empty_ratio: 0.75,
        };
        let mut buf = Vec::new();
        write_occupancy_csv("galway", &[occ], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "dataset,side_m,k,frequency\ngalway,50,1,2\ngalway,50,2,1\ngalway,50,non_empty_ratio,0.75\n"
        );
        let mut buf = Vec::new();
        let cov = CoverageResult { r_v: 25.0, raster: 10.0, covered_cells: 1, total_cells: 4, percent: 25.0 };
        write_coverage_csv("g", &[cov], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "dataset,r_v_m,raster_m,percent\ng,25,10,25\n");
    }
}
