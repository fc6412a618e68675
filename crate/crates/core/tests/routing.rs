use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vloc_core::geo::{GeoCoordinate, LocalProjection, PlanarPoint};
use vloc_core::mobility::MovementKind;
use vloc_core::routing::{
    filter_by_length, path_length_cdf, route, timestamp_path, Endpoint, GridWalk, Path, DEFAULT_WALKING_SPEED,
};

fn origin() -> GeoCoordinate {
    GeoCoordinate::new(53.3498, -6.2603).unwrap()
}

/// Independent great-circle length, spherical law of haversines written out.
fn oracle_length_km(pts: &[GeoCoordinate]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let (p1, p2) = (w[0].lat().to_radians(), w[1].lat().to_radians());
            let dp = p2 - p1;
            let dl = (w[1].lon() - w[0].lon()).to_radians();
            let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
            2.0 * 6_371.0 * h.sqrt().min(1.0).asin()
        })
        .sum()
}

fn synthetic_paths(n: usize, seed: u64) -> Vec<Path> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = LocalProjection::new(origin());
    let provider = GridWalk;
    (0..n)
        .map(|i| {
            let mut pick = || proj.unproject(PlanarPoint::new(rng.random_range(-2_500.0..2_500.0), rng.random_range(-2_500.0..2_500.0))).unwrap();
            let (a, b) = (pick(), pick());
            let kind = if i % 2 == 0 { MovementKind::Recurring } else { MovementKind::Nonrecurring };
            let (sid, eid) = (format!("s{i}"), format!("e{i}"));
            let start = Endpoint { id: &sid, geo: a };
            let end = Endpoint { id: &eid, geo: b };
            route(&provider, i, kind, start, end).unwrap()
        })
        .collect()
}

#[test]
fn length_filter_matches_brute_force_recheck() {
    let paths = synthetic_paths(5_000, 11);
    let kept = filter_by_length(&paths, 3.0).unwrap();
    let expected: Vec<usize> = paths
        .iter()
        .filter(|p| oracle_length_km(&p.waypoints) <= 3.0)
        .map(|p| p.id)
        .collect();
    let got: Vec<usize> = kept.iter().map(|p| p.id).collect();
    assert_eq!(got, expected);
    assert!(!got.is_empty() && got.len() < paths.len());
    for p in &paths {
        let rel = (p.length_km() - oracle_length_km(&p.waypoints)).abs() / p.length_km();
        assert!(rel < 1e-6, "path {} relative error {rel}", p.id);
    }
}

#[test]
fn cdf_of_filtered_set_ends_at_its_size() {
    let paths = synthetic_paths(1_000, 12);
    let kept = filter_by_length(&paths, 3.0).unwrap();
    let lengths: Vec<f64> = kept.iter().map(|p| p.length_km()).collect();
    let cdf = path_length_cdf(&lengths, 0.25);
    assert_eq!(cdf.last().unwrap().1, kept.len());
    assert!(cdf.windows(2).all(|w| w[1].1 >= w[0].1 && w[1].0 > w[0].0));
}

#[test]
fn three_kilometres_take_thirty_six_minutes() {
    let proj = LocalProjection::new(origin());
    let a = proj.unproject(PlanarPoint::new(0.0, 0.0)).unwrap();
    let b = proj.unproject(PlanarPoint::new(0.0, 1_000.0)).unwrap();
    let path = Path::new(0, MovementKind::Recurring, vec![a, b], ("a", "b")).unwrap();
    let scale = 3_000.0 / path.length_m();
    let b = proj.unproject(PlanarPoint::new(0.0, 1_000.0 * scale)).unwrap();
    let path = Path::new(0, MovementKind::Recurring, vec![a, b], ("a", "b")).unwrap();
    assert!((path.length_m() - 3_000.0).abs() < 1e-3);
    let tp = timestamp_path(path, DEFAULT_WALKING_SPEED, proj).unwrap();
    assert!((tp.duration() - 2_160.0).abs() < 1e-3, "{}", tp.duration());
}
