use std::collections::HashMap;

use super::{haversine_distance, GeoCoordinate, GeoError, LocalProjection, PlanarPoint, EARTH_RADIUS_M};

/// Uniform grid over the local plane. Items are referenced by their
/// position in the slice the index was built from.
///
/// Bucket assignment is `floor(coordinate / cell_size)` on each axis of the
/// projected point.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    projection: LocalProjection,
    cell_size: f64,
    coords: Vec<GeoCoordinate>,
    planar: Vec<PlanarPoint>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialIndex {
    pub fn build(
        origin: GeoCoordinate,
        cell_size: f64,
        points: &[GeoCoordinate],
    ) -> Result<Self, GeoError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(GeoError::InvalidCellSize(cell_size));
        }
        let projection = LocalProjection::new(origin);
        let planar = points
            .iter()
            .map(|p| projection.project(*p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in planar.iter().enumerate() {
            buckets.entry(cell_of(p, cell_size)).or_default().push(i);
        }
        Ok(Self {
            projection,
            cell_size,
            coords: points.to_vec(),
            planar,
            buckets,
        })
    }

    pub fn origin(&self) -> GeoCoordinate {
        self.projection.origin()
    }

    pub fn projection(&self) -> &LocalProjection {
        &self.projection
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coordinate(&self, item: usize) -> GeoCoordinate {
        self.coords[item]
    }

    pub fn planar(&self, item: usize) -> PlanarPoint {
        self.planar[item]
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Items at haversine distance `<= radius` from `p`, ascending.
    pub fn query_radius(&self, p: GeoCoordinate, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_candidate(p, radius, |i| {
            if haversine_distance(p, self.coords[i]) <= radius {
                out.push(i);
            }
            true
        });
        out.sort_unstable();
        out
    }

    /// Whether any item lies within `radius` of `p`.
    pub fn any_within(&self, p: GeoCoordinate, radius: f64) -> bool {
        let mut found = false;
        self.for_each_candidate(p, radius, |i| {
            if haversine_distance(p, self.coords[i]) <= radius {
                found = true;
                return false;
            }
            true
        });
        found
    }

    /// Items whose projected point lies in the closed planar box, ascending.
    pub fn query_planar_box(&self, min: PlanarPoint, max: PlanarPoint) -> Vec<usize> {
        let mut out = Vec::new();
        let (ci0, cj0) = cell_of(&min, self.cell_size);
        let (ci1, cj1) = cell_of(&max, self.cell_size);
        self.scan_cells(ci0, ci1, cj0, cj1, |i| {
            let q = self.planar[i];
            if q.x >= min.x && q.x <= max.x && q.y >= min.y && q.y <= max.y {
                out.push(i);
            }
            true
        });
        out.sort_unstable();
        out
    }

    /// Visits every item in buckets intersecting a lat/lon box that
    /// encloses the spherical cap of `radius` around `p`. The callback
    /// returns `false` to stop early.
    fn for_each_candidate(&self, p: GeoCoordinate, radius: f64, mut f: impl FnMut(usize) -> bool) {
        if self.coords.is_empty() || !(radius >= 0.0) {
            return;
        }
        let delta = radius / EARTH_RADIUS_M;
        let lat_lo = p.lat() - delta.to_degrees();
        let lat_hi = p.lat() + delta.to_degrees();
        let cos_lat = p.lat().to_radians().cos();
        let polar = lat_hi >= 90.0 || lat_lo <= -90.0 || delta.sin() >= cos_lat;
        let origin = self.projection.origin();
        let to_y = |lat: f64| EARTH_RADIUS_M * (lat - origin.lat()).to_radians();
        // Slack for floor() at exact cell boundaries.
        let slack = 1e-9 * self.cell_size.max(1.0);
        let y0 = to_y(lat_lo) - slack;
        let y1 = to_y(lat_hi) + slack;
        let cj0 = (y0 / self.cell_size).floor() as i64;
        let cj1 = (y1 / self.cell_size).floor() as i64;
        if polar {
            for (&(_, cj), items) in &self.buckets {
                if cj >= cj0 && cj <= cj1 {
                    for &i in items {
                        if !f(i) {
                            return;
                        }
                    }
                }
            }
            return;
        }
        let dlon = (delta.sin() / cos_lat).asin().to_degrees();
        let pp = self.projection.project_unchecked(p);
        let scale = EARTH_RADIUS_M * origin.lat().to_radians().cos();
        let half_x = scale * dlon.to_radians();
        let x0 = pp.x - half_x - slack;
        let x1 = pp.x + half_x + slack;
        let ci0 = (x0 / self.cell_size).floor() as i64;
        let ci1 = (x1 / self.cell_size).floor() as i64;
        self.scan_cells(ci0, ci1, cj0, cj1, f);
    }

    fn scan_cells(&self, ci0: i64, ci1: i64, cj0: i64, cj1: i64, mut f: impl FnMut(usize) -> bool) {
        let span = (ci1 - ci0 + 1).saturating_mul(cj1 - cj0 + 1);
        if span as usize > self.buckets.len() {
            for (&(ci, cj), items) in &self.buckets {
                if ci >= ci0 && ci <= ci1 && cj >= cj0 && cj <= cj1 {
                    for &i in items {
                        if !f(i) {
                            return;
                        }
                    }
                }
            }
            return;
        }
        for ci in ci0..=ci1 {
            for cj in cj0..=cj1 {
                if let Some(items) = self.buckets.get(&(ci, cj)) {
                    for &i in items {
                        if !f(i) {
                            return;
                        }
                    }
                }
            }
        }
    }
}

fn cell_of(p: &PlanarPoint, cell_size: f64) -> (i64, i64) {
    (
        (p.x / cell_size).floor() as i64,
        (p.y / cell_size).floor() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(lat: f64, lon: f64) -> GeoCoordinate {
        GeoCoordinate::new(lat, lon).unwrap()
    }

    fn brute(points: &[GeoCoordinate], p: GeoCoordinate, r: f64) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| haversine_distance(p, points[i]) <= r)
            .collect()
    }

    #[test]
    fn empty_index() {
        let idx = SpatialIndex::build(c(53.0, -9.0), 100.0, &[]).unwrap();
        assert!(idx.query_radius(c(53.0, -9.0), 500.0).is_empty());
        assert!(!idx.any_within(c(53.0, -9.0), 500.0));
    }

    #[test]
    fn boundary_is_inclusive() {
        let origin = c(53.0, -9.0);
        let place = c(53.001, -9.0);
        let r = haversine_distance(origin, place);
        let idx = SpatialIndex::build(origin, 100.0, &[place]).unwrap();
        assert_eq!(idx.query_radius(origin, r), vec![0]);
        assert!(idx.query_radius(origin, r * (1.0 - 1e-12)).is_empty());
    }

    #[test]
    fn rejects_bad_cell_size() {
        assert!(SpatialIndex::build(c(0.0, 0.0), 0.0, &[]).is_err());
        assert!(SpatialIndex::build(c(0.0, 0.0), f64::NAN, &[]).is_err());
    }

    #[test]
    fn every_item_in_one_bucket() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..500)
            .map(|_| c(53.0 + rng.random_range(-0.02..0.02), -9.0 + rng.random_range(-0.03..0.03)))
            .collect();
        let idx = SpatialIndex::build(c(53.0, -9.0), 75.0, &pts).unwrap();
        let mut seen: Vec<usize> = idx.buckets.values().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..500).collect::<Vec<_>>());
        for (key, items) in &idx.buckets {
            for &i in items {
                assert_eq!(cell_of(&idx.planar[i], 75.0), *key);
            }
        }
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let origin = c(53.3498, -6.2603);
        for cell in [25.0, 100.0, 400.0] {
            let pts: Vec<_> = (0..1000)
                .map(|_| {
                    c(
                        origin.lat() + rng.random_range(-0.03..0.03),
                        origin.lon() + rng.random_range(-0.05..0.05),
                    )
                })
                .collect();
            let idx = SpatialIndex::build(origin, cell, &pts).unwrap();
            for _ in 0..100 {
                let q = c(
                    origin.lat() + rng.random_range(-0.035..0.035),
                    origin.lon() + rng.random_range(-0.055..0.055),
                );
                let r = rng.random_range(1.0..800.0);
                assert_eq!(idx.query_radius(q, r), brute(&pts, q, r));
                assert_eq!(idx.any_within(q, r), !brute(&pts, q, r).is_empty());
            }
        }
    }

    #[test]
    fn planar_box_query() {
        let origin = c(10.0, 10.0);
        let proj = LocalProjection::new(origin);
        let pts: Vec<_> = [(0.0, 0.0), (50.0, 50.0), (150.0, 10.0), (-20.0, 90.0)]
            .iter()
            .map(|&(x, y)| proj.unproject(PlanarPoint::new(x, y)).unwrap())
            .collect();
        let idx = SpatialIndex::build(origin, 40.0, &pts).unwrap();
        let hits = idx.query_planar_box(PlanarPoint::new(-1.0, -1.0), PlanarPoint::new(60.0, 60.0));
        assert_eq!(hits, vec![0, 1]);
    }
}
