use serde::{Deserialize, Serialize};

use super::{GeoCoordinate, GeoError, LocalProjection, PlanarPoint};

/// A study area: a lat/lon bounding box, optionally narrowed by a simple
/// polygon ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct Region {
    min_lat: f64,
    max_lat: f64,
    min_lon: f64,
    max_lon: f64,
    polygon: Option<Vec<GeoCoordinate>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegionRepr {
    min_lat: f64,
    max_lat: f64,
    min_lon: f64,
    max_lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polygon: Option<Vec<(f64, f64)>>,
}

impl TryFrom<RegionRepr> for Region {
    type Error = GeoError;

    fn try_from(r: RegionRepr) -> Result<Self, GeoError> {
        let region = Region::bbox(r.min_lat, r.max_lat, r.min_lon, r.max_lon)?;
        match r.polygon {
            None => Ok(region),
            Some(ring) => {
                let ring = ring
                    .into_iter()
                    .map(|(lat, lon)| GeoCoordinate::new(lat, lon))
                    .collect::<Result<Vec<_>, _>>()?;
                region.with_polygon(ring)
            }
        }
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        RegionRepr {
            min_lat: r.min_lat,
            max_lat: r.max_lat,
            min_lon: r.min_lon,
            max_lon: r.max_lon,
            polygon: r.polygon.map(|p| p.into_iter().map(Into::into).collect()),
        }
    }
}

impl Region {
    pub fn bbox(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self, GeoError> {
        GeoCoordinate::new(min_lat, min_lon)?;
        GeoCoordinate::new(max_lat, max_lon)?;
        if !(min_lat < max_lat) || !(min_lon < max_lon) {
            return Err(GeoError::InvalidRegion(format!(
                "bounding box needs min < max on both axes (lat {min_lat}..{max_lat}, lon {min_lon}..{max_lon})"
            )));
        }
        Ok(Self {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
            polygon: None,
        })
    }

    /// A box of `width_m` x `height_m` centred on `center` in the local
    /// plane of `center`.
    pub fn around(center: GeoCoordinate, width_m: f64, height_m: f64) -> Result<Self, GeoError> {
        if !(width_m > 0.0 && height_m > 0.0) {
            return Err(GeoError::InvalidRegion(format!(
                "extent must be positive, got {width_m} x {height_m}"
            )));
        }
        let proj = LocalProjection::new(center);
        let sw = proj.unproject(PlanarPoint::new(-width_m / 2.0, -height_m / 2.0))?;
        let ne = proj.unproject(PlanarPoint::new(width_m / 2.0, height_m / 2.0))?;
        Self::bbox(sw.lat(), ne.lat(), sw.lon(), ne.lon())
    }

    /// Smallest box holding every point, grown by `pad_m` on each side.
    pub fn enclosing(points: &[GeoCoordinate], pad_m: f64) -> Result<Self, GeoError> {
        if points.is_empty() {
            return Err(GeoError::InvalidRegion("no points to enclose".into()));
        }
        let (mut lo_lat, mut hi_lat) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_lon, mut hi_lon) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo_lat = lo_lat.min(p.lat());
            hi_lat = hi_lat.max(p.lat());
            lo_lon = lo_lon.min(p.lon());
            hi_lon = hi_lon.max(p.lon());
        }
        let mid = GeoCoordinate::new((lo_lat + hi_lat) / 2.0, (lo_lon + hi_lon) / 2.0)?;
        let proj = LocalProjection::new(mid);
        let pad = pad_m.max(1.0);
        let sw = proj.project_unchecked(GeoCoordinate::new(lo_lat, lo_lon)?);
        let ne = proj.project_unchecked(GeoCoordinate::new(hi_lat, hi_lon)?);
        let sw = proj.unproject(PlanarPoint::new(sw.x - pad, sw.y - pad))?;
        let ne = proj.unproject(PlanarPoint::new(ne.x + pad, ne.y + pad))?;
        Self::bbox(sw.lat(), ne.lat(), sw.lon(), ne.lon())
    }

    /// Attach a boundary ring. The ring must be simple and lie inside the
    /// bounding box; a closing vertex equal to the first is dropped.
    pub fn with_polygon(mut self, mut ring: Vec<GeoCoordinate>) -> Result<Self, GeoError> {
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(GeoError::InvalidRegion("polygon needs at least 3 vertices".into()));
        }
        if let Some(p) = ring.iter().find(|p| !self.bbox_contains(**p)) {
            return Err(GeoError::InvalidRegion(format!("polygon vertex {p} lies outside the bounding box")));
        }
        let planar: Vec<PlanarPoint> = ring.iter().map(|p| self.projection().project_unchecked(*p)).collect();
        if !is_simple(&planar) {
            return Err(GeoError::InvalidRegion("polygon is self-intersecting".into()));
        }
        self.polygon = Some(ring);
        Ok(self)
    }

    pub fn min_lat(&self) -> f64 {
        self.min_lat
    }
    pub fn max_lat(&self) -> f64 {
        self.max_lat
    }
    pub fn min_lon(&self) -> f64 {
        self.min_lon
    }
    pub fn max_lon(&self) -> f64 {
        self.max_lon
    }

    pub fn polygon(&self) -> Option<&[GeoCoordinate]> {
        self.polygon.as_deref()
    }

    /// `"polygon"` or `"bbox"`, for run metadata.
    pub fn boundary_kind(&self) -> &'static str {
        if self.polygon.is_some() {
            "polygon"
        } else {
            "bbox"
        }
    }

    pub fn center(&self) -> GeoCoordinate {
        GeoCoordinate::new((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
            .expect("midpoint of valid coordinates is valid")
    }

    pub fn south_west(&self) -> GeoCoordinate {
        GeoCoordinate::new(self.min_lat, self.min_lon).expect("validated corner")
    }

    /// Projection centred on the box; used for all planar work on the region.
    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(self.center())
    }

    /// South-west and north-east corners in the region's local plane.
    pub fn planar_bounds(&self) -> (PlanarPoint, PlanarPoint) {
        let proj = self.projection();
        let sw = proj.project_unchecked(self.south_west());
        let ne = proj.project_unchecked(GeoCoordinate::new(self.max_lat, self.max_lon).expect("validated corner"));
        (sw, ne)
    }

    pub fn bbox_contains(&self, p: GeoCoordinate) -> bool {
        p.lat() >= self.min_lat && p.lat() <= self.max_lat && p.lon() >= self.min_lon && p.lon() <= self.max_lon
    }

    pub fn contains(&self, p: GeoCoordinate) -> bool {
        if !self.bbox_contains(p) {
            return false;
        }
        match &self.polygon {
            None => true,
            Some(_) => self.contains_planar(self.projection().project_unchecked(p)),
        }
    }

    /// Region outline in its local plane, for repeated point tests.
    pub fn planar_mask(&self) -> PlanarMask {
        let (sw, ne) = self.planar_bounds();
        let proj = self.projection();
        PlanarMask {
            sw,
            ne,
            ring: self
                .polygon
                .as_ref()
                .map(|r| r.iter().map(|q| proj.project_unchecked(*q)).collect()),
        }
    }

    /// Point test in the region's local plane.
    pub fn contains_planar(&self, p: PlanarPoint) -> bool {
        let (sw, ne) = self.planar_bounds();
        if p.x < sw.x || p.x > ne.x || p.y < sw.y || p.y > ne.y {
            return false;
        }
        match &self.polygon {
            None => true,
            Some(ring) => {
                let proj = self.projection();
                let pts: Vec<PlanarPoint> = ring.iter().map(|q| proj.project_unchecked(*q)).collect();
                point_in_ring(&pts, p)
            }
        }
    }

    /// Whether the axis-aligned planar rectangle `[lo, hi]` overlaps the region.
    pub fn intersects_rect(&self, lo: PlanarPoint, hi: PlanarPoint) -> bool {
        let (sw, ne) = self.planar_bounds();
        if hi.x < sw.x || lo.x > ne.x || hi.y < sw.y || lo.y > ne.y {
            return false;
        }
        let Some(ring) = &self.polygon else {
            return true;
        };
        let proj = self.projection();
        let pts: Vec<PlanarPoint> = ring.iter().map(|q| proj.project_unchecked(*q)).collect();
        if pts.iter().any(|q| q.x >= lo.x && q.x <= hi.x && q.y >= lo.y && q.y <= hi.y) {
            return true;
        }
        let corners = [lo, PlanarPoint::new(hi.x, lo.y), hi, PlanarPoint::new(lo.x, hi.y)];
        if corners.iter().any(|c| point_in_ring(&pts, *c)) {
            return true;
        }
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            for k in 0..4 {
                if segments_intersect(a, b, corners[k], corners[(k + 1) % 4]) {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone)]
pub struct PlanarMask {
    pub sw: PlanarPoint,
    pub ne: PlanarPoint,
    ring: Option<Vec<PlanarPoint>>,
}

impl PlanarMask {
    pub fn contains(&self, p: PlanarPoint) -> bool {
        if p.x < self.sw.x || p.x > self.ne.x || p.y < self.sw.y || p.y > self.ne.y {
            return false;
        }
        self.ring.as_ref().is_none_or(|r| point_in_ring(r, p))
    }
}

fn point_in_ring(ring: &[PlanarPoint], p: PlanarPoint) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: PlanarPoint, b: PlanarPoint, p: PlanarPoint) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: PlanarPoint, p2: PlanarPoint, q1: PlanarPoint, q2: PlanarPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

// O(n^2) pairwise check of non-adjacent edges.
fn is_simple(ring: &[PlanarPoint]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(lat: f64, lon: f64) -> GeoCoordinate {
        GeoCoordinate::new(lat, lon).unwrap()
    }

    #[test]
    fn bbox_validation() {
        assert!(Region::bbox(53.0, 53.0, -9.0, -8.9).is_err());
        assert!(Region::bbox(53.1, 53.0, -9.0, -8.9).is_err());
        assert!(Region::bbox(53.0, 53.1, -9.0, -8.9).is_ok());
    }

    #[test]
    fn around_has_requested_extent() {
        let r = Region::around(c(53.27, -9.05), 2000.0, 1000.0).unwrap();
        let (sw, ne) = r.planar_bounds();
        assert!((ne.x - sw.x - 2000.0).abs() < 1e-6);
        assert!((ne.y - sw.y - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn polygon_contains() {
        let r = Region::bbox(53.0, 53.1, -9.0, -8.9).unwrap();
        let tri = r
            .clone()
            .with_polygon(vec![c(53.0, -9.0), c(53.0, -8.9), c(53.1, -9.0)])
            .unwrap();
        assert!(tri.contains(c(53.01, -8.99)));
        assert!(!tri.contains(c(53.09, -8.91)));
        assert!(r.contains(c(53.09, -8.91)));
        assert_eq!(tri.boundary_kind(), "polygon");
    }

    #[test]
    fn rejects_bowtie_and_outside_vertices() {
        let r = Region::bbox(53.0, 53.1, -9.0, -8.9).unwrap();
        let bowtie = vec![c(53.0, -9.0), c(53.1, -8.9), c(53.0, -8.9), c(53.1, -9.0)];
        assert!(r.clone().with_polygon(bowtie).is_err());
        let outside = vec![c(53.0, -9.0), c(53.2, -8.9), c(53.1, -9.0)];
        assert!(r.with_polygon(outside).is_err());
    }

    #[test]
    fn rect_intersection_with_polygon() {
        let r = Region::around(c(53.0, -9.0), 1000.0, 1000.0).unwrap();
        let proj = r.projection();
        let ring: Vec<_> = [(-500.0, -500.0), (500.0, -500.0), (-500.0, 500.0)]
            .iter()
            .map(|&(x, y)| proj.unproject(PlanarPoint::new(x, y)).unwrap())
            .collect();
        let tri = r.with_polygon(ring).unwrap();
        assert!(tri.intersects_rect(PlanarPoint::new(-450.0, -450.0), PlanarPoint::new(-400.0, -400.0)));
        assert!(!tri.intersects_rect(PlanarPoint::new(300.0, 300.0), PlanarPoint::new(400.0, 400.0)));
    }

    #[test]
    fn serde_round_trip() {
        let r = Region::bbox(53.0, 53.1, -9.0, -8.9)
            .unwrap()
            .with_polygon(vec![c(53.0, -9.0), c(53.0, -8.9), c(53.1, -9.0)])
            .unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: Region = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
