//! Geographic primitives: coordinates, great-circle distance, a local
//! equirectangular plane and a uniform-grid index for radius queries.

mod index;
mod region;

pub use index::SpatialIndex;
pub use region::{PlanarMask, Region};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest latitude separation (degrees) accepted by the local projection.
pub const MAX_PROJECTION_LAT_SPAN_DEG: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90] or not finite")]
    InvalidLatitude(f64),
    #[error("longitude {0} outside [-180, 180] or not finite")]
    InvalidLongitude(f64),
    #[error("point {point} is {span:.4} degrees of latitude from projection origin {origin}; local projection is limited to {max} degrees")]
    ProjectionScale {
        origin: GeoCoordinate,
        point: GeoCoordinate,
        span: f64,
        max: f64,
    },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("projection origins differ: {0} vs {1}")]
    OriginMismatch(GeoCoordinate, GeoCoordinate),
    #[error("invalid cell size {0}")]
    InvalidCellSize(f64),
}

/// A validated latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct GeoCoordinate {
    lat: f64,
    lon: f64,
}

impl GeoCoordinate {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidLatitude(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidLongitude(lon));
        }
        Ok(Self { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl TryFrom<(f64, f64)> for GeoCoordinate {
    type Error = GeoError;

    fn try_from((lat, lon): (f64, f64)) -> Result<Self, Self::Error> {
        Self::new(lat, lon)
    }
}

impl From<GeoCoordinate> for (f64, f64) {
    fn from(c: GeoCoordinate) -> Self {
        (c.lat, c.lon)
    }
}

impl std::fmt::Display for GeoCoordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
///
/// The arguments are put in a canonical order before evaluation so the
/// result is bit-for-bit symmetric.
pub fn haversine_distance(a: GeoCoordinate, b: GeoCoordinate) -> f64 {
    if a == b {
        return 0.0;
    }
    let (p, q) = if (a.lat, a.lon) <= (b.lat, b.lon) {
        (a, b)
    } else {
        (b, a)
    };
    let lat1 = p.lat.to_radians();
    let lat2 = q.lat.to_radians();
    let sin_dlat = ((q.lat - p.lat).to_radians() * 0.5).sin();
    let sin_dlon = ((q.lon - p.lon).to_radians() * 0.5).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Meters east (`x`) and north (`y`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Equirectangular projection around a fixed origin.
///
/// `x = R * dlon * cos(origin.lat)`, `y = R * dlat` with angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    origin: GeoCoordinate,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(origin: GeoCoordinate) -> Self {
        Self {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> GeoCoordinate {
        self.origin
    }

    pub fn project(&self, p: GeoCoordinate) -> Result<PlanarPoint, GeoError> {
        let span = (p.lat - self.origin.lat).abs();
        if span >= MAX_PROJECTION_LAT_SPAN_DEG {
            return Err(GeoError::ProjectionScale {
                origin: self.origin,
                point: p,
                span,
                max: MAX_PROJECTION_LAT_SPAN_DEG,
            });
        }
        Ok(self.project_unchecked(p))
    }

    /// Projection without the city-scale guard. Longitude differences are
    /// wrapped into (-180, 180].
    pub fn project_unchecked(&self, p: GeoCoordinate) -> PlanarPoint {
        let mut dlon = p.lon - self.origin.lon;
        if dlon > 180.0 {
            dlon -= 360.0;
        } else if dlon <= -180.0 {
            dlon += 360.0;
        }
        PlanarPoint {
            x: EARTH_RADIUS_M * dlon.to_radians() * self.cos_lat,
            y: EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
        }
    }

    /// Inverse of [`project_unchecked`](Self::project_unchecked).
    pub fn unproject(&self, p: PlanarPoint) -> Result<GeoCoordinate, GeoError> {
        let lat = self.origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
        let mut lon = self.origin.lon + (p.x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GeoCoordinate::new(lat, lon)
    }
}

/// Convenience wrapper for [`LocalProjection::project`].
pub fn project_local(origin: GeoCoordinate, p: GeoCoordinate) -> Result<PlanarPoint, GeoError> {
    LocalProjection::new(origin).project(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(lat: f64, lon: f64) -> GeoCoordinate {
        GeoCoordinate::new(lat, lon).unwrap()
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoCoordinate::new(90.5, 0.0).is_err());
        assert!(GeoCoordinate::new(0.0, -180.1).is_err());
        assert!(GeoCoordinate::new(f64::NAN, 0.0).is_err());
        assert!(GeoCoordinate::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn haversine_examples() {
        assert_eq!(haversine_distance(c(53.30, -9.05), c(53.30, -9.05)), 0.0);
        // One degree of arc: R * pi / 180.
        let one_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert_abs_diff_eq!(one_deg, 111_194.9, epsilon = 0.1);
        assert_abs_diff_eq!(haversine_distance(c(0.0, 0.0), c(1.0, 0.0)), one_deg, epsilon = 1e-6);
        let d = haversine_distance(c(53.3498, -6.2603), c(53.2707, -9.0568));
        assert_abs_diff_eq!(d, 185_700.0, epsilon = 500.0);
        // Independent calculator on the same radius: 185,987.02 m.
        assert_abs_diff_eq!(d, 185_987.02, epsilon = 0.05);
    }

    #[test]
    fn projection_examples() {
        let origin = c(53.0, -9.0);
        let p = project_local(origin, origin).unwrap();
        assert_eq!(p, PlanarPoint::new(0.0, 0.0));

        let east = project_local(origin, c(53.0, -8.99)).unwrap();
        assert_abs_diff_eq!(east.x, 669.2, epsilon = 0.5);
        assert_abs_diff_eq!(east.y, 0.0, epsilon = 0.5);

        let north = project_local(origin, c(53.01, -9.0)).unwrap();
        assert_abs_diff_eq!(north.x, 0.0, epsilon = 0.5);
        assert_abs_diff_eq!(north.y, 1_111.9, epsilon = 0.5);
    }

    #[test]
    fn projection_scale_guard() {
        let err = project_local(c(53.0, -9.0), c(54.5, -9.0)).unwrap_err();
        assert!(matches!(err, GeoError::ProjectionScale { .. }));
    }

    #[test]
    fn unproject_inverts_project() {
        let proj = LocalProjection::new(c(53.27, -9.05));
        let p = c(53.281, -9.031);
        let back = proj.unproject(proj.project(p).unwrap()).unwrap();
        assert_abs_diff_eq!(back.lat(), p.lat(), epsilon = 1e-12);
        assert_abs_diff_eq!(back.lon(), p.lon(), epsilon = 1e-12);
    }

    fn coord() -> impl Strategy<Value = GeoCoordinate> {
        (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn haversine_is_symmetric(a in coord(), b in coord()) {
            let ab = haversine_distance(a, b);
            prop_assert_eq!(ab, haversine_distance(b, a));
            prop_assert!(ab >= 0.0);
        }

        // Pairs inside a 5 km (diameter) disk around city-latitude origins.
        #[test]
        fn projection_fidelity(
            lat in -60.0..60.0f64,
            lon in -179.0..179.0f64,
            r1 in 0.0..2_500.0f64, t1 in 0.0..std::f64::consts::TAU,
            r2 in 0.0..2_500.0f64, t2 in 0.0..std::f64::consts::TAU,
        ) {
            let proj = LocalProjection::new(c(lat, lon));
            let a = proj.unproject(PlanarPoint::new(r1 * t1.cos(), r1 * t1.sin())).unwrap();
            let b = proj.unproject(PlanarPoint::new(r2 * t2.cos(), r2 * t2.sin())).unwrap();
            let h = haversine_distance(a, b);
            prop_assume!(h > 1.0);
            let planar = proj.project(a).unwrap().distance(&proj.project(b).unwrap());
            prop_assert!(((planar - h) / h).abs() < 1e-3, "planar {} vs haversine {}", planar, h);
        }
    }
}
