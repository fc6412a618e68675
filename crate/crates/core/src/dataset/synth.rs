//! Seeded synthetic cities: Gaussian clusters ("centres") over a uniform
//! background, with exact category and website quotas and Zipf check-ins.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{parse_website, DatasetError, Place, PlaceCategory, PlaceSet};
use crate::geo::{GeoCoordinate, PlanarPoint, Region};

/// Category counts for Dublin (Home, Work, Food, Entertainment, Others).
pub const DUBLIN_CATEGORY_COUNTS: [usize; 5] = [4413, 1280, 1425, 634, 2269];
/// Category counts for Galway.
pub const GALWAY_CATEGORY_COUNTS: [usize; 5] = [417, 228, 275, 156, 442];

fn dublin_mix() -> [f64; 5] {
    let total: usize = DUBLIN_CATEGORY_COUNTS.iter().sum();
    DUBLIN_CATEGORY_COUNTS.map(|n| n as f64 / total as f64)
}

fn default_region() -> Region {
    Region::around(GeoCoordinate::new(53.2740, -9.0490).expect("valid"), 2_000.0, 2_000.0).expect("valid region")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub region: Region,
    pub place_count: usize,
    /// Exact fraction of places given a website (rounded to nearest count).
    pub website_ratio: f64,
    /// Fractions in category order; must sum to 1.
    pub category_mix: [f64; 5],
    /// Number of Gaussian centres; 0 places everything uniformly.
    pub cluster_count: usize,
    /// Standard deviation of each centre, meters.
    pub cluster_spread_m: f64,
    /// Probability that a Home place is drawn from the uniform background.
    pub home_background_prob: f64,
    /// Background homes closer than this to a centre are redrawn, meters.
    pub residential_min_dist_m: f64,
    /// Probability that a Work place is drawn from a centre.
    pub work_cluster_prob: f64,
    /// Probability that a Food, Entertainment or Others place is drawn from a centre.
    pub other_cluster_prob: f64,
    /// Check-ins of the top-ranked place in each category.
    pub max_checkins: u64,
    pub zipf_exponent: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            region: default_region(),
            place_count: 500,
            website_ratio: 0.4,
            category_mix: dublin_mix(),
            cluster_count: 1,
            cluster_spread_m: 200.0,
            home_background_prob: 0.9,
            residential_min_dist_m: 500.0,
            work_cluster_prob: 0.2,
            other_cluster_prob: 0.9,
            max_checkins: 1_000,
            zipf_exponent: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSynthSpec(m));
        let sum: f64 = self.category_mix.iter().sum();
        if self.category_mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return bad(format!("category mix {:?} must be non-negative and sum to 1 (sums to {sum})", self.category_mix));
        }
        if !(0.0..=1.0).contains(&self.website_ratio) {
            return bad(format!("website ratio {} outside [0, 1]", self.website_ratio));
        }
        for (name, p) in [
            ("home_background_prob", self.home_background_prob),
            ("work_cluster_prob", self.work_cluster_prob),
            ("other_cluster_prob", self.other_cluster_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.cluster_count > 0 && !(self.cluster_spread_m.is_finite() && self.cluster_spread_m > 0.0) {
            return bad(format!("cluster spread {} must be positive", self.cluster_spread_m));
        }
        if !(self.residential_min_dist_m.is_finite() && self.residential_min_dist_m >= 0.0) {
            return bad(format!("residential distance {} must be non-negative", self.residential_min_dist_m));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad(format!("zipf exponent {} must be non-negative", self.zipf_exponent));
        }
        Ok(())
    }

    /// Exact per-category counts by largest remainder.
    pub fn category_quota(&self) -> [usize; 5] {
        quota(self.place_count, &self.category_mix)
    }

    pub fn website_quota(&self) -> usize {
        (self.place_count as f64 * self.website_ratio).round() as usize
    }
}

fn quota(total: usize, mix: &[f64; 5]) -> [usize; 5] {
    let mut counts = [0usize; 5];
    let mut rem = [(0.0f64, 0usize); 5];
    for i in 0..5 {
        let exact = total as f64 * mix[i];
        counts[i] = exact.floor() as usize;
        rem[i] = (exact - exact.floor(), i);
    }
    let assigned: usize = counts.iter().sum();
    rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for k in 0..total.saturating_sub(assigned) {
        counts[rem[k % 5].1] += 1;
    }
    counts
}

pub fn generate_synthetic_city(spec: &SynthSpec, seed: u64) -> Result<PlaceSet, DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = &spec.region;
    let proj = region.projection();
    let (sw, ne) = region.planar_bounds();

    let centers: Vec<PlanarPoint> = match spec.cluster_count {
        0 => Vec::new(),
        1 => vec![PlanarPoint::new((sw.x + ne.x) / 2.0, (sw.y + ne.y) / 2.0)],
        k => (0..k)
            .map(|_| {
                let fx = rng.random_range(0.2..0.8);
                let fy = rng.random_range(0.2..0.8);
                PlanarPoint::new(sw.x + fx * (ne.x - sw.x), sw.y + fy * (ne.y - sw.y))
            })
            .collect(),
    };
    let spread = Normal::new(0.0, spec.cluster_spread_m.max(f64::MIN_POSITIVE)).expect("positive spread");

    let uniform = |rng: &mut ChaCha8Rng| loop {
        let p = PlanarPoint::new(rng.random_range(sw.x..=ne.x), rng.random_range(sw.y..=ne.y));
        if region.contains_planar(p) {
            return p;
        }
    };
    let clustered = |rng: &mut ChaCha8Rng, uniform: &dyn Fn(&mut ChaCha8Rng) -> PlanarPoint| {
        let c = centers[rng.random_range(0..centers.len())];
        for _ in 0..1_000 {
            let p = PlanarPoint::new(c.x + spread.sample(rng), c.y + spread.sample(rng));
            if region.contains_planar(p) {
                return p;
            }
        }
        uniform(rng)
    };
    // Falls back to the plain background when the exclusion leaves no room.
    let residential = |rng: &mut ChaCha8Rng| {
        let min_d = spec.residential_min_dist_m;
        for _ in 0..1_000 {
            let p = uniform(rng);
            if centers.iter().all(|c| (p.x - c.x).hypot(p.y - c.y) >= min_d) {
                return p;
            }
        }
        uniform(rng)
    };

    let quotas = spec.category_quota();
    let width = spec.place_count.max(1).to_string().len().max(5);
    let mut places = Vec::with_capacity(spec.place_count);
    for cat in PlaceCategory::ALL {
        let n = quotas[cat.index()];
        let mut ranks: Vec<usize> = (1..=n).collect();
        ranks.shuffle(&mut rng);
        for (k, rank) in ranks.into_iter().enumerate() {
            let in_cluster = !centers.is_empty()
                && match cat {
                    PlaceCategory::Home => !rng.random_bool(spec.home_background_prob),
                    PlaceCategory::Work => rng.random_bool(spec.work_cluster_prob),
                    _ => rng.random_bool(spec.other_cluster_prob),
                };
            let p = if in_cluster {
                clustered(&mut rng, &uniform)
            } else if cat == PlaceCategory::Home {
                residential(&mut rng)
            } else {
                uniform(&mut rng)
            };
            let geo = proj.unproject(p)?;
            // Clamp rounding at the box edge.
            let geo = GeoCoordinate::new(
                geo.lat().clamp(region.min_lat(), region.max_lat()),
                geo.lon().clamp(region.min_lon(), region.max_lon()),
            )?;
            let checkins = (spec.max_checkins as f64 / (rank as f64).powf(spec.zipf_exponent)).floor() as u64;
            places.push(Place {
                id: String::new(),
                name: format!("{} {}", cat, k + 1),
                geo,
                category: cat,
                checkins,
                website: None,
            });
        }
    }
    places.shuffle(&mut rng);
    for (i, p) in places.iter_mut().enumerate() {
        p.id = format!("p{:0width$}", i, width = width);
    }
    let mut order: Vec<usize> = (0..places.len()).collect();
    order.shuffle(&mut rng);
    for &i in order.iter().take(spec.website_quota()) {
        let id = places[i].id.clone();
        places[i].website = Some(parse_website(&format!("https://{id}.example.com/"))?);
    }
    PlaceSet::new(places)
}
