//! Place datasets: the place record, virtual-location extraction and
//! summary statistics, plus acquisition (crawl, import, synthesis).

pub mod crawl;
pub mod io;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::geo::GeoCoordinate;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate place id {0:?}")]
    DuplicateId(String),
    #[error("invalid website {url:?}: {reason}")]
    InvalidWebsite { url: String, reason: String },
    #[error("unknown place category {0:?}")]
    UnknownCategory(String),
    #[error("{path}: line {line}: {message}")]
    Schema {
        path: String,
        line: u64,
        message: String,
    },
    #[error("invalid synthetic city spec: {0}")]
    InvalidSynthSpec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
}

/// The five movement categories, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaceCategory {
    Home,
    Work,
    Food,
    Entertainment,
    Others,
}

impl PlaceCategory {
    pub const ALL: [PlaceCategory; 5] = [
        PlaceCategory::Home,
        PlaceCategory::Work,
        PlaceCategory::Food,
        PlaceCategory::Entertainment,
        PlaceCategory::Others,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaceCategory::Home => "Home",
            PlaceCategory::Work => "Work",
            PlaceCategory::Food => "Food",
            PlaceCategory::Entertainment => "Entertainment",
            PlaceCategory::Others => "Others",
        }
    }
}

impl fmt::Display for PlaceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaceCategory {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DatasetError::UnknownCategory(s.to_string()))
    }
}

/// Parse and validate a website: absolute with a host.
pub fn parse_website(raw: &str) -> Result<Url, DatasetError> {
    let url = Url::parse(raw).map_err(|e| DatasetError::InvalidWebsite {
        url: raw.to_string(),
        reason: e.to_string(),
    })?;
    match url.host_str() {
        Some(h) if !h.is_empty() => Ok(url),
        _ => Err(DatasetError::InvalidWebsite {
            url: raw.to_string(),
            reason: "URL has no host".into(),
        }),
    }
}

/// A point of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: String,
    pub name: String,
    pub geo: GeoCoordinate,
    pub category: PlaceCategory,
    pub checkins: u64,
    pub website: Option<Url>,
}

/// Places with unique ids, kept sorted by id. Positions in this set are the
/// place references used everywhere else in the crate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaceSet {
    places: Vec<Place>,
}

impl PlaceSet {
    pub fn new(mut places: Vec<Place>) -> Result<Self, DatasetError> {
        places.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = places.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(DatasetError::DuplicateId(w[0].id.clone()));
        }
        Ok(Self { places })
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Place> {
        self.places.get(index)
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Place> {
        self.places.iter()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.places.binary_search_by(|p| p.id.as_str().cmp(id)).ok()
    }

    pub fn into_vec(self) -> Vec<Place> {
        self.places
    }
}

impl std::ops::Index<usize> for PlaceSet {
    type Output = Place;

    fn index(&self, i: usize) -> &Place {
        &self.places[i]
    }
}

/// A place's website treated as its virtual location.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLocation {
    /// Position of the owning place in its [`PlaceSet`].
    pub place: usize,
    pub place_id: String,
    pub geo: GeoCoordinate,
    pub url: Url,
    /// Lowercased host of `url`.
    pub domain: String,
}

/// One virtual location per place with a website, ordered by place id.
pub fn filter_virtual(places: &PlaceSet) -> Vec<VirtualLocation> {
    places
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let url = p.website.as_ref()?;
            Some(VirtualLocation {
                place: i,
                place_id: p.id.clone(),
                geo: p.geo,
                domain: url.host_str().unwrap_or_default().to_ascii_lowercase(),
                url: url.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DatasetStats {
    pub place_count: usize,
    pub virtual_count: usize,
    /// `virtual_count / place_count`, or 0 for an empty set.
    pub virtual_ratio: f64,
    /// Indexed by [`PlaceCategory::index`].
    pub category_counts: [usize; 5],
    pub category_checkins: [u64; 5],
}

pub fn dataset_stats(places: &PlaceSet) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for p in places.iter() {
        stats.place_count += 1;
        if p.website.is_some() {
            stats.virtual_count += 1;
        }
        stats.category_counts[p.category.index()] += 1;
        stats.category_checkins[p.category.index()] += p.checkins;
    }
    if stats.place_count > 0 {
        stats.virtual_ratio = stats.virtual_count as f64 / stats.place_count as f64;
    }
    stats
}

pub const STATS_CSV_HEADER: &str = "dataset,place_count,virtual_count,virtual_ratio,\
home,work,food,entertainment,others,\
home_checkins,work_checkins,food_checkins,entertainment_checkins,others_checkins";

pub fn write_stats_csv<W: std::io::Write>(dataset: &str, stats: &DatasetStats, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{STATS_CSV_HEADER}")?;
    let join = |v: &[String]| v.join(",");
    writeln!(
        w,
        "{dataset},{},{},{},{},{}",
        stats.place_count,
        stats.virtual_count,
        stats.virtual_ratio,
        join(&stats.category_counts.map(|c| c.to_string())),
        join(&stats.category_checkins.map(|c| c.to_string())),
    )?;
    w.flush()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn place(id: &str, lat: f64, lon: f64, cat: PlaceCategory, checkins: u64, web: Option<&str>) -> Place {
        Place {
            id: id.to_string(),
            name: format!("place {id}"),
            geo: GeoCoordinate::new(lat, lon).unwrap(),
            category: cat,
            checkins,
            website: web.map(|w| parse_website(w).unwrap()),
        }
    }

    #[test]
    fn category_round_trip() {
        for c in PlaceCategory::ALL {
            assert_eq!(c.as_str().parse::<PlaceCategory>().unwrap(), c);
            assert_eq!(PlaceCategory::from_index(c.index()), Some(c));
        }
        assert_eq!(" home ".parse::<PlaceCategory>().unwrap(), PlaceCategory::Home);
        assert!("house".parse::<PlaceCategory>().is_err());
    }

    #[test]
    fn website_needs_host() {
        assert!(parse_website("https://shop.example.ie/offers?x=1").is_ok());
        assert!(parse_website("mailto:someone@example.com").is_err());
        assert!(parse_website("/relative/path").is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = place("a", 53.0, -9.0, PlaceCategory::Food, 1, None);
        assert!(matches!(
            PlaceSet::new(vec![a.clone(), a]),
            Err(DatasetError::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn filter_virtual_counts_and_domain() {
        let mut v = Vec::new();
        for i in 0..10 {
            let web = (i % 3 == 0).then_some("https://Shop.Example.ie/offers?x=1");
            v.push(place(&format!("p{i}"), 53.0, -9.0, PlaceCategory::Food, 0, web));
        }
        let set = PlaceSet::new(v).unwrap();
        let vl = filter_virtual(&set);
        assert_eq!(vl.len(), 4);
        assert!(vl.windows(2).all(|w| w[0].place_id < w[1].place_id));
        assert_eq!(vl[0].domain, "shop.example.ie");
        for v in &vl {
            assert_eq!(set[v.place].id, v.place_id);
        }
    }

    #[test]
    fn stats_empty_and_counts() {
        let s = dataset_stats(&PlaceSet::default());
        assert_eq!(s, DatasetStats::default());
        assert_eq!(s.virtual_ratio, 0.0);

        let set = PlaceSet::new(vec![
            place("a", 53.0, -9.0, PlaceCategory::Home, 3, None),
            place("b", 53.0, -9.0, PlaceCategory::Food, 5, Some("http://b.ie")),
            place("c", 53.0, -9.0, PlaceCategory::Food, 7, None),
            place("d", 53.0, -9.0, PlaceCategory::Others, 0, Some("http://d.ie")),
        ])
        .unwrap();
        let s = dataset_stats(&set);
        assert_eq!(s.place_count, 4);
        assert_eq!(s.virtual_count, 2);
        assert_eq!(s.virtual_ratio, 0.5);
        assert_eq!(s.category_counts, [1, 0, 2, 0, 1]);
        assert_eq!(s.category_checkins, [3, 0, 12, 0, 0]);
    }

    #[test]
    fn table_four_ratios() {
        // Dublin: 16,485 of 39,237 places; Galway: 1,455 of 3,692.
        assert_eq!(format!("{:.1}", 16_485.0 / 39_237.0 * 100.0), "42.0");
        assert_eq!(format!("{:.1}", 1_455.0 / 3_692.0 * 100.0), "39.4");
    }
}
