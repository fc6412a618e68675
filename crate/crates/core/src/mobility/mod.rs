//! Movement model: category transition matrix plus the recurring
//! (home <-> work) and non-recurring endpoint samplers.
//!
//! Place choice within a non-Home category is a two-stage draw: a
//! probability vector from `Dirichlet(checkins + 1)` followed by one
//! categorical draw from it. The `+ 1` keeps zero-check-in places in the
//! support. Home places are always chosen uniformly.

mod matrix;
mod rng;

pub use matrix::{
    stationary_distribution, transition_allowed, CategoryDistribution, StochasticMatrix, TransitionMatrix,
    DEFAULT_STATIONARY_TOL, MAX_POWER_ITERATIONS, STOCHASTIC_TOL,
};
pub use rng::RngStream;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{PlaceCategory, PlaceSet};

/// Redraws of `l_end` allowed when it coincides with `l_start`.
pub const MAX_ENDPOINT_REDRAWS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error("category {0} has no places")]
    EmptyCategory(PlaceCategory),
    #[error("epsilon {0} must lie in (0, 1)")]
    InvalidEpsilon(f64),
    #[error("transition {from} -> {to} would be negative ({value}); epsilon is too large for these counts")]
    NegativeEntry {
        from: PlaceCategory,
        to: PlaceCategory,
        value: f64,
    },
    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),
    #[error("power iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("cannot sample from an empty place list")]
    EmptyChoice,
    #[error("could not draw an end place in {category} distinct from the start after {attempts} attempts")]
    RetryExhausted { category: PlaceCategory, attempts: usize },
    #[error("movement count must be positive")]
    ZeroCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum MovementKind {
    Recurring,
    Nonrecurring,
}

impl MovementKind {
    pub const ALL: [MovementKind; 2] = [MovementKind::Recurring, MovementKind::Nonrecurring];

    pub fn as_str(self) -> &'static str {
        match self {
            MovementKind::Recurring => "recurring",
            MovementKind::Nonrecurring => "nonrecurring",
        }
    }

    fn salt(self) -> u64 {
        match self {
            MovementKind::Recurring => 0x5245_4355,
            MovementKind::Nonrecurring => 0x4e4f_4e52,
        }
    }
}

impl std::str::FromStr for MovementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recurring" => Ok(MovementKind::Recurring),
            "nonrecurring" => Ok(MovementKind::Nonrecurring),
            other => Err(format!("unknown movement kind {other:?}")),
        }
    }
}

impl std::fmt::Display for MovementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampled endpoints, as positions in the model's [`PlaceSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MovementPair {
    pub start: usize,
    pub end: usize,
    pub start_category: PlaceCategory,
    pub end_category: PlaceCategory,
    pub kind: MovementKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelEntry {
    pub place: usize,
    pub checkins: u64,
}

/// Places grouped by category, each with its check-in count.
#[derive(Debug, Clone, Default)]
pub struct CategoryModel {
    members: [Vec<ModelEntry>; 5],
    alphas: [Vec<f64>; 5],
}

impl CategoryModel {
    pub fn from_places(places: &PlaceSet) -> Self {
        let mut members: [Vec<ModelEntry>; 5] = Default::default();
        for (i, p) in places.iter().enumerate() {
            members[p.category.index()].push(ModelEntry {
                place: i,
                checkins: p.checkins,
            });
        }
        Self::from_members(members)
    }

    pub fn from_members(members: [Vec<ModelEntry>; 5]) -> Self {
        let alphas = members
            .each_ref()
            .map(|m| m.iter().map(|e| e.checkins as f64 + 1.0).collect());
        Self { members, alphas }
    }

    pub fn members(&self, c: PlaceCategory) -> &[ModelEntry] {
        &self.members[c.index()]
    }

    /// `N_j` for each category.
    pub fn counts(&self) -> [usize; 5] {
        self.members.each_ref().map(Vec::len)
    }

    /// `h`, the number of Home places.
    pub fn home_count(&self) -> usize {
        self.members[PlaceCategory::Home.index()].len()
    }

    fn require(&self, c: PlaceCategory) -> Result<(), MobilityError> {
        if self.members[c.index()].is_empty() {
            Err(MobilityError::EmptyCategory(c))
        } else {
            Ok(())
        }
    }

    /// Uniform over Home, check-in weighted elsewhere.
    fn pick(&self, c: PlaceCategory, rng: &mut RngStream) -> Result<usize, MobilityError> {
        let list = &self.members[c.index()];
        let k = if c == PlaceCategory::Home {
            if list.is_empty() {
                return Err(MobilityError::EmptyChoice);
            }
            rng.uniform_index(list.len())
        } else {
            sample_dirichlet_index(&self.alphas[c.index()], rng)?
        };
        Ok(list[k].place)
    }
}

/// Two-stage draw over places with the given check-ins: a probability
/// vector from `Dirichlet(checkins + 1)`, then one categorical draw.
pub fn sample_weighted_place(checkins: &[u64], rng: &mut RngStream) -> Result<usize, MobilityError> {
    let alphas: Vec<f64> = checkins.iter().map(|&c| c as f64 + 1.0).collect();
    sample_dirichlet_index(&alphas, rng)
}

fn sample_dirichlet_index(alphas: &[f64], rng: &mut RngStream) -> Result<usize, MobilityError> {
    match alphas.len() {
        0 => Err(MobilityError::EmptyChoice),
        1 => Ok(0),
        _ => {
            let pi = rng.dirichlet(alphas);
            Ok(rng.categorical(&pi))
        }
    }
}

/// One home -> work movement and its reverse.
pub fn sample_recurring(model: &CategoryModel, rng: &mut RngStream) -> Result<(MovementPair, MovementPair), MobilityError> {
    use PlaceCategory::{Home, Work};
    model.require(Home)?;
    model.require(Work)?;
    let start = model.pick(Home, rng)?;
    let end = model.pick(Work, rng)?;
    let there = MovementPair {
        start,
        end,
        start_category: Home,
        end_category: Work,
        kind: MovementKind::Recurring,
    };
    let back = MovementPair {
        start: end,
        end: start,
        start_category: Work,
        end_category: Home,
        kind: MovementKind::Recurring,
    };
    Ok((there, back))
}

/// Start category uniform over all five; end category from the start
/// category's transition row. An end place equal to the start place is
/// redrawn up to [`MAX_ENDPOINT_REDRAWS`] times.
pub fn sample_nonrecurring(
    model: &CategoryModel,
    matrix: &TransitionMatrix,
    rng: &mut RngStream,
) -> Result<MovementPair, MobilityError> {
    for c in PlaceCategory::ALL {
        model.require(c)?;
    }
    let start_category = PlaceCategory::ALL[rng.uniform_index(5)];
    let start = model.pick(start_category, rng)?;
    let end_category = PlaceCategory::ALL[rng.categorical(matrix.row(start_category))];
    for _ in 0..MAX_ENDPOINT_REDRAWS {
        let end = model.pick(end_category, rng)?;
        if end != start {
            return Ok(MovementPair {
                start,
                end,
                start_category,
                end_category,
                kind: MovementKind::Nonrecurring,
            });
        }
    }
    Err(MobilityError::RetryExhausted {
        category: end_category,
        attempts: MAX_ENDPOINT_REDRAWS,
    })
}

/// `count` movements of one kind. Sample `i` uses its own substream of
/// `master_seed`, so the result does not depend on thread scheduling.
/// Recurring movements come in (there, back) couples; each couple counts
/// as two movements.
pub fn generate_movements(
    model: &CategoryModel,
    matrix: &TransitionMatrix,
    kind: MovementKind,
    count: usize,
    master_seed: u64,
) -> Result<Vec<MovementPair>, MobilityError> {
    if count == 0 {
        return Err(MobilityError::ZeroCount);
    }
    let seed = master_seed ^ kind.salt();
    match kind {
        MovementKind::Recurring => {
            let couples = count.div_ceil(2);
            let pairs: Vec<(MovementPair, MovementPair)> = (0..couples as u64)
                .into_par_iter()
                .map(|i| sample_recurring(model, &mut RngStream::substream(seed, i)))
                .collect::<Result<_, _>>()?;
            let mut out: Vec<MovementPair> = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
            out.truncate(count);
            Ok(out)
        }
        MovementKind::Nonrecurring => (0..count as u64)
            .into_par_iter()
            .map(|i| sample_nonrecurring(model, matrix, &mut RngStream::substream(seed, i)))
            .collect(),
    }
}

pub const MOVEMENTS_CSV_HEADER: [&str; 8] = ["idx", "kind", "start_id", "end_id", "start_lat", "start_lon", "end_lat", "end_lon"];

/// `idx,kind,start_id,end_id,start_lat,start_lon,end_lat,end_lon`; `idx`
/// numbers rows from `first_idx`.
pub fn write_movements_csv<W: Write>(
    movements: &[MovementPair],
    places: &PlaceSet,
    first_idx: usize,
    header: bool,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    if header {
        w.write_record(MOVEMENTS_CSV_HEADER)?;
    }
    for (k, m) in movements.iter().enumerate() {
        let (s, e) = (&places[m.start], &places[m.end]);
        w.write_record([
            (first_idx + k).to_string().as_str(),
            m.kind.as_str(),
            &s.id,
            &e.id,
            &s.geo.lat().to_string(),
            &s.geo.lon().to_string(),
            &e.geo.lat().to_string(),
            &e.geo.lon().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
