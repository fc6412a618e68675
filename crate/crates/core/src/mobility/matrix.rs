//! Category transition matrix and Markov-chain stationary distributions.

use serde::Serialize;

use super::MobilityError;
use crate::dataset::PlaceCategory;

/// Tolerance on row sums and distribution totals.
pub const STOCHASTIC_TOL: f64 = 1e-9;
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-12;
pub const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// Whether a move between two categories is permitted off the diagonal.
/// Home and Work never transition into each other.
pub fn transition_allowed(from: PlaceCategory, to: PlaceCategory) -> bool {
    use PlaceCategory::{Home, Work};
    from != to && !matches!((from, to), (Home, Work) | (Work, Home))
}

/// Row-stochastic 5x5 matrix over categories in fixed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    rows: [[f64; 5]; 5],
    epsilon: f64,
}

impl TransitionMatrix {
    /// `w_ij = N_j / M_i - epsilon / Z_i` for every allowed `i -> j`, where
    /// `M_i` sums `N_k` over the allowed targets of row `i` and `Z_i` counts
    /// them. The diagonal is `epsilon`; Home<->Work is 0.
    pub fn build(counts: [usize; 5], epsilon: f64) -> Result<Self, MobilityError> {
        if let Some(cat) = PlaceCategory::ALL.into_iter().find(|c| counts[c.index()] == 0) {
            return Err(MobilityError::EmptyCategory(cat));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(MobilityError::InvalidEpsilon(epsilon));
        }
        let mut rows = [[0.0; 5]; 5];
        for from in PlaceCategory::ALL {
            let targets: Vec<PlaceCategory> = PlaceCategory::ALL
                .into_iter()
                .filter(|&to| transition_allowed(from, to))
                .collect();
            let z = targets.len() as f64;
            let m: usize = targets.iter().map(|t| counts[t.index()]).sum();
            let row = &mut rows[from.index()];
            row[from.index()] = epsilon;
            for to in targets {
                let w = counts[to.index()] as f64 / m as f64 - epsilon / z;
                if w < 0.0 {
                    return Err(MobilityError::NegativeEntry { from, to, value: w });
                }
                row[to.index()] = w;
            }
        }
        Ok(Self { rows, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rows(&self) -> &[[f64; 5]; 5] {
        &self.rows
    }

    pub fn get(&self, from: PlaceCategory, to: PlaceCategory) -> f64 {
        self.rows[from.index()][to.index()]
    }

    pub fn row(&self, from: PlaceCategory) -> &[f64; 5] {
        &self.rows[from.index()]
    }

    pub fn to_stochastic(&self) -> StochasticMatrix {
        StochasticMatrix::new(self.rows.iter().map(|r| r.to_vec()).collect()).expect("transition matrix is row-stochastic")
    }

    pub fn stationary(&self, tol: f64) -> Result<CategoryDistribution, MobilityError> {
        let pi = stationary_distribution(&self.to_stochastic(), tol)?;
        Ok(CategoryDistribution(pi.try_into().expect("five categories")))
    }
}

/// Dense square matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MobilityError> {
        let n = rows.len();
        if n == 0 {
            return Err(MobilityError::NotStochastic("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return Err(MobilityError::NotStochastic(format!("row {i} has {} entries, expected {n}", r.len())));
            }
            if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(MobilityError::NotStochastic(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MobilityError::NotStochastic(format!("row {i} sums to {s}")));
            }
            data.extend(r);
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `v * P` for a row vector `v`.
    pub fn left_multiply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate().take(self.n) {
            if vi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.n..(i + 1) * self.n];
            for (o, p) in out.iter_mut().zip(row) {
                *o += vi * p;
            }
        }
    }
}

/// Power iteration from the uniform vector until the L1 change between
/// iterates drops below `tol`.
pub fn stationary_distribution(p: &StochasticMatrix, tol: f64) -> Result<Vec<f64>, MobilityError> {
    let n = p.size();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_POWER_ITERATIONS {
        p.left_multiply(&pi, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < tol {
            return Ok(pi);
        }
    }
    Err(MobilityError::NonConvergence {
        iterations: MAX_POWER_ITERATIONS,
    })
}

/// Probabilities over the five categories in fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryDistribution(pub [f64; 5]);

impl CategoryDistribution {
    pub fn get(&self, c: PlaceCategory) -> f64 {
        self.0[c.index()]
    }
}
