//! Simulated pedestrian movement and its overlap with virtual locations,
//! places that have a website.

// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coverage;
pub mod dataset;
pub mod geo;
pub mod mobility;
pub mod routing;
pub mod visits;
