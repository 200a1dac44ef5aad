//! Asymptotic admissibility of Bayes priors.
//!
//! Risks of priors are second-order elliptic forms in the prior and the
//! asymptotic covariance `V`. This crate discretizes those forms on rectangular
//! grids, classifies priors as admissible or not through their boundary
//! integrals, solves Brown's equation to build priors that beat the uniform,
//! and estimates risk-matching priors by Feynman-Kac path sampling.

// NaN must fail validity checks, so `!(x > 0.0)` is deliberate throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod admissibility;
pub mod beat_uniform;
pub mod covariance;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod paths;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
