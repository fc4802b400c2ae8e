//! Tractable Bayesian networks over binary variables with decision-tree
//! CPDs, compiled to sentential decision diagrams for exact inference.
//!
//! The pipeline: [`data`] loads or generates binary cohorts; [`learn`] runs
//! ordering-based structure search with tractability-penalized tree growth;
//! [`encode`] compiles a network to an SDD with indicator and parameter
//! weights; [`query`] answers conditionals and symmetric counting queries
//! (how many diseases of a group a patient gains between two periods) by
//! weighted model counting — over the reals for probabilities and over a
//! shift-polynomial semiring for whole count distributions in one pass.
//!
//! Core numeric code is generic over the probability scalar through
//! [`num::Scalar`] and over the counting semiring through
//! [`semiring::Semiring`]; `f64` is the working type and exact rationals
//! plug in for oracle-grade checks.

pub mod data;
pub mod encode;
pub mod error;
pub mod learn;
pub mod model;
pub mod num;
pub mod query;
pub mod sdd;
pub mod semiring;
pub mod vtree;

pub use error::{Error, Result};

/// Default-precision aliases; the CLI and learner work at `f64`.
pub type BayesianNetwork64 = model::BayesianNetwork<f64>;
pub type CompiledModel64 = encode::CompiledModel<f64>;
pub type ShiftPolynomial64 = semiring::ShiftPolynomial<f64>;
pub type WeightMap64 = sdd::WeightMap<f64>;
