//! Borrowing pilot-study data through robust MAP mixture priors when planning
//! a two-arm trial with a binary endpoint.
//!
//! The crate is organized bottom-up:
//!
//! - [`stats`]: log-gamma, log-beta, regularized incomplete beta, beta-binomial
//!   marginal likelihood, binomial sampling.
//! - [`prior`]: robust mixture priors from pilot counts and their conjugate
//!   updating with marginal-likelihood reweighting.
//! - [`decision`]: posterior probability that treatment beats control, and
//!   the threshold rule.
//! - [`sim`]: the Monte Carlo trial simulation, power estimation and minimal
//!   sample size search.
//! - [`feasibility`]: expected duration and Gamma-Poisson recruitment
//!   probabilities.
//! - [`scenario`]: JSON run configuration, grid execution and CSV output.

pub mod decision;
pub mod error;
pub mod feasibility;
pub mod prior;
pub mod quadrature;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
