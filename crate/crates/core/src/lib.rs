//! Empirical stochastic processes built from time-indexed samples, the
//! time-dependent L-statistics they linearize, closed-form limit covariances
//! evaluated by quadrature, and a Monte Carlo laboratory that checks one
//! against the other.

pub mod cli;
pub mod empirical;
pub mod error;
pub mod mc;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
