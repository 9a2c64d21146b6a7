//! Simulation laboratory for the strong L2 convergence of the
//! Euler-Maruyama scheme under irregular drift.
//!
//! The crate couples every discretisation level of an experiment to one
//! Brownian path per seed, estimates mean-square errors and regularisation
//! statistics with confidence intervals, fits convergence rates, and checks
//! the one-dimensional scale transform and the Kolmogorov heat-semigroup
//! solver against their analytic identities. Everything is deterministic in
//! the experiment seed, independent of the worker count.

pub mod config;
pub mod drift;
pub mod em;
pub mod error;
pub mod error_curve;
pub mod pde;
pub mod quadrature;
pub mod rate;
pub mod report;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod zvonkin;

pub use error::{LabError, Result};
