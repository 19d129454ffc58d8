//! Bayesian inversion of quantum thermal averages.
//!
//! A ring-polymer path-integral molecular dynamics solver ([`pimd`]) maps a
//! candidate potential to thermal averages of bounded observables. The
//! [`inversion`] sampler wraps it in a Metropolis–Hastings chain over
//! truncated Hermite expansions of the potential ([`basis`]) and returns
//! posterior predictions for test observables. [`twolevel`] extends the
//! forward solver to two coupled electronic levels with surface hopping,
//! [`metrics`] holds the distances and the noise-stability harness, and
//! [`experiment`] wires everything to configuration files and CSV output.

pub mod basis;
pub mod error;
pub mod experiment;
pub mod inversion;
pub mod metrics;
pub mod pimd;
pub mod ringpoly;
pub mod stats;
pub mod twolevel;

pub use error::{Error, Result};
