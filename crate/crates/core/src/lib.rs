//! Estimate a discrete distribution over combinations of binary symptoms by
//! fusing a maximum-entropy expert prior with empirical counts.
//!
//! * [`model`]: outcome space, distributions, counts, constraint sets and
//!   their file formats.
//! * [`maxent`]: the expert prior as the maximum-entropy distribution under
//!   marginal, forbidden-cell and minimum-present constraints.
//! * [`concentration`]: radii calibrating how far the estimate may move away
//!   from the empirical distribution.
//! * [`fusion`]: the L1 barycenter and KL centroid estimators, numerical
//!   oracles and guarantee diagnostics.
//! * [`sim`]: seeded simulation of error trajectories and coverage.
//! * [`cli`]: the `priorfuse` command line.

pub mod cli;
pub mod concentration;
pub mod error;
pub mod fusion;
pub mod maxent;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
