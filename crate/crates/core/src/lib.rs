//! Discrete simulation of coalescing-fragmentating Wasserstein dynamics:
//! ordered particles on the line whose diffusion rate is the inverse of the
//! mass they carry, which stick together on contact and are pulled apart by a
//! non-decreasing interaction potential.
//!
//! * [`monotone`]: monotone grid functions, clusters, level-set projection
//!   and isotonic projection.
//! * [`dynamics`]: the time stepper and full runs with invariant checks.
//! * [`observables`]: particle counts, probe martingales, quadratic
//!   variations and summary statistics.
//! * [`harness`]: experiment plans, replica orchestration and CSV/JSON output.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod monotone;
pub mod observables;
pub mod rng;

pub use error::{CfwdError, Result};
