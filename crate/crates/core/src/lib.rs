//! Pathwise analysis of paths of finite p-variation (variation norms, Young
//! integrals, Young ODEs) together with a least-squares Monte Carlo solver
//! for backward stochastic differential equations that carry an additional
//! drift integrated against a deterministic finite q-variation path, and the
//! associated stochastic representation of semilinear parabolic PDEs driven
//! by such paths.
//!
//! Everything is deterministic given explicit seeds: random draws come from
//! a counter-based generator keyed by (seed, path, node, coordinate), so
//! results are independent of thread schedules.

pub mod bsde;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod paths;
pub mod regression;
pub mod rng;
pub mod rpde;
pub mod signals;
pub mod young;

pub use error::{Error, Result};

/// Library version, embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
