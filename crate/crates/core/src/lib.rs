//! Simulation and verification kernels for conservative Ginzburg-Landau
//! dynamics on finite graphs.
//!
//! The crate simulates the mass SDE with edge-indexed Brownian noise and the
//! random walk in the evolving environment whose jump rates are the local
//! potential curvature, and verifies their covariance identities against
//! exact small-instance oracles: heat kernels, two-sided covariance bounds,
//! FKG positivity, order preservation under shared-noise coupling, spectral
//! gap comparisons, and the oriented-edge ("kite") representation of the
//! Gaussian case.
//!
//! Modules:
//! - [`graph`]: finite graphs, oriented edges, Laplacians, the kite graph
//! - [`potential`]: site and pair potential families, exact marginal sampling
//! - [`dynamics`]: Euler-Maruyama integration and shared-noise coupling
//! - [`walker`]: the jump process in the dynamic environment
//! - [`oracle`]: dense-linear-algebra ground truths
//! - [`estimators`]: Monte Carlo estimates and statistical verdicts
//! - [`rng`]: counter-derived random streams for reproducible parallelism

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod oracle;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod walker;

pub use error::{Error, Result};
