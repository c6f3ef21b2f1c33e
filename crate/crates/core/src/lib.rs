//! Numerical laboratory for positive and singular solutions of `Δu = m·u^{−α}`.
//!
//! Module map:
//! - [`grid`]: domains, fields, discrete Laplacian, quadrature.
//! - [`radial`]: shooting for the radial ODE and bifurcation scans.
//! - [`solver`]: Newton and monotone maximal-solution iterations.
//! - [`stability`]: linearized operator, smallest eigenvalue, energies.
//! - [`continuation`]: boundary-data homotopies and singular sequences.
//! - [`analysis`]: estimate verifiers.
//! - [`oracle`]: slow independent reference implementations used by tests.

pub mod analysis;
pub mod continuation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod radial;
pub mod reproduce;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
