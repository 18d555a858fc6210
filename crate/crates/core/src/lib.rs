//! Simulation and verification toolkit for stochastic Volterra equations
//!
//! ```text
//! X_t = X0 + ∫_0^t φ(t−s) b(X_s) ds + ∫_0^t φ(t−s) σ(X_s) dW_s
//! ```
//!
//! with diagonal kernels `φ_i(u) = c_i u^{H−1/2} + φ̂_i(u)`. The crate covers
//! kernel construction and checks, reproducible Brownian paths, the
//! frozen-coefficient Euler scheme with its error process and limit equation,
//! Monte Carlo diagnostics, and quadrature checks of the auxiliary integrals.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod kernels;
pub mod paths;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Result, SveError};
