//! Drift-camouflage simulation toolkit.
//!
//! The crate builds diffusions that carry a drift an outside observer
//! cannot see, and the machinery to verify that claim:
//!
//! - [`paths`]: uniform time grids, seeded Brownian sampling, and the
//!   discrete stochastic calculus (left-endpoint Ito/Riemann sums,
//!   quadratic variation).
//! - [`filtering`]: the hidden-drift diffusion `dS = mu_t dt + dB` with
//!   `mu_t = 2 mu / (1 + exp(2 mu B_t + 2 mu^2 t))`, its sign-scrambled
//!   observation `Y = eps * S`, the closed-form conditional probability of
//!   `eps = +1`, and the Bayesian filter that shows `Y` is Brownian in the
//!   observer's own filtration.
//! - [`levy`]: the sign-integral transform `M = int sign(X) dX` and the
//!   local-time estimate it induces.
//! - [`concat`]: restarts of the construction each time the sign integral
//!   leaves a small band, glued so the drift stays uniformly close to a
//!   target `mu` while the transform remains Brownian.
//! - [`battery`]: a statistical test battery for "is this ensemble
//!   Brownian?", with calibrated p-values.
//! - [`scramble`]: the discrete analogue on biased coin sequences with
//!   exact rational bookkeeping.
//! - [`stats`]: the shared statistical helpers (CDFs, KS tests, small OLS).

pub mod battery;
pub mod concat;
pub mod error;
pub mod filtering;
pub mod levy;
pub mod paths;
pub mod scramble;
pub mod stats;

pub use error::{Error, Result};
