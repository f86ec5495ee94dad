//! Numerical laboratory for the degenerate parabolic-parabolic Keller-Segel
//! system
//!
//! ```text
//! rho_t = Δ rho^m - div(rho ∇c),    c_t = Δc - c + rho,
//! ```
//!
//! in dimension `n >= 3` with diffusion exponent `2n/(n+2) < m < 2 - 2/n`.
//!
//! The crate is split along the computational layers:
//!
//! * [`constants`]: closed-form thresholds, Sobolev/HLS constants, heat-kernel
//!   constants and the exponent algebra of the `L^p` and Moser estimates.
//! * [`field`]: periodic grids, scalar fields, norms, spectral calculus and
//!   mollification, plus the `KSF1` binary field format.
//! * [`semigroup`]: the damped heat semigroup, the mild (Duhamel) solution
//!   for `c` and numerical checks of the heat-semigroup estimates.
//! * [`dynamics`]: time integration of the regularized system.
//! * [`criterion`]: free energies, initial-data classification and per-snapshot
//!   diagnostics.

pub mod constants;
pub mod criterion;
pub mod dynamics;
mod error;
pub mod field;
pub mod semigroup;

pub use error::{Error, Result};
