//! Numerics for entropy growth and free-energy decay in macroscopic systems.
//!
//! The crate has five domain modules:
//!
//! - [`fields`]: cell-centered grids, discrete operators, and monotone
//!   constitutive functions `sigma`.
//! - [`functionals`]: entropy and free-energy functionals, from exact
//!   phase-volume counts over occupancy macrostates down to large-deviation
//!   rate densities for density profiles.
//! - [`transport`]: explicit finite-volume evolution of heat conduction and
//!   nonlinear density diffusion, with entropy-balance and Lyapunov audits.
//! - [`kinetic`]: discrete-velocity BGK relaxation with exact moment
//!   conservation and a monotone entropy audit.
//! - [`zrp`]: boundary-driven zero-range processes: exact single-site
//!   measures, Gillespie sampling of the steady state, and an
//!   exact-convolution estimator of the density large-deviation rate.

pub mod error;
pub mod fields;
pub mod functionals;
pub mod kinetic;
pub mod transport;
pub mod zrp;

mod interp;

pub use error::{Error, Result};
