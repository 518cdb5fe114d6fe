//! Complex classical trajectories of `H = p^2 + x^2 (ix)^eps` on the
//! Riemann surface of `(ix)^eps`.

pub mod analysis;
pub mod classify;
pub mod dynamics;
pub mod error;
pub mod gamma;
pub mod surface;

pub use error::{OrbitError, Result};
