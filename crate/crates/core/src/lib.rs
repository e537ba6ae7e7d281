//! Adiabatic population transfer in three coupled waveguides with
//! absorption: spectra, exceptional points, propagation and phase
//! diagrams of the transfer probability.

pub mod analysis;
pub mod eigen;
pub mod error;
pub mod model;
pub mod propagate;
pub mod sweep;

pub use error::{Error, Result};
