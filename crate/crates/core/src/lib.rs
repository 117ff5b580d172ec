//! Simulation and tomography of the light emitted by a driven two-level atom in
//! a one-dimensional waveguide: homodyne quantum trajectories, temporal-mode
//! filtering, maximum-likelihood state reconstruction and Wigner negativity.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod modefilter;
pub mod qcore;
pub mod rng;
pub mod tomography;
pub mod trajectory;
pub mod wigner;

pub use error::{Error, Result};
