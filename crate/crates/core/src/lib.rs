//! Spectral simulation and verification toolkit for small disturbances of
//! three-dimensional plane Couette flow.
//!
//! The perturbation `u` of the base shear `(y, 0, 0)` is evolved in the
//! shearing frame `X = x - t y`, where `grad^L = (d_X, d_y - t d_X, d_z)` and
//! the Laplacian symbol is `-(k^2 + (eta - k t)^2 + l^2)`.

pub mod coord;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod initial;
pub mod linear;
pub mod multipliers;
pub mod solver;
pub mod spectral;
pub mod streak;
pub mod toy;

pub use error::{Error, Result};
