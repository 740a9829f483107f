//! Dynamic MRI reconstruction with a time-dependent deep image prior.
//!
//! A small convolutional generator is driven by latent variables that are
//! interpolated over time and fitted, through a radial NuFFT forward model,
//! to golden-angle k-space spokes. Backprojection, temporal-TV compressed
//! sensing and all-spoke overlap baselines share the same inputs.

pub mod diffcore;
mod error;
pub mod forward;
pub mod generator;
pub mod io;
pub mod latents;
pub mod metrics;
pub mod phantom;
pub mod recon;
pub mod selftest;

pub use error::{Error, FormatError, Result};
