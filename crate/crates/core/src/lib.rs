//! Variance-reduction guidance for diffusion sampling trajectories.
//!
//! The pipeline profiles a denoiser's per-level prediction error, models it
//! as a piecewise-linear function of the noise level, and reshapes a
//! predefined sampling trajectory to minimize the variance of the error that
//! accumulates through a deterministic DDIM sampler.

pub mod denoiser;
pub mod error;
pub mod eval;
pub mod forward;
pub mod interp;
pub mod io;
pub mod profiler;
pub mod rng;
pub mod sampler;
pub mod trajectory;
pub mod vrg;

pub use error::{Result, VrgError};
