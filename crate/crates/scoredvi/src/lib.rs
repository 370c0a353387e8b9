//! Single-image denoising by deep variational inference over a pixel-wise
//! Gaussian-mixture noise model, guided by score estimates extracted from
//! pluggable MMSE Gaussian denoisers.
//!
//! The numeric core is generic over the scalar type (f32/f64) through the
//! [`Real`] trait; the concrete aliases below fix f64, which the engine and
//! the CLI use throughout.

pub mod error;
pub mod real;
pub mod tensor;

pub mod elbo;
pub mod io;
pub mod metrics;
pub mod noise_est;
pub mod oracle;
pub mod params;
pub mod selftest;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{pd_down, ImageTensor, NoiseVarMap, SubImageGrid};

/// Default scalar type of the engine.
pub type Scalar = f64;
/// C×H×W tensor over the default scalar.
pub type Image = ImageTensor<Scalar>;
/// Per-pixel noise variance map over the default scalar.
pub type NoiseVar = NoiseVarMap<Scalar>;
/// Single-precision tensor alias.
pub type Image32 = ImageTensor<f32>;
