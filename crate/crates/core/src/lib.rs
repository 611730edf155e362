//! Simulation of explicit stochastic differential-algebraic equations (SDAEs)
//! on embedded Riemannian manifolds.
//!
//! * [`geometry`]: extrinsic manifolds, charts, projectors, retractions.
//! * [`diffusion`]: diffusors, diffusion generators and the
//!   intrinsic/Stratonovich/Ito conversion corrections.
//! * [`problem`]: SDAE definition, index classification, index-1 reduction.
//! * [`solver`]: Wiener paths, Heun and Euler steppers, the Y-function,
//!   bounded m-solution algorithms and ensemble diagnostics.
//! * [`examples`]: registry of built-in problems.
//! * [`cli`]: command-line surface and file formats.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod examples;
pub mod fd;
pub mod geometry;
pub mod jet;
pub mod problem;
pub mod solver;

pub use error::{Result, SdaeError};

/// Dense real vector in ambient or local coordinates.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
