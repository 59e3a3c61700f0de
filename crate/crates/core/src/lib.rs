//! Numerical laboratory for quasilinear degenerate parabolic SPDEs driven by
//! cylindrical Wiener noise on the periodic torus.
//!
//! The crate builds the three-stage approximation cascade (fourth-order
//! regularization, flux truncation, vanishing viscosity) for
//!
//! ```text
//! du + div(B(u)) dt = div(A(u) grad u) dt + Phi(u) dW,   x in T^N,
//! ```
//!
//! and a verification harness for the computable consequences of its
//! well-posedness theory: L1 contraction under common noise, tau-uniform
//! energy bounds, the Cauchy property of the viscous family, fractional
//! Sobolev regularity with its exponent, kinetic-formulation residuals, and
//! the generalized Ito formula.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kinetic;
pub mod model;
pub mod noise;
pub mod quad;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{ScalarField, TorusGrid, Trajectory};
pub use kinetic::{KineticField, KineticMeasureEstimate, VelocityGrid};
pub use model::{catalog, Diffusion, Flux, InitialData, NoiseFamily, ProblemSpec};
pub use noise::{NoisePath, NoisePathId};
pub use solver::{RegularizationParams, SchemeTag};
