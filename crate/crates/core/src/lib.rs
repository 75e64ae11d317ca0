//! Boundary-integral simulation of capillarity-driven Hele-Shaw flow on
//! star-shaped domains.
//!
//! The free boundary is the graph `r = ρ(τ)` over the unit circle. The
//! pressure is represented by a double-layer potential whose density solves a
//! second-kind integral equation, and the boundary evolves by the quasilinear
//! law `dρ/dt = Φ(ρ)[ρ]`.
//!
//! Module map:
//!
//! * [`spectral`]: periodic pseudo-spectral calculus on uniform grids.
//! * [`geometry`]: the contour `Ξ_ρ = ρ n`, curvature split, area/centroid.
//! * [`singular_ops`]: the `B^p_{n,m}` kernel family and Nyström assembly of
//!   the double layer `𝔻`, the operator `𝔹`, and their adjoints.
//! * [`layer_solve`]: the second-kind solves and the density maps `α₁`, `α₂`.
//! * [`evolution`]: the evolution operator `Φ` and time stepping.
//! * [`field`]: interior pressure/gradient and boundary traces.
//! * [`validation`]: identity checks, linearization spectrum, reports.

// Negated comparisons are used so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod layer_solve;
pub mod singular_ops;
pub mod spectral;
pub mod validation;

pub use error::{Error, Result};
pub use evolution::{EvolutionState, Method, StepperConfig};
pub use geometry::{FourierProfile, RadialContour};
pub use layer_solve::{LayerDensity, SolveContext};
pub use singular_ops::{KernelSpec, OperatorMatrices};
pub use spectral::SpectralFunction;
pub use validation::{Check, CheckReport};
