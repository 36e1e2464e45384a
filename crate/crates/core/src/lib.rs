//! Numerics for the homogeneity exponent beta(d, alpha, theta) of the Martin
//! kernel of the fractional Laplacian in right circular cones.
//!
//! The crate evaluates the closed-form constants of the problem, the radial
//! kernels of the spherical decomposition, a direct principal-value evaluator
//! of the fractional Laplacian in R^d (the independent oracle), a collocation
//! discretization of the spherical operator pair on the cap, the eigenvalue
//! root-solve and barrier bracketing for beta, and the asymptotic power-law
//! checks.

pub mod asymptotics;
pub mod bspline;
pub mod constants;
pub mod error;
pub mod euclidean;
pub mod kernels;
pub mod quad;
pub mod solver;
pub mod special;
pub mod spherical;

pub use constants::{eval_constants, omega_rate, slit_constant, ConstantSet, StableParams};
pub use error::{Error, Result};
pub use quad::QuadratureSpec;
