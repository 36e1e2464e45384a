//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A constructor or operation received an argument outside its domain.
    #[error("invalid {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Kernel argument hit the t -> 1 singularity (u_lambda(1) = +inf).
    #[error("kernel argument t = {t} is inside the singular cutoff at 1")]
    SingularArgument { t: f64 },

    /// Adaptive quadrature exhausted its panel budget.
    #[error("quadrature tolerance not met: requested {requested:.3e}, achieved {achieved:.3e}")]
    ToleranceNotMet { requested: f64, achieved: f64 },

    /// Principal-value evaluation requested at a point where the field is not C^2.
    #[error("field is not C^2 at the evaluation point")]
    NotSmoothHere,

    /// Inversion or Riesz kernel evaluated at the origin.
    #[error("operation is singular at the origin")]
    OriginSingular,

    /// Every eigenvector of the discretized operator changes sign.
    #[error("no eigenvector of uniform sign found (discretization failure)")]
    NoPositiveEigenvector,

    /// The principal eigenvalue does not change sign on (0, alpha).
    #[error("principal eigenvalue does not change sign on (0, alpha)")]
    BracketFailure,

    /// Barrier construction targets narrow cones only.
    #[error("barrier construction supports apertures theta <= pi/3, got {theta}")]
    UnsupportedAperture { theta: f64 },

    /// Neither barrier sign condition could be achieved on (0, alpha).
    #[error("no sign separation for the barrier on (0, alpha)")]
    NoSignSeparation,

    /// Power-law fit fed a record with alpha - beta <= 0.
    #[error("degenerate power-law fit: alpha - beta must be positive for every record")]
    DegenerateFit,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}
