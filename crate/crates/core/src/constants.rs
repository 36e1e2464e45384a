//! Closed-form constants of the problem: the fractional-Laplacian normalizer,
//! ball exit-time constants, the Martin-exponent coefficient B_{d,alpha}, and
//! the aperture error rate omega(theta).

use crate::error::{Error, Result};
use crate::special::{beta, gamma};
use std::f64::consts::PI;

/// Global problem parameters: dimension d >= 2 and stability index
/// alpha in (0, 2).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StableParams {
    d: u32,
    alpha: f64,
}

impl StableParams {
    pub fn new(d: u32, alpha: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("d", format!("dimension must be >= 2, got {d}")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(
                "alpha",
                format!("stability index must lie in (0, 2), got {alpha}"),
            ));
        }
        Ok(StableParams { d, alpha })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn df(&self) -> f64 {
        self.d as f64
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Every closed-form constant used by the other modules, evaluated from
/// gamma/beta functions.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConstantSet {
    /// A_d^alpha = alpha 2^(alpha-1) pi^(-d/2) Gamma((d+alpha)/2) / Gamma(1-alpha/2),
    /// the normalizer of the principal-value jump integral.
    pub a_norm: f64,
    /// C_{d,alpha} = Gamma(d/2) / (2^alpha Gamma((d+alpha)/2) Gamma(1+alpha/2)),
    /// the coefficient of the ball exit profile in dimension d.
    pub c_ball_d: f64,
    /// C_{d-1,alpha}: same constant one dimension down (cylinder profile).
    pub c_ball_dm1: f64,
    /// B_{d,alpha} = Gamma((d+alpha)/2)/(pi^(3/2) Gamma((d-1+alpha)/2))
    ///             * sin(pi alpha/2) * B(1+alpha/2, (d-1)/2).
    pub b_martin: f64,
    /// C~_{d,alpha} = (1/2) omega_{d-1} C_{d-1,alpha} B(1+alpha/2, (d-1)/2),
    /// the cap-integral constant of the barrier profile.
    pub c_tilde: f64,
    /// omega_d = sigma(S^{d-1}) = 2 pi^(d/2) / Gamma(d/2).
    pub omega_sphere_d: f64,
}

/// Surface measure of the unit sphere in R^k: sigma(S^{k-1}).
pub fn sphere_area(k: u32) -> f64 {
    let kf = k as f64;
    2.0 * PI.powf(kf / 2.0) / gamma(kf / 2.0)
}

fn ball_constant(d: f64, alpha: f64) -> f64 {
    gamma(d / 2.0) / (2f64.powf(alpha) * gamma((d + alpha) / 2.0) * gamma(1.0 + alpha / 2.0))
}

/// Normalizer A_d^alpha of the fractional Laplacian.
pub fn frac_lap_normalizer(params: &StableParams) -> f64 {
    let d = params.df();
    let alpha = params.alpha();
    alpha * 2f64.powf(alpha - 1.0) * PI.powf(-d / 2.0) * gamma((d + alpha) / 2.0)
        / gamma(1.0 - alpha / 2.0)
}

/// Evaluate the full constant set to >= 12 significant digits.
pub fn eval_constants(params: &StableParams) -> ConstantSet {
    let d = params.df();
    let alpha = params.alpha();
    let a_norm = frac_lap_normalizer(params);
    let c_ball_d = ball_constant(d, alpha);
    let c_ball_dm1 = ball_constant(d - 1.0, alpha);
    let b_half = beta(1.0 + alpha / 2.0, (d - 1.0) / 2.0);
    let b_martin = gamma((d + alpha) / 2.0) / (PI.powf(1.5) * gamma((d - 1.0 + alpha) / 2.0))
        * (PI * alpha / 2.0).sin()
        * b_half;
    let omega_dm1 = sphere_area(params.d() - 1);
    let c_tilde = 0.5 * omega_dm1 * c_ball_dm1 * b_half;
    ConstantSet {
        a_norm,
        c_ball_d,
        c_ball_dm1,
        b_martin,
        c_tilde,
        omega_sphere_d: sphere_area(params.d()),
    }
}

/// Aperture error rate: theta^alpha for alpha < 1, theta |ln theta| at
/// alpha = 1, theta for alpha > 1. Defined for theta in (0, 1) only, where
/// |ln theta| keeps a single sign.
pub fn omega_rate(theta: f64, alpha: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid(
            "theta",
            format!("omega rate requires theta in (0, 1), got {theta}"),
        ));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::invalid(
            "alpha",
            format!("stability index must lie in (0, 2), got {alpha}"),
        ));
    }
    Ok(if alpha < 1.0 {
        theta.powf(alpha)
    } else if alpha == 1.0 {
        theta * theta.ln().abs()
    } else {
        theta
    })
}

/// Closed form of B_{d,1}:
/// (1/(2 pi)) ((d-1)/d) Gamma((d-1)/2)^2 / Gamma(d/2)^2.
pub fn slit_constant(d: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::invalid("d", format!("dimension must be >= 2, got {d}")));
    }
    let df = d as f64;
    let ratio = gamma((df - 1.0) / 2.0) / gamma(df / 2.0);
    Ok((df - 1.0) / df * ratio * ratio / (2.0 * PI))
}
