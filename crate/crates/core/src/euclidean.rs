//! Direct principal-value evaluator of the fractional Laplacian at a point
//! of R^d, together with the explicit special functions of the construction:
//! ball exit profile, Riesz kernel, cylinder profile, Kelvin transform and
//! the cone barrier profile. This module is the independent oracle that the
//! spherical discretization is checked against.
//!
//! The PV integral is evaluated in polar coordinates around the point:
//!
//!   lap Phi(x) = A_d^alpha [ N + M + F - Phi(x) omega_d R^-alpha / alpha ],
//!
//! with N the near-ball integral of the symmetrized second difference
//! (the symmetric pair Phi(x+z) + Phi(x-z) - 2 Phi(x) cancels the gradient
//! term of the Taylor expansion exactly), M the mid-range shell integral and
//! F the far-field contribution mapped to a finite interval by rho = R / w.

use crate::constants::{eval_constants, frac_lap_normalizer, sphere_area, StableParams};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_power, QuadratureSpec};
use std::sync::Arc;

/// A scalar field on R^d with the declarations the PV evaluator needs:
/// where it is C^2, how it grows, and where its spherical features sit.
pub trait ScalarField: Sync + Send {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Radius of a ball around `x` on which the field is C^2 (0 if not C^2
    /// at `x`). Conservative underestimates are fine.
    fn smoothness_radius(&self, x: &[f64]) -> f64;

    /// The field vanishes outside the centered ball of this radius, if any.
    fn support_radius(&self) -> Option<f64> {
        None
    }

    /// Growth bound |Phi(y)| <= coeff (1 + |y|)^exponent; exponent must be
    /// < alpha for the defining integral to converge.
    fn growth(&self) -> (f64, f64);

    /// Rotation invariance about the origin (enables exact angular
    /// reduction for d = 3).
    fn is_radial(&self) -> bool {
        false
    }

    /// Radii rho at which the sphere |y - x| = rho touches a feature of the
    /// field (support boundary, kink, point singularity); used to seed
    /// radial breakpoints.
    fn feature_radii(&self, x: &[f64]) -> Vec<f64> {
        let _ = x;
        Vec::new()
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cone geometry: aperture and the inversion radius epsilon = tan(theta/2).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConeGeometry {
    theta: f64,
    epsilon: f64,
}

impl ConeGeometry {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Err(Error::invalid(
                "theta",
                format!("aperture must lie in (0, pi), got {theta}"),
            ));
        }
        Ok(ConeGeometry {
            theta,
            epsilon: (theta / 2.0).tan(),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

// ---------------------------------------------------------------------------
// Closed-form fields
// ---------------------------------------------------------------------------

/// Expected exit time profile of the ball: S(x) = C_{d,alpha}(1-|x|^2)^(alpha/2).
#[derive(Clone)]
pub struct ExitProfile {
    params: StableParams,
    c: f64,
}

impl ExitProfile {
    pub fn new(params: &StableParams) -> Self {
        ExitProfile {
            params: *params,
            c: eval_constants(params).c_ball_d,
        }
    }
}

/// S(x), zero outside the unit ball.
pub fn exit_profile(params: &StableParams, x: &[f64]) -> f64 {
    ExitProfile::new(params).eval(x)
}

impl ScalarField for ExitProfile {
    fn dim(&self) -> usize {
        self.params.d() as usize
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            0.0
        } else {
            self.c * (1.0 - r2).powf(self.params.alpha() / 2.0)
        }
    }
    fn smoothness_radius(&self, x: &[f64]) -> f64 {
        (norm(x) - 1.0).abs()
    }
    fn support_radius(&self) -> Option<f64> {
        Some(1.0)
    }
    fn growth(&self) -> (f64, f64) {
        (self.c, 0.0)
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn feature_radii(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        vec![(r - 1.0).abs(), r + 1.0]
    }
}

/// Cylinder profile s_eps(y) = C_{d-1,alpha}(eps^2 - |y~|^2)_+^(alpha/2),
/// depending on the first d-1 coordinates only.
#[derive(Clone)]
pub struct CylinderProfile {
    params: StableParams,
    eps: f64,
    c: f64,
}

impl CylinderProfile {
    pub fn new(params: &StableParams, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid("epsilon", "cylinder radius must be positive"));
        }
        Ok(CylinderProfile {
            params: *params,
            eps,
            c: eval_constants(params).c_ball_dm1,
        })
    }
}

/// s_eps(y); d >= 2 enforced by StableParams.
pub fn cylinder_profile(params: &StableParams, eps: f64, y: &[f64]) -> Result<f64> {
    Ok(CylinderProfile::new(params, eps)?.eval(y))
}

impl ScalarField for CylinderProfile {
    fn dim(&self) -> usize {
        self.params.d() as usize
    }
    fn eval(&self, y: &[f64]) -> f64 {
        let r2: f64 = y[..y.len() - 1].iter().map(|v| v * v).sum();
        let q = self.eps * self.eps - r2;
        if q <= 0.0 {
            0.0
        } else {
            self.c * q.powf(self.params.alpha() / 2.0)
        }
    }
    fn smoothness_radius(&self, y: &[f64]) -> f64 {
        let r: f64 = y[..y.len() - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        (r - self.eps).abs()
    }
    fn growth(&self) -> (f64, f64) {
        (self.c * self.eps.powf(self.params.alpha()), 0.0)
    }
    fn feature_radii(&self, y: &[f64]) -> Vec<f64> {
        let r: f64 = y[..y.len() - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        vec![(r - self.eps).abs(), r + self.eps]
    }
}

/// Riesz kernel h(y) = |y|^(alpha - d), alpha-harmonic off the origin.
#[derive(Clone)]
pub struct RieszKernel {
    params: StableParams,
}

impl RieszKernel {
    pub fn new(params: &StableParams) -> Self {
        RieszKernel { params: *params }
    }
}

/// h(y) for y != 0.
pub fn riesz(params: &StableParams, y: &[f64]) -> Result<f64> {
    let r = norm(y);
    if r == 0.0 {
        return Err(Error::OriginSingular);
    }
    Ok(r.powf(params.alpha() - params.df()))
}

impl ScalarField for RieszKernel {
    fn dim(&self) -> usize {
        self.params.d() as usize
    }
    fn eval(&self, y: &[f64]) -> f64 {
        let r = norm(y);
        if r == 0.0 {
            f64::INFINITY
        } else {
            r.powf(self.params.alpha() - self.params.df())
        }
    }
    fn smoothness_radius(&self, y: &[f64]) -> f64 {
        norm(y)
    }
    fn growth(&self) -> (f64, f64) {
        // |y|^(alpha-d) <= 1 for |y| >= 1; the local singularity is
        // integrable and resolved through feature radii.
        (1.0, (self.params.alpha() - self.params.df()).max(0.0))
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn feature_radii(&self, y: &[f64]) -> Vec<f64> {
        vec![norm(y)]
    }
}

/// Constant field.
#[derive(Clone)]
pub struct ConstantField {
    pub dim: usize,
    pub value: f64,
}

impl ScalarField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn smoothness_radius(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
    fn growth(&self) -> (f64, f64) {
        (self.value.abs(), 0.0)
    }
    fn is_radial(&self) -> bool {
        true
    }
}

/// Inversion through the unit sphere: T x = x / |x|^2.
pub fn invert(x: &[f64]) -> Result<Vec<f64>> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(Error::OriginSingular);
    }
    Ok(x.iter().map(|v| v / r2).collect())
}

/// Kelvin transform of a field: (Kv)(y) = |y|^(alpha-d) v(Ty).
pub struct KelvinTransformed {
    params: StableParams,
    inner: Arc<dyn ScalarField>,
}

/// Build the Kelvin transform of `field`.
pub fn kelvin(params: &StableParams, field: Arc<dyn ScalarField>) -> KelvinTransformed {
    KelvinTransformed {
        params: *params,
        inner: field,
    }
}

impl ScalarField for KelvinTransformed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return 0.0;
        }
        let ty: Vec<f64> = y.iter().map(|v| v / r2).collect();
        r2.powf(0.5 * (self.params.alpha() - self.params.df())) * self.inner.eval(&ty)
    }
    fn smoothness_radius(&self, y: &[f64]) -> f64 {
        let r = norm(y);
        if r == 0.0 {
            return 0.0;
        }
        let ty = invert(y).expect("nonzero");
        let inner_r = self.inner.smoothness_radius(&ty);
        // The inversion scales lengths by ~|y|^-2 near y; shrink
        // conservatively and stay away from the origin.
        let mapped = inner_r * r * r / (1.0 + inner_r * r);
        (0.5 * mapped).min(0.5 * r)
    }
    fn growth(&self) -> (f64, f64) {
        let (c, g) = self.inner.growth();
        (
            c * 2f64.powf(g.max(0.0)),
            (self.params.alpha() - self.params.df()).max(0.0),
        )
    }
}

/// Axisymmetric profile on the sphere extended lambda-homogeneously:
/// Phi(x) = |x|^lambda f(polar angle of x), zero where f is zero.
pub struct HomogeneousExtension {
    pub dim: usize,
    pub lambda: f64,
    /// Polar-angle profile on [0, pi].
    pub profile: Arc<dyn Fn(f64) -> f64 + Sync + Send>,
    /// Aperture within which the profile is smooth; pi for globally smooth
    /// profiles.
    pub smooth_within: f64,
    pub sup: f64,
}

pub(crate) fn polar_angle(x: &[f64]) -> f64 {
    let r = norm(x);
    if r == 0.0 {
        return 0.0;
    }
    let xd = x[x.len() - 1];
    (xd / r).clamp(-1.0, 1.0).acos()
}

impl ScalarField for HomogeneousExtension {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r == 0.0 {
            return 0.0;
        }
        let f = (self.profile)(polar_angle(x));
        if f == 0.0 {
            0.0
        } else {
            r.powf(self.lambda) * f
        }
    }
    fn smoothness_radius(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r == 0.0 {
            return 0.0;
        }
        if self.smooth_within >= std::f64::consts::PI {
            return 0.9 * r;
        }
        let gap = self.smooth_within - polar_angle(x);
        if gap <= 0.0 {
            return 0.0;
        }
        0.9 * r * gap.min(std::f64::consts::FRAC_PI_2).sin()
    }
    fn growth(&self) -> (f64, f64) {
        (self.sup, self.lambda.max(0.0))
    }
}

/// The barrier profile phi(theta) = 2^alpha C_{d-1,alpha}
/// (eps^2 - tan^2(gamma/2))_+^(alpha/2) as a function of the polar angle;
/// tan^2(gamma/2) is the squared chordal ratio |1-theta|^2/|1+theta|^2.
pub fn profile_phi_angle(params: &StableParams, cone: &ConeGeometry, gamma: f64) -> f64 {
    let eps = cone.epsilon();
    let half = 0.5 * gamma;
    if half >= std::f64::consts::FRAC_PI_2 {
        return 0.0;
    }
    let tan_half = half.tan();
    let q = eps * eps - tan_half * tan_half;
    if q <= 0.0 {
        return 0.0;
    }
    let c = eval_constants(params).c_ball_dm1;
    2f64.powf(params.alpha()) * c * q.powf(params.alpha() / 2.0)
}

/// Barrier profile at a point of the unit sphere.
pub fn profile_phi(params: &StableParams, cone: &ConeGeometry, theta_point: &[f64]) -> Result<f64> {
    let r = norm(theta_point);
    if (r - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(
            "theta_point",
            format!("must be a unit vector, |theta| = {r}"),
        ));
    }
    Ok(profile_phi_angle(params, cone, polar_angle(theta_point)))
}

/// The lambda-homogeneous extension of the barrier profile as a field.
pub fn profile_phi_field(
    params: &StableParams,
    cone: &ConeGeometry,
    lambda: f64,
) -> HomogeneousExtension {
    let p = *params;
    let c = *cone;
    let sup = profile_phi_angle(params, cone, 0.0);
    HomogeneousExtension {
        dim: params.d() as usize,
        lambda,
        profile: Arc::new(move |g| profile_phi_angle(&p, &c, g)),
        smooth_within: cone.theta(),
        sup,
    }
}

/// Rescaled field Phi_r(x) = Phi(r x), used by the scaling identity.
pub struct ScaledField {
    pub inner: Arc<dyn ScalarField>,
    pub r: f64,
}

impl ScalarField for ScaledField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v * self.r).collect();
        self.inner.eval(&y)
    }
    fn smoothness_radius(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v * self.r).collect();
        self.inner.smoothness_radius(&y) / self.r
    }
    fn support_radius(&self) -> Option<f64> {
        self.inner.support_radius().map(|s| s / self.r)
    }
    fn growth(&self) -> (f64, f64) {
        let (c, g) = self.inner.growth();
        (c * (1.0 + self.r).powf(g.max(0.0)), g)
    }
    fn is_radial(&self) -> bool {
        self.inner.is_radial()
    }
    fn feature_radii(&self, x: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = x.iter().map(|v| v * self.r).collect();
        self.inner
            .feature_radii(&y)
            .into_iter()
            .map(|f| f / self.r)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Principal-value evaluation
// ---------------------------------------------------------------------------

/// Value and error estimate of a PV evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PvValue {
    pub value: f64,
    pub error: f64,
}

/// Integral of Phi over directions of the sphere |z| = rho around x, against
/// the surface measure of the unit direction sphere. With `symmetrized` the
/// integrand is Phi(x+z) + Phi(x-z) - 2 Phi(x) over half the directions,
/// which equals the full integral of Phi(x+z) - Phi(x) by symmetry.
fn angular_integral(
    field: &dyn ScalarField,
    x: &[f64],
    rho: f64,
    frame: &[Vec<f64>],
    spec: &QuadratureSpec,
    symmetrized: bool,
) -> f64 {
    let d = field.dim();
    let a = norm(x);
    let eval_dir = |cs: &[f64]| {
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut dir = 0.0;
            for (k, c) in cs.iter().enumerate() {
                dir += c * frame[k][i];
            }
            y[i] = x[i] + rho * dir;
        }
        field.eval(&y)
    };

    // Radial fields, plain average: one-dimensional in w = |y|. Spheres
    // near a point singularity of the field (w -> 0) stay integrable here,
    // where the direct angular parametrization develops an endpoint
    // blow-up that bisection cannot reach.
    if !symmetrized && field.is_radial() && a > 0.0 {
        let profile = |w: f64| {
            let mut y = vec![0.0; d];
            y[0] = w;
            field.eval(&y)
        };
        let lo = (a - rho).abs().max(1e-300);
        let hi = a + rho;
        let mut brk: Vec<f64> = field
            .feature_radii(&vec![0.0; d])
            .into_iter()
            .filter(|&f| f > lo && f < hi)
            .collect();
        // ladder toward a steep left edge
        if lo < 1e-3 * hi {
            let mut e = lo * 2.0;
            while e < 1e-3 * hi {
                brk.push(e);
                e *= 4.0;
            }
        }
        if d == 2 {
            // dsigma = 4 w dw / sqrt(((a+rho)^2-w^2)(w^2-(a-rho)^2));
            // substitute w^2 = lo^2 cos^2(v) + hi^2 sin^2(v) to absorb the
            // inverse square roots exactly.
            let g = |v: f64| {
                let (sv, cv) = v.sin_cos();
                let w2 = lo * lo * cv * cv + hi * hi * sv * sv;
                profile(w2.sqrt())
            };
            let brk_v: Vec<f64> = brk
                .iter()
                .map(|&w| {
                    let t = ((w * w - lo * lo) / (hi * hi - lo * lo)).clamp(0.0, 1.0);
                    t.sqrt().asin()
                })
                .collect();
            return integrate(&g, 0.0, std::f64::consts::FRAC_PI_2, spec, &brk_v)
                .map(|r| 4.0 * r.value)
                .unwrap_or(f64::NAN);
        } else {
            // dsigma = (2 pi / (a rho)) w dw.
            let g = |w: f64| profile(w) * w;
            return integrate(&g, lo, hi, spec, &brk)
                .map(|r| 2.0 * std::f64::consts::PI / (a * rho) * r.value)
                .unwrap_or(f64::NAN);
        }
    }

    if d == 2 {
        let f0 = if symmetrized { 2.0 * field.eval(x) } else { 0.0 };
        let g = |phi: f64| {
            let (s, c) = phi.sin_cos();
            if symmetrized {
                eval_dir(&[c, s]) + eval_dir(&[-c, -s]) - f0
            } else {
                eval_dir(&[c, s])
            }
        };
        // phi = pi points at the origin (frame[0] = x/|x|), where fields
        // with a point singularity get steep.
        if symmetrized {
            integrate(&g, 0.0, std::f64::consts::PI, spec, &[])
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        } else {
            integrate(
                &g,
                0.0,
                2.0 * std::f64::consts::PI,
                spec,
                &[std::f64::consts::PI],
            )
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
        }
    } else {
        let f0 = if symmetrized { 2.0 * field.eval(x) } else { 0.0 };
        let radial = field.is_radial();
        let outer = |u: f64| {
            let su = (1.0 - u * u).max(0.0).sqrt();
            if radial {
                // frame[0] = x/|x|: the azimuth is exact by symmetry.
                let v = if symmetrized {
                    eval_dir(&[u, su, 0.0]) + eval_dir(&[-u, -su, 0.0]) - f0
                } else {
                    eval_dir(&[u, su, 0.0])
                };
                v * 2.0 * std::f64::consts::PI
            } else {
                let g = |phi: f64| {
                    let (sp, cp) = phi.sin_cos();
                    if symmetrized {
                        eval_dir(&[u, su * cp, su * sp]) + eval_dir(&[-u, -su * cp, -su * sp]) - f0
                    } else {
                        eval_dir(&[u, su * cp, su * sp])
                    }
                };
                integrate(&g, 0.0, 2.0 * std::f64::consts::PI, &spec.relaxed(10.0), &[])
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            }
        };
        let (lo, hi) = if symmetrized { (0.0, 1.0) } else { (-1.0, 1.0) };
        integrate(&outer, lo, hi, spec, &[])
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }
}

fn orthonormal_frame(x: &[f64], d: usize) -> Vec<Vec<f64>> {
    // First axis along x when possible, pinning origin-centered features of
    // radial fields to the poles of the u-parametrization.
    let r = norm(x);
    let mut a0 = vec![0.0; d];
    if r > 0.0 {
        for i in 0..d {
            a0[i] = x[i] / r;
        }
    } else {
        a0[d - 1] = 1.0;
    }
    let mut frame = vec![a0];
    for k in 0..d {
        if frame.len() == d {
            break;
        }
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        for f in &frame {
            let dot: f64 = e.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
            for i in 0..d {
                e[i] -= dot * f[i];
            }
        }
        let n = norm(&e);
        if n > 1e-8 {
            for v in e.iter_mut() {
                *v /= n;
            }
            frame.push(e);
        }
    }
    frame
}

/// Principal value of the fractional Laplacian of `field` at `x`.
///
/// Errors with NotSmoothHere when the declared C^2 radius at `x` is zero and
/// with ToleranceNotMet when a sub-quadrature cannot reach its budget.
pub fn frac_lap_at(
    params: &StableParams,
    field: &dyn ScalarField,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<PvValue> {
    let d = field.dim();
    assert_eq!(d, params.d() as usize, "field dimension must match params");
    assert_eq!(x.len(), d);
    let alpha = params.alpha();
    let a_norm = frac_lap_normalizer(params);
    let omega_d = sphere_area(params.d());

    let smooth = field.smoothness_radius(x);
    if !(smooth > 0.0) {
        return Err(Error::NotSmoothHere);
    }
    // PV ball: half the distance to the nearest declared non-smoothness.
    let rho0 = (0.5 * smooth).min(1.0);
    let phi_x = field.eval(x);
    let frame = orthonormal_frame(x, d);

    let angular_spec = QuadratureSpec {
        rel_tol: spec.rel_tol * 0.3,
        abs_tol: spec.abs_tol * 0.3,
        max_subdivisions: spec.max_subdivisions,
    };

    // Near field: substitution s = rho^(2-alpha) flattens the rho^(1-alpha)
    // weight. The half-range pair integral equals the full difference
    // integral, so no extra factor appears here.
    let e_tilde =
        |rho: f64| angular_integral(field, x, rho, &frame, &angular_spec, true) / (rho * rho);
    let s_max = rho0.powf(2.0 - alpha);
    // Floor at rho = 1e-3 rho0: below it the second difference is dominated
    // by rounding noise of order eps / rho^2; the omitted mass is restored
    // by the constant-extrapolation term and stays ~kappa^(4-alpha) relative.
    let s_eps = s_max * 1e-3f64.powf(2.0 - alpha);
    let inv_exp = 1.0 / (2.0 - alpha);
    let near_integrand = |s: f64| e_tilde(s.powf(inv_exp));
    let near = integrate(&near_integrand, s_eps, s_max, spec, &[])?;
    // Analytic floor correction: the integrand is continuous at s = 0.
    let floor = e_tilde(s_eps.powf(inv_exp)) * s_eps;
    let near_value = (near.value + floor) * inv_exp;
    let near_error = (near.error + floor.abs() * 1e-6) * inv_exp;

    // Mid field over [rho0, r_far], with feature radii as breakpoints.
    let mut feature = field.feature_radii(x);
    feature.retain(|&f| f.is_finite() && f > 0.0);
    let r_far = match field.support_radius() {
        Some(rs) => (norm(x) + rs) * 1.001 + 0.1,
        None => {
            let base: f64 = 2.0 * (norm(x) + 1.0);
            feature.iter().fold(base, |acc, &f| acc.max(1.5 * f))
        }
    };
    let r_far = r_far.max(2.0 * rho0);
    let a_bar = |rho: f64| angular_integral(field, x, rho, &frame, &angular_spec, false);
    let mid_integrand = |rho: f64| rho.powf(-1.0 - alpha) * (a_bar(rho) - omega_d * phi_x);
    let mid = integrate(&mid_integrand, rho0, r_far, spec, &feature)?;

    // Far field mapped by rho = r_far / w; identically zero past a compact
    // support, where r_far already clears the support.
    let far = if field.support_radius().is_some() {
        None
    } else {
        let g = |w: f64| {
            if w <= 0.0 {
                0.0
            } else {
                a_bar(r_far / w)
            }
        };
        Some(integrate_power(alpha - 1.0, &g, spec, None)?)
    };
    let far_phi = far.map(|f| f.value * r_far.powf(-alpha)).unwrap_or(0.0);
    let far_err = far.map(|f| f.error * r_far.powf(-alpha)).unwrap_or(0.0);
    let tail_const = phi_x * omega_d * r_far.powf(-alpha) / alpha;

    let value = a_norm * (near_value + mid.value + far_phi - tail_const);
    let error = a_norm * (near_error + mid.error + far_err);
    if !value.is_finite() {
        return Err(Error::ToleranceNotMet {
            requested: spec.rel_tol,
            achieved: f64::INFINITY,
        });
    }
    Ok(PvValue { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec() -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_subdivisions: 4096,
        }
    }

    #[test]
    fn constant_field_maps_to_zero() {
        let p = StableParams::new(2, 1.0).unwrap();
        let f = ConstantField { dim: 2, value: 1.0 };
        let v = frac_lap_at(&p, &f, &[0.3, -0.2], &spec()).unwrap();
        assert!(v.value.abs() < 1e-8, "{}", v.value);
    }

    #[test]
    fn exit_profile_values() {
        let p = StableParams::new(2, 1.0).unwrap();
        assert!((exit_profile(&p, &[0.0, 0.0]) - 2.0 / PI).abs() < 1e-13);
        assert_eq!(exit_profile(&p, &[1.0, 0.0]), 0.0);
        assert_eq!(exit_profile(&p, &[2.0, 0.0]), 0.0);
    }

    #[test]
    fn exit_profile_is_minus_one_inside() {
        for &(d, alpha) in &[(2u32, 1.0), (2, 0.5)] {
            let p = StableParams::new(d, alpha).unwrap();
            let f = ExitProfile::new(&p);
            for &pt in &[[0.0, 0.0], [0.4, 0.1], [-0.2, 0.55]] {
                let v = frac_lap_at(&p, &f, &pt, &spec()).unwrap();
                assert!(
                    (v.value + 1.0).abs() < 1e-3,
                    "d={d} alpha={alpha} pt={pt:?}: {}",
                    v.value
                );
            }
        }
    }

    #[test]
    fn exit_profile_is_minus_one_inside_d3() {
        let p = StableParams::new(3, 1.5).unwrap();
        let f = ExitProfile::new(&p);
        for pt in [[0.1, 0.05, 0.02], [0.3, -0.2, 0.4], [0.0, 0.0, 0.7]] {
            let v = frac_lap_at(&p, &f, &pt, &spec()).unwrap();
            assert!((v.value + 1.0).abs() < 1e-3, "pt={pt:?}: {}", v.value);
        }
    }

    #[test]
    fn riesz_kernel_is_harmonic() {
        let p = StableParams::new(2, 1.0).unwrap();
        let f = RieszKernel::new(&p);
        for &r in &[0.5, 1.0, 2.0] {
            let v = frac_lap_at(&p, &f, &[r, 0.0], &spec()).unwrap();
            assert!(v.value.abs() < 1e-4, "|x|={r}: {}", v.value);
        }
    }

    #[test]
    fn riesz_kernel_is_harmonic_d3() {
        let p = StableParams::new(3, 1.5).unwrap();
        let f = RieszKernel::new(&p);
        for &r in &[0.5, 1.0, 2.0] {
            let v = frac_lap_at(&p, &f, &[0.0, r / 2.0, r * 0.75f64.sqrt()], &spec()).unwrap();
            assert!(v.value.abs() < 1e-4, "|x|={r}: {}", v.value);
        }
    }

    #[test]
    fn riesz_errors_at_origin() {
        let p = StableParams::new(2, 1.0).unwrap();
        assert!(matches!(riesz(&p, &[0.0, 0.0]), Err(Error::OriginSingular)));
        assert!((riesz(&p, &[0.0, 0.5]).unwrap() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cylinder_profile_values_and_identity() {
        let p = StableParams::new(2, 1.0).unwrap();
        // C_{1,1} = 1: on-axis value = (eps^2)^(1/2) = eps.
        let v = cylinder_profile(&p, 0.05, &[0.0, 0.33]).unwrap();
        assert!((v - 0.05).abs() < 1e-13);
        let v = cylinder_profile(&p, 0.05, &[0.05, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        // lap s_eps = -1 inside the slab.
        let f = CylinderProfile::new(&p, 0.05).unwrap();
        let v = frac_lap_at(&p, &f, &[0.0, 0.2], &spec()).unwrap();
        assert!((v.value + 1.0).abs() < 1e-3, "{}", v.value);
    }

    #[test]
    fn inversion_and_kelvin_identities() {
        // T(1/2 e_d) = 2 e_d.
        let t = invert(&[0.0, 0.5]).unwrap();
        assert!((t[0] - 0.0).abs() < 1e-15 && (t[1] - 2.0).abs() < 1e-15);
        assert!(matches!(invert(&[0.0, 0.0]), Err(Error::OriginSingular)));

        // |Tx - Ty| |x| |y| = |x - y| on sample pairs.
        let pairs = [
            ([0.3, -0.7], [1.2, 0.4]),
            ([0.01, 0.02], [5.0, -3.0]),
            ([-2.0, 1.0], [0.5, 0.5]),
        ];
        for (x, y) in pairs {
            let tx = invert(&x).unwrap();
            let ty = invert(&y).unwrap();
            let lhs = norm(&[tx[0] - ty[0], tx[1] - ty[1]]) * norm(&x) * norm(&y);
            let rhs = norm(&[x[0] - y[0], x[1] - y[1]]);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1.0));
        }

        let p = StableParams::new(2, 1.0).unwrap();
        // K1 = h.
        let k1 = kelvin(&p, Arc::new(ConstantField { dim: 2, value: 1.0 }));
        for pt in [[0.5, 0.0], [1.0, 2.0]] {
            assert!((k1.eval(&pt) - riesz(&p, &pt).unwrap()).abs() < 1e-13);
        }
        // K^2 v = v pointwise.
        let v = Arc::new(ExitProfile::new(&p));
        let kk = kelvin(&p, Arc::new(kelvin(&p, v.clone())));
        for pt in [[0.2, 0.1], [0.8, -0.3], [2.0, 1.0]] {
            assert!((kk.eval(&pt) - v.eval(&pt)).abs() < 1e-12);
        }
    }

    #[test]
    fn kelvin_transform_rule_under_pv() {
        // lap [Kv](y) = |y|^(-alpha-d) lap v(Ty) for v = exit profile.
        let p = StableParams::new(2, 1.0).unwrap();
        let v: Arc<dyn ScalarField> = Arc::new(ExitProfile::new(&p));
        let kv = kelvin(&p, v.clone());
        // Ty lands inside the unit ball (lap v = -1) when |y| > 1.
        for pt in [[1.6, 0.0], [0.0, 2.5]] {
            let left = frac_lap_at(&p, &kv, &pt, &spec()).unwrap().value;
            let r = norm(&pt);
            let right = r.powf(-p.alpha() - p.df()) * (-1.0);
            assert!(
                ((left - right) / right).abs() < 1e-3,
                "pt={pt:?}: {left} vs {right}"
            );
        }
    }

    #[test]
    fn scaling_identity() {
        // lap Phi_r(x) = r^alpha (lap Phi)(r x).
        let p = StableParams::new(2, 0.7).unwrap();
        let inner: Arc<dyn ScalarField> = Arc::new(ExitProfile::new(&p));
        let r = 0.6;
        let scaled = ScaledField { inner, r };
        let x = [0.4, 0.3]; // r x stays inside the ball
        let left = frac_lap_at(&p, &scaled, &x, &spec()).unwrap().value;
        let right = r.powf(p.alpha()) * (-1.0);
        assert!(
            (left - right).abs() < 2e-3 * right.abs(),
            "{left} vs {right}"
        );
    }

    #[test]
    fn profile_phi_values() {
        let p = StableParams::new(2, 1.0).unwrap();
        let cone = ConeGeometry::new(std::f64::consts::FRAC_PI_2).unwrap();
        assert!((cone.epsilon() - 1.0).abs() < 1e-15);
        // At the pole: 2^alpha C_{1,1} eps^alpha = 2.
        let v = profile_phi(&p, &cone, &[0.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        // At the cap edge and beyond: zero.
        let theta = std::f64::consts::FRAC_PI_2;
        let v = profile_phi(&p, &cone, &[theta.sin(), theta.cos()]).unwrap();
        assert_eq!(v, 0.0);
        let t2 = theta + 0.1;
        let v = profile_phi(&p, &cone, &[t2.sin(), t2.cos()]).unwrap();
        assert_eq!(v, 0.0);
        // Non-unit input rejected.
        assert!(profile_phi(&p, &cone, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn not_smooth_is_reported() {
        let p = StableParams::new(2, 1.0).unwrap();
        let f = ExitProfile::new(&p);
        match frac_lap_at(&p, &f, &[1.0, 0.0], &spec()) {
            Err(Error::NotSmoothHere) => {}
            other => panic!("expected NotSmoothHere, got {other:?}"),
        }
    }

    #[test]
    fn cone_geometry_validation() {
        assert!(ConeGeometry::new(0.0).is_err());
        assert!(ConeGeometry::new(PI).is_err());
        let c = ConeGeometry::new(0.3).unwrap();
        assert!((c.epsilon() - (0.15f64).tan()).abs() < 1e-16);
    }
}
