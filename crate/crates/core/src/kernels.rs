//! Radial kernels u_lambda(t) of the spherical decomposition, their
//! difference u_lambda - u_0, and the azimuthal reductions on the sphere.
//!
//! Everything integrates the finite-interval form
//!   u_lambda(t) = int_0^1 (r^(d+lambda-1) + r^(alpha-lambda-1)) g_t(r) dr,
//!   g_t(r) = ((r-t)^2 + (1-t)(1+t))^(-(d+alpha)/2),
//! never the (0, inf) form. The difference kernel uses the single-integrand
//! form (1-r^lambda)(r^(alpha-lambda-1) - r^(d-1)) g_t(r), which stays
//! relatively accurate as lambda -> alpha where the value grows like
//! 1/(alpha-lambda).
//!
//! Internally quantities are parametrized by omt = 1 - t; near the t -> 1
//! singularity this is the numerically meaningful variable. Hot paths read
//! the kernels from per-(d, alpha[, lambda]) Chebyshev tables built on
//! dyadic panels in the chordal variable s = sqrt(2 (1 - t)), where the
//! kernels are analytic panel by panel.

use crate::constants::{sphere_area, StableParams};
use crate::error::{Error, Result};
use crate::quad::{gl_panel, integrate, integrate_power, QuadResult, QuadratureSpec};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// t values with 1 - t below this cutoff are treated as the singular point.
pub const SINGULAR_OMT: f64 = 1e-12;

/// Argument of the radial kernel: inner product t and homogeneity order.
#[derive(Debug, Clone, Copy)]
pub struct KernelPoint {
    pub t: f64,
    pub lambda: f64,
}

impl KernelPoint {
    pub fn new(params: &StableParams, t: f64, lambda: f64) -> Result<Self> {
        if !(t >= -1.0 && t < 1.0) {
            return Err(Error::invalid(
                "t",
                format!("inner product must lie in [-1, 1), got {t}"),
            ));
        }
        if !(lambda > -params.df() && lambda < params.alpha()) {
            return Err(Error::invalid(
                "lambda",
                format!(
                    "order must lie in (-d, alpha) = ({}, {}), got {lambda}",
                    -params.df(),
                    params.alpha()
                ),
            ));
        }
        Ok(KernelPoint { t, lambda })
    }
}

/// Which kernel an azimuthal reduction refers to.
#[derive(Debug, Clone, Copy)]
pub enum KernelKind {
    /// u_0, the kernel of the spherical fractional Laplacian.
    Base,
    /// u_lambda - u_0, the kernel of the radial operator R_lambda.
    Diff { lambda: f64 },
}

#[inline]
fn g_factor(r: f64, t: f64, omt: f64, half_exp: f64) -> f64 {
    // (r - t)^2 + (1 - t)(1 + t), with 1 - t carried exactly.
    let q = (r - t) * (r - t) + (1.0 + t) * omt;
    q.powf(-half_exp)
}

/// int_0^1 r^p g_t(r) dr for p > -1.
fn power_integral(
    params: &StableParams,
    p: f64,
    omt: f64,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    let t = 1.0 - omt;
    let half_exp = (params.df() + params.alpha()) / 2.0;
    let g = move |r: f64| g_factor(r, t, omt, half_exp);
    let peak = if t > 0.0 && t < 1.0 { Some(t) } else { None };
    integrate_power(p, &g, spec, peak)
}

/// u_lambda at omt = 1 - t. Internal omt-parametrized core.
pub(crate) fn u_omt(
    params: &StableParams,
    lambda: f64,
    omt: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if omt < SINGULAR_OMT {
        return Err(Error::SingularArgument { t: 1.0 - omt });
    }
    let d = params.df();
    let alpha = params.alpha();
    let a = power_integral(params, d + lambda - 1.0, omt, spec)?;
    let b = power_integral(params, alpha - lambda - 1.0, omt, spec)?;
    Ok(a.value + b.value)
}

/// u_lambda - u_0 at omt = 1 - t, from the difference integrand.
pub(crate) fn u_diff_omt(
    params: &StableParams,
    lambda: f64,
    omt: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if omt < SINGULAR_OMT {
        return Err(Error::SingularArgument { t: 1.0 - omt });
    }
    let d = params.df();
    let alpha = params.alpha();
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let t = 1.0 - omt;
    let half_exp = (d + alpha) / 2.0;
    if lambda > 0.0 {
        // Single-integrand form r^(alpha-lambda-1) (1-r^lambda)
        // (1-r^(d-alpha+lambda)) g_t(r): no cancellation between two large
        // integrals as t -> 1. The 1 - r^p factors vanish at r = 1 where the
        // integrand peaks; expm1/ln_1p keeps them fully accurate there.
        let q = d - alpha + lambda;
        let h = move |r: f64| {
            if r <= 0.0 {
                return g_factor(r, t, omt, half_exp);
            }
            let lr = f64::ln_1p(r - 1.0);
            let w1 = -f64::exp_m1(lambda * lr);
            let w2 = -f64::exp_m1(q * lr);
            w1 * w2 * g_factor(r, t, omt, half_exp)
        };
        let peak = if t > 0.0 && t < 1.0 { Some(t) } else { None };
        let a = integrate_power(alpha - lambda - 1.0, &h, spec, peak)?;
        Ok(a.value)
    } else {
        // lambda < 0: expand the product into four integrable monomials.
        let a = power_integral(params, alpha - lambda - 1.0, omt, spec)?;
        let b = power_integral(params, d - 1.0, omt, spec)?;
        let c = power_integral(params, alpha - 1.0, omt, spec)?;
        let e = power_integral(params, d + lambda - 1.0, omt, spec)?;
        Ok(a.value - b.value - c.value + e.value)
    }
}

/// Kernel u_lambda(t), Eq.-(0,1) folded form, to the requested tolerance.
pub fn u_kernel(params: &StableParams, point: &KernelPoint, spec: &QuadratureSpec) -> Result<f64> {
    u_omt(params, point.lambda, 1.0 - point.t, spec)
}

/// Difference kernel u_lambda(t) - u_0(t), computed from its own integrand,
/// never as a subtraction of two u_kernel calls.
pub fn u_diff(params: &StableParams, point: &KernelPoint, spec: &QuadratureSpec) -> Result<f64> {
    if !(point.lambda < params.alpha()) {
        return Err(Error::invalid(
            "lambda",
            format!("order must be < alpha, got {}", point.lambda),
        ));
    }
    u_diff_omt(params, point.lambda, 1.0 - point.t, spec)
}

// ---------------------------------------------------------------------------
// Chebyshev tables in the chordal variable
// ---------------------------------------------------------------------------

const TABLE_DEGREE: usize = 16;

#[derive(Debug, Clone)]
struct ChebPanel {
    a: f64,
    b: f64,
    coef: Vec<f64>,
}

impl ChebPanel {
    fn fit(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> Self {
        let n = TABLE_DEGREE;
        let mut values = vec![0.0; n + 1];
        for (k, v) in values.iter_mut().enumerate() {
            let x = (std::f64::consts::PI * k as f64 / n as f64).cos();
            *v = f(0.5 * (a + b) + 0.5 * (b - a) * x);
        }
        let mut coef = vec![0.0; n + 1];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, v) in values.iter().enumerate() {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                acc += w * v * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
            }
            *c = 2.0 * acc / n as f64;
        }
        coef[0] *= 0.5;
        coef[n] *= 0.5;
        ChebPanel { a, b, coef }
    }

    #[inline]
    fn eval(&self, s: f64) -> f64 {
        let x = (2.0 * s - (self.a + self.b)) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coef.iter().skip(1).rev() {
            let t = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = t;
        }
        x * b1 - b2 + self.coef[0]
    }
}

/// Tabulated kernel: eval(omt) = P(s) * s^(-q) with s = sqrt(2 omt), where
/// P is panelwise Chebyshev and q the factored blow-up exponent.
#[derive(Debug)]
pub(crate) struct KernelTable {
    panels: Vec<ChebPanel>, // panels[k] covers [2^(1-k-1), 2^(1-k)]
    q: f64,
    s_min: f64,
}

impl KernelTable {
    fn build(params: &StableParams, kind: KernelKind) -> Result<Self> {
        let d = params.df();
        let alpha = params.alpha();
        let q = match kind {
            KernelKind::Base => d + alpha - 1.0,
            KernelKind::Diff { .. } => (d + alpha - 3.0).max(0.0),
        };
        let spec = QuadratureSpec {
            rel_tol: 1e-11,
            abs_tol: 1e-300,
            max_subdivisions: 8192,
        };
        // Dyadic panels from s = 2 down to the singular cutoff; the last
        // panel is clamped so builds never cross the cutoff.
        let s_floor = (2.0 * SINGULAR_OMT).sqrt() * (1.0 + 1e-9);
        let mut panels = Vec::new();
        let mut b = 2.0f64;
        while b > s_floor {
            let a = (0.5 * b).max(s_floor);
            let f = |s: f64| {
                let omt = 0.5 * s * s;
                let v = match kind {
                    KernelKind::Base => u_omt(params, 0.0, omt, &spec),
                    KernelKind::Diff { lambda } => u_diff_omt(params, lambda, omt, &spec),
                }
                .expect("table build stays above the singular cutoff");
                v * s.powf(q)
            };
            panels.push(ChebPanel::fit(a, b, &f));
            b = a;
        }
        let s_min = panels.last().unwrap().a;
        Ok(KernelTable { panels, q, s_min })
    }

    /// Kernel value at omt = 1 - t.
    #[inline]
    pub(crate) fn eval_omt(&self, omt: f64) -> Result<f64> {
        if omt < SINGULAR_OMT {
            return Err(Error::SingularArgument { t: 1.0 - omt });
        }
        let s = (2.0 * omt).sqrt().min(2.0).max(self.s_min);
        // Panels are stored from s = 2 downward; locate by bisection.
        let mut lo = 0;
        let mut hi = self.panels.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if s >= self.panels[mid].a {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let panel = &self.panels[lo];
        let s_clamped = s.max(panel.a).min(panel.b);
        Ok(panel.eval(s_clamped) * s.powf(-self.q))
    }
}

type TableKey = (u32, u64, Option<u64>);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<KernelTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<KernelTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached table for u_0.
pub(crate) fn base_table(params: &StableParams) -> Result<Arc<KernelTable>> {
    let key = (params.d(), params.alpha().to_bits(), None);
    if let Some(t) = table_cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(KernelTable::build(params, KernelKind::Base)?);
    let mut cache = table_cache().lock().unwrap();
    if cache.len() > 512 {
        cache.clear();
    }
    cache.insert(key, table.clone());
    Ok(table)
}

/// Cached table for u_lambda - u_0.
pub(crate) fn diff_table(params: &StableParams, lambda: f64) -> Result<Arc<KernelTable>> {
    let key = (
        params.d(),
        params.alpha().to_bits(),
        Some(lambda.to_bits()),
    );
    if let Some(t) = table_cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(KernelTable::build(params, KernelKind::Diff { lambda })?);
    let mut cache = table_cache().lock().unwrap();
    if cache.len() > 512 {
        cache.clear();
    }
    cache.insert(key, table.clone());
    Ok(table)
}

// ---------------------------------------------------------------------------
// Azimuthal reduction
// ---------------------------------------------------------------------------

/// 1 - cos(x), computed stably for small x.
#[inline]
pub(crate) fn one_minus_cos(x: f64) -> f64 {
    let h = (0.5 * x).sin();
    2.0 * h * h
}

/// Reduced kernel on polar angles, including the surface-measure weight:
/// integrals of axisymmetric f against the sphere kernel become
/// int_0^pi f(gamma) reduced_kernel(gamma, gamma') dgamma.
///
/// d = 2 is the exact two-point sum K(cos(g-g')) + K(cos(g+g')); d >= 3
/// carries the inner psi-integral sin^(d-2)g * omega_(d-2) *
/// int_0^pi K(cos g cos g' + sin g sin g' cos psi) sin^(d-3)psi dpsi.
pub fn reduced_kernel(
    params: &StableParams,
    kind: KernelKind,
    gamma: f64,
    gamma_prime: f64,
    _spec: &QuadratureSpec,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < std::f64::consts::PI) || !(gamma_prime > 0.0 && gamma_prime < std::f64::consts::PI)
    {
        return Err(Error::invalid(
            "gamma",
            "polar angles must lie in (0, pi)".to_string(),
        ));
    }
    if let KernelKind::Diff { lambda } = kind {
        if !(lambda > -params.df() && lambda < params.alpha()) {
            return Err(Error::invalid(
                "lambda",
                format!("order must lie in (-d, alpha), got {lambda}"),
            ));
        }
    }
    let table = match kind {
        KernelKind::Base => base_table(params)?,
        KernelKind::Diff { lambda } => {
            if lambda == 0.0 {
                return Ok(0.0);
            }
            diff_table(params, lambda)?
        }
    };
    reduced_from_table(params, &table, gamma, gamma_prime)
}

/// Table-backed reduced kernel; shared by the public wrapper and the
/// spherical-operator assembly.
pub(crate) fn reduced_from_table(
    params: &StableParams,
    table: &KernelTable,
    gamma: f64,
    gamma_prime: f64,
) -> Result<f64> {
    let omt_near = one_minus_cos(gamma - gamma_prime);
    if omt_near < SINGULAR_OMT {
        return Err(Error::SingularArgument { t: 1.0 - omt_near });
    }
    if params.d() == 2 {
        let omt_far = one_minus_cos(gamma + gamma_prime);
        if omt_far < SINGULAR_OMT {
            return Err(Error::SingularArgument { t: 1.0 - omt_far });
        }
        return Ok(table.eval_omt(omt_near)? + table.eval_omt(omt_far)?);
    }
    let d = params.df();
    let sg = gamma.sin();
    let sgp = gamma_prime.sin();
    let cross = sg * sgp;
    // omt(psi) = omt_near + sin(g) sin(g') (1 - cos(psi)).
    let integrand = move |psi: f64| {
        let omt = omt_near + cross * one_minus_cos(psi);
        let k = table.eval_omt(omt).unwrap_or(0.0);
        if d > 3.0 {
            k * psi.sin().powf(d - 3.0)
        } else {
            k
        }
    };
    // Geometric psi ladder from the peak scale at psi = 0.
    let psi_scale = ((2.0 * omt_near / cross.max(1e-300)).sqrt()).clamp(1e-7, std::f64::consts::PI);
    let inner = psi_ladder_integral(&integrand, psi_scale);
    let weight = sg.powf(d - 2.0) * sphere_area(params.d() - 2);
    Ok(weight * inner)
}

/// Composite GL integral over [0, pi] on a geometric ladder anchored at the
/// given peak scale. Deterministic; resolution fixed by the ladder.
pub(crate) fn psi_ladder_integral(f: &dyn Fn(f64) -> f64, scale: f64) -> f64 {
    let mut edges = vec![0.0];
    let mut e = scale.min(std::f64::consts::PI);
    while e < std::f64::consts::PI {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(std::f64::consts::PI);
    let mut acc = 0.0;
    for w in edges.windows(2) {
        acc += gl_panel(f, w[0], w[1], 16);
    }
    acc
}

// ---------------------------------------------------------------------------
// Bound-fitting report for the difference kernel
// ---------------------------------------------------------------------------

/// Fitted constants of the two-sided difference-kernel bounds
///   1/(alpha-lambda) - c <= u_lambda - u_0
///   u_lambda - u_0 <= 1/(alpha-lambda) + C/(alpha-lambda)^(1-delta)
///                     + C [1 v (1-t)^(-(d+alpha-3)/2)]/(alpha-lambda)^delta,
/// with the logarithmic branch 1 v |ln sqrt(2(1-t))| when d + alpha = 3.
/// The constants are fitted empirically over the sample set; the report
/// tracks their stability, it does not certify the bounds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundReport {
    pub c_lower: f64,
    pub c_upper: f64,
    pub delta: f64,
    /// max over samples of (lower bound - value) after fitting; <= 0.
    pub worst_lower_margin: f64,
    /// max over samples of (value - upper bound) after fitting; <= 0.
    pub worst_upper_margin: f64,
    pub samples: usize,
}

fn upper_bound_shape(params: &StableParams, t: f64, lambda: f64, delta: f64) -> f64 {
    let d = params.df();
    let alpha = params.alpha();
    let gap = alpha - lambda;
    let t_factor = if (d + alpha - 3.0).abs() < 1e-12 {
        let s = (2.0 * (1.0 - t)).sqrt();
        1f64.max(s.ln().abs())
    } else {
        1f64.max((1.0 - t).powf(-(d + alpha - 3.0) / 2.0))
    };
    gap.powf(-(1.0 - delta)) + t_factor * gap.powf(-delta)
}

/// Fit the smallest constants making both bounds hold over the samples.
pub fn kernel_bound_check(
    params: &StableParams,
    samples: &[(f64, f64)],
    delta: f64,
    spec: &QuadratureSpec,
) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("delta must lie in (0,1), got {delta}")));
    }
    let alpha = params.alpha();
    for &(t, lambda) in samples {
        if !(lambda >= 0.0 && lambda < alpha && alpha < lambda + 1.0) {
            return Err(Error::invalid(
                "lambda",
                format!("samples need 0 <= lambda < alpha < lambda + 1, got lambda={lambda}"),
            ));
        }
        if !(t >= -1.0 && t <= 1.0 - 1e-6) {
            return Err(Error::invalid(
                "t",
                format!("samples need -1 <= t <= 1 - 1e-6, got {t}"),
            ));
        }
    }
    let mut c_lower: f64 = 0.0;
    let mut c_upper: f64 = 0.0;
    let mut values = Vec::with_capacity(samples.len());
    for &(t, lambda) in samples {
        let v = u_diff_omt(params, lambda, 1.0 - t, spec)?;
        let base = 1.0 / (alpha - lambda);
        c_lower = c_lower.max(base - v);
        let denom = upper_bound_shape(params, t, lambda, delta);
        c_upper = c_upper.max((v - base) / denom);
        values.push((t, lambda, v));
    }
    let mut worst_lower = f64::NEG_INFINITY;
    let mut worst_upper = f64::NEG_INFINITY;
    for &(t, lambda, v) in &values {
        let base = 1.0 / (alpha - lambda);
        worst_lower = worst_lower.max((base - c_lower) - v);
        worst_upper = worst_upper.max(v - (base + c_upper * upper_bound_shape(params, t, lambda, delta)));
    }
    Ok(BoundReport {
        c_lower,
        c_upper,
        delta,
        worst_lower_margin: worst_lower,
        worst_upper_margin: worst_upper,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{beta, gamma};
    use std::f64::consts::PI;

    fn p21() -> StableParams {
        StableParams::new(2, 1.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    /// Independent oracle: u_lambda(-1) = B(d + lambda, alpha - lambda)
    /// from the substitution-free integral over (0, inf).
    fn beta_identity(d: u32, alpha: f64, lambda: f64) -> f64 {
        let df = d as f64;
        gamma(df + lambda) * gamma(alpha - lambda) / gamma(df + alpha)
    }

    #[test]
    fn u_kernel_beta_identity_at_minus_one() {
        let cases = [
            (2u32, 1.0, 0.0),
            (2, 1.0, 0.5),
            (2, 0.5, 0.2),
            (3, 1.5, 0.7),
            (3, 1.0, -0.5),
            (4, 1.2, 0.3),
        ];
        for &(d, alpha, lambda) in &cases {
            let p = StableParams::new(d, alpha).unwrap();
            let point = KernelPoint::new(&p, -1.0, lambda).unwrap();
            let v = u_kernel(&p, &point, &spec()).unwrap();
            let expected = beta_identity(d, alpha, lambda);
            assert!(rel(v, expected) < 1e-10, "d={d} alpha={alpha} lambda={lambda}: {v} vs {expected}");
        }
        // (d=2, alpha=1, lambda=0, t=-1) -> Gamma(2)Gamma(1)/Gamma(3) = 1/2.
        let p = p21();
        let v = u_kernel(&p, &KernelPoint::new(&p, -1.0, 0.0).unwrap(), &spec()).unwrap();
        assert!(rel(v, 0.5) < 1e-10);
    }

    #[test]
    fn u0_at_zero_is_half_beta() {
        // u_0(0) = (1/2) B(d/2, alpha/2); equals 1 for d=2, alpha=1.
        for &(d, alpha) in &[(2u32, 1.0), (2, 0.5), (3, 1.5), (4, 1.2)] {
            let p = StableParams::new(d, alpha).unwrap();
            let point = KernelPoint::new(&p, 0.0, 0.0).unwrap();
            let v = u_kernel(&p, &point, &spec()).unwrap();
            let expected = 0.5 * beta(d as f64 / 2.0, alpha / 2.0);
            assert!(rel(v, expected) < 1e-10, "d={d} alpha={alpha}");
        }
        let p = p21();
        let v = u_kernel(&p, &KernelPoint::new(&p, 0.0, 0.0).unwrap(), &spec()).unwrap();
        assert!(rel(v, 1.0) < 1e-10);
    }

    #[test]
    fn singular_argument_rejected() {
        let p = p21();
        let point = KernelPoint::new(&p, 1.0 - 1e-13, 0.5).unwrap();
        match u_kernel(&p, &point, &spec()) {
            Err(Error::SingularArgument { .. }) => {}
            other => panic!("expected SingularArgument, got {other:?}"),
        }
    }

    #[test]
    fn u_diff_zero_order_vanishes() {
        let p = p21();
        for &t in &[-1.0, -0.3, 0.0, 0.9] {
            let point = KernelPoint::new(&p, t, 0.0).unwrap();
            assert_eq!(u_diff(&p, &point, &spec()).unwrap(), 0.0);
        }
    }

    #[test]
    fn u_diff_half_order_closed_form() {
        // u_{1/2}(-1) - u_0(-1) = 3 pi / 8 - 1/2 for d=2, alpha=1.
        let p = p21();
        let point = KernelPoint::new(&p, -1.0, 0.5).unwrap();
        let v = u_diff(&p, &point, &spec()).unwrap();
        let expected = 3.0 * PI / 8.0 - 0.5;
        assert!(rel(v, expected) < 1e-10, "{v}");
        assert!((v - 0.67810).abs() < 1e-5);
    }

    #[test]
    fn u_diff_consistency_with_subtraction() {
        // |u(lambda) - u(0) - u_diff(lambda)| small away from t = 1.
        for &(d, alpha) in &[(2u32, 1.0), (3, 1.5)] {
            let p = StableParams::new(d, alpha).unwrap();
            for &t in &[-1.0, -0.5, 0.0, 0.5, 0.9] {
                for &frac in &[0.25, 0.5, 0.75] {
                    let lambda = frac * alpha;
                    let u_l = u_omt(&p, lambda, 1.0 - t, &spec()).unwrap();
                    let u_0 = u_omt(&p, 0.0, 1.0 - t, &spec()).unwrap();
                    let diff = u_diff_omt(&p, lambda, 1.0 - t, &spec()).unwrap();
                    assert!(
                        rel(u_l - u_0, diff) < 1e-8,
                        "d={d} alpha={alpha} t={t} lambda={lambda}"
                    );
                }
            }
        }
    }

    #[test]
    fn u_diff_nonnegative_and_monotone() {
        let p = StableParams::new(2, 1.2).unwrap();
        for &t in &[-1.0, -0.2, 0.4, 0.95] {
            let mut prev = -1.0;
            for k in 0..8 {
                let lambda = 0.12 * k as f64; // up to 0.84 < alpha
                let v = u_diff_omt(&p, lambda, 1.0 - t, &spec()).unwrap();
                assert!(v >= 0.0, "t={t} lambda={lambda}");
                assert!(v > prev - 1e-12, "monotone in lambda at t={t}");
                prev = v;
            }
        }
    }

    #[test]
    fn u_kernel_monotone_in_t_and_lambda() {
        let p = StableParams::new(3, 0.8).unwrap();
        // increasing in t at fixed lambda
        for &lambda in &[0.0, 0.3, 0.6] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..12 {
                let t = -1.0 + 1.99 * k as f64 / 11.0;
                let v = u_omt(&p, lambda, 1.0 - t, &spec()).unwrap();
                assert!(v > prev, "t-monotonicity lambda={lambda} t={t}");
                prev = v;
            }
        }
        // increasing in lambda on [(alpha-d)/2, alpha) at fixed t
        let lo = (p.alpha() - p.df()) / 2.0;
        for &t in &[-0.7, 0.1, 0.8] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..10 {
                let lambda = lo + (p.alpha() - 1e-3 - lo) * k as f64 / 9.0;
                let v = u_omt(&p, lambda, 1.0 - t, &spec()).unwrap();
                assert!(v > prev, "lambda-monotonicity t={t} lambda={lambda}");
                prev = v;
            }
        }
    }

    #[test]
    fn u_diff_growth_near_alpha() {
        // u_diff ~ 1/(alpha - lambda) as lambda -> alpha (Lemma-type bracket).
        let p = StableParams::new(2, 1.2).unwrap();
        let spec = spec();
        for &gap in &[1e-2, 1e-3, 1e-4] {
            let lambda = p.alpha() - gap;
            let v = u_diff_omt(&p, lambda, 1.0, &spec).unwrap(); // t = 0
            let ratio = v * gap;
            assert!(
                (0.8..1.2).contains(&ratio),
                "gap={gap} ratio={ratio}"
            );
        }
    }

    #[test]
    fn blow_up_rate_band() {
        // u_0(t) (1-t)^((d+alpha-1)/2) stays within a bounded band as t -> 1.
        for &(d, alpha) in &[(2u32, 1.0), (3, 1.5)] {
            let p = StableParams::new(d, alpha).unwrap();
            let e = (d as f64 + alpha - 1.0) / 2.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 2..=6 {
                let omt = 10f64.powi(-k);
                let v = u_omt(&p, 0.0, omt, &spec()).unwrap() * omt.powf(e);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(hi / lo < 2.0, "band too wide for d={d} alpha={alpha}: [{lo}, {hi}]");
        }
    }

    #[test]
    fn tables_match_direct_quadrature() {
        for &(d, alpha) in &[(2u32, 1.0), (2, 0.5), (3, 1.5)] {
            let p = StableParams::new(d, alpha).unwrap();
            let base = base_table(&p).unwrap();
            let lambda = 0.6 * alpha;
            let diff = diff_table(&p, lambda).unwrap();
            let mut omt = 2.0;
            while omt > 5e-12 {
                let direct0 = u_omt(&p, 0.0, omt, &spec()).unwrap();
                let tab0 = base.eval_omt(omt).unwrap();
                assert!(rel(tab0, direct0) < 5e-9, "base d={d} a={alpha} omt={omt}");
                let directd = u_diff_omt(&p, lambda, omt, &spec()).unwrap();
                let tabd = diff.eval_omt(omt).unwrap();
                assert!(rel(tabd, directd) < 5e-9, "diff d={d} a={alpha} omt={omt}");
                omt *= 0.211; // irrational-ish stride across panels
            }
        }
    }

    #[test]
    fn reduced_kernel_two_point_sum_in_dim_two() {
        let p = p21();
        let s = spec();
        // diff kind with lambda = 0 vanishes
        let v = reduced_kernel(&p, KernelKind::Diff { lambda: 0.0 }, 0.7, 1.1, &s).unwrap();
        assert_eq!(v, 0.0);
        // base: K(cos(g-g')) + K(cos(g+g'))
        let g = PI / 2.0;
        let gp = PI / 4.0;
        let v = reduced_kernel(&p, KernelKind::Base, g, gp, &s).unwrap();
        let expected = u_omt(&p, 0.0, 1.0 - (g - gp).cos(), &s).unwrap()
            + u_omt(&p, 0.0, 1.0 - (g + gp).cos(), &s).unwrap();
        assert!(rel(v, expected) < 1e-8, "{v} vs {expected}");
        // coincident points are singular
        match reduced_kernel(&p, KernelKind::Base, 0.8, 0.8, &s) {
            Err(Error::SingularArgument { .. }) => {}
            other => panic!("expected SingularArgument, got {other:?}"),
        }
    }

    #[test]
    fn reduced_kernel_matches_brute_force_sphere_quadrature_d3() {
        // Oracle: full 2D quadrature over S^2 of f(gamma) K(<theta, eta>)
        // against the 1D reduced form, with f supported away from eta.
        let p = StableParams::new(3, 0.8).unwrap();
        let s = spec();
        let gp: f64 = 0.9; // eta polar angle
        let f = |g: f64| {
            // smooth bump on [1.6, 2.6]
            let x: f64 = (g - 2.1) / 0.5;
            if x.abs() < 1.0 {
                (1.0 - x * x).powi(3)
            } else {
                0.0
            }
        };
        for kind in [KernelKind::Base, KernelKind::Diff { lambda: 0.4 }] {
            let table = match kind {
                KernelKind::Base => base_table(&p).unwrap(),
                KernelKind::Diff { lambda } => diff_table(&p, lambda).unwrap(),
            };
            // 2D brute force in (gamma, psi): sigma(dtheta) = sin(g) dg dpsi with
            // psi the azimuthal angle in [0, 2pi).
            let inner = |g: f64| {
                let fg = f(g);
                if fg == 0.0 {
                    return 0.0;
                }
                let integrand = |psi: f64| {
                    let omt = one_minus_cos(g - gp) + g.sin() * gp.sin() * one_minus_cos(psi);
                    table.eval_omt(omt).unwrap()
                };
                let half = integrate(&integrand, 0.0, PI, &s.relaxed(100.0), &[]).unwrap().value;
                fg * g.sin() * 2.0 * half
            };
            let brute = integrate(&inner, 1.6, 2.6, &s.relaxed(100.0), &[]).unwrap().value;
            let reduced_int = |g: f64| {
                let fg = f(g);
                if fg == 0.0 {
                    return 0.0;
                }
                fg * reduced_kernel(&p, kind, g, gp, &s).unwrap()
            };
            let via_reduced = integrate(&reduced_int, 1.6, 2.6, &s.relaxed(100.0), &[]).unwrap().value;
            assert!(
                (brute - via_reduced).abs() <= 1e-8 * brute.abs().max(1.0),
                "kind mismatch: {brute} vs {via_reduced}"
            );
        }
    }

    #[test]
    fn bound_check_fits_and_margins_are_nonpositive() {
        let p = StableParams::new(2, 1.2).unwrap();
        let mut samples = Vec::new();
        for &gap in &[1e-1, 1e-2, 1e-3] {
            for &t in &[-1.0, -0.3, 0.5, 1.0 - 1e-6] {
                samples.push((t, p.alpha() - gap));
            }
        }
        let report = kernel_bound_check(&p, &samples, 0.5, &spec()).unwrap();
        assert!(report.worst_lower_margin <= 1e-12);
        assert!(report.worst_upper_margin <= 1e-12);
        assert!(report.c_lower >= 0.0 && report.c_upper >= 0.0);
        // near lambda -> alpha the value hugs 1/(alpha - lambda)
        let gap = 1e-3;
        let v = u_diff_omt(&p, p.alpha() - gap, 1.0, &spec()).unwrap();
        assert!(v >= 1.0 / gap - report.c_lower - 1e-9);
    }

    #[test]
    fn bound_check_logarithmic_branch_when_d_plus_alpha_is_three() {
        // d = 2, alpha = 1: the t-factor of the upper bound switches to
        // 1 v |ln sqrt(2(1-t))|, which must dominate near t = 1.
        let p = p21();
        let near = upper_bound_shape(&p, 1.0 - 1e-6, 0.5, 0.5);
        let far = upper_bound_shape(&p, 0.0, 0.5, 0.5);
        assert!(near > far, "log factor must grow toward t = 1");
        let samples = vec![(1.0 - 1e-6, 0.5), (0.0, 0.5), (-1.0, 0.9)];
        let report = kernel_bound_check(&p, &samples, 0.5, &spec()).unwrap();
        assert!(report.worst_upper_margin <= 1e-12);
    }

    #[test]
    fn bound_check_lambda_zero_branch() {
        let p = StableParams::new(2, 0.8).unwrap();
        let report = kernel_bound_check(&p, &[(0.0, 0.0)], 0.5, &spec()).unwrap();
        // u_diff = 0, lower bound reads 1/alpha - c <= 0.
        assert!(report.c_lower >= 1.0 / p.alpha() - 1e-12);
        assert!(report.worst_lower_margin <= 1e-12);
    }

    #[test]
    fn kernel_point_validation() {
        let p = p21();
        assert!(KernelPoint::new(&p, 1.0, 0.0).is_err());
        assert!(KernelPoint::new(&p, -1.1, 0.0).is_err());
        assert!(KernelPoint::new(&p, 0.0, 1.0).is_err());
        assert!(KernelPoint::new(&p, 0.0, -2.0).is_err());
        assert!(KernelPoint::new(&p, 0.0, 0.99).is_ok());
    }
}

