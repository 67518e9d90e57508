//! Vekua transform and the Helmholtz needle built from the 3D Laplace needle.
//!
//! `T_λ v(y) = v(y) - λ|y| ∫₀^{π/2} v(cos²φ · y) J₁(λ|y| sin φ) cos²φ dφ`,
//!
//! which is the usual `t`-form under `t = cos²φ`; the integrand is smooth
//! on the closed interval, including for `v = 1/(4π|y|)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::carleman3d::{Frame3, Needle3d, Point3};
use crate::error::{ProbeError, Result};
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::special::{j1, MittagLeffler};

/// Bound on the embedded Gauss estimate; the Kronrod value is far tighter.
const ANGULAR_TOLERANCE: Tolerance = Tolerance::new(1e-13, 1e-10);
const MAX_PANELS: usize = 2000;
/// Panels `[π/2 - 2^{-k}π/2, π/2 - 2^{-k-1}π/2]` resolve fields that vary
/// on small scales near the origin (`cos²φ → 0`).
const GRADED_PANELS: i32 = 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelmholtzNeedleParams {
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub frame: Frame3,
}

impl HelmholtzNeedleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ProbeError::Domain(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ProbeError::Domain(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ProbeError::Domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Integrate `f` over `[0, π/2]` by adaptive Gauss–Kronrod, starting from
/// panels graded geometrically towards `π/2`.
fn angular<F>(mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let cuts: Vec<f64> = (1..=GRADED_PANELS).map(|k| FRAC_PI_2 * (1.0 - 0.5f64.powi(k))).collect();
    let mut err = None;
    let est = integrate_with_breaks(
        |phi| match f(phi) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        FRAC_PI_2,
        &cuts,
        ANGULAR_TOLERANCE,
        MAX_PANELS,
    )?;
    err.map_or(Ok(est.value), Err)
}

/// `T_λ v(y)` for a field `v` that can be sampled on the segment `[0, y]`.
pub fn vekua_transform<F>(v: F, lambda: f64, y: &Point3) -> Result<f64>
where
    F: Fn(&Point3) -> Result<f64>,
{
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ProbeError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let r = y.norm();
    let kr = lambda * r;
    let centre = v(y)?;
    if kr == 0.0 {
        return Ok(centre);
    }
    let tail = angular(|phi| {
        let (s, c) = phi.sin_cos();
        let c2 = c * c;
        Ok(v(&(y * c2))? * j1(kr * s) * c2)
    })?;
    Ok(centre - kr * tail)
}

/// `(s ∫₀¹ (1-w²)^{-1/2} J₁(sw) dw, 1 - cos s)`, the left side by quadrature.
pub fn identity_5_10(s: f64) -> Result<(f64, f64)> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(ProbeError::Domain(format!("s must be non-negative, got {s}")));
    }
    let rhs = 1.0 - s.cos();
    if s == 0.0 {
        return Ok((0.0, rhs));
    }
    let lhs = s * angular(|phi| Ok(j1(s * phi.sin())))?;
    Ok((lhs, rhs))
}

/// Reusable evaluator for `v^λ(· ; α, τ, ϑ₁, ϑ₂)`.
#[derive(Debug)]
pub struct HelmholtzNeedle {
    params: HelmholtzNeedleParams,
    laplace: Needle3d,
}

impl HelmholtzNeedle {
    pub fn new(params: HelmholtzNeedleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, laplace: Needle3d::new(params.alpha, params.tau, params.frame)? })
    }

    pub fn params(&self) -> &HelmholtzNeedleParams {
        &self.params
    }

    pub fn laplace(&self) -> &Needle3d {
        &self.laplace
    }

    /// `v^λ` at offset `d = y - x`.
    pub fn eval(&self, d: &Point3) -> Result<f64> {
        vekua_transform(|p| self.laplace.eval(p), self.params.lambda, d)
    }

    /// Same, with the Laplace needle always evaluated by quadrature.
    pub fn eval_quadrature(&self, d: &Point3) -> Result<f64> {
        vekua_transform(|p| self.laplace.eval_quadrature(p), self.params.lambda, d)
    }

    pub fn on_axis(&self, s: f64) -> Result<f64> {
        on_axis(self.laplace.ml(), self.params.tau, self.params.lambda, s)
    }

    pub fn tilde(&self, d: &Point3) -> Result<Complex64> {
        Ok(Complex64::new(self.eval(d)?, sinc_term(self.params.lambda, d.norm())))
    }
}

/// `v^λ(y; α, τ, ϑ₁, ϑ₂)` for the needle with tip `x`.
pub fn helmholtz_needle_eval(y: &Point3, x: &Point3, params: &HelmholtzNeedleParams) -> Result<f64> {
    HelmholtzNeedle::new(*params)?.eval(&(y - x))
}

/// Exact value on the needle line `y = x + sω`:
/// `[τ(E_α(τs) - 1)/(τs) - λ ∫₀^{π/2} (E_α(τs cos²φ) - 1) J₁(λs sin φ) dφ] / 4π`,
/// which is the two-term closed form rewritten without the `1/s` cancellation.
pub fn helmholtz_needle_on_axis(s: f64, params: &HelmholtzNeedleParams) -> Result<f64> {
    params.validate()?;
    on_axis(&MittagLeffler::new(params.alpha)?, params.tau, params.lambda, s)
}

fn on_axis(ml: &MittagLeffler, tau: f64, lambda: f64, s: f64) -> Result<f64> {
    let (q, _) = ml.quotient_pair(Complex64::new(tau * s, 0.0))?;
    if s == 0.0 {
        return Ok(tau * q.re / (4.0 * PI));
    }
    let tail = angular(|phi| {
        let (sn, c) = phi.sin_cos();
        Ok(ml.eval_minus_one(Complex64::new(tau * s * c * c, 0.0))?.re * j1(lambda * s * sn))
    })?;
    Ok((tau * q.re - lambda * tail) / (4.0 * PI))
}

/// Gradient of `v^λ` at the tip, `τ²/(4πΓ(1+2α)) ω`.
pub fn helmholtz_needle_tip_gradient(params: &HelmholtzNeedleParams) -> Result<Point3> {
    params.validate()?;
    crate::carleman3d::needle3d_grad_on_axis(0.0, params.alpha, params.tau, &params.frame)
}

/// `G_λ(y) = cos(λ|y|)/(4π|y|)`.
pub fn helmholtz_fundamental(lambda: f64, y: &Point3) -> f64 {
    let r = y.norm();
    (lambda * r).cos() / (4.0 * PI * r)
}

fn sinc_term(lambda: f64, r: f64) -> f64 {
    if r == 0.0 {
        lambda / (4.0 * PI)
    } else {
        (lambda * r).sin() / (4.0 * PI * r)
    }
}

/// `v^λ + i sin(λ|y-x|)/(4π|y-x|)`, tending to `e^{iλ|y-x|}/(4π|y-x|)` off the cone.
pub fn tilde_needle_eval(y: &Point3, x: &Point3, params: &HelmholtzNeedleParams) -> Result<Complex64> {
    HelmholtzNeedle::new(*params)?.tilde(&(y - x))
}
