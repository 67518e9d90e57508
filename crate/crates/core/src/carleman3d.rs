//! Three-dimensional needle built from the Carleman-type fundamental solution
//!
//! `-2π² Φ_K(y) = ∫₀^∞ Im(K(w)/w) du / √(ρ + u²)`,  `w = s + i√(ρ + u²)`,
//!
//! with `K(w) = E_α(τw)`, `ρ` the squared distance from the `ω`-axis and `s`
//! the axial coordinate. The needle is the regular part
//! `v = 1/(4π|y|) - Φ_K`, i.e. `2π² v = ∫ Im((E_α(τw) - 1)/w) du/√(ρ+u²)`.
//!
//! The `u`-integral runs on the real axis up to a split point and then along
//! the complex ray `u = U + t e^{iπ/4}`: the integrand is analytic there and
//! decays, which removes the non-decaying oscillation present for `α = 1`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{ProbeError, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::special::MittagLeffler;

pub type Point3 = Vector3<f64>;

/// Orthonormal frame `(ϑ₁, ϑ₂, ω = ϑ₁ × ϑ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame3 {
    pub theta1: Point3,
    pub theta2: Point3,
    pub omega: Point3,
}

impl Frame3 {
    pub fn new(theta1: Point3, theta2: Point3) -> Result<Self> {
        let ok = (theta1.norm() - 1.0).abs() < 1e-12
            && (theta2.norm() - 1.0).abs() < 1e-12
            && theta1.dot(&theta2).abs() < 1e-12;
        if !ok {
            return Err(ProbeError::Domain("frame vectors must be orthonormal".into()));
        }
        Ok(Self { theta1, theta2, omega: theta1.cross(&theta2) })
    }

    /// Some frame whose third axis is the normalised `omega`.
    pub fn from_axis(omega: Point3) -> Result<Self> {
        let n = omega.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(ProbeError::Domain("axis must be a nonzero finite vector".into()));
        }
        let w = omega / n;
        let helper = if w.x.abs() < 0.9 { Point3::x() } else { Point3::y() };
        let t1 = (helper - w * helper.dot(&w)).normalize();
        let t2 = w.cross(&t1);
        Ok(Self { theta1: t1, theta2: t2, omega: t1.cross(&t2) })
    }

    /// `(ρ, s) = (|d·ϑ₁|² + |d·ϑ₂|², d·ω)`.
    pub fn coordinates(&self, d: &Point3) -> (f64, f64) {
        let (a, b) = (d.dot(&self.theta1), d.dot(&self.theta2));
        (a * a + b * b, d.dot(&self.omega))
    }

    /// Rotate `(ϑ₁, ϑ₂)` by `phi` about `ω`.
    pub fn rotated(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let t1 = self.theta1 * c + self.theta2 * s;
        let t2 = self.theta2 * c - self.theta1 * s;
        Self { theta1: t1, theta2: t2, omega: t1.cross(&t2) }
    }
}

/// Controls of the semi-infinite `u`-integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiInfiniteQuadrature {
    /// Real-axis part is `[0, U]`, `U ≥ 1` (enlarged in the growth sector).
    pub split_point: f64,
    /// Relative tolerance of each adaptive piece.
    pub panel_tolerance: f64,
    /// Panel budget per piece.
    pub max_panels: usize,
}

impl Default for SemiInfiniteQuadrature {
    fn default() -> Self {
        Self { split_point: 1.0, panel_tolerance: 1e-12, max_panels: 2000 }
    }
}

/// Points with transverse distance below `SINGULAR_RAY_WIDTH · min(1, s)`
/// from the positive `ω`-axis use the closed forms. The width shrinks with
/// `s` so that points near the tip but off the axis keep using quadrature.
pub const SINGULAR_RAY_WIDTH: f64 = 1e-3;

/// Whether `(ρ, s)` falls in the strip handled by the closed forms.
pub fn on_singular_ray(rho: f64, s: f64) -> bool {
    s > 0.0 && rho.sqrt() < SINGULAR_RAY_WIDTH * s.min(1.0)
}

/// Which entire function plays the role of `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `K ≡ 1`, for which `Φ_K = 1/(4π|y|)`.
    Unit,
    MittagLeffler { alpha: f64, tau: f64 },
}

/// `∫₀^∞ Im(h(w)) du / q`, `q = √(ρ + u²)`, `w = s + iq`.
///
/// `growth_alpha` enlarges the real-axis piece so the complex ray starts
/// outside the sector where `E_α(τw)` grows.
pub fn carleman_integral<H>(
    h: H,
    rho: f64,
    s: f64,
    growth_alpha: Option<f64>,
    quad: &SemiInfiniteQuadrature,
) -> Result<f64>
where
    H: Fn(Complex64) -> Result<Complex64>,
{
    let mut split = quad.split_point.max(1.0);
    if let Some(a) = growth_alpha {
        if s > 0.0 && a < 1.0 {
            split = split.max(s * (FRAC_PI_2 * a + 0.2).min(1.45).tan());
        }
    }
    let tol = Tolerance { abs: 1e-15, rel: quad.panel_tolerance };
    let mut failure = None;
    let real = integrate(
        |u: f64| {
            let q = (rho + u * u).sqrt();
            match h(Complex64::new(s, q)) {
                Ok(v) => v.im / q,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        split,
        tol,
        quad.max_panels,
    )?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    // u = split + t e^{iπ/4},  t = split x/(1-x)
    let dir = Complex64::from_polar(1.0, FRAC_PI_4);
    let ray = integrate(
        |x: f64| {
            if x >= 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            let t = split * x / (1.0 - x);
            let jac = split / ((1.0 - x) * (1.0 - x));
            let u = dir * t + split;
            let q = (u * u + rho).sqrt();
            match h(Complex64::new(s, 0.0) + Complex64::i() * q) {
                Ok(v) => v / q * dir * jac,
                Err(e) => {
                    failure.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        },
        0.0,
        1.0,
        tol,
        quad.max_panels,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(real.value + ray.value.im)
}

fn ml_quotient(ml: &MittagLeffler, tau: f64) -> impl Fn(Complex64) -> Result<Complex64> + '_ {
    move |w: Complex64| Ok(ml.quotient_pair(w * tau)?.0 * tau)
}

/// Regular part `v(d)` by quadrature at offset `d = y - x`, no axis policy.
pub fn needle3d_quadrature(
    d: &Point3,
    ml: &MittagLeffler,
    tau: f64,
    frame: &Frame3,
    quad: &SemiInfiniteQuadrature,
) -> Result<f64> {
    let (rho, s) = frame.coordinates(d);
    let val = carleman_integral(ml_quotient(ml, tau), rho, s, Some(ml.alpha()), quad)?;
    Ok(val / (2.0 * PI * PI))
}

/// `Φ_K` at `y` (relative to the pole). `y = 0` is a domain error; the
/// positive `ω`-axis (see [`on_singular_ray`]) raises `SingularRay`
/// unless `K ≡ 1`.
pub fn phi_k_eval(y: &Point3, kernel: Kernel, frame: &Frame3) -> Result<f64> {
    phi_k_eval_with(y, kernel, frame, &SemiInfiniteQuadrature::default())
}

pub fn phi_k_eval_with(y: &Point3, kernel: Kernel, frame: &Frame3, quad: &SemiInfiniteQuadrature) -> Result<f64> {
    if y.norm() == 0.0 {
        return Err(ProbeError::Domain("Φ_K is singular at the origin".into()));
    }
    let (rho, s) = frame.coordinates(y);
    let val = match kernel {
        Kernel::Unit => carleman_integral(|w| Ok(w.inv()), rho, s, None, quad)?,
        Kernel::MittagLeffler { alpha, tau } => {
            if on_singular_ray(rho, s) {
                return Err(ProbeError::SingularRay);
            }
            let ml = MittagLeffler::new(alpha)?;
            check_tau(tau)?;
            carleman_integral(|w| Ok(ml.eval(w * tau)? / w), rho, s, Some(alpha), quad)?
        }
    };
    Ok(-val / (2.0 * PI * PI))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(ProbeError::Domain(format!("tau must be positive, got {tau}")))
    }
}

/// `v(y - x; α, τ, ϑ₁, ϑ₂)`. Near the positive needle axis the closed form
/// is returned instead of quadrature.
pub fn needle3d_eval(y: &Point3, x: &Point3, alpha: f64, tau: f64, frame: &Frame3) -> Result<f64> {
    Needle3d::new(alpha, tau, *frame)?.eval(&(y - x))
}

/// `(E_α(τs) - 1)/(4πs)`, with the value `τ/(4πΓ(1+α))` at `s = 0`.
pub fn needle3d_on_axis(s: f64, alpha: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let ml = MittagLeffler::new(alpha)?;
    Ok(on_axis(&ml, tau, s)?)
}

/// `d/ds[(E_α(τs) - 1)/(4πs)] ω`; equals `τ²/(4πΓ(1+2α)) ω` at `s = 0`.
pub fn needle3d_grad_on_axis(s: f64, alpha: f64, tau: f64, frame: &Frame3) -> Result<Point3> {
    check_tau(tau)?;
    let ml = MittagLeffler::new(alpha)?;
    let (_, dq) = ml.quotient_pair(Complex64::new(tau * s, 0.0))?;
    Ok(frame.omega * (tau * tau * dq.re / (4.0 * PI)))
}

fn on_axis(ml: &MittagLeffler, tau: f64, s: f64) -> Result<f64> {
    let (q, _) = ml.quotient_pair(Complex64::new(tau * s, 0.0))?;
    Ok(tau * q.re / (4.0 * PI))
}

/// Reusable evaluator for one member of the 3D needle family.
#[derive(Debug)]
pub struct Needle3d {
    ml: MittagLeffler,
    tau: f64,
    frame: Frame3,
    quad: SemiInfiniteQuadrature,
}

impl Needle3d {
    pub fn new(alpha: f64, tau: f64, frame: Frame3) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { ml: MittagLeffler::new(alpha)?, tau, frame, quad: SemiInfiniteQuadrature::default() })
    }

    pub fn with_quadrature(mut self, quad: SemiInfiniteQuadrature) -> Self {
        self.quad = quad;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.ml.alpha()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn frame(&self) -> &Frame3 {
        &self.frame
    }

    pub fn ml(&self) -> &MittagLeffler {
        &self.ml
    }

    /// `v` at offset `d = y - x`.
    pub fn eval(&self, d: &Point3) -> Result<f64> {
        let (rho, s) = self.frame.coordinates(d);
        if on_singular_ray(rho, s) || d.norm() == 0.0 {
            return on_axis(&self.ml, self.tau, s);
        }
        needle3d_quadrature(d, &self.ml, self.tau, &self.frame, &self.quad)
    }

    /// `v` by quadrature only.
    pub fn eval_quadrature(&self, d: &Point3) -> Result<f64> {
        needle3d_quadrature(d, &self.ml, self.tau, &self.frame, &self.quad)
    }

    pub fn on_axis(&self, s: f64) -> Result<f64> {
        on_axis(&self.ml, self.tau, s)
    }
}

/// Per-point output of [`verify_harmonic`].
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicEntry {
    pub point: Point3,
    pub residual_h: f64,
    pub residual_half: f64,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicReport {
    pub h: f64,
    pub entries: Vec<HarmonicEntry>,
}

impl HarmonicReport {
    pub fn median_order(&self) -> f64 {
        let mut o: Vec<f64> = self.entries.iter().map(|e| e.order).filter(|o| o.is_finite()).collect();
        if o.is_empty() {
            return f64::NAN;
        }
        o.sort_by(f64::total_cmp);
        o[o.len() / 2]
    }

    pub fn passed(&self, min_order: f64) -> bool {
        self.median_order() >= min_order
    }
}

/// Seven-point Laplacian of `f` at `p` with step `h`, plus `shift · f(p)`.
pub fn seven_point<F>(f: &F, p: &Point3, h: f64, shift: f64) -> Result<f64>
where
    F: Fn(&Point3) -> Result<f64>,
{
    let c = f(p)?;
    let mut acc = -6.0 * c;
    for k in 0..3 {
        let mut e = Point3::zeros();
        e[k] = h;
        acc += f(&(p + e))? + f(&(p - e))?;
    }
    Ok(acc / (h * h) + shift * c)
}

/// Finite-difference harmonicity check of the needle at `points` (offsets
/// from the tip), at steps `h` and `h/2`.
pub fn verify_harmonic(alpha: f64, tau: f64, frame: &Frame3, points: &[Point3], h: f64) -> Result<HarmonicReport> {
    let needle = Needle3d::new(alpha, tau, *frame)?;
    let f = |p: &Point3| needle.eval(p);
    residual_report(&f, points, h, 0.0)
}

pub(crate) fn residual_report<F>(f: &F, points: &[Point3], h: f64, shift: f64) -> Result<HarmonicReport>
where
    F: Fn(&Point3) -> Result<f64>,
{
    let mut entries = Vec::with_capacity(points.len());
    for p in points {
        let a = seven_point(f, p, h, shift)?.abs();
        let b = seven_point(f, p, h / 2.0, shift)?.abs();
        entries.push(HarmonicEntry { point: *p, residual_h: a, residual_half: b, order: (a / b).log2() });
    }
    Ok(HarmonicReport { h, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularityReport {
    pub radii: Vec<f64>,
    /// `max |Φ_K - 1/(4π|y|)|` over the sphere of each radius.
    pub sup_regular: Vec<f64>,
    /// Closed-form axis value at `s = r` and the quadrature value there.
    pub axis_closed: Vec<f64>,
    pub axis_quadrature: Vec<f64>,
    /// Closed-form tip value.
    pub tip_value: f64,
}

impl SingularityReport {
    /// Sup values stay within `factor` of each other.
    pub fn bounded(&self, factor: f64) -> bool {
        let max = self.sup_regular.iter().cloned().fold(0.0, f64::max);
        let min = self.sup_regular.iter().cloned().fold(f64::INFINITY, f64::min);
        max.is_finite() && max <= factor * min
    }
}

/// Sample `Φ_K - 1/(4π|y|) = -v` on spheres of decreasing radius.
pub fn verify_singularity_extraction(alpha: f64, tau: f64, radii: &[f64]) -> Result<SingularityReport> {
    if radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|&r| !(r > 0.0 && r <= 0.5)) {
        return Err(ProbeError::Domain("radii must be decreasing and in (0, 0.5]".into()));
    }
    let frame = Frame3::from_axis(Point3::z())?;
    let needle = Needle3d::new(alpha, tau, frame)?;
    let dirs = sphere_directions(6, 12);
    let mut rep = SingularityReport {
        radii: radii.to_vec(),
        sup_regular: Vec::new(),
        axis_closed: Vec::new(),
        axis_quadrature: Vec::new(),
        tip_value: needle.on_axis(0.0)?,
    };
    for &r in radii {
        let mut sup = 0.0f64;
        for d in &dirs {
            sup = sup.max(needle.eval(&(d * r))?.abs());
        }
        rep.sup_regular.push(sup);
        rep.axis_closed.push(needle.on_axis(r)?);
        rep.axis_quadrature.push(needle.eval_quadrature(&(Point3::z() * r))?);
    }
    Ok(rep)
}

/// Unit vectors on a latitude/longitude grid, poles included.
pub fn sphere_directions(n_lat: usize, n_lon: usize) -> Vec<Point3> {
    let mut out = vec![Point3::z(), -Point3::z()];
    for i in 1..n_lat {
        let th = PI * i as f64 / n_lat as f64;
        for j in 0..n_lon {
            let ph = 2.0 * PI * j as f64 / n_lon as f64;
            out.push(Point3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_newton_potential() {
        let frame = Frame3::from_axis(Point3::new(0.3, -0.2, 0.9)).unwrap();
        for y in [Point3::new(1.0, 0.0, 0.0), Point3::new(0.2, 0.5, -0.7), frame.omega * 2.0] {
            let phi = phi_k_eval(&y, Kernel::Unit, &frame).unwrap();
            let want = 1.0 / (4.0 * PI * y.norm());
            assert!((phi - want).abs() < 1e-11 * want, "{phi} vs {want}");
        }
    }
}
