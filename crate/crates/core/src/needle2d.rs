//! Planar needle sequence `v(y; α, τ, ω) = -(E_α(τ y ω̄) - 1)/y` and the
//! exhaustion-driven choice of `(αₙ, τₙ)`.
//!
//! Points of the plane are identified with complex numbers `y₁ + i y₂`. The
//! singular function is `G(y) = 1/y`; `v - G = -E_α(τ y ω̄)/y` decays off the
//! closed cone of half-angle `πα/2` around `ω` as `τ → ∞`.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use num_complex::Complex64;

use crate::error::{ProbeError, Result};
use crate::special::MittagLeffler;

pub type Point2 = [f64; 2];

pub(crate) fn to_c(p: Point2) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Unit direction `ω` together with `ω^⊥ = (-ω₂, ω₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction2 {
    pub omega: [f64; 2],
    pub omega_perp: [f64; 2],
}

impl Direction2 {
    pub fn new(dx: f64, dy: f64) -> Result<Self> {
        let n = dx.hypot(dy);
        if !(n > 0.0 && n.is_finite()) {
            return Err(ProbeError::Domain(format!("direction ({dx}, {dy}) cannot be normalised")));
        }
        let omega = [dx / n, dy / n];
        Ok(Self { omega, omega_perp: [-omega[1], omega[0]] })
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { omega: [c, s], omega_perp: [-s, c] }
    }

    pub fn angle(&self) -> f64 {
        self.omega[1].atan2(self.omega[0])
    }

    /// `ω̄ = ω₁ - iω₂`.
    pub fn conj(&self) -> Complex64 {
        Complex64::new(self.omega[0], -self.omega[1])
    }
}

/// Straight needle `{x + tω : t ≥ 0}` clipped to the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Needle {
    pub tip: Point2,
    pub direction: Direction2,
}

impl Needle {
    pub fn new(tip: Point2, direction: Direction2) -> Self {
        Self { tip, direction }
    }

    /// Angle between `p - tip` and `ω`, in `[0, π]`; zero at the tip.
    pub fn angle_to(&self, p: Point2) -> f64 {
        let d = [p[0] - self.tip[0], p[1] - self.tip[1]];
        let n = d[0].hypot(d[1]);
        if n == 0.0 {
            return 0.0;
        }
        let c = (d[0] * self.direction.omega[0] + d[1] * self.direction.omega[1]) / n;
        c.clamp(-1.0, 1.0).acos()
    }
}

/// `G(y - x) = 1/(y - x)`.
pub fn fundamental_2d(y: Point2, x: Point2) -> Complex64 {
    (to_c(y) - to_c(x)).inv()
}

/// Evaluator for one member `v(·; α, τ, ω)` of the needle family.
#[derive(Debug)]
pub struct NeedleField {
    ml: MittagLeffler,
    tau: f64,
    dir: Direction2,
    tw: Complex64,
}

impl NeedleField {
    pub fn new(alpha: f64, tau: f64, dir: Direction2) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ProbeError::Domain(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { ml: MittagLeffler::new(alpha)?, tau, dir, tw: dir.conj() * tau })
    }

    pub fn alpha(&self) -> f64 {
        self.ml.alpha()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn direction(&self) -> Direction2 {
        self.dir
    }

    pub fn ml(&self) -> &MittagLeffler {
        &self.ml
    }

    /// `v` and its complex derivative `dv/dd` at the offset `d = y - x`.
    ///
    /// `v` is holomorphic in `d`, so `∂₁v = v'` and `∂₂v = i v'`.
    pub fn value_and_derivative(&self, d: Complex64) -> Result<(Complex64, Complex64)> {
        let (q, dq) = self.ml.quotient_pair(self.tw * d)?;
        Ok((-self.tw * q, -self.tw * self.tw * dq))
    }

    pub fn value(&self, d: Complex64) -> Result<Complex64> {
        Ok(self.value_and_derivative(d)?.0)
    }

    /// Tip value `-τω̄/Γ(1+α)`.
    pub fn tip_value(&self) -> Complex64 {
        -self.tw * crate::special::gamma::rgamma(1.0 + self.alpha())
    }

    /// `|v - G| + |∇(v - G)|` at the offset `d ≠ 0`, computed from
    /// `v - G = -E_α(τ d ω̄)/d` without cancellation.
    pub fn deviation_from_g(&self, d: Complex64) -> Result<f64> {
        let (e, de) = self.ml.eval_pair(self.tw * d)?;
        let di = d.inv();
        let val = -e * di;
        let der = -self.tw * de * di + e * di * di;
        Ok(val.norm() + SQRT_2 * der.norm())
    }
}

/// `v(y - x; α, τ, ω)`, with the removable singularity at `y = x` handled.
pub fn needle2d_eval(y: Point2, x: Point2, alpha: f64, tau: f64, dir: Direction2) -> Result<Complex64> {
    NeedleField::new(alpha, tau, dir)?.value(to_c(y) - to_c(x))
}

/// `(∂₁v, ∂₂v)` at `y`.
pub fn needle2d_grad(
    y: Point2,
    x: Point2,
    alpha: f64,
    tau: f64,
    dir: Direction2,
) -> Result<(Complex64, Complex64)> {
    let (_, dv) = NeedleField::new(alpha, tau, dir)?.value_and_derivative(to_c(y) - to_c(x))?;
    Ok((dv, dv * Complex64::i()))
}

/// Axis-aligned open box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub min: Point2,
    pub max: Point2,
}

impl Box2 {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn contains_closed(&self, p: Point2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn corners(&self) -> [Point2; 4] {
        [self.min, [self.max[0], self.min[1]], self.max, [self.min[0], self.max[1]]]
    }

    pub fn translate(&self, by: Point2) -> Self {
        Self {
            min: [self.min[0] + by[0], self.min[1] + by[1]],
            max: [self.max[0] + by[0], self.max[1] + by[1]],
        }
    }

    /// Whether the closed box meets the ray `{tip + tω : t ≥ 0}` (slab test).
    pub fn meets_ray(&self, needle: &Needle) -> bool {
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for k in 0..2 {
            let o = needle.tip[k];
            let w = needle.direction.omega[k];
            if w.abs() < 1e-300 {
                if o < self.min[k] || o > self.max[k] {
                    return false;
                }
            } else {
                let (a, b) = ((self.min[k] - o) / w, (self.max[k] - o) / w);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        t0 <= t1
    }

    /// Smallest angle between `ω` and `p - tip` over the closed box.
    ///
    /// Along a segment missing the tip the direction of `p - tip` turns
    /// monotonically, so the minimum sits at a corner unless the ray hits
    /// the box.
    pub fn min_angle(&self, needle: &Needle) -> f64 {
        if self.meets_ray(needle) {
            return 0.0;
        }
        self.corners().iter().map(|&c| needle.angle_to(c)).fold(f64::INFINITY, f64::min)
    }
}

/// One level `Oₙ` of an exhaustion, as a finite union of open boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExhaustionSet {
    pub boxes: Vec<Box2>,
}

impl ExhaustionSet {
    pub fn new(boxes: Vec<Box2>) -> Self {
        Self { boxes }
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
    }

    pub fn bounding_box(&self) -> Option<Box2> {
        let first = self.boxes.first()?;
        Some(self.boxes.iter().fold(*first, |acc, b| Box2 {
            min: [acc.min[0].min(b.min[0]), acc.min[1].min(b.min[1])],
            max: [acc.max[0].max(b.max[0]), acc.max[1].max(b.max[1])],
        }))
    }

    pub fn translate(&self, by: Point2) -> Self {
        Self { boxes: self.boxes.iter().map(|b| b.translate(by)).collect() }
    }

    /// Smallest angle between the needle direction and the closure of the set.
    pub fn min_angle(&self, needle: &Needle) -> f64 {
        self.boxes.iter().map(|b| b.min_angle(needle)).fold(PI, f64::min)
    }

    /// Points of a uniform grid over the bounding box, spacing
    /// `diameter / per_side`, that fall inside some box of the set.
    pub fn sample_grid(&self, per_side: usize) -> Vec<Point2> {
        let Some(bb) = self.bounding_box() else {
            return Vec::new();
        };
        let diam = (bb.max[0] - bb.min[0]).hypot(bb.max[1] - bb.min[1]);
        let h = diam / per_side as f64;
        let nx = ((bb.max[0] - bb.min[0]) / h).ceil() as usize;
        let ny = ((bb.max[1] - bb.min[1]) / h).ceil() as usize;
        let mut out = Vec::new();
        for i in 0..=nx {
            for j in 0..=ny {
                // half-step offset keeps samples off shared box edges
                let p = [bb.min[0] + (i as f64 + 0.5) * h, bb.min[1] + (j as f64 + 0.5) * h];
                if self.contains(p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Parameters of the standard cone-complement exhaustion around a needle:
/// level `n` keeps the grid cells of `[-L, L]²` (relative to the tip) whose
/// closure lies outside the closed cone of half-angle `θₙ = θ₀ qθⁿ` and the
/// closed ball of radius `rₙ = r₀ qᵣⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExhaustionParams {
    pub half_width: f64,
    pub cells: usize,
    pub theta0: f64,
    pub theta_ratio: f64,
    pub radius0: f64,
    pub radius_ratio: f64,
}

impl Default for ExhaustionParams {
    fn default() -> Self {
        Self {
            half_width: 2.0,
            cells: 48,
            theta0: PI / 3.0,
            theta_ratio: 0.8,
            radius0: 0.2,
            radius_ratio: 0.8,
        }
    }
}

/// Nested cone-complement exhaustion around `needle`, levels `1..=levels`.
pub fn cone_exhaustion(needle: &Needle, params: &ExhaustionParams, levels: usize) -> Vec<ExhaustionSet> {
    let l = params.half_width;
    let h = 2.0 * l / params.cells as f64;
    let x = needle.tip;
    (1..=levels)
        .map(|n| {
            let theta = params.theta0 * params.theta_ratio.powi(n as i32 - 1);
            let radius = params.radius0 * params.radius_ratio.powi(n as i32 - 1);
            let mut boxes = Vec::new();
            for i in 0..params.cells {
                for j in 0..params.cells {
                    let b = Box2::new(
                        [x[0] - l + i as f64 * h, x[1] - l + j as f64 * h],
                        [x[0] - l + (i + 1) as f64 * h, x[1] - l + (j + 1) as f64 * h],
                    );
                    let near = [
                        x[0].clamp(b.min[0], b.max[0]) - x[0],
                        x[1].clamp(b.min[1], b.max[1]) - x[1],
                    ];
                    if near[0].hypot(near[1]) > radius && b.min_angle(needle) > theta {
                        boxes.push(b);
                    }
                }
            }
            ExhaustionSet::new(boxes)
        })
        .collect()
}

/// The sequences `(αₙ, τₙ, εₙ)` with the exhaustion they were verified on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeedleSchedule {
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub exhaustion: Vec<ExhaustionSet>,
}

impl NeedleSchedule {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// The same schedule for a needle whose tip moved by `by`; exact since
    /// `v` depends on `y - x` only.
    pub fn translate(&self, by: Point2) -> Self {
        Self {
            exhaustion: self.exhaustion.iter().map(|o| o.translate(by)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleOptions {
    /// Starting value of the doubling search at level 1.
    pub tau_start: f64,
    pub tau_max: f64,
    /// `παₙ/2 ≤ cone_safety · (smallest angle of Oₙ)`.
    pub cone_safety: f64,
    /// Grid resolution per side of the bounding box of `Oₙ`.
    pub samples_per_side: usize,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self { tau_start: 1.0, tau_max: 1e12, cone_safety: 0.9, samples_per_side: 64 }
    }
}

/// Choose `αₙ` so the cone misses `Oₙ`, then double `τ` until
/// `sup |v - G| + |∇(v - G)| < εₙ = eps0 2⁻ⁿ` on a sampling grid of `Oₙ`.
pub fn build_schedule(exhaustion: &[ExhaustionSet], needle: &Needle, eps0: f64) -> Result<NeedleSchedule> {
    build_schedule_with(exhaustion, needle, eps0, &ScheduleOptions::default())
}

pub fn build_schedule_with(
    exhaustion: &[ExhaustionSet],
    needle: &Needle,
    eps0: f64,
    opts: &ScheduleOptions,
) -> Result<NeedleSchedule> {
    if !(eps0 > 0.0) {
        return Err(ProbeError::Domain(format!("eps0 must be positive, got {eps0}")));
    }
    let mut sched = NeedleSchedule::default();
    let mut alpha_prev = 1.0f64;
    let mut tau = opts.tau_start;
    for (idx, level) in exhaustion.iter().enumerate() {
        let n = idx + 1;
        let theta = level.min_angle(needle);
        if theta <= 0.0 {
            return Err(ProbeError::GeometryInvalid(format!(
                "exhaustion level {n} meets the needle"
            )));
        }
        let alpha = (opts.cone_safety * theta / FRAC_PI_2).min(alpha_prev).min(1.0);
        let eps = eps0 * 0.5f64.powi(n as i32);
        let offsets: Vec<Complex64> = level
            .sample_grid(opts.samples_per_side)
            .into_iter()
            .map(|p| Complex64::new(p[0] - needle.tip[0], p[1] - needle.tip[1]))
            .collect();
        loop {
            let field = NeedleField::new(alpha, tau, needle.direction)?;
            let dev = offsets.iter().try_fold(0.0f64, |acc, &d| {
                let v = field.deviation_from_g(d).unwrap_or(f64::INFINITY);
                if v >= eps { Err(()) } else { Ok(acc.max(v)) }
            });
            if dev.is_ok() {
                break;
            }
            tau *= 2.0;
            if tau > opts.tau_max {
                return Err(ProbeError::ScheduleFailure { level: n, tau_max: opts.tau_max });
            }
        }
        sched.alphas.push(alpha);
        sched.taus.push(tau);
        sched.epsilons.push(eps);
        sched.exhaustion.push(level.clone());
        alpha_prev = alpha;
    }
    Ok(sched)
}

/// Deviation actually achieved by level `n` of a schedule on its own grid.
pub fn schedule_deviation(sched: &NeedleSchedule, needle: &Needle, n: usize, per_side: usize) -> Result<f64> {
    let field = NeedleField::new(sched.alphas[n], sched.taus[n], needle.direction)?;
    sched.exhaustion[n]
        .sample_grid(per_side)
        .into_iter()
        .map(|p| field.deviation_from_g(Complex64::new(p[0] - needle.tip[0], p[1] - needle.tip[1])))
        .try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
}
