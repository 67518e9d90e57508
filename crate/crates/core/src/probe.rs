//! Indicator sequences, their classification, and the grid scan.
//!
//! The energy gap of a needle trace is a quadratic form in the trace. Only
//! finitely many Fourier modes of `Λ₀ - Λ_D` are known, so the trace of `vₙ`
//! is replaced by a polynomial: its Taylor expansion at a centre `c`, read
//! off a Cauchy circle that avoids the sector where `vₙ` is exponentially
//! large. Expanding at the origin converges on the cavities only for tips
//! farther out than every cavity point; centres near the tip cover the rest.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{ProbeError, Result};
use crate::forward2d::{energy_gap, Basis, BoundaryTrace, CavitySolver, DtnOperator, Geometry2};
pub use crate::needle2d::{Direction2, Needle, Point2};
use crate::needle2d::{build_schedule, cone_exhaustion, ExhaustionParams, NeedleField, NeedleSchedule};

/// Samples on the Cauchy circle.
pub const TRACE_SAMPLES: usize = 512;

/// Verdict on one indicator trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Bounded,
    BlowUp,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::BlowUp => "blowup",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Threshold `Θ`, growth window `k` and growth ratio `ρ_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictParams {
    pub theta_cap: f64,
    pub window: usize,
    pub ratio: f64,
}

/// Relative spread of the last `k` values below which a trace counts as settled.
pub const SETTLED_SPREAD: f64 = 0.05;
/// `Θ` as a multiple of the calibration level.
pub const THETA_FACTOR: f64 = 1e4;

impl VerdictParams {
    pub fn new(theta_cap: f64) -> Self {
        Self { theta_cap, window: 4, ratio: 1.5 }
    }
}

/// Classify a trace from its moduli.
///
/// BlowUp if one of the last `k + 1` values is above `Θ` (or not
/// representable) or `(|Iₙ|/|I_{n-k}|)^{1/k} ≥ ρ_g`; Bounded if the last `k`
/// values vanish, or spread by less than 5% and stay below `Θ/10`; Inconclusive
/// otherwise, including traces shorter than `k + 1`.
pub fn classify(values: &[Complex64], params: &VerdictParams) -> Verdict {
    let k = params.window.max(1);
    if values.len() < k + 1 {
        return Verdict::Inconclusive;
    }
    let mods: Vec<f64> = values[values.len() - k - 1..].iter().map(|v| v.norm()).collect();
    if mods.iter().any(|m| !m.is_finite() || *m > params.theta_cap) {
        return Verdict::BlowUp;
    }
    let (first, last) = (mods[0], mods[k]);
    if first > 0.0 && (last / first).powf(1.0 / k as f64) >= params.ratio {
        return Verdict::BlowUp;
    }
    let tail = &mods[1..];
    let hi = tail.iter().copied().fold(0.0, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 || (hi < params.theta_cap / 10.0 && (hi - lo) / hi < SETTLED_SPREAD) {
        return Verdict::Bounded;
    }
    Verdict::Inconclusive
}

/// `Λ₀` and `Λ_D` in a common basis: the only cavity information the probe uses.
#[derive(Debug, Clone)]
pub struct DtnData {
    pub lambda0: DtnOperator,
    pub lambda_d: DtnOperator,
}

impl DtnData {
    pub fn new(lambda0: DtnOperator, lambda_d: DtnOperator) -> Result<Self> {
        if lambda0.basis != lambda_d.basis || lambda0.radius != lambda_d.radius {
            return Err(ProbeError::BasisMismatch("Λ₀ and Λ_D must share basis and radius".into()));
        }
        if !matches!(lambda0.basis, Basis::FourierModes(_)) {
            return Err(ProbeError::BasisMismatch("needle traces are expanded in Fourier modes".into()));
        }
        Ok(Self { lambda0, lambda_d })
    }

    /// Simulated measurement for a known geometry.
    pub fn simulate(geom: &Geometry2, n_max: usize, nodes_per_curve: usize) -> Result<Self> {
        let basis = Basis::FourierModes(n_max);
        let solver = CavitySolver::new(geom, nodes_per_curve)?;
        Self::new(
            DtnOperator::lambda0(basis, geom.outer_radius)?,
            crate::forward2d::dtn_from_solver(&solver, basis)?,
        )
    }

    pub fn n_max(&self) -> usize {
        self.lambda0.basis.max_mode()
    }

    pub fn radius(&self) -> f64 {
        self.lambda0.radius
    }
}

/// Distance from the origin to `{x + d : |arg(dω̄)| ≤ πα/2, |d| ≥ 1/τ}`,
/// the region where `vₙ` is exponentially large.
pub fn growth_sector_distance(needle: &Needle, alpha: f64, tau: f64) -> f64 {
    let q = Complex64::new(-needle.tip[0], -needle.tip[1]);
    let w = needle.direction.conj();
    let beta = FRAC_PI_2 * alpha;
    let t0 = 1.0 / tau;
    let local = q * w;
    if local.arg().abs() <= beta && local.norm() >= t0 {
        return 0.0;
    }
    let ray = |phi: f64| {
        let u = Complex64::from_polar(1.0, phi);
        let t = (local.re * u.re + local.im * u.im).max(t0);
        (local - u * t).norm()
    };
    let mut d = ray(beta).min(ray(-beta));
    if local.arg().abs() <= beta {
        d = d.min(t0 - local.norm());
    }
    d
}

/// Taylor data of `v` sampled on `|y| = r`: `a_k r^k` for `k = 0..=N`, and
/// an absolute error estimate for `a_k R^k` (round-off scaled by `(R/r)^N`
/// plus the spectral tail near the Nyquist mode).
fn circle_coeffs(field: &NeedleField, tip: Complex64, r: f64, radius: f64, n_max: usize) -> Result<Option<(Vec<Complex64>, f64)>> {
    let m = TRACE_SAMPLES;
    let mut samples = Vec::with_capacity(m);
    for j in 0..m {
        let y = Complex64::from_polar(r, 2.0 * PI * j as f64 / m as f64);
        match field.value(y - tip) {
            Ok(v) if v.re.is_finite() && v.im.is_finite() => samples.push(v),
            Ok(_) | Err(ProbeError::Overflow(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    let twiddle: Vec<Complex64> = (0..m).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64)).collect();
    let dft = |k: usize| samples.iter().enumerate().map(|(j, s)| s * twiddle[(k * j) % m]).sum::<Complex64>() / m as f64;
    let coeffs: Vec<Complex64> = (0..=n_max).map(dft).collect();
    let peak = samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let tail = (m / 2 - 4..m / 2 + 4).map(|k| dft(k).norm()).fold(0.0, f64::max);
    let amp = (radius / r).powi(n_max as i32);
    Ok(Some((coeffs, (f64::EPSILON * peak + tail) * amp)))
}

/// Fourier coefficients (modes `-N..=N`) of `v(· - x; α, τ, ω)` on `|y| = R`.
///
/// The Taylor coefficients at the origin are read off a circle inside the
/// distance to the growth sector and, when the trace on `|y| = R` is
/// representable, off that circle too; the estimate with the smaller error
/// wins. Returns `None` when neither circle gives finite data.
pub fn needle_trace(field: &NeedleField, needle: &Needle, radius: f64, n_max: usize) -> Result<Option<BoundaryTrace>> {
    let dist = growth_sector_distance(needle, field.alpha(), field.tau());
    let tip = Complex64::new(needle.tip[0], needle.tip[1]);
    // balances max|v| ~ 1/(dist - r) against the (R/r)^N amplification
    let inner = dist * n_max as f64 / (n_max as f64 + 1.0);
    let mut best: Option<(Vec<Complex64>, f64, f64)> = None;
    for r in [inner.min(radius), radius] {
        if r <= 0.0 || best.as_ref().is_some_and(|b| b.2 == r) {
            continue;
        }
        if let Some((c, err)) = circle_coeffs(field, tip, r, radius, n_max)? {
            if best.as_ref().map_or(true, |b| err < b.1) {
                best = Some((c, err, r));
            }
        }
    }
    let Some((taylor, _, r)) = best else { return Ok(None) };
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * n_max + 1];
    let scale = radius / r;
    for (k, a) in taylor.into_iter().enumerate() {
        coeffs[n_max + k] = a * scale.powi(k as i32);
    }
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Ok(None);
    }
    Ok(Some(BoundaryTrace::new(Basis::FourierModes(n_max), coeffs)?))
}

/// `I(x, σ, ξ)ₙ` for `n = 1..=n_max`, with the verdict attached.
#[derive(Debug, Clone)]
pub struct IndicatorTrace {
    pub needle: Needle,
    pub values: Vec<Complex64>,
    pub schedule: Arc<NeedleSchedule>,
    pub verdict: Verdict,
    pub verdict_params: VerdictParams,
}

impl IndicatorTrace {
    pub fn last_abs(&self) -> f64 {
        self.values.last().map_or(f64::NAN, |v| v.norm())
    }

    pub fn reclassify(&mut self, params: VerdictParams) {
        self.verdict = classify(&self.values, &params);
        self.verdict_params = params;
    }
}

/// Indicator values from the Fourier trace on `∂Ω` (Taylor expansion at
/// the origin truncated at the DtN mode count); a trace too large to
/// represent gives `+∞`.
pub fn trace_indicator_values(dtn: &DtnData, needle: &Needle, schedule: &NeedleSchedule, n_max: usize) -> Result<Vec<Complex64>> {
    check_levels(schedule, n_max)?;
    (0..n_max)
        .map(|n| {
            let field = NeedleField::new(schedule.alphas[n], schedule.taus[n], needle.direction)?;
            match needle_trace(&field, needle, dtn.radius(), dtn.n_max())? {
                Some(f) => energy_gap(&dtn.lambda0, &dtn.lambda_d, &f).map(finite_or_inf),
                None => Ok(Complex64::new(f64::INFINITY, 0.0)),
            }
        })
        .collect()
}

fn check_levels(schedule: &NeedleSchedule, n_max: usize) -> Result<()> {
    if n_max > schedule.len() {
        return Err(ProbeError::Domain(format!("schedule has {} levels, {n_max} requested", schedule.len())));
    }
    Ok(())
}

fn finite_or_inf(e: Complex64) -> Complex64 {
    if e.re.is_finite() && e.im.is_finite() {
        e
    } else {
        Complex64::new(f64::INFINITY, 0.0)
    }
}

/// Offsets of the expansion centres from the tip.
pub const CENTER_OFFSETS: [f64; 5] = [0.15, 0.3, 0.5, 0.8, 1.2];
/// Angles per offset ring.
pub const CENTER_ANGLES: usize = 12;
/// Samples on each centre's Cauchy circle.
pub const CENTER_SAMPLES: usize = 64;
/// Highest degree of the centred expansions.
pub const MAX_DEGREE: usize = 28;
/// Largest relative change over the last three partial energies accepted as converged.
pub const PLATEAU_TOL: f64 = 0.02;

/// Relative change at which the centre search stops early.
pub const EARLY_ACCEPT: f64 = 1e-4;

/// The energy-gap form restricted to polynomials in `y - c`:
/// `E(Σ b_j (y-c)^j) = bᵀ Q b̄`.
#[derive(Debug, Clone)]
pub struct CenteredForm {
    pub center: Complex64,
    pub q: DMatrix<Complex64>,
}

impl DtnData {
    /// `Q` for centre `c` and degrees `0..=degree` (at most the DtN mode count).
    pub fn centered_form(&self, c: Complex64, degree: usize) -> CenteredForm {
        let n = self.n_max();
        let jd = degree.min(n);
        let r = self.radius();
        let diff = &self.lambda_d.gap - &self.lambda0.gap;
        // y^q on |y| = R is R^q e^{iqθ}; (y - c)^j = Σ_q C(j,q) (-c)^{j-q} y^q
        let mut t = DMatrix::<Complex64>::zeros(n + 1, jd + 1);
        for j in 0..=jd {
            let mut binom = 1.0;
            for q in 0..=j {
                t[(q, j)] = (-c).powi((j - q) as i32) * binom * r.powi(q as i32);
                binom *= (j - q) as f64 / (q + 1) as f64;
            }
        }
        let block = DMatrix::from_fn(n + 1, n + 1, |q, m| diff[(n - q, n - m)]);
        let q = t.transpose() * block * t.map(|z| z.conj()) * Complex64::new(2.0 * PI * r, 0.0);
        CenteredForm { center: c, q }
    }
}

impl CenteredForm {
    /// `E_J` for `J = 0..=deg(b)`.
    pub fn partial_energies(&self, b: &[Complex64]) -> Vec<Complex64> {
        let jd = (b.len() - 1).min(self.q.nrows() - 1);
        let mut out = Vec::with_capacity(jd + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..=jd {
            let mut add = b[j] * self.q[(j, j)] * b[j].conj();
            for k in 0..j {
                add += b[j] * self.q[(j, k)] * b[k].conj() + b[k] * self.q[(k, j)] * b[j].conj();
            }
            acc += add;
            out.push(acc);
        }
        out
    }
}

/// Expansion centres for a tip: the origin and rings around the tip inside `Ω`.
pub fn tip_forms(dtn: &DtnData, tip: Point2) -> Vec<CenteredForm> {
    let x = Complex64::new(tip[0], tip[1]);
    let mut centers = vec![Complex64::new(0.0, 0.0)];
    for s in CENTER_OFFSETS {
        for k in 0..CENTER_ANGLES {
            let c = x + Complex64::from_polar(s, 2.0 * PI * k as f64 / CENTER_ANGLES as f64);
            if c.norm() < dtn.radius() {
                centers.push(c);
            }
        }
    }
    centers.into_iter().map(|c| dtn.centered_form(c, MAX_DEGREE)).collect()
}

/// Taylor coefficients of `v` at `c` up to `degree` from a Cauchy circle
/// inside both `|y - x|` and the distance to the growth sector.
fn taylor_at(field: &NeedleField, needle: &Needle, c: Complex64, degree: usize) -> Result<Option<Vec<Complex64>>> {
    let x = Complex64::new(needle.tip[0], needle.tip[1]);
    let shifted = Needle::new([needle.tip[0] - c.re, needle.tip[1] - c.im], needle.direction);
    let reach = (x - c).norm().min(growth_sector_distance(&shifted, field.alpha(), field.tau()));
    let r = 0.6 * reach;
    if r <= 1e-6 {
        return Ok(None);
    }
    let m = CENTER_SAMPLES;
    let mut samples = Vec::with_capacity(m);
    for j in 0..m {
        match field.value(c + Complex64::from_polar(r, 2.0 * PI * j as f64 / m as f64) - x) {
            Ok(v) if v.re.is_finite() && v.im.is_finite() => samples.push(v),
            Ok(_) | Err(ProbeError::Overflow(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    let twiddle: Vec<Complex64> = (0..m).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64)).collect();
    let mut scale = 1.0 / m as f64;
    let mut out = Vec::with_capacity(degree + 1);
    for k in 0..=degree {
        let s: Complex64 = samples.iter().enumerate().map(|(j, v)| v * twiddle[(k * j) % m]).sum();
        out.push(s * scale);
        scale /= r;
    }
    Ok(Some(out))
}

/// Indicator value at one level: the centred partial energy that has
/// settled best over its last three degrees, or `+∞` if none settles
/// within `PLATEAU_TOL`.
fn level_value(forms: &[CenteredForm], field: &NeedleField, needle: &Needle) -> Result<Complex64> {
    let mut best: Option<(f64, Complex64)> = None;
    for form in forms {
        let Some(b) = taylor_at(field, needle, form.center, form.q.nrows() - 1)? else { continue };
        let e = form.partial_energies(&b);
        for jj in 4..e.len() {
            let inc = (0..3).map(|i| (e[jj - i] - e[jj - i - 1]).norm()).fold(0.0, f64::max);
            let spread = if inc == 0.0 { 0.0 } else { inc / e[jj].norm() };
            if spread.is_finite() && best.map_or(true, |(s, _)| spread < s) {
                best = Some((spread, e[jj]));
            }
        }
        if best.is_some_and(|(s, _)| s < EARLY_ACCEPT) {
            break;
        }
    }
    Ok(match best {
        Some((s, v)) if s < PLATEAU_TOL => finite_or_inf(v),
        _ => Complex64::new(f64::INFINITY, 0.0),
    })
}

/// Indicator values for levels `1..=n_max`.
///
/// The energy gap of the trace of `vₙ` is evaluated on polynomial
/// approximations of `vₙ` centred near the tip, which converge on the
/// cavities where the expansion at the origin does not; `+∞` marks a level
/// where no expansion converges.
pub fn indicator_values(dtn: &DtnData, needle: &Needle, schedule: &NeedleSchedule, n_max: usize) -> Result<Vec<Complex64>> {
    indicator_values_with(&tip_forms(dtn, needle.tip), needle, schedule, n_max)
}

/// As `indicator_values`, with the tip's centred forms precomputed.
pub fn indicator_values_with(forms: &[CenteredForm], needle: &Needle, schedule: &NeedleSchedule, n_max: usize) -> Result<Vec<Complex64>> {
    check_levels(schedule, n_max)?;
    (0..n_max)
        .map(|n| {
            let field = NeedleField::new(schedule.alphas[n], schedule.taus[n], needle.direction)?;
            level_value(forms, &field, needle)
        })
        .collect()
}

pub fn indicator_sequence(
    dtn: &DtnData,
    needle: &Needle,
    schedule: Arc<NeedleSchedule>,
    n_max: usize,
    params: VerdictParams,
) -> Result<IndicatorTrace> {
    let values = indicator_values(dtn, needle, &schedule, n_max)?;
    let verdict = classify(&values, &params);
    Ok(IndicatorTrace { needle: *needle, values, schedule, verdict, verdict_params: params })
}

/// Schedule construction shared by every tip with the same direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub eps0: f64,
    pub n_max: usize,
    pub exhaustion: ExhaustionParams,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { eps0: 1e-2, n_max: 12, exhaustion: ExhaustionParams::default() }
    }
}

/// Schedule for `direction`, built around a tip at the origin.
///
/// `vₙ` depends on `y - x` only and the exhaustion is translated with the
/// tip, so the same `(αₙ, τₙ)` serve every tip.
pub fn direction_schedule(direction: Direction2, params: &ScheduleParams) -> Result<NeedleSchedule> {
    let needle = Needle::new([0.0, 0.0], direction);
    let ex = cone_exhaustion(&needle, &params.exhaustion, params.n_max);
    build_schedule(&ex, &needle, params.eps0)
}

/// A schedule with fixed aperture and prescribed `τₙ`, without exhaustion
/// sets: `vₙ → G` off the cone `|arg((y - x)ω̄)| ≤ πα/2` only.
pub fn fixed_aperture_schedule(alpha: f64, taus: &[f64]) -> NeedleSchedule {
    NeedleSchedule {
        alphas: vec![alpha; taus.len()],
        taus: taus.to_vec(),
        epsilons: vec![f64::NAN; taus.len()],
        exhaustion: vec![Default::default(); taus.len()],
    }
}

/// Uniform lattice of tips over `[-R, R]²`; tips outside the open disk are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipGrid {
    pub nx: usize,
    pub ny: usize,
    pub half_width: f64,
}

impl TipGrid {
    pub fn new(nx: usize, ny: usize, half_width: f64) -> Self {
        Self { nx, ny, half_width }
    }

    pub fn spacing(&self) -> [f64; 2] {
        let h = |n: usize| if n > 1 { 2.0 * self.half_width / (n - 1) as f64 } else { 0.0 };
        [h(self.nx), h(self.ny)]
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point2 {
        let h = self.spacing();
        [-self.half_width + ix as f64 * h[0], -self.half_width + iy as f64 * h[1]]
    }

    /// `(ix, iy, x)` for the lattice points strictly inside `|x| < radius`.
    pub fn tips(&self, radius: f64) -> Vec<(usize, usize, Point2)> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let p = self.point(ix, iy);
                if p[0].hypot(p[1]) < radius * (1.0 - 1e-9) {
                    out.push((ix, iy, p));
                }
            }
        }
        out
    }
}

/// How `Θ` is fixed for a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaRule {
    Fixed(f64),
    /// `factor ×` the median over tips of `min_direction |I_{n_max}|`.
    ScanMedian { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictConfig {
    pub theta: ThetaRule,
    pub window: usize,
    pub ratio: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self { theta: ThetaRule::ScanMedian { factor: THETA_FACTOR }, window: 4, ratio: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TipClass {
    Outside,
    Inside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TipRecord {
    pub ix: usize,
    pub iy: usize,
    pub x: Point2,
    pub class: TipClass,
    /// Verdict per direction, in the order given.
    pub verdicts: Vec<Verdict>,
    /// Bounded direction with the smallest last value, else the direction
    /// with the smallest last value.
    pub best_direction: usize,
    pub last_abs: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub grid: TipGrid,
    pub directions: Vec<Direction2>,
    pub params: VerdictParams,
    pub tips: Vec<TipRecord>,
    /// Traces per tip, `tips[i]` ↔ `traces[i]`.
    pub traces: Vec<Vec<IndicatorTrace>>,
}

impl Reconstruction {
    pub fn inside(&self) -> impl Iterator<Item = &TipRecord> {
        self.tips.iter().filter(|t| t.class == TipClass::Inside)
    }

    /// Classification of every tip for another threshold.
    pub fn with_params(&self, params: VerdictParams) -> Self {
        let traces: Vec<Vec<IndicatorTrace>> = self
            .traces
            .iter()
            .map(|ts| {
                ts.iter()
                    .cloned()
                    .map(|mut t| {
                        t.reclassify(params);
                        t
                    })
                    .collect()
            })
            .collect();
        let tips = self.tips.iter().zip(&traces).map(|(r, ts)| tip_record(r.ix, r.iy, r.x, ts)).collect();
        Self { grid: self.grid, directions: self.directions.clone(), params, tips, traces }
    }
}

fn tip_record(ix: usize, iy: usize, x: Point2, traces: &[IndicatorTrace]) -> TipRecord {
    let verdicts: Vec<Verdict> = traces.iter().map(|t| t.verdict).collect();
    let key = |i: usize| traces[i].last_abs();
    let pick = |pred: &dyn Fn(usize) -> bool| {
        (0..traces.len()).filter(|&i| pred(i)).min_by(|&a, &b| key(a).total_cmp(&key(b)))
    };
    let bounded = pick(&|i| verdicts[i] == Verdict::Bounded);
    let best = bounded.or_else(|| pick(&|_| true)).unwrap_or(0);
    TipRecord {
        ix,
        iy,
        x,
        class: if bounded.is_some() { TipClass::Outside } else { TipClass::Inside },
        verdicts,
        best_direction: best,
        last_abs: traces.get(best).map_or(f64::NAN, |t| t.last_abs()),
    }
}

/// Probe every lattice tip with every direction and mark a tip outside the
/// cavities if some direction gives a Bounded trace.
pub fn scan_reconstruct(
    dtn: &DtnData,
    grid: &TipGrid,
    directions: &[Direction2],
    schedule: &ScheduleParams,
    verdict: &VerdictConfig,
) -> Result<Reconstruction> {
    let schedules: Vec<Arc<NeedleSchedule>> = directions
        .par_iter()
        .map(|d| direction_schedule(*d, schedule).map(Arc::new))
        .collect::<Result<_>>()?;
    let tips = grid.tips(dtn.radius());
    let placeholder = VerdictParams { theta_cap: f64::INFINITY, window: verdict.window, ratio: verdict.ratio };
    let traces: Vec<Vec<IndicatorTrace>> = tips
        .par_iter()
        .map(|&(_, _, x)| {
            let forms = tip_forms(dtn, x);
            directions
                .iter()
                .zip(&schedules)
                .map(|(d, s)| {
                    let needle = Needle::new(x, *d);
                    let values = indicator_values_with(&forms, &needle, s, schedule.n_max)?;
                    let verdict = classify(&values, &placeholder);
                    Ok(IndicatorTrace { needle, values, schedule: s.clone(), verdict, verdict_params: placeholder })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let theta_cap = match verdict.theta {
        ThetaRule::Fixed(t) => t,
        ThetaRule::ScanMedian { factor } => factor * scan_median(&traces),
    };
    let params = VerdictParams { theta_cap, window: verdict.window, ratio: verdict.ratio };
    let traces: Vec<Vec<IndicatorTrace>> = traces
        .into_iter()
        .map(|ts| {
            ts.into_iter()
                .map(|mut t| {
                    t.reclassify(params);
                    t
                })
                .collect()
        })
        .collect();
    let records = tips.iter().zip(&traces).map(|(&(ix, iy, x), ts)| tip_record(ix, iy, x, ts)).collect();
    let rec = Reconstruction { grid: *grid, directions: directions.to_vec(), params, tips: records, traces };
    Ok(rec)
}

/// Median over tips of the smallest finite `|I_{n_max}|` across directions.
pub fn scan_median(traces: &[Vec<IndicatorTrace>]) -> f64 {
    let mut per_tip: Vec<f64> = traces
        .iter()
        .filter_map(|ts| {
            ts.iter().map(|t| t.last_abs()).filter(|v| v.is_finite()).min_by(f64::total_cmp)
        })
        .collect();
    if per_tip.is_empty() {
        return 0.0;
    }
    per_tip.sort_by(f64::total_cmp);
    per_tip[per_tip.len() / 2]
}

/// `I(x)` for a known geometry, with `nodes_per_curve` Nyström nodes per cavity.
pub fn indicator_function_direct(geom: &Geometry2, x: Point2, nodes_per_curve: usize) -> Result<f64> {
    let solver = CavitySolver::new(geom, nodes_per_curve)?;
    crate::forward2d::indicator_function_direct(&solver, x)
}

/// Integration region for the energy growth check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyRegion {
    /// Finite cone with vertex at the tip.
    Cone { axis: Direction2, half_angle: f64, height: f64 },
    /// Ball of radius `radius` centred at `tip + offset·ω`.
    Ball { offset: f64, radius: f64 },
}

/// Polar raster resolution per side.
pub const ENERGY_RASTER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// `ln ∫_{V∩Ω} |∇vₙ|²`, one entry per level.
    pub log_energy: Vec<f64>,
}

impl GrowthReport {
    pub fn strictly_increasing(&self) -> bool {
        self.log_energy.windows(2).all(|w| w[1] > w[0])
    }

    /// `E_last / E_first`, as a natural logarithm.
    pub fn log_growth(&self) -> f64 {
        match (self.log_energy.first(), self.log_energy.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.strictly_increasing() && self.log_growth() > 10f64.ln()
    }
}

/// `ln |∂v/∂d|` at offset `d`; beyond the overflow threshold the dominant
/// term `τω̄ E'_α(z)/d` with `E'_α(z) ≈ z^{1/α} e^{z^{1/α}}/(α² z)` is used.
fn log_grad_abs(field: &NeedleField, d: Complex64) -> Result<f64> {
    match field.value_and_derivative(d) {
        Ok((_, dv)) if dv.re.is_finite() && dv.im.is_finite() => Ok(dv.norm().ln()),
        Ok(_) | Err(ProbeError::Overflow(_)) => {
            let a = field.alpha();
            let z = field.direction().conj() * field.tau() * d;
            let u = z.powf(1.0 / a);
            Ok(u.re + u.norm().ln() - 2.0 * a.ln() - z.norm().ln() + field.tau().ln() - d.norm().ln())
        }
        Err(e) => Err(e),
    }
}

/// `ln ∫_{V∩Ω} |∇vₙ|²` for levels `1..=n_max` of `schedule`, on a
/// polar raster of `ENERGY_RASTER²` midpoints clipped to `|y| < radius`.
pub fn cone_energy_growth(
    schedule: &NeedleSchedule,
    needle: &Needle,
    region: &EnergyRegion,
    radius: f64,
    n_max: usize,
) -> Result<GrowthReport> {
    check_levels(schedule, n_max)?;
    let tip = Complex64::new(needle.tip[0], needle.tip[1]);
    let omega = Complex64::new(needle.direction.omega[0], needle.direction.omega[1]);
    let m = ENERGY_RASTER;
    // (point, area weight)
    let mut pts = Vec::with_capacity(m * m);
    match *region {
        EnergyRegion::Cone { axis, half_angle, height } => {
            if !(half_angle > 0.0 && half_angle < PI && height > 0.0) {
                return Err(ProbeError::Domain("cone needs a positive aperture and height".into()));
            }
            let ax = Complex64::new(axis.omega[0], axis.omega[1]);
            for i in 0..m {
                let r = (i as f64 + 0.5) * height / m as f64;
                for j in 0..m {
                    let phi = -half_angle + (j as f64 + 0.5) * 2.0 * half_angle / m as f64;
                    let p = tip + ax * Complex64::from_polar(r, phi);
                    pts.push((p, r * (height / m as f64) * (2.0 * half_angle / m as f64)));
                }
            }
        }
        EnergyRegion::Ball { offset, radius: b } => {
            if !(b > 0.0) {
                return Err(ProbeError::Domain("ball radius must be positive".into()));
            }
            let c = tip + omega * offset;
            for i in 0..m {
                let r = (i as f64 + 0.5) * b / m as f64;
                for j in 0..m {
                    let phi = (j as f64 + 0.5) * 2.0 * PI / m as f64;
                    pts.push((c + Complex64::from_polar(r, phi), r * (b / m as f64) * (2.0 * PI / m as f64)));
                }
            }
        }
    }
    pts.retain(|(p, _)| p.norm() < radius);
    let log_energy = schedule.alphas[..n_max]
        .iter()
        .zip(&schedule.taus[..n_max])
        .map(|(&a, &t)| {
            let field = NeedleField::new(a, t, needle.direction)?;
            // |∇v|² = 2|v'|² for holomorphic v; summed as a log-sum-exp
            let logs: Vec<f64> = pts
                .iter()
                .map(|(p, w)| Ok(2.0 * log_grad_abs(&field, p - tip)? + (2.0 * w).ln()))
                .collect::<Result<_>>()?;
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GrowthReport { log_energy })
}

/// Hausdorff distance, in grid spacings, between the tips marked inside and
/// the scanned tips for which `truth` holds. Zero when both sets are empty,
/// infinite when exactly one is.
pub fn mask_hausdorff(rec: &Reconstruction, truth: impl Fn(Point2) -> bool) -> f64 {
    let h = rec.grid.spacing();
    let cell = h[0].max(h[1]);
    let marked: Vec<Point2> = rec.inside().map(|t| t.x).collect();
    let truth: Vec<Point2> = rec.tips.iter().map(|t| t.x).filter(|x| truth(*x)).collect();
    match (marked.is_empty(), truth.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |a: &[Point2], b: &[Point2]| {
        a.iter()
            .map(|p| b.iter().map(|q| (p[0] - q[0]).hypot(p[1] - q[1])).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&marked, &truth).max(directed(&truth, &marked)) / cell
}
