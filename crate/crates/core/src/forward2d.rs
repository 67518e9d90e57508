//! Forward solver for the cavity problem in a disk
//!
//! `Δu = 0` in `Ω∖D̄`, `∂_ν u = 0` on `∂D`, `u = f` on `∂Ω = {|x| = R}`.
//!
//! With `u₀` the harmonic extension of `f` into the whole disk, the
//! remainder `w = u - u₀` vanishes on `∂Ω` and is written as a single layer
//! `w = ∫_{∂D} G_R(·, y) ψ(y) ds(y)` with the Dirichlet Green function of the
//! disk, so only `∂D` is discretized. The density solves the second-kind
//! equation `(K' - ½) ψ = -∂_ν u₀` (Nyström, trapezoidal rule), and
//! `(Λ₀ - Λ_D) f = -∂_ν w` on `∂Ω` follows from the Poisson-kernel expansion,
//! mode by mode, without subtracting nearly equal numbers.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ProbeError, Result};

pub use crate::needle2d::Point2;

fn cz(p: Point2) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Closed curve parametrized counterclockwise over `t ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    Circle { center: Point2, radius: f64 },
    Ellipse { center: Point2, semi_axes: [f64; 2], rotation: f64 },
    /// Polygon with every corner replaced by a tangent circular arc.
    RoundedPolygon { vertices: Vec<Point2>, corner_radius: f64 },
}

/// Default rounding radius for polygonal cavities.
pub const DEFAULT_CORNER_RADIUS: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { a: Point2, b: Point2 },
    Arc { center: Point2, radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => (b[0] - a[0]).hypot(b[1] - a[1]),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Point, unit tangent and curvature vector at arc length `s`.
    fn at(&self, s: f64) -> (Point2, Point2, Point2) {
        match *self {
            Piece::Line { a, b } => {
                let l = self.length();
                let t = [(b[0] - a[0]) / l, (b[1] - a[1]) / l];
                ([a[0] + t[0] * s, a[1] + t[1] * s], t, [0.0, 0.0])
            }
            Piece::Arc { center, radius, start, sweep } => {
                let sg = sweep.signum();
                let th = start + sg * s / radius;
                let (sn, cs) = th.sin_cos();
                let p = [center[0] + radius * cs, center[1] + radius * sn];
                let t = [-sg * sn, sg * cs];
                let k = [-cs / radius, -sn / radius];
                (p, t, k)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Rounded {
    pieces: Vec<Piece>,
    starts: Vec<f64>,
    total: f64,
}

fn rounded_pieces(vertices: &[Point2], r: f64) -> Result<Rounded> {
    let n = vertices.len();
    if n < 3 {
        return Err(ProbeError::GeometryInvalid("polygon needs at least three vertices".into()));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(ProbeError::GeometryInvalid("corner radius must be positive".into()));
    }
    let area: f64 = (0..n)
        .map(|i| {
            let (p, q) = (vertices[i], vertices[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    let mut v = vertices.to_vec();
    if area < 0.0 {
        v.reverse();
    }
    let unit = |a: Point2, b: Point2| -> Result<Point2> {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let l = dx.hypot(dy);
        if l == 0.0 {
            return Err(ProbeError::GeometryInvalid("repeated polygon vertex".into()));
        }
        Ok([dx / l, dy / l])
    };
    // tangent points (p_in, p_out) and arcs per corner
    let mut corners = Vec::with_capacity(n);
    for i in 0..n {
        let (prev, cur, next) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
        let e_in = unit(prev, cur)?;
        let e_out = unit(cur, next)?;
        let cross = e_in[0] * e_out[1] - e_in[1] * e_out[0];
        let dot = e_in[0] * e_out[0] + e_in[1] * e_out[1];
        let delta = cross.atan2(dot);
        if delta.abs() > PI - 1e-6 {
            return Err(ProbeError::GeometryInvalid("polygon folds back on itself".into()));
        }
        let d = r * (0.5 * delta.abs()).tan();
        let p1 = [cur[0] - e_in[0] * d, cur[1] - e_in[1] * d];
        let p2 = [cur[0] + e_out[0] * d, cur[1] + e_out[1] * d];
        let sg = delta.signum();
        let center = [p1[0] - sg * e_in[1] * r, p1[1] + sg * e_in[0] * r];
        let start = (p1[1] - center[1]).atan2(p1[0] - center[0]);
        corners.push((p1, p2, d, Piece::Arc { center, radius: r, start, sweep: delta }));
    }
    let mut pieces = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (_, p2, d, arc) = corners[i];
        let (q1, _, d_next, _) = corners[(i + 1) % n];
        let edge = (v[(i + 1) % n][0] - v[i][0]).hypot(v[(i + 1) % n][1] - v[i][1]);
        if d + d_next > edge * (1.0 - 1e-9) {
            return Err(ProbeError::GeometryInvalid("corner radius too large for polygon edges".into()));
        }
        if delta_nonzero(&arc) {
            pieces.push(arc);
        }
        pieces.push(Piece::Line { a: p2, b: q1 });
    }
    let mut starts = Vec::with_capacity(pieces.len());
    let mut total = 0.0;
    for p in &pieces {
        starts.push(total);
        total += p.length();
    }
    Ok(Rounded { pieces, starts, total })
}

fn delta_nonzero(p: &Piece) -> bool {
    matches!(p, Piece::Arc { sweep, .. } if sweep.abs() > 0.0)
}

/// Samples of a curve at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub p: Point2,
    pub d1: Point2,
    pub d2: Point2,
}

impl Curve {
    pub fn circle(center: Point2, radius: f64) -> Self {
        Curve::Circle { center, radius }
    }

    /// Position and first two derivatives in the parameter `t`.
    pub fn eval(&self, t: f64) -> Result<CurvePoint> {
        Ok(match self {
            Curve::Circle { center, radius } => {
                let (s, c) = t.sin_cos();
                CurvePoint {
                    p: [center[0] + radius * c, center[1] + radius * s],
                    d1: [-radius * s, radius * c],
                    d2: [-radius * c, -radius * s],
                }
            }
            Curve::Ellipse { center, semi_axes: [a, b], rotation } => {
                let (s, c) = t.sin_cos();
                let (rs, rc) = rotation.sin_cos();
                let rot = |x: f64, y: f64| [rc * x - rs * y, rs * x + rc * y];
                let p = rot(a * c, b * s);
                CurvePoint { p: [center[0] + p[0], center[1] + p[1]], d1: rot(-a * s, b * c), d2: rot(-a * c, -b * s) }
            }
            Curve::RoundedPolygon { vertices, corner_radius } => {
                let r = rounded_pieces(vertices, *corner_radius)?;
                rounded_eval(&r, t)
            }
        })
    }

    /// `m` equispaced samples, computed once.
    pub fn sample(&self, m: usize) -> Result<Vec<CurvePoint>> {
        let ts = (0..m).map(|j| 2.0 * PI * j as f64 / m as f64);
        match self {
            Curve::RoundedPolygon { vertices, corner_radius } => {
                let r = rounded_pieces(vertices, *corner_radius)?;
                Ok(ts.map(|t| rounded_eval(&r, t)).collect())
            }
            _ => ts.map(|t| self.eval(t)).collect(),
        }
    }

    fn check_params(&self) -> Result<()> {
        let ok = match self {
            Curve::Circle { center, radius } => *radius > 0.0 && radius.is_finite() && finite2(center),
            Curve::Ellipse { center, semi_axes, rotation } => {
                semi_axes.iter().all(|a| *a > 0.0 && a.is_finite()) && rotation.is_finite() && finite2(center)
            }
            Curve::RoundedPolygon { vertices, corner_radius } => {
                rounded_pieces(vertices, *corner_radius)?;
                vertices.iter().all(finite2)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ProbeError::GeometryInvalid(format!("invalid curve parameters: {self:?}")))
        }
    }
}

fn finite2(p: &Point2) -> bool {
    p[0].is_finite() && p[1].is_finite()
}

fn rounded_eval(r: &Rounded, t: f64) -> CurvePoint {
    let s = (t / (2.0 * PI)).rem_euclid(1.0) * r.total;
    let i = r.starts.partition_point(|&a| a <= s).saturating_sub(1);
    let (p, tan, k) = r.pieces[i].at(s - r.starts[i]);
    let scale = r.total / (2.0 * PI);
    CurvePoint { p, d1: [tan[0] * scale, tan[1] * scale], d2: [k[0] * scale * scale, k[1] * scale * scale] }
}

/// Disk `{|x| < R}` with cavities.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry2 {
    pub outer_radius: f64,
    pub cavities: Vec<Curve>,
}

/// Samples per curve used by the geometric checks.
const CHECK_SAMPLES: usize = 512;
/// Raster resolution of the connectivity check.
const RASTER: usize = 200;

impl Geometry2 {
    pub fn unit_disk(cavities: Vec<Curve>) -> Self {
        Self { outer_radius: 1.0, cavities }
    }

    /// Checks simple, disjoint cavities inside the disk and a connected
    /// complement.
    pub fn validate(&self) -> Result<()> {
        let r = self.outer_radius;
        if !(r > 0.0 && r.is_finite()) {
            return Err(ProbeError::GeometryInvalid("outer radius must be positive".into()));
        }
        let mut polys = Vec::with_capacity(self.cavities.len());
        for (k, c) in self.cavities.iter().enumerate() {
            c.check_params()?;
            let pts: Vec<Point2> = c.sample(CHECK_SAMPLES)?.iter().map(|q| q.p).collect();
            if pts.iter().any(|p| p[0].hypot(p[1]) >= r) {
                return Err(ProbeError::GeometryInvalid(format!("cavity {k} is not inside the disk")));
            }
            if polygon_self_intersects(&pts) {
                return Err(ProbeError::GeometryInvalid(format!("cavity {k} intersects itself")));
            }
            polys.push(pts);
        }
        for i in 0..polys.len() {
            for j in i + 1..polys.len() {
                if polygons_intersect(&polys[i], &polys[j])
                    || winding(&polys[i], polys[j][0]) != 0
                    || winding(&polys[j], polys[i][0]) != 0
                {
                    return Err(ProbeError::GeometryInvalid(format!("cavities {i} and {j} overlap")));
                }
            }
        }
        if !complement_connected(r, &polys) {
            return Err(ProbeError::GeometryInvalid("complement of the cavities is not connected".into()));
        }
        Ok(())
    }

    /// Whether `x` lies in the closure of some cavity.
    pub fn in_cavity_closure(&self, x: Point2) -> Result<bool> {
        for c in &self.cavities {
            let pts: Vec<Point2> = c.sample(CHECK_SAMPLES)?.iter().map(|q| q.p).collect();
            if winding(&pts, x) != 0 || polygon_distance(&pts, x) < 1e-12 {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let orient = |p: Point2, q: Point2, r: Point2| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    // round-off gives random signs for collinear pieces of straight edges
    let eps = 1e-12 * (b[0] - a[0]).hypot(b[1] - a[1]) * (d[0] - c[0]).hypot(d[1] - c[1]);
    let split = |p: f64, q: f64| (p < -eps && q > eps) || (p > eps && q < -eps);
    split(o1, o2) && split(o3, o4)
}

fn polygon_self_intersects(p: &[Point2]) -> bool {
    let n = p.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

fn polygons_intersect(p: &[Point2], q: &[Point2]) -> bool {
    let (n, m) = (p.len(), q.len());
    (0..n).any(|i| (0..m).any(|j| segments_cross(p[i], p[(i + 1) % n], q[j], q[(j + 1) % m])))
}

/// Winding number of the closed polygon around `x`.
pub fn winding(poly: &[Point2], x: Point2) -> i32 {
    let n = poly.len();
    let mut w = 0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= x[1] {
            if b[1] > x[1] && cross > 0.0 {
                w += 1;
            }
        } else if b[1] <= x[1] && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

fn polygon_distance(poly: &[Point2], x: Point2) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let l2 = dx * dx + dy * dy;
            let t = if l2 > 0.0 { (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
            (x[0] - a[0] - t * dx).hypot(x[1] - a[1] - t * dy)
        })
        .fold(f64::INFINITY, f64::min)
}

fn complement_connected(r: f64, polys: &[Vec<Point2>]) -> bool {
    let n = RASTER;
    let h = 2.0 * r / n as f64;
    let centre = |i: usize| -r + (i as f64 + 0.5) * h;
    let mut free = vec![false; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let p = [centre(ix), centre(iy)];
            free[iy * n + ix] = p[0].hypot(p[1]) < r && polys.iter().all(|q| winding(q, p) == 0);
        }
    }
    let Some(seed) = free.iter().position(|&f| f) else {
        return false;
    };
    let mut seen = vec![false; n * n];
    let mut stack = vec![seed];
    seen[seed] = true;
    while let Some(k) = stack.pop() {
        let (ix, iy) = (k % n, k / n);
        let nbrs = [
            (ix > 0).then(|| k - 1),
            (ix + 1 < n).then(|| k + 1),
            (iy > 0).then(|| k - n),
            (iy + 1 < n).then(|| k + n),
        ];
        for j in nbrs.into_iter().flatten() {
            if free[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    free.iter().zip(&seen).all(|(f, s)| !f || *s)
}

/// Basis in which boundary data and DtN matrices are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// `e^{inθ}`, `-N ≤ n ≤ N`, index `n + N`.
    FourierModes(usize),
    /// Values at `M` equispaced nodes of `∂Ω` (`M` odd).
    Collocation(usize),
}

impl Basis {
    pub fn dim(&self) -> usize {
        match *self {
            Basis::FourierModes(n) => 2 * n + 1,
            Basis::Collocation(m) => m,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Basis::Collocation(m) if m % 2 == 0 || m < 3 => {
                Err(ProbeError::Domain(format!("collocation needs an odd node count ≥ 3, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// Highest Fourier mode represented.
    pub fn max_mode(&self) -> usize {
        match *self {
            Basis::FourierModes(n) => n,
            Basis::Collocation(m) => (m - 1) / 2,
        }
    }
}

/// Dirichlet data on `∂Ω` in a given basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub basis: Basis,
    pub coeffs: Vec<Complex64>,
}

impl BoundaryTrace {
    pub fn new(basis: Basis, coeffs: Vec<Complex64>) -> Result<Self> {
        basis.validate()?;
        if coeffs.len() != basis.dim() {
            return Err(ProbeError::BasisMismatch(format!(
                "{} coefficients for a basis of dimension {}",
                coeffs.len(),
                basis.dim()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    /// Single Fourier mode `e^{inθ}` in `FourierModes(n_max)`.
    pub fn mode(n: i64, n_max: usize) -> Result<Self> {
        if n.unsigned_abs() as usize > n_max {
            return Err(ProbeError::Domain(format!("mode {n} outside |n| ≤ {n_max}")));
        }
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * n_max + 1];
        c[(n + n_max as i64) as usize] = Complex64::new(1.0, 0.0);
        Self::new(Basis::FourierModes(n_max), c)
    }

    /// Project samples `g(θ_j)`, `θ_j = 2πj/M`, onto `FourierModes(n_max)`.
    pub fn from_samples(samples: &[Complex64], n_max: usize) -> Result<Self> {
        let m = samples.len();
        if m < 2 * n_max + 1 {
            return Err(ProbeError::Domain(format!("{m} samples cannot resolve modes up to {n_max}")));
        }
        let coeffs = (-(n_max as i64)..=n_max as i64)
            .map(|n| {
                samples.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, g)| {
                    acc + g * Complex64::from_polar(1.0, -2.0 * PI * (n * j as i64) as f64 / m as f64)
                }) / m as f64
            })
            .collect();
        Self::new(Basis::FourierModes(n_max), coeffs)
    }

    /// The same data expressed in `target`.
    pub fn to_basis(&self, target: Basis) -> Result<Self> {
        target.validate()?;
        let fourier = self.fourier_coeffs();
        let n = (fourier.len() - 1) / 2;
        match target {
            Basis::FourierModes(nt) => {
                let mut c = vec![Complex64::new(0.0, 0.0); 2 * nt + 1];
                for (i, v) in fourier.iter().enumerate() {
                    let mode = i as i64 - n as i64;
                    if mode.unsigned_abs() as usize <= nt {
                        c[(mode + nt as i64) as usize] = *v;
                    } else if v.norm() > 0.0 {
                        return Err(ProbeError::BasisMismatch(format!("mode {mode} does not fit in |n| ≤ {nt}")));
                    }
                }
                Self::new(target, c)
            }
            Basis::Collocation(m) => {
                if n > (m - 1) / 2 {
                    return Err(ProbeError::BasisMismatch(format!("{m} nodes cannot carry modes up to {n}")));
                }
                let vals = (0..m)
                    .map(|j| {
                        let th = 2.0 * PI * j as f64 / m as f64;
                        fourier.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (i, v)| {
                            acc + v * Complex64::from_polar(1.0, (i as i64 - n as i64) as f64 * th)
                        })
                    })
                    .collect();
                Self::new(target, vals)
            }
        }
    }

    /// Fourier coefficients for modes `-N..=N`.
    pub fn fourier_coeffs(&self) -> Vec<Complex64> {
        match self.basis {
            Basis::FourierModes(_) => self.coeffs.clone(),
            Basis::Collocation(m) => {
                let n = (m - 1) / 2;
                (-(n as i64)..=n as i64)
                    .map(|k| {
                        self.coeffs.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, g)| {
                            acc + g * Complex64::from_polar(1.0, -2.0 * PI * (k * j as i64) as f64 / m as f64)
                        }) / m as f64
                    })
                    .collect()
            }
        }
    }

    /// Pointwise complex conjugate of the boundary function.
    pub fn conj(&self) -> Self {
        let coeffs = match self.basis {
            Basis::FourierModes(_) => self.coeffs.iter().rev().map(|c| c.conj()).collect(),
            Basis::Collocation(_) => self.coeffs.iter().map(|c| c.conj()).collect(),
        };
        Self { basis: self.basis, coeffs }
    }
}

/// `Λ_D` in a basis, stored as `Λ₀ - gap` with the gap matrix kept
/// separately so that `Λ₀ - Λ_D` keeps full relative accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnOperator {
    pub basis: Basis,
    pub radius: f64,
    /// Matrix of `Λ₀ - Λ_D` in `basis`.
    pub gap: DMatrix<Complex64>,
}

impl DtnOperator {
    /// `Λ₀` of the disk of radius `radius`, analytic.
    pub fn lambda0(basis: Basis, radius: f64) -> Result<Self> {
        basis.validate()?;
        let d = basis.dim();
        Ok(Self { basis, radius, gap: DMatrix::zeros(d, d) })
    }

    /// Build from a full `Λ_D` matrix (e.g. measured data).
    pub fn from_matrix(basis: Basis, radius: f64, matrix: DMatrix<Complex64>) -> Result<Self> {
        basis.validate()?;
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(ProbeError::BasisMismatch("matrix size differs from basis dimension".into()));
        }
        let l0 = lambda0_matrix(basis, radius);
        Ok(Self { basis, radius, gap: l0 - matrix })
    }

    /// The full matrix of `Λ_D`.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        lambda0_matrix(self.basis, self.radius) - &self.gap
    }

    /// Apply `Λ_D` to a trace in the same basis.
    pub fn apply(&self, f: &BoundaryTrace) -> Result<BoundaryTrace> {
        if f.basis != self.basis {
            return Err(ProbeError::BasisMismatch("trace and operator use different bases".into()));
        }
        let v = self.matrix() * DVector::from_column_slice(&f.coeffs);
        BoundaryTrace::new(self.basis, v.iter().copied().collect())
    }

    /// Largest `|A - A^H|` entry relative to the largest `|A|` entry of the gap.
    pub fn hermitian_defect(&self) -> f64 {
        let a = &self.gap;
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
        worst / scale
    }
}

fn lambda0_matrix(basis: Basis, radius: f64) -> DMatrix<Complex64> {
    match basis {
        Basis::FourierModes(n) => DMatrix::from_fn(2 * n + 1, 2 * n + 1, |i, j| {
            if i == j {
                Complex64::new((i as f64 - n as f64).abs() / radius, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
        Basis::Collocation(m) => {
            let n = (m - 1) / 2;
            let diag: Vec<Complex64> =
                (-(n as i64)..=n as i64).map(|k| Complex64::new(k.unsigned_abs() as f64 / radius, 0.0)).collect();
            fourier_to_nodal(&DMatrix::from_diagonal(&DVector::from_vec(diag)), m)
        }
    }
}

/// `F A F⁻¹` with `F` the synthesis matrix of `m` nodes.
fn fourier_to_nodal(a: &DMatrix<Complex64>, m: usize) -> DMatrix<Complex64> {
    let n = (m - 1) / 2;
    let synth = DMatrix::from_fn(m, m, |j, k| {
        Complex64::from_polar(1.0, (k as f64 - n as f64) * 2.0 * PI * j as f64 / m as f64)
    });
    let analysis = DMatrix::from_fn(m, m, |k, j| {
        Complex64::from_polar(1.0 / m as f64, -(k as f64 - n as f64) * 2.0 * PI * j as f64 / m as f64)
    });
    synth * a * analysis
}

/// `∫_{∂Ω} {(Λ₀ - Λ_D) f̄} f dS` for operators and trace sharing one basis.
pub fn energy_gap(lambda0: &DtnOperator, lambda_d: &DtnOperator, f: &BoundaryTrace) -> Result<Complex64> {
    if lambda0.basis != lambda_d.basis || f.basis != lambda0.basis {
        return Err(ProbeError::BasisMismatch("operators and trace must share one basis".into()));
    }
    if lambda0.radius != lambda_d.radius {
        return Err(ProbeError::BasisMismatch("operators refer to different outer radii".into()));
    }
    let diff = &lambda_d.gap - &lambda0.gap;
    let fbar = f.conj();
    let lf = diff * DVector::from_column_slice(&fbar.coeffs);
    let r = lambda0.radius;
    Ok(match f.basis {
        Basis::FourierModes(n) => {
            let d = 2 * n + 1;
            (0..d).fold(Complex64::new(0.0, 0.0), |acc, i| acc + lf[i] * f.coeffs[d - 1 - i]) * (2.0 * PI * r)
        }
        Basis::Collocation(m) => {
            lf.iter().zip(&f.coeffs).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
                * (2.0 * PI * r / m as f64)
        }
    })
}

/// Default Nyström nodes per cavity.
pub const DEFAULT_NODES: usize = 256;

#[derive(Debug, Clone, Copy)]
struct Node {
    p: Complex64,
    normal: Complex64,
    /// Trapezoidal weight `|x'(t_j)| 2π/M`.
    weight: f64,
    speed: f64,
    /// `lim_{y→x} ∂_ν Φ(x, y)` on the curve.
    diag: f64,
}

/// Discretized cavity boundary with a factored Nyström matrix.
#[derive(Debug)]
pub struct CavitySolver {
    geom: Geometry2,
    nodes: Vec<Node>,
    /// Start index of each cavity in `nodes`.
    offsets: Vec<usize>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

/// Pivot ratio below which the Nyström matrix is treated as singular.
const PIVOT_FLOOR: f64 = 1e-13;

impl CavitySolver {
    pub fn new(geom: &Geometry2, nodes_per_curve: usize) -> Result<Self> {
        geom.validate()?;
        if nodes_per_curve < 8 {
            return Err(ProbeError::Domain("at least 8 nodes per curve are required".into()));
        }
        let m = nodes_per_curve;
        let mut nodes = Vec::new();
        let mut offsets = Vec::new();
        let mut spacing = 0.0f64;
        for c in &geom.cavities {
            offsets.push(nodes.len());
            for q in c.sample(m)? {
                let d1 = cz(q.d1);
                let speed = d1.norm();
                let normal = Complex64::new(q.d1[1], -q.d1[0]) / speed;
                let acc = cz(q.d2);
                let diag = (acc.re * normal.re + acc.im * normal.im) / (4.0 * PI * speed * speed);
                spacing = spacing.max(speed * 2.0 * PI / m as f64);
                nodes.push(Node { p: cz(q.p), normal, weight: speed * 2.0 * PI / m as f64, speed, diag });
            }
        }
        // near-touching boundaries are not resolved by the trapezoidal rule
        let r = geom.outer_radius;
        let mut gap = f64::INFINITY;
        for (k, &o) in offsets.iter().enumerate() {
            let end = offsets.get(k + 1).copied().unwrap_or(nodes.len());
            for a in &nodes[o..end] {
                gap = gap.min(r - a.p.norm());
                for b in nodes[..o].iter().chain(&nodes[end..]) {
                    gap = gap.min((a.p - b.p).norm());
                }
            }
        }
        if gap < 2.0 * spacing {
            return Err(ProbeError::SolverSingular(gap));
        }
        let mut solver = Self { geom: geom.clone(), nodes, offsets, lu: None };
        if !solver.nodes.is_empty() {
            let n = solver.nodes.len();
            let mut a = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = solver.kernel_dn(i, j) * solver.nodes[j].weight;
                }
                a[(i, i)] -= 0.5;
            }
            let lu = a.lu();
            let piv: Vec<f64> = (0..n).map(|i| lu.u()[(i, i)].abs()).collect();
            let (lo, hi) = piv.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &p| (l.min(p), h.max(p)));
            if !(lo > PIVOT_FLOOR * hi) {
                return Err(ProbeError::SolverSingular(lo / hi));
            }
            solver.lu = Some(lu);
        }
        Ok(solver)
    }

    pub fn geometry(&self) -> &Geometry2 {
        &self.geom
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Positions, outward unit normals and quadrature weights on `∂D`.
    pub fn boundary_nodes(&self) -> Vec<(Complex64, Complex64, f64)> {
        self.nodes.iter().map(|n| (n.p, n.normal, n.weight)).collect()
    }

    /// `∂_{ν_x} G_R(x_i, y_j)` with the on-curve limit on the diagonal.
    fn kernel_dn(&self, i: usize, j: usize) -> f64 {
        let (x, y) = (self.nodes[i].p, self.nodes[j].p);
        let nu = self.nodes[i].normal;
        let r2 = self.geom.outer_radius.powi(2);
        let singular = if i == j {
            self.nodes[i].diag
        } else {
            let d = x - y;
            -(d.re * nu.re + d.im * nu.im) / (2.0 * PI * d.norm_sqr())
        };
        let regular = (-y.conj() * nu / (r2 - x * y.conj())).re / (2.0 * PI);
        singular + regular
    }

    /// Solve `(K' - ½) ψ = -g` where `g = ∂_ν u₀` is the normal derivative
    /// of the incident field at the nodes, so that `∂_ν(u₀ + w) = 0`.
    pub fn density(&self, neumann: &[Complex64]) -> Result<Vec<Complex64>> {
        let Some(lu) = &self.lu else {
            return Ok(Vec::new());
        };
        let re = DVector::from_iterator(neumann.len(), neumann.iter().map(|g| -g.re));
        let im = DVector::from_iterator(neumann.len(), neumann.iter().map(|g| -g.im));
        let (a, b) = (
            lu.solve(&re).ok_or(ProbeError::SolverSingular(0.0))?,
            lu.solve(&im).ok_or(ProbeError::SolverSingular(0.0))?,
        );
        Ok(a.iter().zip(b.iter()).map(|(x, y)| Complex64::new(*x, *y)).collect())
    }

    /// Relative residual of the density equation.
    pub fn residual(&self, neumann: &[Complex64], psi: &[Complex64]) -> f64 {
        let n = self.nodes.len();
        let mut worst = 0.0f64;
        let scale = neumann.iter().map(|g| g.norm()).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            let mut acc = -psi[i] * 0.5 + neumann[i];
            for j in 0..n {
                acc += psi[j] * (self.kernel_dn(i, j) * self.nodes[j].weight);
            }
            worst = worst.max(acc.norm());
        }
        worst / scale
    }

    /// `∂_ν u₀` at the nodes for `u₀` the harmonic extension of
    /// Fourier data (modes `-N..=N`).
    fn incident_from_fourier(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n_max = (coeffs.len() - 1) / 2;
        let r = self.geom.outer_radius;
        self.nodes
            .iter()
            .map(|node| {
                let (z, nu) = (node.p / r, node.normal);
                let mut acc = Complex64::new(0.0, 0.0);
                let mut zp = Complex64::new(1.0, 0.0);
                for k in 1..=n_max {
                    // z^{k-1}
                    let pos = coeffs[n_max + k];
                    let neg = coeffs[n_max - k];
                    acc += pos * zp * nu * (k as f64 / r) + neg * zp.conj() * nu.conj() * (k as f64 / r);
                    zp *= z;
                }
                acc
            })
            .collect()
    }

    /// Mode `m` Fourier coefficient of `(Λ₀ - Λ_D) f = -∂_ν w` on `∂Ω`.
    fn gap_modes(&self, psi: &[Complex64], n_max: usize) -> Vec<Complex64> {
        let r = self.geom.outer_radius;
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * n_max + 1];
        for (node, p) in self.nodes.iter().zip(psi) {
            let base = p * (node.weight / (2.0 * PI * r));
            let y = node.p / r;
            let mut pos = Complex64::new(1.0, 0.0);
            for k in 0..=n_max {
                out[n_max + k] += base * pos.conj();
                if k > 0 {
                    out[n_max - k] += base * pos;
                }
                pos *= y;
            }
        }
        out
    }

    /// `(Λ₀ - Λ_D)` in `FourierModes(n_max)`, column by column.
    pub fn gap_matrix(&self, n_max: usize) -> Result<DMatrix<Complex64>> {
        let d = 2 * n_max + 1;
        let mut m = DMatrix::zeros(d, d);
        if self.nodes.is_empty() {
            return Ok(m);
        }
        for col in 0..d {
            let mut c = vec![Complex64::new(0.0, 0.0); d];
            c[col] = Complex64::new(1.0, 0.0);
            let psi = self.density(&self.incident_from_fourier(&c))?;
            let modes = self.gap_modes(&psi, n_max);
            for (row, v) in modes.into_iter().enumerate() {
                m[(row, col)] = v;
            }
        }
        Ok(m)
    }

    /// Single-layer potential `∫ G_R(x, y) ψ(y) ds(y)` off the boundary.
    pub fn single_layer(&self, psi: &[Complex64], x: Complex64) -> Complex64 {
        let r2 = self.geom.outer_radius.powi(2);
        let r = self.geom.outer_radius;
        self.nodes.iter().zip(psi).fold(Complex64::new(0.0, 0.0), |acc, (n, p)| {
            let g = ((r2 - x * n.p.conj()).norm() / (r * (x - n.p).norm())).ln() / (2.0 * PI);
            acc + p * (g * n.weight)
        })
    }

    /// Single-layer values at the nodes themselves, with product integration
    /// for the logarithmic singularity on each curve.
    pub fn single_layer_on_boundary(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let r = self.geom.outer_radius;
        let r2 = r * r;
        let n = self.nodes.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (k, &o) in self.offsets.iter().enumerate() {
            let end = self.offsets.get(k + 1).copied().unwrap_or(n);
            let m = end - o;
            let kress = kress_weights(m);
            for i in o..end {
                let mut acc = Complex64::new(0.0, 0.0);
                let x = self.nodes[i].p;
                for j in 0..n {
                    let y = &self.nodes[j];
                    let regular = ((r2 - x * y.p.conj()).norm() / r).ln() / (2.0 * PI);
                    if j >= o && j < end {
                        let (li, lj) = (i - o, j - o);
                        let tdiff = 2.0 * PI * (li as f64 - lj as f64) / m as f64;
                        // -(1/2π) log|x-y| = -(1/4π) log(4 sin²) - (1/4π) log(|x-y|²/(4 sin²))
                        let smooth = if i == j {
                            -(self.nodes[i].speed.powi(2)).ln() / (4.0 * PI)
                        } else {
                            -((x - y.p).norm_sqr() / (4.0 * (0.5 * tdiff).sin().powi(2))).ln() / (4.0 * PI)
                        };
                        let log_part = -kress[(li + m - lj) % m] / (4.0 * PI) * y.speed;
                        acc += psi[j] * (log_part + (smooth + regular) * y.weight);
                    } else {
                        let sing = -(x - y.p).norm().ln() / (2.0 * PI);
                        acc += psi[j] * ((sing + regular) * y.weight);
                    }
                }
                out[i] = acc;
            }
        }
        out
    }
}

/// Weights `R_j(t_i)` for `∫₀^{2π} log(4 sin²((t-τ)/2)) f(τ) dτ ≈ Σ R_{i-j} f(t_j)`
/// on `m` equispaced nodes, indexed by `(i - j) mod m`.
fn kress_weights(m: usize) -> Vec<f64> {
    let n = m / 2;
    let odd = m % 2 == 1;
    (0..m)
        .map(|d| {
            let t = 2.0 * PI * d as f64 / m as f64;
            if odd {
                let nn = (m - 1) / 2;
                -(4.0 * PI / m as f64) * (1..=nn).map(|k| (k as f64 * t).cos() / k as f64).sum::<f64>()
            } else {
                -(2.0 * PI / n as f64) * (1..n).map(|k| (k as f64 * t).cos() / k as f64).sum::<f64>()
                    - PI / (n * n) as f64 * (n as f64 * t).cos()
            }
        })
        .collect()
}

/// Solution handle of the mixed problem.
#[derive(Debug)]
pub struct MixedSolution<'a> {
    solver: &'a CavitySolver,
    fourier: Vec<Complex64>,
    psi: Vec<Complex64>,
    /// Relative residual of the density equation.
    pub residual: f64,
}

/// Solver tolerance of the density equation.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Solve the mixed problem for Dirichlet data `f` using a prepared solver.
pub fn solve_mixed_bvp<'a>(solver: &'a CavitySolver, f: &BoundaryTrace) -> Result<MixedSolution<'a>> {
    let fourier = f.fourier_coeffs();
    let g = solver.incident_from_fourier(&fourier);
    let psi = solver.density(&g)?;
    let residual = if psi.is_empty() { 0.0 } else { solver.residual(&g, &psi) };
    if residual > SOLVER_TOLERANCE {
        return Err(ProbeError::SolverSingular(residual));
    }
    Ok(MixedSolution { solver, fourier, psi, residual })
}

impl MixedSolution<'_> {
    /// `u(x)` at an interior point of `Ω∖D̄` away from `∂D`.
    pub fn eval(&self, x: Point2) -> Complex64 {
        let r = self.solver.geom.outer_radius;
        let z = cz(x) / r;
        let n = (self.fourier.len() - 1) / 2;
        let mut u0 = self.fourier[n];
        let mut zp = Complex64::new(1.0, 0.0);
        for k in 1..=n {
            zp *= z;
            u0 += self.fourier[n + k] * zp + self.fourier[n - k] * zp.conj();
        }
        u0 + self.solver.single_layer(&self.psi, cz(x))
    }

    /// Fourier coefficients of `∂_ν u` on `∂Ω`, modes `-n_max..=n_max`.
    pub fn neumann_fourier(&self, n_max: usize) -> Vec<Complex64> {
        let r = self.solver.geom.outer_radius;
        let n = (self.fourier.len() - 1) / 2;
        let gap = self.solver.gap_modes(&self.psi, n_max);
        (0..2 * n_max + 1)
            .map(|i| {
                let mode = i as i64 - n_max as i64;
                let f = if mode.unsigned_abs() as usize <= n {
                    self.fourier[(mode + n as i64) as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                f * (mode.unsigned_abs() as f64 / r) - gap[i]
            })
            .collect()
    }

    pub fn density(&self) -> &[Complex64] {
        &self.psi
    }
}

/// `Λ_D` in `basis`, assembled mode by mode with `nodes_per_curve` Nyström
/// nodes on each cavity.
pub fn dtn_assemble(geom: &Geometry2, basis: Basis, nodes_per_curve: usize) -> Result<DtnOperator> {
    basis.validate()?;
    let solver = CavitySolver::new(geom, nodes_per_curve)?;
    dtn_from_solver(&solver, basis)
}

pub fn dtn_from_solver(solver: &CavitySolver, basis: Basis) -> Result<DtnOperator> {
    basis.validate()?;
    let r = solver.geom.outer_radius;
    let n = basis.max_mode();
    let gap = solver.gap_matrix(n)?;
    let gap = match basis {
        Basis::FourierModes(_) => gap,
        Basis::Collocation(m) => fourier_to_nodal(&gap, m),
    };
    Ok(DtnOperator { basis, radius: r, gap })
}

/// `I(x) = ∫_D |∇G(y-x)|² dy + ∫_{Ω∖D̄} |∇w_x|² dy` with `G(y) = 1/(y₁ + i y₂)`,
/// both written as integrals over `∂D`: `∫_{∂D} (G + w_x) ∂_ν Ḡ ds`.
pub fn indicator_function_direct(solver: &CavitySolver, x: Point2) -> Result<f64> {
    if solver.geom.in_cavity_closure(x)? {
        return Err(ProbeError::Domain(format!("indicator is defined outside the cavities, got {x:?}")));
    }
    if cz(x).norm() >= solver.geom.outer_radius {
        return Err(ProbeError::Domain(format!("point {x:?} is outside the domain")));
    }
    if solver.nodes.is_empty() {
        return Ok(0.0);
    }
    let xc = cz(x);
    let (g, dg): (Vec<Complex64>, Vec<Complex64>) = solver
        .nodes
        .iter()
        .map(|n| {
            let d = n.p - xc;
            (d.inv(), -n.normal / (d * d))
        })
        .unzip();
    let psi = solver.density(&dg)?;
    let w = solver.single_layer_on_boundary(&psi);
    let total = solver
        .nodes
        .iter()
        .enumerate()
        .fold(Complex64::new(0.0, 0.0), |acc, (i, n)| acc + (g[i] + w[i]) * dg[i].conj() * n.weight);
    Ok(total.re)
}

/// `∫_D |∇G(y - x)|² dy` alone, as `∫_{∂D} G ∂_ν Ḡ ds`.
pub fn cavity_energy_of_g(solver: &CavitySolver, x: Point2) -> f64 {
    let xc = cz(x);
    solver
        .nodes
        .iter()
        .map(|n| {
            let d = n.p - xc;
            (d.inv() * (-n.normal / (d * d)).conj()).re * n.weight
        })
        .sum()
}
