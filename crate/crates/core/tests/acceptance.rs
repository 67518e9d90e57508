//! End-to-end acceptance checks. Runs as a plain binary so that every check
//! prints its PASS/FAIL line; the process fails if any check fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C;
use probe_core::carleman3d::*;
use probe_core::forward2d::{dtn_assemble, energy_gap, Basis, BoundaryTrace, Curve, DtnOperator, Geometry2, DEFAULT_NODES};
use probe_core::needle2d::{Direction2, Needle, Point2};
use probe_core::probe::*;
use probe_core::special::gamma::gamma;
use probe_core::special::ml_eval;
use probe_core::vekua::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check { passed, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// e^{x²} erfc(-x) on x = -20, -19.5, …, 5, computed at 60 digits.
const E_HALF_REAL: [f64; 51] = [
    0.028174348741051319, 0.028894903811938218, 0.029653230641262164, 0.03045237479977461,
    0.03129571781590521, 0.032187024738230408, 0.033130499999725537, 0.034130853321913274,
    0.035193377824930838, 0.036324043059485429, 0.037529606388505766, 0.038817747074647219,
    0.040197228650218459, 0.041678096764088149, 0.043271921864609693, 0.044992099001027921,
    0.046854221014893763, 0.048876546895982276, 0.051080594758088444, 0.053491899746564117,
    0.056140992743822586, 0.059064678352563891, 0.062307724037774684, 0.065925122499980352,
    0.069985166200880928, 0.074573693062876683, 0.079800054329152933, 0.085805670104894602,
    0.092776567800538354, 0.10096221839949909, 0.11070463773306863, 0.12248480427384142,
    0.13699945762506139, 0.1552936556088943, 0.17900115118138995, 0.21080636406114358,
    0.25539567631050574, 0.3215854164543175, 0.427583576155807, 0.61569034419292587, 1.0,
    1.9523604891825571, 5.0089800807622835, 18.653886256262734, 108.94090438997797,
    1035.8148429726229, 16205.988853999587, 417962.42244577031, 17772220.904016288,
    1245928884.2744062, 144009798674.66104,
];

fn mittag_leffler_accuracy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_exp = 0.0f64;
    for _ in 0..1000 {
        let (r, t) = (20.0 * rng.gen::<f64>().sqrt(), rng.gen_range(-PI..PI));
        let z = C::from_polar(r, t);
        worst_exp = worst_exp.max((ml_eval(1.0, z).unwrap() - z.exp()).norm() / z.exp().norm());
    }
    let mut worst_half = 0.0f64;
    for (k, want) in E_HALF_REAL.iter().enumerate() {
        let x = -20.0 + 0.5 * k as f64;
        worst_half = worst_half.max(rel(ml_eval(0.5, C::new(x, 0.0)).unwrap().re, *want));
    }
    for k in 0..=500 {
        let x = -20.0 + 0.05 * k as f64;
        let want = (x * x).exp() * erfc(-x);
        worst_half = worst_half.max(rel(ml_eval(0.5, C::new(x, 0.0)).unwrap().re, want));
    }
    check(
        worst_exp <= 1e-10 && worst_half <= 1e-8,
        format!("order 1 vs exp: {worst_exp:.1e} (≤ 1e-10); order 1/2 vs erfc form: {worst_half:.1e} (≤ 1e-8)"),
    )
}

fn asymptotic_law() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.25, 0.5, 0.75] {
        let lead = 1.0 / gamma(1.0 - alpha);
        let scaled = |r: f64, t: f64| {
            let z = C::from_polar(r, t);
            ((ml_eval(alpha, z).unwrap() + lead / z) * z * z).norm()
        };
        let angles: Vec<f64> = (0..=8).map(|k| alpha * PI + (1.0 - alpha) * PI * k as f64 / 8.0).collect();
        let sup = |lo: f64, hi: f64| {
            let mut m = 0.0f64;
            for i in 0..=20 {
                let r = lo + (hi - lo) * i as f64 / 20.0;
                for &t in &angles {
                    m = m.max(scaled(r, t)).max(scaled(r, -t));
                }
            }
            m
        };
        let (low, high) = (sup(50.0, 100.0), sup(250.0, 500.0));
        // the next term of the expansion has size 1/|Γ(1-2α)|
        let next = if alpha == 0.5 { 0.0 } else { 1.0 / gamma(1.0 - 2.0 * alpha).abs() };
        let bounded = high.is_finite() && high <= low.max(next) * 1.05 + 1e-12 && low <= next + 1.0;
        ok &= bounded;
        parts.push(format!("α={alpha}: sup {low:.3} on [50,100], {high:.3} on [250,500]"));
    }
    check(ok, parts.join("; "))
}

fn closed_forms_3d() -> Check {
    let frame = Frame3::new(Point3::x(), Point3::y()).unwrap();
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0] {
        for tau in [1.0, 10.0] {
            let n = Needle3d::new(alpha, tau, frame).unwrap();
            for s in [-0.6, -0.2, 0.1, 0.3, 0.6, 0.9] {
                // axial limit from transverse offsets 1e-3 and 5e-4; v is even in ρ
                let at = |rho: f64| n.eval_quadrature(&Point3::new(rho, 0.0, s)).unwrap();
                let limit = (4.0 * at(5e-4) - at(1e-3)) / 3.0;
                worst = worst.max(rel(limit, n.on_axis(s).unwrap()));
            }
        }
    }
    let mut worst_grad = 0.0f64;
    for alpha in [0.5, 1.0] {
        for tau in [1.0, 10.0] {
            let want = tau * tau / (4.0 * PI * gamma(1.0 + 2.0 * alpha));
            let g = needle3d_grad_on_axis(0.0, alpha, tau, &frame).unwrap();
            let h = 1e-3;
            let f = |t: f64| needle3d_on_axis(t, alpha, tau).unwrap();
            let fd = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
            worst_grad = worst_grad.max(rel(g.z, want)).max(rel(fd, want));
        }
    }
    check(
        worst <= 1e-4 && worst_grad <= 1e-6,
        format!("near-axis quadrature vs closed form: {worst:.1e} (≤ 1e-4); tip gradient: {worst_grad:.1e} (≤ 1e-6)"),
    )
}

/// Points at distance ≥ `margin` from the positive z axis, inside `[-0.8, 0.8]³`.
fn residual_points(count: usize, margin: f64, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let p = Point3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        let axis = if p.z > 0.0 { p.x.hypot(p.y) } else { p.norm() };
        if axis >= margin && p.norm() >= 0.1 {
            out.push(p);
        }
    }
    out
}

fn residual_orders() -> Check {
    let frame = Frame3::new(Point3::x(), Point3::y()).unwrap();
    let h = 0.04;
    let pts = residual_points(50, 0.05 + h, 4);
    let lap = verify_harmonic(0.5, 2.0, &frame, &pts, h).unwrap();
    let lambda = 3.0;
    let n = HelmholtzNeedle::new(HelmholtzNeedleParams { lambda, alpha: 0.5, tau: 2.0, frame }).unwrap();
    let f = |p: &Point3| n.eval(p);
    let mut orders: Vec<f64> = pts
        .iter()
        .map(|p| {
            let a = seven_point(&f, p, h, lambda * lambda).unwrap().abs();
            let b = seven_point(&f, p, h / 2.0, lambda * lambda).unwrap().abs();
            (a / b).log2()
        })
        .collect();
    orders.sort_by(f64::total_cmp);
    let helm = orders[orders.len() / 2];
    let laplace = lap.median_order();
    check(
        laplace >= 1.8 && helm >= 1.8,
        format!("median order under h-halving, 50 points each: Laplace {laplace:.3}, Helmholtz {helm:.3} (≥ 1.8)"),
    )
}

fn decay_rates() -> Check {
    let frame = Frame3::new(Point3::x(), Point3::y()).unwrap();
    let pts = [Point3::new(0.5, 0.0, -0.5), Point3::new(0.0, 0.7, 0.1), Point3::new(-0.3, -0.3, -0.9)];
    let taus = [10.0, 100.0, 1000.0];
    let mut spread = 0.0f64;
    for alpha in [0.5, 0.8] {
        let c: Vec<f64> = taus
            .iter()
            .map(|&tau| {
                let sup = pts
                    .iter()
                    .map(|y| phi_k_eval(y, Kernel::MittagLeffler { alpha, tau }, &frame).unwrap().abs())
                    .fold(0.0, f64::max);
                sup * tau
            })
            .collect();
        let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        spread = spread.max(hi / lo);
    }
    let hpts = [Point3::new(0.5, 0.0, -0.5), Point3::new(0.6, 0.1, -0.1), Point3::new(-0.2, 0.3, -0.6)];
    let devs: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let n = HelmholtzNeedle::new(HelmholtzNeedleParams { lambda: 2.0, alpha: 0.5, tau, frame }).unwrap();
            hpts.iter().map(|d| (n.eval(d).unwrap() - helmholtz_fundamental(2.0, d)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let monotone = devs.windows(2).all(|w| w[1] < w[0]);
    check(
        spread <= 2.0 && monotone,
        format!("τ·sup|Φ_K| spread {spread:.3} (≤ 2); Helmholtz deviation {:.2e} > {:.2e} > {:.2e}", devs[0], devs[1], devs[2]),
    )
}

fn vekua_identity() -> Check {
    let mut worst = 0.0f64;
    for k in 0..100 {
        let s = 50.0 * k as f64 / 99.0;
        let (lhs, _) = identity_5_10(s).unwrap();
        worst = worst.max((lhs - (1.0 - s.cos())).abs());
    }
    let mut worst_t = 0.0f64;
    for lambda in [1.0, 5.0] {
        for k in 0..20 {
            let t = k as f64;
            let y = Point3::new((0.7 * t).cos(), (0.7 * t).sin(), 0.15 * t - 1.4) * (0.1 + 0.08 * t);
            let got = vekua_transform(|p| Ok(1.0 / (4.0 * PI * p.norm())), lambda, &y).unwrap();
            let r = y.norm();
            worst_t = worst_t.max((got - (lambda * r).cos() / (4.0 * PI * r)).abs());
        }
    }
    check(
        worst <= 1e-8 && worst_t <= 1e-8,
        format!("identity on 100 points of [0,50]: {worst:.1e}; transform of the Newton kernel at 40 points: {worst_t:.1e} (≤ 1e-8)"),
    )
}

fn forward_oracle() -> Check {
    let lambda0 = DtnOperator::lambda0(Basis::FourierModes(16), 1.0).unwrap();
    let (mut worst, mut worst_gap) = (0.0f64, 0.0f64);
    for rho in [0.3, 0.5, 0.7] {
        let geom = Geometry2::unit_disk(vec![Curve::circle([0.0, 0.0], rho)]);
        let op = dtn_assemble(&geom, Basis::FourierModes(16), DEFAULT_NODES).unwrap();
        let m = op.matrix();
        for n in 1..=16usize {
            let p = rho.powi(2 * n as i32);
            let want = n as f64 * (1.0 - p) / (1.0 + p);
            worst = worst.max(rel(m[(16 + n, 16 + n)].re, want));
            let e = energy_gap(&lambda0, &op, &BoundaryTrace::mode(n as i64, 16).unwrap()).unwrap();
            let want_gap = 2.0 * PI * 2.0 * n as f64 * p / (1.0 + p);
            worst_gap = worst_gap.max((e - want_gap).norm() / want_gap);
        }
    }
    check(
        worst <= 1e-8 && worst_gap <= 1e-8,
        format!("DtN eigenvalues n ≤ 16: {worst:.1e}; mode energy gaps: {worst_gap:.1e} (≤ 1e-8 relative)"),
    )
}

fn concentric() -> (Geometry2, DtnData) {
    let geom = Geometry2::unit_disk(vec![Curve::circle([0.0, 0.0], 0.4)]);
    let dtn = DtnData::simulate(&geom, 32, 256).unwrap();
    (geom, dtn)
}

fn indicator_dichotomy(geom: &Geometry2, dtn: &DtnData) -> Check {
    let mut ok = true;
    let (mut worst_change, mut worst_direct) = (0.0f64, 0.0f64);
    for (tip, angle) in [([0.6, 0.0], 0.0), ([0.0, 0.7], PI / 2.0), ([-0.5, 0.3], 2.6), ([0.45, 0.45], PI / 4.0), ([-0.8, -0.1], PI)] {
        let dir = Direction2::from_angle(angle);
        let s = direction_schedule(dir, &ScheduleParams::default()).unwrap();
        let v = indicator_values(dtn, &Needle::new(tip, dir), &s, 12).unwrap();
        let (a, b) = (v[10].norm(), v[11].norm());
        let direct = indicator_function_direct(geom, tip, 256).unwrap();
        worst_change = worst_change.max((b - a).abs() / b);
        worst_direct = worst_direct.max((b - direct).abs() / direct);
    }
    ok &= worst_change < 0.05 && worst_direct < 0.05;

    // growth ladders: fixed aperture, τₙ = n; tips in D̄ and needles crossing D
    let taus: Vec<f64> = (1..=12).map(|n| n as f64).collect();
    let ladder = fixed_aperture_schedule(0.8, &taus);
    let mut min_growth = f64::INFINITY;
    let mut monotone = true;
    let in_cavity = [([0.0, 0.0], 0.0), ([0.2, 0.2], 2.0), ([0.0, -0.3], 1.0), ([0.4, 0.0], PI)];
    let crossing = [([-0.7, 0.0], 0.0), ([0.0, -0.6], PI / 2.0), ([-0.6, 0.2], 0.0)];
    for (tip, angle) in in_cavity.iter().chain(&crossing) {
        let v: Vec<f64> = indicator_values(dtn, &Needle::new(*tip, Direction2::from_angle(*angle)), &ladder, 12)
            .unwrap()
            .iter()
            .map(|z| z.norm())
            .collect();
        // +∞ marks a level too large to resolve and persists once reached
        monotone &= v.windows(2).all(|w| w[1] > w[0] || (w[0].is_infinite() && w[1].is_infinite()));
        min_growth = min_growth.min(v[11] / v[0]);
    }
    ok &= monotone && min_growth > 1e3;

    // default schedules: tips in D̄ blow up; crossing needles are reported only
    let verdict = |tip: Point2, angle: f64| {
        let dir = Direction2::from_angle(angle);
        let s = Arc::new(direction_schedule(dir, &ScheduleParams::default()).unwrap());
        indicator_sequence(dtn, &Needle::new(tip, dir), s, 12, VerdictParams::new(1e6)).unwrap().verdict
    };
    let inside_blow_up = in_cavity.iter().all(|(t, a)| verdict(*t, *a) == Verdict::BlowUp);
    let crossing_verdicts: Vec<&str> = crossing.iter().map(|(t, a)| verdict(*t, *a).as_str()).collect();
    ok &= inside_blow_up;
    check(
        ok,
        format!(
            "avoiding needles: last-step change {worst_change:.1e}, vs direct indicator {worst_direct:.1e} (< 5%); \
             τₙ = n ladders in D̄ and across D: monotone {monotone}, growth ≥ {min_growth:.1e}× (> 1e3); \
             default schedule: tips in D̄ blow up {inside_blow_up}, crossing needles {crossing_verdicts:?}"
        ),
    )
}

fn reconstruction(concentric_dtn: &DtnData) -> Check {
    let dirs: Vec<Direction2> = (0..8).map(|k| Direction2::from_angle(k as f64 * PI / 4.0)).collect();
    let grid = TipGrid::new(33, 33, 1.0);
    let cfg = VerdictConfig::default();
    let sched = ScheduleParams::default();
    let rec = scan_reconstruct(concentric_dtn, &grid, &dirs, &sched, &cfg).unwrap();
    let d1 = mask_hausdorff(&rec, |x| x[0].hypot(x[1]) <= 0.4);
    let geom = Geometry2::unit_disk(vec![Curve::circle([0.3, 0.0], 0.25)]);
    let dtn = DtnData::simulate(&geom, 32, 256).unwrap();
    let rec2 = scan_reconstruct(&dtn, &grid, &dirs, &sched, &cfg).unwrap();
    let d2 = mask_hausdorff(&rec2, |x| (x[0] - 0.3).hypot(x[1]) <= 0.25);
    check(
        d1 <= 2.0 && d2 <= 3.0,
        format!(
            "33×33, 8 directions: centred disk {d1} cells (≤ 2, Θ = {:.2e}); off-centre disk {d2} cells (≤ 3, Θ = {:.2e})",
            rec.params.theta_cap, rec2.params.theta_cap
        ),
    )
}

fn appendix_checks() -> Check {
    let rep = verify_singularity_extraction(0.5, 3.0, &[0.2, 0.1, 0.05]).unwrap();
    let finite = rep.sup_regular.iter().all(|v| v.is_finite());
    let no_growth = rep.sup_regular.windows(2).all(|w| w[1] <= 1.05 * w[0]);
    let sing_ok = finite && no_growth && rep.bounded(2.0);
    let taus: Vec<f64> = (1..=10).map(|n| 10f64.powi(n)).collect();
    let s = fixed_aperture_schedule(0.5, &taus);
    let needle = Needle::new([0.0, 0.0], Direction2::from_angle(0.3));
    let cone = EnergyRegion::Cone { axis: needle.direction, half_angle: 0.3, height: 0.5 };
    let r = cone_energy_growth(&s, &needle, &cone, 1.0, 10).unwrap();
    check(
        sing_ok && r.strictly_increasing() && r.passed(),
        format!(
            "regular part sup over radii 0.2, 0.1, 0.05: {:.4?}, tip value {:.4} (no growth); \
             cone energy strictly increasing {}, ln growth {:.2e} by n = 10 (> ln 10)",
            rep.sup_regular,
            rep.tip_value,
            r.strictly_increasing(),
            r.log_growth()
        ),
    )
}

fn main() {
    let (geom, dtn) = concentric();
    let checks: Vec<(&str, f64, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("Mittag-Leffler accuracy", 10.0, Box::new(mittag_leffler_accuracy)),
        ("Mittag-Leffler asymptotics", 10.0, Box::new(asymptotic_law)),
        ("3D closed forms", 30.0, Box::new(closed_forms_3d)),
        ("Laplace/Helmholtz residual order", 60.0, Box::new(residual_orders)),
        ("off-cone decay rates", 60.0, Box::new(decay_rates)),
        ("Vekua identity", 10.0, Box::new(vekua_identity)),
        ("forward-solver oracle", 30.0, Box::new(forward_oracle)),
        ("indicator dichotomy", 300.0, Box::new(|| indicator_dichotomy(&geom, &dtn))),
        ("grid reconstruction", 900.0, Box::new(|| reconstruction(&dtn))),
        ("singularity extraction and cone energy", 60.0, Box::new(appendix_checks)),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let c = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = c.passed && secs < budget;
        failed += usize::from(!pass);
        println!(
            "{:>2} {} {name}: {} [{secs:.1} s of {budget} s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
