use std::f64::consts::PI;

use num_complex::Complex64 as C;
use probe_core::needle2d::*;
use probe_core::special::gamma::gamma;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

#[test]
fn tip_formula_random_parameters() {
    let mut r = rng();
    for _ in 0..20 {
        let alpha = r.gen_range(0.05..=1.0);
        let tau = r.gen_range(0.1..1e4);
        let dir = Direction2::from_angle(r.gen_range(-PI..PI));
        let x = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let v = needle2d_eval(x, x, alpha, tau, dir).unwrap();
        let want = -dir.conj() * tau / gamma(1.0 + alpha);
        assert!((v - want).norm() <= 1e-12 * want.norm());
        // normalised tip value tends to -ω̄ as α → 0
        let w = needle2d_eval(x, x, 1e-3, tau, dir).unwrap() / tau;
        assert!((w + dir.conj()).norm() < 1e-3);
    }
}

#[test]
fn unit_order_is_exponential_quotient() {
    let dir = Direction2::new(1.0, 1.0).unwrap();
    let (y, x) = ([0.2, -0.4], [0.1, 0.3]);
    let d = C::new(y[0] - x[0], y[1] - x[1]);
    let want = -((d * dir.conj() * 3.0).exp() - 1.0) / d;
    let got = needle2d_eval(y, x, 1.0, 3.0, dir).unwrap();
    assert!((got - want).norm() < 1e-14 * want.norm());
}

#[test]
fn half_order_composes_with_erfc_value() {
    // y - x = -1 along ω = e₁: v = E_{1/2}(-10) - 1, E_{1/2}(-10) = e^{100} erfc(10)
    let v = needle2d_eval([-1.0, 0.0], [0.0, 0.0], 0.5, 10.0, Direction2::new(1.0, 0.0).unwrap()).unwrap();
    assert!((v.re - (0.056140992743822586 - 1.0)).abs() < 1e-14);
    assert_eq!(v.im, 0.0);
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng();
    let h = 1e-5;
    for _ in 0..10 {
        let alpha = r.gen_range(0.2..=1.0);
        let tau = r.gen_range(0.5..5.0);
        let dir = Direction2::from_angle(r.gen_range(-PI..PI));
        let x = [r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)];
        let y = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let (g1, g2) = needle2d_grad(y, x, alpha, tau, dir).unwrap();
        let f = |p: [f64; 2]| needle2d_eval(p, x, alpha, tau, dir).unwrap();
        let fd1 = (f([y[0] + h, y[1]]) - f([y[0] - h, y[1]])) / (2.0 * h);
        let fd2 = (f([y[0], y[1] + h]) - f([y[0], y[1] - h])) / (2.0 * h);
        assert!((g1 - fd1).norm() <= 1e-6 * g1.norm().max(1.0), "{g1} vs {fd1}");
        assert!((g2 - fd2).norm() <= 1e-6 * g2.norm().max(1.0), "{g2} vs {fd2}");
    }
}

#[test]
fn reflection_across_needle_line() {
    // mirror d' = ω² d̄:  ω² v(d') = conj v(d)  and  v'(d') = ω̄⁴ conj v'(d)
    let mut r = rng();
    for _ in 0..20 {
        let alpha = r.gen_range(0.2..=1.0);
        let dir = Direction2::from_angle(r.gen_range(-PI..PI));
        let field = NeedleField::new(alpha, 4.0, dir).unwrap();
        let w = C::new(dir.omega[0], dir.omega[1]);
        let d = C::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let dm = w * w * d.conj();
        let (v, dv) = field.value_and_derivative(d).unwrap();
        let (vm, dvm) = field.value_and_derivative(dm).unwrap();
        assert!((w * w * vm - v.conj()).norm() < 1e-12 * v.norm().max(1.0));
        assert!((dvm - dir.conj().powu(4) * dv.conj()).norm() < 1e-12 * dv.norm().max(1.0));
    }
}

#[test]
fn harmonic_with_second_order_residual() {
    let mut r = rng();
    let (alpha, tau) = (0.5, 3.0);
    let dir = Direction2::from_angle(0.7);
    let x = [0.0, 0.0];
    let lap = |y: [f64; 2], h: f64| {
        let f = |p: [f64; 2]| needle2d_eval(p, x, alpha, tau, dir).unwrap();
        (f([y[0] + h, y[1]]) + f([y[0] - h, y[1]]) + f([y[0], y[1] + h]) + f([y[0], y[1] - h]) - f(y) * 4.0)
            / (h * h)
    };
    let mut ratios = Vec::new();
    let mut taken = 0;
    while taken < 100 {
        let y = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let line_dist = (y[0] * dir.omega_perp[0] + y[1] * dir.omega_perp[1]).abs();
        if line_dist < 0.1 {
            continue;
        }
        taken += 1;
        let (a, b) = (lap(y, 1e-2).norm(), lap(y, 5e-3).norm());
        if b > 1e-9 {
            ratios.push(a / b);
        }
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    assert!((median - 4.0).abs() < 0.4, "median ratio {median}");
}

#[test]
fn converges_to_g_off_the_cone() {
    let alpha = 0.3;
    let dir = Direction2::new(1.0, 0.0).unwrap();
    let x = [0.0, 0.0];
    let sup = |tau: f64| {
        let mut m = 0.0f64;
        for i in 0..=20 {
            for j in 0..=20 {
                let y = [-1.0 + 0.5 * i as f64 / 20.0, -0.5 + j as f64 / 20.0];
                let v = needle2d_eval(y, x, alpha, tau, dir).unwrap();
                m = m.max((v - fundamental_2d(y, x)).norm());
            }
        }
        m
    };
    let s: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&t| sup(t)).collect();
    assert!(s[0] / s[1] >= 5.0 && s[1] / s[2] >= 5.0, "{s:?}");
}

#[test]
fn g_has_infinite_energy_in_cones() {
    // ∫ over a cone sector of |∇G|² = 2/|y|⁴ between ρ and 1, polar midpoint rule
    let energy = |rho: f64| {
        let (nr, nt) = (400, 32);
        let aperture = 0.5;
        let mut e = 0.0;
        let (lr0, lr1) = (rho.ln(), 0.0);
        for i in 0..nr {
            let lr = lr0 + (lr1 - lr0) * (i as f64 + 0.5) / nr as f64;
            let r = lr.exp();
            let dr = r * (lr1 - lr0) / nr as f64;
            for _ in 0..nt {
                let g = C::new(r, 0.0).inv() * C::new(r, 0.0).inv();
                e += 2.0 * g.norm_sqr() * r * dr * aperture / nt as f64;
            }
        }
        e
    };
    let es: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|&r| energy(r)).collect();
    for w in es.windows(2) {
        assert!(w[1] - w[0] >= (10.0f64).ln());
    }
}

#[test]
fn schedule_meets_its_tolerances() {
    let needle = Needle::new([0.0, 0.0], Direction2::new(1.0, 0.0).unwrap());
    let o1 = ExhaustionSet::new(vec![Box2::new([-0.8, -0.3], [-0.2, 0.3])]);
    let sched = build_schedule(&[o1], &needle, 1e-2).unwrap();
    assert_eq!(sched.len(), 1);
    let dev = schedule_deviation(&sched, &needle, 0, 64).unwrap();
    assert!(dev < 1e-2 * 0.5, "{dev}");
}

#[test]
fn half_plane_exhaustion_keeps_alpha() {
    let needle = Needle::new([0.0, 0.0], Direction2::new(1.0, 0.0).unwrap());
    let levels: Vec<ExhaustionSet> = (1..=4)
        .map(|n| {
            let grow = 0.1 * n as f64;
            ExhaustionSet::new(vec![Box2::new([-1.0 - grow, -0.3 - grow], [-0.3, 0.3 + grow])])
        })
        .collect();
    let sched = build_schedule(&levels, &needle, 1e-1).unwrap();
    assert!(sched.alphas.iter().all(|&a| a == sched.alphas[0]));
    assert!(build_schedule(&[], &needle, 1e-1).unwrap().is_empty());
}

#[test]
fn cone_exhaustion_schedule_invariants() {
    let needle = Needle::new([0.1, -0.2], Direction2::from_angle(1.0));
    let params = ExhaustionParams::default();
    let ex = cone_exhaustion(&needle, &params, 6);
    for w in ex.windows(2) {
        assert!(w[0].boxes.iter().all(|b| w[1].boxes.contains(b)));
    }
    for o in &ex {
        assert!(o.boxes.iter().all(|b| !b.meets_ray(&needle)));
    }
    let sched = build_schedule(&ex, &needle, 1e-2).unwrap();
    for k in 1..sched.len() {
        assert!(sched.alphas[k] <= sched.alphas[k - 1]);
        assert!(sched.taus[k] >= sched.taus[k - 1]);
        assert!(sched.epsilons[k] < sched.epsilons[k - 1]);
    }
    assert!(sched.alphas[5] < sched.alphas[0]);
    // translation leaves the schedule valid for a shifted tip
    let moved = Needle::new([0.4, 0.3], needle.direction);
    let shifted = sched.translate([0.3, 0.5]);
    let dev = schedule_deviation(&shifted, &moved, 2, 64).unwrap();
    assert!(dev < sched.epsilons[2]);
}

#[test]
fn schedule_fails_when_level_meets_needle() {
    let needle = Needle::new([0.0, 0.0], Direction2::new(1.0, 0.0).unwrap());
    let bad = ExhaustionSet::new(vec![Box2::new([0.5, -0.1], [0.6, 0.1])]);
    assert!(build_schedule(&[bad], &needle, 1e-2).is_err());
}
