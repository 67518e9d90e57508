//! Bessel functions of the first kind used by the Vekua transform.

use std::f64::consts::PI;

use crate::error::{ProbeError, Result};

/// `J₁(s)` for `s ≥ 0`.
pub fn bessel_j1(s: f64) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(ProbeError::Domain(format!("J1 argument must be finite and >= 0, got {s}")));
    }
    Ok(j1(s))
}

/// `J₁(s)` for real `s`, absolute error near `1e-16`, no argument checks.
///
/// Small arguments use the ascending series, moderate ones the trapezoid
/// rule on `(1/2π) ∫₀^{2π} cos(θ - s sin θ) dθ` (exponentially convergent
/// for a periodic integrand), and large ones the Hankel expansion.
pub fn j1(s: f64) -> f64 {
    if s < 0.0 {
        return -j1(-s);
    }
    if s < 1.0 {
        let h = 0.5 * s;
        let h2 = h * h;
        let mut term = h;
        let mut sum = h;
        for k in 1..20 {
            term *= -h2 / (k as f64 * (k + 1) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    if s < 25.0 {
        let n = (s as usize + 40).next_multiple_of(4);
        let dt = 2.0 * PI / n as f64;
        let sum: f64 = (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                (t - s * t.sin()).cos()
            })
            .sum();
        return sum / n as f64;
    }
    hankel_j1(s)
}

fn hankel_j1(x: f64) -> f64 {
    let mu = 4.0;
    let (mut p, mut q) = (1.0, 0.0);
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        if a.abs() > last || a.abs() < 1e-18 {
            break;
        }
        last = a.abs();
        // a carries x^{-k}; signs alternate in pairs
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
    }
    let chi = x - 0.75 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J_{1/2}(w) = √(2/(πw)) sin w` for `w > 0`.
pub fn bessel_j_half(w: f64) -> Result<f64> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(ProbeError::Domain(format!("J1/2 argument must be finite and > 0, got {w}")));
    }
    Ok((2.0 / (PI * w)).sqrt() * w.sin())
}
