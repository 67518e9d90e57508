//! Thin wrappers over `statrs` gamma functions with exact handling of the
//! poles of `Γ` in the reciprocal.

use std::f64::consts::PI;

/// `sin(πx)` with argument reduction, exactly zero at integers.
pub fn sinpi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (PI * r).sin();
    if (n as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `1/Γ(x)` for any real `x`; exactly zero at `0, -1, -2, …`.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x >= 0.5 {
        if x < 170.0 {
            1.0 / gamma(x)
        } else {
            (-ln_gamma(x)).exp()
        }
    } else {
        // 1/Γ(x) = Γ(1-x) sin(πx) / π
        let s = sinpi(x);
        let one_minus = 1.0 - x;
        if one_minus < 170.0 {
            gamma(one_minus) * s / PI
        } else {
            s.signum() * (ln_gamma(one_minus) + s.abs().ln() - PI.ln()).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_gamma_zeros_and_values() {
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-7.0), 0.0);
        assert!((rgamma(0.5) - 1.0 / PI.sqrt()).abs() < 1e-15);
        // 1/Γ(-1/2) = -1/(2√π)
        assert!((rgamma(-0.5) + 0.5 / PI.sqrt()).abs() < 1e-15);
        assert!((rgamma(5.0) * 24.0 - 1.0).abs() < 1e-14);
        assert!(rgamma(-0.25).is_finite());
    }

    #[test]
    fn sinpi_is_exact_at_integers() {
        for k in -20..20 {
            assert_eq!(sinpi(k as f64), 0.0);
        }
        assert!((sinpi(0.5) - 1.0).abs() < 1e-16);
        assert!((sinpi(-1.5) - 1.0).abs() < 1e-16);
    }
}
