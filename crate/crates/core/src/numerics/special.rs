//! Gaussian tail functions.
//!
//! Everything here is built on [`libm::erfc`] in the central region and on the
//! continued fraction for the Mills ratio `Q(x) / phi(x)` beyond
//! [`TAIL_SWITCH`], so that logarithms of tail probabilities stay finite long
//! after `Q` itself underflows.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use crate::error::{Error, Result};

/// `ln(sqrt(2 pi))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `1 / sqrt(2 pi)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this argument the Mills-ratio path replaces `erfc`.
pub const TAIL_SWITCH: f64 = 8.0;

const MILLS_DEPTH: usize = 48;

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn ln_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Continued fraction tail for `x >= TAIL_SWITCH`.
///
/// Returns `(R(x), 1 - x R(x))` where `R = Q / phi` is the Mills ratio. The
/// second component is formed from the fraction's tail so it keeps full
/// relative precision even though it is `~ 1/x^2`.
fn mills_tail(x: f64) -> (f64, f64) {
    debug_assert!(x >= TAIL_SWITCH);
    let mut t = x;
    for k in (2..=MILLS_DEPTH).rev() {
        t = x + k as f64 / t;
    }
    let r1 = 1.0 / t;
    let denom = x + r1;
    (1.0 / denom, r1 / denom)
}

/// Gaussian probability integral `Q(x) = P(N(0,1) > x)`.
pub fn gaussian_q(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < TAIL_SWITCH {
        0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        phi(x) * mills_tail(x).0
    }
}

/// `ln Q(x)`, finite for every finite `x`.
pub fn ln_q(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= TAIL_SWITCH {
        let (r, _) = mills_tail(x);
        ln_phi(x) + r.ln()
    } else if x > -1.0 {
        (0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln()
    } else {
        (-gaussian_q(-x)).ln_1p()
    }
}

/// Classical bounds on `Q(x)` for `x > 0`, returned as `(lower, upper)`:
/// `phi(x)/x * (1 - 1/x^2) < Q(x) < phi(x)/x`.
pub fn gaussian_q_bounds(x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("Q-function bounds need a finite x > 0, got {x}")));
    }
    let upper = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI * x * x).sqrt();
    let lower = upper * (1.0 - 1.0 / (x * x));
    Ok((lower, upper))
}

/// `ln(Q(a) - Q(b))` for `a <= b`, i.e. the log of the standard normal mass
/// on `[a, b]`.
///
/// Narrow windows use a midpoint Hermite expansion, upper-tail windows the
/// ratio `Q(b)/Q(a)` in log space, and straddling windows `erf`.
pub fn ln_q_diff(a: f64, b: f64) -> f64 {
    let h = b - a;
    if !(h > 0.0) {
        return f64::NEG_INFINITY;
    }
    let m = 0.5 * (a + b);
    if h * m.abs().max(1.0) <= 0.1 {
        return ln_phi(m) + (h * narrow_window_factor(m, h)).ln();
    }
    if a >= 0.0 {
        let la = ln_q(a);
        let lb = ln_q(b);
        return la + (-(lb - la).exp_m1()).ln();
    }
    if b <= 0.0 {
        return ln_q_diff(-b, -a);
    }
    (0.5 * (libm::erf(-a * FRAC_1_SQRT_2) + libm::erf(b * FRAC_1_SQRT_2))).ln()
}

/// `Q(a) - Q(b)` for `a <= b`.
pub fn q_diff(a: f64, b: f64) -> f64 {
    ln_q_diff(a, b).exp()
}

/// `sum_k He_{2k}(m) (h/2)^{2k} / (2k+1)!` so that the mass on
/// `[m - h/2, m + h/2]` is `phi(m) * h * factor`.
fn narrow_window_factor(m: f64, h: f64) -> f64 {
    let r2 = 0.25 * h * h;
    // (He_{2k}, He_{2k+1}) after the k-th pass
    let mut he_prev = 1.0;
    let mut he = m;
    let mut sum = 1.0;
    let mut pow = 1.0;
    let mut fact = 1.0;
    let mut n = 1usize;
    for k in 1..=10usize {
        // advance the Hermite recurrence twice: He_{n+1} = m He_n - n He_{n-1}
        for _ in 0..2 {
            let next = m * he - n as f64 * he_prev;
            he_prev = he;
            he = next;
            n += 1;
        }
        pow *= r2;
        fact *= ((2 * k) * (2 * k + 1)) as f64;
        let term = he_prev * pow / fact;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `g(s) = phi(s) - s Q(s)`, the upper partial integral `int_s^inf Q(t) dt`.
pub(crate) fn q_integral_upper(s: f64) -> f64 {
    if s >= TAIL_SWITCH {
        let (_, one_minus_xr) = mills_tail(s);
        phi(s) * one_minus_xr
    } else if s >= 0.0 {
        phi(s) - s * gaussian_q(s)
    } else {
        // int_s^inf Q = int_s^0 Q + g(0) = -s + int_0^{-s} ... via Q(t) = 1 - Q(-t)
        -s + q_integral_upper(-s)
    }
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.ln() - (1.0 - p) * (-p).ln_1p()
}

/// `ln 2 - H_b(1/2 - e)` evaluated without cancellation for small `e`.
pub(crate) fn ln2_minus_binary_entropy_centered(e: f64) -> f64 {
    let e = e.abs();
    if e >= 0.5 {
        return LN_2;
    }
    (0.5 - e) * (-2.0 * e).ln_1p() + (0.5 + e) * (2.0 * e).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from a 40-digit evaluation of erfc.
    const Q_REF: &[(f64, f64)] = &[
        (0.5, 0.308_537_538_725_986_9),
        (1.0, 0.158_655_253_931_457_05),
        (2.0, 0.022_750_131_948_179_21),
        (3.5, 2.326_290_790_355_250_4e-4),
        (6.0, 9.865_876_450_376_982e-10),
        (7.9, 1.394_517_146_659_264_3e-15),
        (8.0, 6.220_960_574_271_785e-16),
        (12.0, 1.776_482_112_077_679e-33),
        (30.0, 4.906_713_927_148_187e-198),
    ];

    #[test]
    fn q_matches_reference() {
        for &(x, q) in Q_REF {
            let got = gaussian_q(x);
            assert!(((got - q) / q).abs() < 1e-14, "Q({x}) = {got:e}, want {q:e}");
        }
        assert_eq!(gaussian_q(0.0), 0.5);
    }

    #[test]
    fn ln_q_far_tail() {
        // ln Q(40) from the asymptotic series, well past underflow of Q itself.
        let x: f64 = 40.0;
        let series = 1.0 - 1.0 / (x * x) + 3.0 / x.powi(4) - 15.0 / x.powi(6) + 105.0 / x.powi(8);
        let want = ln_phi(x) - x.ln() + series.ln();
        assert!((ln_q(x) - want).abs() < 1e-12);
        assert!(ln_q(1e4).is_finite());
        assert!((ln_q(-40.0)).abs() < 1e-300);
    }

    #[test]
    fn q_diff_narrow_matches_wide_formula() {
        for &(a, h) in &[(0.3, 0.05), (-0.02, 0.04), (2.0, 0.01), (5.0, 0.015)] {
            let b = a + h;
            let direct = gaussian_q(a) - gaussian_q(b);
            let got = q_diff(a, b);
            assert!(((got - direct) / direct).abs() < 1e-11, "a={a} h={h}");
        }
    }

    #[test]
    fn q_diff_is_total_mass_for_full_line() {
        assert!((q_diff(-40.0, 40.0) - 1.0).abs() < 1e-15);
        assert!((q_diff(-1.0, 1.0) - (1.0 - 2.0 * gaussian_q(1.0))).abs() < 1e-15);
    }

    #[test]
    fn q_integral_upper_matches_definition() {
        // int_s^inf Q(t) dt for s = 0 is phi(0).
        assert!((q_integral_upper(0.0) - FRAC_1_SQRT_2PI).abs() < 1e-16);
        // continuity across the tail switch
        let below = q_integral_upper(TAIL_SWITCH - 1e-9);
        let above = q_integral_upper(TAIL_SWITCH);
        assert!(((below - above) / above).abs() < 1e-7);
        // negative side: g(-s) = s + g(s)
        assert!((q_integral_upper(-1.5) - (1.5 + q_integral_upper(1.5))).abs() < 1e-15);
    }

    #[test]
    fn bounds_domain() {
        assert!(gaussian_q_bounds(0.0).is_err());
        assert!(gaussian_q_bounds(-1.0).is_err());
        let (lo, _) = gaussian_q_bounds(1.0).unwrap();
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn binary_entropy_endpoints() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - LN_2).abs() < 1e-16);
        assert!((ln2_minus_binary_entropy_centered(0.0)).abs() < 1e-300);
        assert_eq!(ln2_minus_binary_entropy_centered(0.5), LN_2);
    }
}
