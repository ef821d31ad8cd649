//! Channel parameters and the equivalent additive noise `Z = N + U`.
//!
//! `N ~ N(0, sigma^2)` and `U ~ Uniform[-delta/2, delta/2]`, so the density of
//! `Z` is a Gaussian smeared over a box of width `delta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::special::{ln_q_diff, q_integral_upper, FRAC_1_SQRT_2PI, LN_SQRT_2PI};

/// Multiple of `sigma` beyond the box edge used as the effective support.
pub const SUPPORT_SIGMAS: f64 = 10.0;

/// Gaussian noise level and quantizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    sigma: f64,
    delta: f64,
}

impl ChannelParams {
    pub fn new(sigma: f64, delta: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be finite and > 0, got {delta}"
            )));
        }
        Ok(Self { sigma, delta })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `delta/2 + 10 sigma`.
    pub fn support_half_width(&self) -> f64 {
        0.5 * self.delta + SUPPORT_SIGMAS * self.sigma
    }

    /// Variance of `Z`: `sigma^2 + delta^2/12`.
    pub fn noise_variance(&self) -> f64 {
        self.sigma * self.sigma + self.delta * self.delta / 12.0
    }
}

/// Peak amplitude constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Peak {
    Bounded(f64),
    Unbounded,
}

/// Average power `P` together with an optional peak amplitude `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConstraints {
    avg_power: f64,
    peak: Peak,
}

impl PowerConstraints {
    pub fn new(avg_power: f64, peak: Peak) -> Result<Self> {
        if !(avg_power.is_finite() && avg_power >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "average power must be finite and >= 0, got {avg_power}"
            )));
        }
        if let Peak::Bounded(a) = peak {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "peak amplitude must be finite and > 0, got {a}"
                )));
            }
        }
        Ok(Self { avg_power, peak })
    }

    pub fn unbounded(avg_power: f64) -> Result<Self> {
        Self::new(avg_power, Peak::Unbounded)
    }

    pub fn bounded(avg_power: f64, amplitude: f64) -> Result<Self> {
        Self::new(avg_power, Peak::Bounded(amplitude))
    }

    /// Builds the constraint from `P` and the peak-to-average ratio `K = A^2/P`.
    pub fn with_ratio(avg_power: f64, k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) || !(avg_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ratio form needs P > 0 and finite K > 0, got P={avg_power}, K={k}"
            )));
        }
        Self::bounded(avg_power, (k * avg_power).sqrt())
    }

    pub fn avg_power(&self) -> f64 {
        self.avg_power
    }

    pub fn peak(&self) -> Peak {
        self.peak
    }

    pub fn peak_amplitude(&self) -> Option<f64> {
        match self.peak {
            Peak::Bounded(a) => Some(a),
            Peak::Unbounded => None,
        }
    }

    /// `K = A^2 / P`, when both are finite and `P > 0`.
    pub fn ratio(&self) -> Option<f64> {
        match self.peak {
            Peak::Bounded(a) if self.avg_power > 0.0 => Some(a * a / self.avg_power),
            _ => None,
        }
    }
}

/// Quantizer index `floor(x / delta)`.
pub fn quantize(x: f64, delta: f64) -> i64 {
    (x / delta).floor() as i64
}

/// Density of `Z` at `z`.
pub fn noise_pdf(z: f64, ch: &ChannelParams) -> f64 {
    ln_noise_pdf(z, ch).exp()
}

/// `ln f_Z(z)`, finite far into the tails.
pub fn ln_noise_pdf(z: f64, ch: &ChannelParams) -> f64 {
    let s = z.abs();
    let half = 0.5 * ch.delta;
    ln_q_diff((s - half) / ch.sigma, (s + half) / ch.sigma) - ch.delta.ln()
}

/// `d/dx f_Z(y - x)`.
pub fn noise_pdf_dx(y: f64, x: f64, ch: &ChannelParams) -> f64 {
    let u = y - x;
    let s = u.abs();
    let half = 0.5 * ch.delta;
    let sig2 = ch.sigma * ch.sigma;
    let t = (s - half) / ch.sigma;
    let mag = (-0.5 * t * t).exp() * (-(-ch.delta * s / sig2).exp_m1()) * FRAC_1_SQRT_2PI / (ch.delta * ch.sigma);
    if u < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Signal to noise-and-quantization-noise ratio `P / (sigma^2 + delta^2/12)`.
pub fn snqnr(p: &PowerConstraints, ch: &ChannelParams) -> f64 {
    p.avg_power / ch.noise_variance()
}

/// `P(Z > z)`.
pub fn noise_sf(z: f64, ch: &ChannelParams) -> f64 {
    if z < 0.0 {
        return 1.0 - noise_sf(-z, ch);
    }
    let half = 0.5 * ch.delta;
    let lo = (z - half) / ch.sigma;
    let hi = (z + half) / ch.sigma;
    let scale = ch.sigma / ch.delta;
    let v = if lo >= 0.0 {
        scale * (q_integral_upper(lo) - q_integral_upper(hi))
    } else {
        scale * (-lo + q_integral_upper(-lo) - q_integral_upper(hi))
    };
    v.clamp(0.0, 1.0)
}

/// `P(Z <= z)`.
pub fn noise_cdf(z: f64, ch: &ChannelParams) -> f64 {
    if z <= 0.0 {
        noise_sf(-z, ch)
    } else {
        1.0 - noise_sf(z, ch)
    }
}

/// `P(|Z| > t)`.
pub fn noise_tail_mass(t: f64, ch: &ChannelParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("tail mass needs t > 0, got {t}")));
    }
    Ok((2.0 * noise_sf(t, ch)).min(1.0))
}

/// An additive noise law the information routines can integrate against.
pub trait NoiseModel: Sync {
    fn ln_pdf(&self, z: f64) -> f64;

    fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    /// Half-width of the effective support.
    fn half_support(&self) -> f64;

    /// Offsets (relative to the shift) where the density changes shape.
    fn features(&self) -> Vec<f64>;

    /// Length scale of the smooth part of the density.
    fn scale(&self) -> f64;
}

impl NoiseModel for ChannelParams {
    fn ln_pdf(&self, z: f64) -> f64 {
        ln_noise_pdf(z, self)
    }

    fn half_support(&self) -> f64 {
        self.support_half_width()
    }

    fn features(&self) -> Vec<f64> {
        let h = 0.5 * self.delta;
        vec![-h, 0.0, h]
    }

    fn scale(&self) -> f64 {
        self.sigma
    }
}

/// Plain Gaussian noise, the `delta -> 0` limit of [`ChannelParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    pub sigma: f64,
}

impl GaussianNoise {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }
}

impl NoiseModel for GaussianNoise {
    fn ln_pdf(&self, z: f64) -> f64 {
        let t = z / self.sigma;
        -0.5 * t * t - LN_SQRT_2PI - self.sigma.ln()
    }

    fn half_support(&self) -> f64 {
        SUPPORT_SIGMAS * self.sigma
    }

    fn features(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn scale(&self) -> f64 {
        self.sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff, gaussian_q, integrate, QuadratureSpec};

    fn ch(sigma: f64, delta: f64) -> ChannelParams {
        ChannelParams::new(sigma, delta).unwrap()
    }

    #[test]
    fn quantizer_floor() {
        assert_eq!(quantize(0.0, 1.0), 0);
        assert_eq!(quantize(-0.3, 1.0), -1);
        assert_eq!(quantize(2.5, 0.5), 5);
    }

    #[test]
    fn pdf_values() {
        let c = ch(1.0, 1.0);
        let want = 1.0 - 2.0 * gaussian_q(0.5);
        assert!((noise_pdf(0.0, &c) - want).abs() < 1e-15);
        assert!((noise_pdf(0.0, &ch(1.0, 1e-4)) - FRAC_1_SQRT_2PI).abs() < 1e-6);
        for z in [0.3, 1.7, 9.0, 40.0] {
            assert_eq!(noise_pdf(z, &c), noise_pdf(-z, &c));
        }
        assert!(ln_noise_pdf(60.0, &c).is_finite());
    }

    #[test]
    fn far_tail_matches_box_average() {
        // (1/delta) int phi over the box, via a quadrature of the Gaussian pdf
        let c = ch(1.0, 2.0);
        let z = 15.0;
        let r = integrate(
            |t: f64| (-0.5 * t * t + 0.5 * z * z).exp() * FRAC_1_SQRT_2PI,
            z - 1.0,
            z + 1.0,
            &QuadratureSpec::new(0.0, 1e-13, 1000).unwrap(),
        )
        .unwrap();
        let ln_want = r.value.ln() - 0.5 * z * z - 2f64.ln();
        assert!((ln_noise_pdf(z, &c) - ln_want).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let c = ch(1.0, 1.0);
        let fd = finite_diff(|x| noise_pdf(1.0 - x, &c), 0.0, 1e-5);
        assert!((noise_pdf_dx(1.0, 0.0, &c) - fd).abs() < 1e-6);
        assert_eq!(noise_pdf_dx(2.0, 2.0, &c), 0.0);
        assert_eq!(noise_pdf_dx(1.3, 0.2, &c), -noise_pdf_dx(2.0 * 0.2 - 1.3, 0.2, &c));
    }

    #[test]
    fn snqnr_values() {
        let p = PowerConstraints::unbounded(1.0).unwrap();
        assert!((snqnr(&p, &ch(1.0, 12f64.sqrt())) - 0.5).abs() < 1e-15);
        let p0 = PowerConstraints::unbounded(0.0).unwrap();
        assert_eq!(snqnr(&p0, &ch(1.0, 1.0)), 0.0);
    }

    #[test]
    fn tail_mass() {
        let c = ch(1.0, 1.0);
        assert!(noise_tail_mass(0.0, &c).is_err());
        assert!((noise_tail_mass(1e-12, &c).unwrap() - 1.0).abs() < 1e-11);
        let m = noise_tail_mass(2.0, &c).unwrap();
        assert!(m >= 2.0 * gaussian_q(2.5) && m <= 2.0 * gaussian_q(1.5));
        let far = noise_tail_mass(0.5 + 8.0, &c).unwrap();
        assert!(far <= 2.0 * gaussian_q(8.0) && far < 1.3e-15);
    }

    #[test]
    fn sf_matches_integrated_pdf() {
        let c = ch(0.7, 1.9);
        let spec = QuadratureSpec::new(1e-14, 1e-12, 10_000).unwrap();
        for z in [-1.2, 0.0, 0.4, 2.5] {
            let hi = c.support_half_width() + 5.0;
            let r = crate::numerics::integrate_with_breakpoints(|t| noise_pdf(t, &c), &[z, z.max(0.95), hi], &spec)
                .unwrap();
            assert!((noise_sf(z, &c) - r.value).abs() < 1e-11, "z={z}");
        }
    }

    #[test]
    fn constraint_validation() {
        assert!(ChannelParams::new(0.0, 1.0).is_err());
        assert!(ChannelParams::new(1.0, f64::INFINITY).is_err());
        assert!(PowerConstraints::new(-1.0, Peak::Unbounded).is_err());
        assert!(PowerConstraints::bounded(1.0, 0.0).is_err());
        let p = PowerConstraints::with_ratio(2.0, 8.0).unwrap();
        assert!((p.peak_amplitude().unwrap() - 4.0).abs() < 1e-15);
        assert!((p.ratio().unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(PowerConstraints::unbounded(1.0).unwrap().ratio(), None);
    }
}
