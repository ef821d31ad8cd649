//! Fisher information of the shifted noise density and the low-SNR slope.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::numerics::special::{gaussian_q, ln_q_diff};
use crate::numerics::{integrate_with_breakpoints, QuadratureSpec};

/// `[e^{-(u - d/2)^2/2s^2} - e^{-(u + d/2)^2/2s^2}]^2 / [Q((u - d/2)/s) - Q((u + d/2)/s)]`,
/// evaluated in a form that stays finite in the far tails.
pub fn fisher_kernel(u: f64, ch: &ChannelParams) -> f64 {
    let s = u.abs();
    let sig = ch.sigma();
    let half = 0.5 * ch.delta();
    let a = (s - half) / sig;
    let b = (s + half) / sig;
    let e = -(-ch.delta() * s / (sig * sig)).exp_m1();
    (-a * a - ln_q_diff(a, b)).exp() * e * e
}

/// `(d/dx f_Z(u))^2 / f_Z(u)`.
pub fn fisher_integrand(u: f64, ch: &ChannelParams) -> f64 {
    let s2 = ch.sigma() * ch.sigma();
    fisher_kernel(u, ch) / (ch.delta() * 2.0 * PI * s2)
}

/// Fisher information of `x -> f_Z(. - x)` at `x`.
pub fn fisher_information(x: f64, ch: &ChannelParams, spec: &QuadratureSpec) -> Result<crate::info::Estimate> {
    let l = ch.support_half_width();
    let h = 0.5 * ch.delta();
    let mut pts = vec![x - l, x - h, x, x + h, x + l];
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let r = integrate_with_breakpoints(|y| fisher_integrand(y - x, ch), &pts, spec)?;
    // beyond the cut the integrand decays faster than a Gaussian in a
    let cut_sigmas = (l - h) / ch.sigma();
    let tail = 2.0 * fisher_integrand(l, ch) * ch.sigma() / (cut_sigmas - 1.0);
    let limit = 1.0 / (ch.sigma() * ch.sigma());
    if r.value > limit * (1.0 + 1e-3) {
        return Err(Error::FisherBoundViolation { value: r.value, limit });
    }
    Ok(crate::info::Estimate {
        value: r.value,
        error: r.error + tail,
    })
}

/// Low-SNR capacity slope `I(0) / 2`, in nats per unit power. The same value
/// holds for every finite peak-to-average ratio.
pub fn low_snr_slope(ch: &ChannelParams, spec: &QuadratureSpec) -> Result<f64> {
    Ok(0.5 * fisher_information(0.0, ch, spec)?.value)
}

/// Constants of the large-step tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherTailParams {
    pub theta: f64,
    /// `1 - sigma^2/theta^2 - exp(-(theta + delta/2) delta / sigma^2)`
    pub mu: f64,
    /// Density floor `(Q(theta/sigma) - Q(delta/(2 sigma))) / delta`.
    pub lambda: f64,
}

impl FisherTailParams {
    pub fn new(theta: f64, ch: &ChannelParams) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must be > 0, got {theta}")));
        }
        let s = ch.sigma();
        let d = ch.delta();
        let mu = 1.0 - s * s / (theta * theta) - (-(theta + 0.5 * d) * d / (s * s)).exp();
        let lambda = (gaussian_q(theta / s) - gaussian_q(0.5 * d / s)) / d;
        Ok(Self { theta, mu, lambda })
    }

    /// `theta = 5 sigma`.
    pub fn default_for(ch: &ChannelParams) -> Result<Self> {
        Self::new(5.0 * ch.sigma(), ch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherTailBound {
    /// Bound on `(1 / (4 pi sigma^2)) int fisher_kernel`, i.e. on `delta` times
    /// the slope.
    pub integral_bound: f64,
    /// Implied bound on the low-SNR slope.
    pub slope_bound: f64,
}

/// Large-step upper bound on the low-SNR slope, valid when
/// `mu > 0` and `theta < delta/2`.
pub fn fisher_tail_upper_bound(ch: &ChannelParams, tp: &FisherTailParams) -> Result<FisherTailBound> {
    let s = ch.sigma();
    let d = ch.delta();
    if !(tp.theta < 0.5 * d) {
        return Err(Error::BoundInvalid(format!(
            "need theta < delta/2, got theta = {} and delta/2 = {}",
            tp.theta,
            0.5 * d
        )));
    }
    if !(tp.mu > 0.0) {
        return Err(Error::BoundInvalid(format!("need mu > 0, got mu = {}", tp.mu)));
    }
    let window = gaussian_q(tp.theta / s) - gaussian_q(0.5 * d / s);
    if !(window > 0.0) {
        return Err(Error::BoundInvalid(format!(
            "Q(theta/sigma) - Q(delta/(2 sigma)) = {window} is not positive"
        )));
    }
    let rhs = (2f64.sqrt() / window + (-0.5 * tp.theta * tp.theta / (s * s)).exp() / tp.mu) / (2.0 * PI * s * s).sqrt();
    Ok(FisherTailBound {
        integral_bound: rhs,
        slope_bound: rhs / d,
    })
}

/// Small-step limit of `fisher_kernel(y) / delta`:
/// `sqrt(2 pi sigma^2) (y^2 / sigma^4) exp(-y^2 / (2 sigma^2))`.
pub fn high_res_fisher_integrand_limit(y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (2.0 * PI * s2).sqrt() * (y * y / (s2 * s2)) * (-0.5 * y * y / s2).exp()
}
