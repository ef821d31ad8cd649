//! Analytic bounds: the duality upper bound on capacity, the threshold-probe
//! lower bound on the low-SNR slope, and the direct KL ratio.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::channel::{ln_noise_pdf, ChannelParams, PowerConstraints};
use crate::error::{Error, Result};
use crate::numerics::special::{binary_entropy, ln_q};
use crate::numerics::{integrate, integrate_with_breakpoints, QuadratureSpec};

/// Parameters of the auxiliary output density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualBoundParams {
    pub alpha: f64,
    pub beta: f64,
    /// Normalizer `1 + 2 (alpha - atan(alpha / sqrt(beta)) / pi)`.
    pub upsilon: f64,
}

impl DualBoundParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must exceed 1/2, got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
        }
        let upsilon = 1.0 + 2.0 * (alpha - (alpha / beta.sqrt()).atan() / PI);
        Ok(Self { alpha, beta, upsilon })
    }

    /// `kappa(alpha) = (P + sigma^2) / (alpha - 1/2)^2`.
    pub fn kappa(&self, avg_power: f64, sigma: f64) -> f64 {
        let a = self.alpha - 0.5;
        (avg_power + sigma * sigma) / (a * a)
    }
}

/// A duality upper bound and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualBound {
    pub value: f64,
    /// `ln Upsilon`, the bound of the branch where the input never leaves
    /// the central cell.
    pub log_upsilon: f64,
    pub params: DualBoundParams,
    pub kappa: f64,
    pub epsilon: f64,
}

/// `sup_{0 < xi <= c} -xi ln xi`.
fn sup_xi_log_xi(c: f64) -> f64 {
    if c >= 1.0 / E {
        1.0 / E
    } else if c > 0.0 {
        -c * c.ln()
    } else {
        0.0
    }
}

/// Duality upper bound on the capacity at the given `(alpha, beta)`; valid for
/// every peak constraint.
pub fn dual_upper_bound(p: &PowerConstraints, ch: &ChannelParams, dp: &DualBoundParams) -> Result<DualBound> {
    let dp = DualBoundParams::new(dp.alpha, dp.beta)?;
    Ok(dual_bound_unchecked(p, ch, &dp))
}

fn dual_bound_unchecked(p: &PowerConstraints, ch: &ChannelParams, dp: &DualBoundParams) -> DualBound {
    let eps = 1.0 / ch.delta();
    let eps2 = eps * eps;
    let s2 = ch.sigma() * ch.sigma();
    let kappa = dp.kappa(p.avg_power(), ch.sigma());
    let c = eps2 * kappa;
    let log_upsilon = dp.upsilon.ln();
    let bracket = (PI / dp.beta.sqrt()).ln() + (dp.beta * (eps2 * (p.avg_power() + s2) + 1.0 / 12.0)).ln_1p();
    DualBound {
        value: log_upsilon + c * bracket + sup_xi_log_xi(c),
        log_upsilon,
        params: *dp,
        kappa,
        epsilon: eps,
    }
}

const ALPHA_OFFSET_RANGE: (f64, f64) = (1e-4, 9.5);
const BETA_RANGE: (f64, f64) = (1e-8, 0.999);
const GRID: usize = 81;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Minimizes [`dual_upper_bound`] over a logarithmic `(alpha, beta)` grid,
/// followed by local refinement around the best cell. Ties go to the lowest
/// `alpha`, then the lowest `beta`.
pub fn dual_upper_bound_optimized(p: &PowerConstraints, ch: &ChannelParams) -> DualBound {
    let search = |offs: &[f64], betas: &[f64], best: &mut Option<(DualBound, usize, usize)>| {
        for (i, &a) in offs.iter().enumerate() {
            for (j, &b) in betas.iter().enumerate() {
                let Ok(dp) = DualBoundParams::new(0.5 + a, b) else {
                    continue;
                };
                let v = dual_bound_unchecked(p, ch, &dp);
                if best.as_ref().map_or(true, |(bv, _, _)| v.value < bv.value) {
                    *best = Some((v, i, j));
                }
            }
        }
    };
    let mut offs = log_grid(ALPHA_OFFSET_RANGE.0, ALPHA_OFFSET_RANGE.1, GRID);
    let mut betas = log_grid(BETA_RANGE.0, BETA_RANGE.1, GRID);
    let mut best = None;
    search(&offs, &betas, &mut best);
    for _ in 0..4 {
        let (b, i, j) = best.expect("grid search always evaluates");
        let a_lo = offs[i.saturating_sub(1)];
        let a_hi = offs[(i + 1).min(offs.len() - 1)];
        let b_lo = betas[j.saturating_sub(1)];
        let b_hi = betas[(j + 1).min(betas.len() - 1)];
        offs = log_grid(a_lo, a_hi, 21);
        betas = log_grid(b_lo, b_hi, 21);
        let mut local = Some((b, usize::MAX, usize::MAX));
        search(&offs, &betas, &mut local);
        let (lb, li, lj) = local.expect("seeded");
        // keep the old cell index when nothing improved
        let li = if li == usize::MAX { 10 } else { li };
        let lj = if lj == usize::MAX { 10 } else { lj };
        best = Some((lb, li, lj));
    }
    best.expect("grid search always evaluates").0
}

/// Binary threshold detector `V = 1{X + Z >= delta * ell0 - offset}` probed at
/// `x = delta * ell0 + delta/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProbe {
    pub ell0: u32,
    pub delta_offset: f64,
    pub x_probe: f64,
    pub threshold: f64,
}

impl ThresholdProbe {
    pub fn new(ell0: u32, delta_offset: f64, ch: &ChannelParams) -> Result<Self> {
        if ell0 == 0 {
            return Err(Error::InvalidParameter("ell0 must be positive".into()));
        }
        if !(delta_offset > 0.0 && delta_offset.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold offset must be > 0, got {delta_offset}"
            )));
        }
        let d = ch.delta();
        Ok(Self {
            ell0,
            delta_offset,
            x_probe: d * ell0 as f64 + 0.5 * d,
            threshold: d * ell0 as f64 - delta_offset,
        })
    }
}

const TRIM_LOG: f64 = 60.0;

/// `ln((1/delta) int_{-delta/2}^{delta/2} Q(sign * (T - x - u)/sigma) du)`,
/// scaled by the largest integrand value so deep tails do not underflow.
fn ln_dither_averaged_q(
    sign: f64,
    x: f64,
    tp: &ThresholdProbe,
    ch: &ChannelParams,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let half = 0.5 * ch.delta();
    let s = ch.sigma();
    let arg = |u: f64| sign * (tp.threshold - x - u) / s;
    // Q is decreasing, so the peak is at the smallest argument
    let (u_peak, u_far) = if arg(-half) <= arg(half) {
        (-half, half)
    } else {
        (half, -half)
    };
    let peak = ln_q(arg(u_peak));
    // the integrand is monotone; drop the part below e^-60 of the peak, which
    // can be narrow enough for the adaptive rule to miss entirely
    let mut lo = u_peak;
    let mut hi = u_far;
    if ln_q(arg(u_far)) - peak < -TRIM_LOG {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ln_q(arg(mid)) - peak < -TRIM_LOG {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = u_far;
    }
    let (a, b) = if u_peak < hi { (u_peak, hi) } else { (hi, u_peak) };
    let r = integrate(|u| (ln_q(arg(u)) - peak).exp(), a, b, spec)?;
    Ok(peak + (r.value / ch.delta()).ln())
}

/// `(ln P(V=1|x), ln P(V=0|x))`.
pub fn threshold_log_probs(
    x: f64,
    tp: &ThresholdProbe,
    ch: &ChannelParams,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    Ok((
        ln_dither_averaged_q(1.0, x, tp, ch, spec)?,
        ln_dither_averaged_q(-1.0, x, tp, ch, spec)?,
    ))
}

/// `P(V = 1 | X = x)`.
pub fn threshold_prob(x: f64, tp: &ThresholdProbe, ch: &ChannelParams, spec: &QuadratureSpec) -> Result<f64> {
    Ok(ln_dither_averaged_q(1.0, x, tp, ch, spec)?.exp())
}

/// Relative entropy between the laws of `V` given `X = x` and given `X = 0`,
/// in the form `(1-a) ln(1/(1-b)) + a ln(1/b) - H_b(a)`.
pub fn threshold_kl(x: f64, tp: &ThresholdProbe, ch: &ChannelParams) -> Result<f64> {
    let spec = QuadratureSpec::default();
    let (ln_a1, ln_a0) = threshold_log_probs(x, tp, ch, &spec)?;
    let (ln_b1, ln_b0) = threshold_log_probs(0.0, tp, ch, &spec)?;
    let a1 = ln_a1.exp();
    let a0 = ln_a0.exp();
    let a = if a1 <= 0.5 { a1 } else { 1.0 - a0 };
    let d = -a0 * ln_b0 - a1 * ln_b1 - binary_entropy(a);
    Ok(d.max(0.0))
}

/// Best threshold-probe lower bound on the low-SNR slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeLowerBound {
    pub value: f64,
    pub best_ell0: u32,
    /// `(ell0, KL / x^2)` for each probed cell count.
    pub per_ell0: Vec<(u32, f64)>,
}

/// `max over ell0 of threshold_kl(x) / x^2` at `x = delta * ell0 + delta/2`.
pub fn slope_lower_bound(ch: &ChannelParams, ell0_list: &[u32], delta_offset: f64) -> Result<SlopeLowerBound> {
    if ell0_list.is_empty() {
        return Err(Error::InvalidParameter("ell0 list is empty".into()));
    }
    let mut per = Vec::with_capacity(ell0_list.len());
    let mut best = (f64::NEG_INFINITY, 0u32);
    for &l in ell0_list {
        let tp = ThresholdProbe::new(l, delta_offset, ch)?;
        let r = threshold_kl(tp.x_probe, &tp, ch)? / (tp.x_probe * tp.x_probe);
        per.push((l, r));
        if r > best.0 {
            best = (r, l);
        }
    }
    Ok(SlopeLowerBound {
        value: best.0,
        best_ell0: best.1,
        per_ell0: per,
    })
}

/// Default cell counts `1, 2, 4, ..., 64`.
pub fn default_ell0_list() -> Vec<u32> {
    (0..7).map(|k| 1u32 << k).collect()
}

/// `D(f_Z(. - x) || f_Z) / x^2` by quadrature.
pub fn kl_ratio_direct(x: f64, ch: &ChannelParams, spec: &QuadratureSpec) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!("KL ratio needs a finite x != 0, got {x}")));
    }
    let l = ch.support_half_width();
    let h = 0.5 * ch.delta();
    let mut pts = vec![(-l).min(x - l), l.max(x + l), 0.0, x, -h, h, x - h, x + h];
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let f = |y: f64| {
        let a = ln_noise_pdf(y - x, ch);
        let b = ln_noise_pdf(y, ch);
        let d = a - b;
        // f_a ln(f_a/f_b) - f_a + f_b, nonnegative pointwise
        if d.abs() < 0.5 {
            b.exp() * (d * d.exp() - d.exp_m1())
        } else {
            a.exp() * d - a.exp() + b.exp()
        }
    };
    let r = integrate_with_breakpoints(f, &pts, spec)?;
    Ok(r.value.max(0.0) / (x * x))
}
