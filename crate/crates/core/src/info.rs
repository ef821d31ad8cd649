//! Discrete input laws, mutual information and entropy for `Y = X + Z`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, NoiseModel, Peak, PowerConstraints};
use crate::error::{Error, Result};
use crate::numerics::special::{gaussian_q, ln2_minus_binary_entropy_centered};
use crate::numerics::{integrate_with_breakpoints, QuadratureSpec};

const SLACK: f64 = 1e-9;

/// A finite input law: sorted, distinct locations with positive masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    atoms: Vec<(f64, f64)>,
}

impl InputDistribution {
    /// Validates and wraps `(location, probability)` pairs.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("input law needs at least one atom".into()));
        }
        let mut sum = 0.0;
        for (i, &(x, p)) in atoms.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("atom location {x} not finite")));
            }
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "atom probability must be > 0, got {p} at {x}"
                )));
            }
            if i > 0 && !(x > atoms[i - 1].0) {
                return Err(Error::InvalidParameter(
                    "atom locations must be strictly increasing".into(),
                ));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "atom probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    /// Sorts, merges repeated locations, drops zero masses and renormalizes.
    pub fn normalized(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms
            .iter()
            .any(|&(x, p)| !x.is_finite() || !(p >= 0.0) || !p.is_finite())
        {
            return Err(Error::InvalidParameter(
                "atoms need finite locations and nonnegative probabilities".into(),
            ));
        }
        atoms.retain(|&(_, p)| p > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if merged.is_empty() || !(total > 0.0) {
            return Err(Error::InvalidParameter("input law has no mass".into()));
        }
        for a in &mut merged {
            a.1 /= total;
        }
        // absorb any normalization drift into the largest mass
        let s: f64 = merged.iter().map(|a| a.1).sum();
        if let Some(big) = merged.iter_mut().max_by(|a, b| a.1.total_cmp(&b.1)) {
            big.1 += 1.0 - s;
        }
        Self::new(merged)
    }

    /// All mass at `x`.
    pub fn point(x: f64) -> Result<Self> {
        Self::new(vec![(x, 1.0)])
    }

    /// Equiprobable `+-a`.
    pub fn antipodal(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "antipodal amplitude must be > 0, got {a}"
            )));
        }
        Self::new(vec![(-a, 0.5), (a, 0.5)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|&(x, p)| (x + c, p)).collect(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|&(x, p)| p * x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max)
    }

    /// Whether both power constraints hold with relative slack `1e-9`.
    pub fn satisfies(&self, p: &PowerConstraints) -> bool {
        let avg_ok = self.second_moment() <= p.avg_power() * (1.0 + SLACK);
        let peak_ok = match p.peak() {
            Peak::Bounded(a) => self.max_abs() <= a * (1.0 + SLACK),
            Peak::Unbounded => true,
        };
        avg_ok && peak_ok
    }

    /// Entropy of the atom masses in nats.
    pub fn entropy(&self) -> f64 {
        self.atoms.iter().map(|&(_, p)| -p * p.ln()).sum()
    }
}

/// A value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Output density `sum_i p_i f_Z(y - x_i)`.
pub fn output_pdf(y: f64, d: &InputDistribution, ch: &ChannelParams) -> f64 {
    ln_output_pdf_with(y, d, ch).exp()
}

/// Log of the output density for any additive noise law.
pub fn ln_output_pdf_with<N: NoiseModel>(y: f64, d: &InputDistribution, noise: &N) -> f64 {
    log_sum_exp(d.atoms.iter().map(|&(x, p)| p.ln() + noise.ln_pdf(y - x)))
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(it: I) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Disjoint integration intervals covering every atom's truncated support,
/// each with the breakpoints that fall inside it.
pub(crate) fn support_partition<N: NoiseModel>(d: &InputDistribution, noise: &N) -> Vec<Vec<f64>> {
    let l = noise.half_support();
    let feats = noise.features();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut cur: Vec<f64> = Vec::new();
    let mut cur_hi = f64::NEG_INFINITY;
    for &(x, _) in &d.atoms {
        let lo = x - l;
        if !cur.is_empty() && lo > cur_hi {
            groups.push(std::mem::take(&mut cur));
        }
        cur.push(lo);
        cur.push(x + l);
        cur.extend(feats.iter().map(|f| x + f));
        // locations are sorted, so the latest window reaches furthest
        cur_hi = x + l;
    }
    groups.push(cur);
    for g in &mut groups {
        g.sort_by(f64::total_cmp);
        g.dedup();
    }
    groups
}

/// `I(X; X + Z)` in nats, by adaptive quadrature over the truncated support.
pub fn mutual_information(d: &InputDistribution, ch: &ChannelParams, spec: &QuadratureSpec) -> Result<Estimate> {
    mutual_information_with(d, ch, spec)
}

/// [`mutual_information`] for any additive noise law.
pub fn mutual_information_with<N: NoiseModel>(
    d: &InputDistribution,
    noise: &N,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if d.len() == 1 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let l = noise.half_support();
    let xs: Vec<f64> = d.atoms.iter().map(|a| a.0).collect();
    let ln_ps: Vec<f64> = d.atoms.iter().map(|a| a.1.ln()).collect();
    let integrand = |y: f64| {
        // only atoms whose truncated support contains y
        let lo = xs.partition_point(|&x| x < y - l);
        let hi = xs.partition_point(|&x| x <= y + l);
        if lo >= hi {
            return 0.0;
        }
        let terms: Vec<f64> = (lo..hi).map(|i| ln_ps[i] + noise.ln_pdf(y - xs[i])).collect();
        let ln_q = log_sum_exp(terms.iter().copied());
        if ln_q == f64::NEG_INFINITY {
            return 0.0;
        }
        // q * KL(w || p) with posterior weights w_i = p_i f_i / q
        let mut kl = 0.0;
        for (k, &t) in terms.iter().enumerate() {
            let ln_w = t - ln_q;
            let w = ln_w.exp();
            if w > 0.0 {
                kl += w * (ln_w - ln_ps[lo + k]);
            }
        }
        ln_q.exp() * kl.max(0.0)
    };
    let mut value = 0.0;
    let mut error = 0.0;
    for pts in support_partition(d, noise) {
        let r = integrate_with_breakpoints(integrand, &pts, spec)?;
        value += r.value;
        error += r.error;
    }
    // mass dropped outside each atom's window
    let tail = 2.0 * gaussian_q(crate::channel::SUPPORT_SIGMAS);
    error += tail * (1.0 + d.entropy());
    Ok(Estimate { value, error })
}

/// `-int pdf ln pdf` over `support`, requiring the density to integrate to
/// one within `1e-6` there.
pub fn differential_entropy<F: Fn(f64) -> f64>(pdf: F, support: (f64, f64), spec: &QuadratureSpec) -> Result<f64> {
    differential_entropy_with_breakpoints(pdf, &[support.0, support.1], spec)
}

/// [`differential_entropy`] with an initial partition of the support.
pub fn differential_entropy_with_breakpoints<F: Fn(f64) -> f64>(
    pdf: F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    let mass = integrate_with_breakpoints(&pdf, points, spec)?;
    if (mass.value - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "density integrates to {} on the support, not 1",
            mass.value
        )));
    }
    let h = integrate_with_breakpoints(
        |y| {
            let p = pdf(y);
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        },
        points,
        spec,
    )?;
    Ok(h.value)
}

/// `h(Z)` for the channel's equivalent noise.
pub fn noise_entropy(ch: &ChannelParams, spec: &QuadratureSpec) -> Result<f64> {
    output_entropy(&InputDistribution::point(0.0)?, ch, spec)
}

/// `h(X + Z)` in nats.
pub fn output_entropy(d: &InputDistribution, ch: &ChannelParams, spec: &QuadratureSpec) -> Result<f64> {
    let mut mass = 0.0;
    let mut h = 0.0;
    for pts in support_partition(d, ch) {
        mass += integrate_with_breakpoints(|y| output_pdf(y, d, ch), &pts, spec)?.value;
        h += integrate_with_breakpoints(
            |y| {
                let lq = ln_output_pdf_with(y, d, ch);
                if lq == f64::NEG_INFINITY {
                    0.0
                } else {
                    -lq.exp() * lq
                }
            },
            &pts,
            spec,
        )?
        .value;
    }
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("output density integrates to {mass}")));
    }
    Ok(h)
}

/// `1/2 ln(1 + P/sigma^2)`; only defined without a peak constraint.
pub fn gaussian_capacity(p: &PowerConstraints, sigma: f64) -> Result<f64> {
    if let Peak::Bounded(a) = p.peak() {
        return Err(Error::Domain(format!(
            "no closed form with a finite peak amplitude (A = {a})"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(0.5 * (p.avg_power() / (sigma * sigma)).ln_1p())
}

/// Capacity of the symmetric one-bit (sign) quantizer, `ln 2 - H_b(Q(sqrt(P)/sigma))`.
pub fn one_bit_capacity(p_avg: f64, sigma: f64) -> f64 {
    // Q(s) = 1/2 - e with e = erf(s / sqrt 2) / 2
    let e = 0.5 * libm::erf((p_avg / 2.0).sqrt() / sigma);
    ln2_minus_binary_entropy_centered(e)
}

/// Low-SNR slope of the one-bit capacity, `1 / (pi sigma^2)`.
pub fn one_bit_low_snr_slope(sigma: f64) -> f64 {
    1.0 / (std::f64::consts::PI * sigma * sigma)
}
