//! Statistical checks of the dither identities against simulated counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{Sampler, SimRun};
use crate::channel::{noise_cdf, noise_sf, ChannelParams};
use crate::error::{Error, Result};
use crate::info::{mutual_information, noise_entropy, output_entropy, output_pdf, Estimate, InputDistribution};
use crate::numerics::{gauss_legendre, QuadratureSpec};

/// Cells with expected probability below this are not tested.
pub const NEGLIGIBLE_MASS: f64 = 1e-3;
/// Minimum expected count of a tested cell.
pub const MIN_EXPECTED_COUNT: f64 = 50.0;
/// Number of dither bins used by [`entropy_identity_check`].
pub const ENTROPY_U_BINS: usize = 8;
/// Tolerance multiplier of the entropy identities.
pub const ENTROPY_TOL_SIGMAS: f64 = 3.0;

const CHUNK: u64 = 1 << 15;
const MAX_TABLE: usize = 1 << 27;
/// Occupied cells with fewer counts than this are where the first-order
/// bias correction stops being trustworthy.
const RARE_COUNT: u64 = 10;

/// Counts indexed by (dither bin, input atom, output index).
#[derive(Debug, Clone)]
pub(crate) struct Tally {
    bins: usize,
    atoms: usize,
    i_min: i64,
    ny: usize,
    counts: Vec<u64>,
    total: u64,
}

impl Tally {
    fn idx(&self, b: usize, a: usize, i: i64) -> usize {
        (b * self.atoms + a) * self.ny + (i - self.i_min) as usize
    }

    fn get(&self, b: usize, a: usize, i: i64) -> u64 {
        self.counts[self.idx(b, a, i)]
    }

    fn i_range(&self) -> std::ops::Range<i64> {
        self.i_min..self.i_min + self.ny as i64
    }

    /// Counts of output index `i` in bin `b`, summed over atoms.
    fn bin_counts(&self, b: usize) -> Vec<u64> {
        self.i_range()
            .map(|i| (0..self.atoms).map(|a| self.get(b, a, i)).sum())
            .collect()
    }

    fn cell_counts(&self, b: usize, a: usize) -> &[u64] {
        let s = self.idx(b, a, self.i_min);
        &self.counts[s..s + self.ny]
    }
}

/// Count table of `run` with `u_bins` equal dither bins. Samples outside the
/// truncated support land in the edge cells.
pub(crate) fn tally(run: &SimRun, u_bins: usize) -> Result<Tally> {
    if u_bins == 0 {
        return Err(Error::InvalidParameter("u_bins must be >= 1".into()));
    }
    let ch = &run.ch;
    let d = ch.delta();
    let l = ch.support_half_width();
    let lo = run.input.atoms().first().map(|a| a.0).unwrap_or(0.0) - l;
    let hi = run.input.atoms().last().map(|a| a.0).unwrap_or(0.0) + l;
    let i_min = (lo / d).floor() as i64 - 1;
    let i_max = (hi / d).floor() as i64 + 1;
    let ny = (i_max - i_min + 1) as usize;
    let atoms = run.input.len();
    let size = u_bins.saturating_mul(atoms).saturating_mul(ny);
    if size > MAX_TABLE {
        return Err(Error::InvalidParameter(format!(
            "count table would need {size} cells; use fewer dither bins or a coarser step"
        )));
    }
    let sampler = Sampler::new(run);
    let empty = Tally {
        bins: u_bins,
        atoms,
        i_min,
        ny,
        counts: vec![0; size],
        total: 0,
    };
    let chunks = run.n_samples.div_ceil(CHUNK);
    let merged = (0..chunks)
        .into_par_iter()
        .fold(
            || empty.clone(),
            |mut t, c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(run.n_samples);
                let mut rng = sampler.rng_at(start);
                for _ in start..end {
                    let s = sampler.draw(&mut rng);
                    let b = (((s.u / d + 0.5) * u_bins as f64) as usize).min(u_bins - 1);
                    let i = s.y_index.clamp(i_min, i_max);
                    let k = t.idx(b, s.atom, i);
                    t.counts[k] += 1;
                }
                t.total += end - start;
                t
            },
        )
        .reduce(
            || empty.clone(),
            |mut a, b| {
                for (x, y) in a.counts.iter_mut().zip(&b.counts) {
                    *x += y;
                }
                a.total += b.total;
                a
            },
        );
    Ok(merged)
}

/// `P(lo < Z <= hi)` without cancellation in either tail.
fn noise_mass(lo: f64, hi: f64, ch: &ChannelParams) -> f64 {
    if lo >= 0.0 {
        noise_sf(lo, ch) - noise_sf(hi, ch)
    } else if hi <= 0.0 {
        noise_cdf(hi, ch) - noise_cdf(lo, ch)
    } else {
        1.0 - noise_cdf(lo, ch) - noise_sf(hi, ch)
    }
}

/// `P(Y = i | U in [u_lo, u_hi))` for dither uniform on the bin, i.e. the
/// bin average of `delta f_{X+Z}(delta i + delta/2 - u)`.
fn bin_pmf(d: &InputDistribution, ch: &ChannelParams, u_lo: f64, u_hi: f64, i: i64) -> f64 {
    let dl = ch.delta();
    let c = dl * i as f64 + 0.5 * dl;
    let scale = dl / (u_hi - u_lo);
    d.atoms()
        .iter()
        .map(|&(x, p)| p * noise_mass(c - u_hi - x, c - u_lo - x, ch))
        .sum::<f64>()
        * scale
}

fn bin_edges(ch: &ChannelParams, bins: usize, b: usize) -> (f64, f64) {
    let d = ch.delta();
    let w = d / bins as f64;
    (-0.5 * d + b as f64 * w, -0.5 * d + (b + 1) as f64 * w)
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

fn entropy_of(p: impl Iterator<Item = f64>) -> f64 {
    -p.map(xlogx).sum::<f64>()
}

/// Plug-in entropy with first-order bias correction, its variance, and the
/// residual bias allowance.
fn corrected_entropy(counts: &[u64]) -> (f64, f64, f64) {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let nf = n as f64;
    let mut h = 0.0;
    let mut h2 = 0.0;
    let mut occupied = 0u64;
    let mut rare = 0u64;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / nf;
        let l = p.ln();
        h -= p * l;
        h2 += p * l * l;
        occupied += 1;
        rare += (c < RARE_COUNT) as u64;
    }
    let var = (h2 - h * h).max(0.0) / nf;
    (h + (occupied - 1) as f64 / (2.0 * nf), var, rare as f64 / (2.0 * nf))
}

/// One tested (bin, index) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDeviation {
    pub bin: usize,
    pub index: i64,
    pub empirical: f64,
    pub expected: f64,
    /// `|empirical - expected|` in binomial standard errors.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfCheckReport {
    pub pass: bool,
    pub tol_sigmas: f64,
    pub u_bins: usize,
    pub cells_tested: usize,
    pub failing_cells: usize,
    pub worst: Option<CellDeviation>,
}

/// Compares the empirical `P(Y = i | U in bin)` with the bin average of
/// `delta f_{X+Z}(delta i + delta/2 - u)`. The comparison uses the exact
/// average over each bin, so no discretization allowance is needed.
pub fn conditional_pmf_check(run: &SimRun, u_bins: usize, tol_sigmas: f64) -> Result<PmfCheckReport> {
    if !(tol_sigmas > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol_sigmas must be > 0, got {tol_sigmas}"
        )));
    }
    let t = tally(run, u_bins)?;
    let mut small = Vec::new();
    let mut cells = Vec::new();
    for b in 0..u_bins {
        let (u_lo, u_hi) = bin_edges(&run.ch, u_bins, b);
        let n_b = (run.n_samples as f64) / u_bins as f64;
        let counts = t.bin_counts(b);
        let nb_emp: u64 = counts.iter().sum();
        for (k, i) in t.i_range().enumerate() {
            let p = bin_pmf(&run.input, &run.ch, u_lo, u_hi, i);
            if p < NEGLIGIBLE_MASS {
                continue;
            }
            if p * n_b < MIN_EXPECTED_COUNT {
                small.push(format!("bin {b} index {i}: expected {:.1}", p * n_b));
                continue;
            }
            let emp = if nb_emp > 0 {
                counts[k] as f64 / nb_emp as f64
            } else {
                0.0
            };
            let se = (p * (1.0 - p) / (nb_emp.max(1) as f64)).sqrt();
            cells.push(CellDeviation {
                bin: b,
                index: i,
                empirical: emp,
                expected: p,
                z: (emp - p).abs() / se,
            });
        }
    }
    if !small.is_empty() {
        return Err(Error::InsufficientSamples { cells: small });
    }
    let failing = cells.iter().filter(|c| !(c.z <= tol_sigmas)).count();
    let worst = cells.iter().copied().max_by(|a, b| a.z.total_cmp(&b.z));
    Ok(PmfCheckReport {
        pass: failing == 0 && !cells.is_empty(),
        tol_sigmas,
        u_bins,
        cells_tested: cells.len(),
        failing_cells: failing,
        worst,
    })
}

/// One side of an entropy identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub estimate: f64,
    pub target: f64,
    pub std_error: f64,
    /// Dither-binning bias plus the residual of the first-order correction.
    pub bias_allowance: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(estimate: f64, target: f64, std_error: f64, bias_allowance: f64) -> Self {
        let pass = (estimate - target).abs() <= ENTROPY_TOL_SIGMAS * (std_error + bias_allowance);
        Self {
            estimate,
            target,
            std_error,
            bias_allowance,
            pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyCheckReport {
    /// `H(Y | U)` against `h(X + Z) - ln delta`.
    pub given_u: IdentityCheck,
    /// `H(Y | U, X)` against `h(Z) - ln delta`.
    pub given_u_x: IdentityCheck,
    pub pass: bool,
}

/// Average over the dither bin of the entropy of `y -> delta f(delta y + delta/2 - u)`
/// minus the entropy of the bin-averaged law. Nonnegative; this is how much
/// binning the dither inflates the plug-in target.
fn binning_gap(d: &InputDistribution, ch: &ChannelParams, bins: usize, b: usize, i_range: std::ops::Range<i64>) -> f64 {
    let (u_lo, u_hi) = bin_edges(ch, bins, b);
    let (gx, gw) = gauss_legendre(8);
    let dl = ch.delta();
    let mid = 0.5 * (u_lo + u_hi);
    let half = 0.5 * (u_hi - u_lo);
    let mut pointwise = 0.0;
    for (x, w) in gx.iter().zip(&gw) {
        let u = mid + half * x;
        let h = entropy_of(
            i_range
                .clone()
                .map(|i| dl * output_pdf(dl * i as f64 + 0.5 * dl - u, d, ch)),
        );
        pointwise += 0.5 * w * h;
    }
    let averaged = entropy_of(i_range.map(|i| bin_pmf(d, ch, u_lo, u_hi, i)));
    (averaged - pointwise).max(0.0)
}

fn check_counts(run: &SimRun, t: &Tally) -> Result<()> {
    let n_b = run.n_samples as f64 / t.bins as f64;
    let mut small = Vec::new();
    for b in 0..t.bins {
        let (u_lo, u_hi) = bin_edges(&run.ch, t.bins, b);
        for i in t.i_range() {
            let p = bin_pmf(&run.input, &run.ch, u_lo, u_hi, i);
            if p >= NEGLIGIBLE_MASS && p * n_b < MIN_EXPECTED_COUNT {
                small.push(format!("bin {b} index {i}: expected {:.1}", p * n_b));
            }
        }
    }
    if small.is_empty() {
        Ok(())
    } else {
        Err(Error::InsufficientSamples { cells: small })
    }
}

/// Checks `H(Y|U) = h(X+Z) - ln delta` and `H(Y|U,X) = h(Z) - ln delta`
/// using [`ENTROPY_U_BINS`] dither bins.
pub fn entropy_identity_check(run: &SimRun, spec: &QuadratureSpec) -> Result<EntropyCheckReport> {
    entropy_identity_check_with_bins(run, spec, ENTROPY_U_BINS)
}

pub fn entropy_identity_check_with_bins(
    run: &SimRun,
    spec: &QuadratureSpec,
    u_bins: usize,
) -> Result<EntropyCheckReport> {
    let t = tally(run, u_bins)?;
    check_counts(run, &t)?;
    let ch = &run.ch;
    let ln_d = ch.delta().ln();
    let total = t.total as f64;

    let mut h_u = 0.0;
    let mut var_u = 0.0;
    let mut bias_u = 0.0;
    let mut h_ux = 0.0;
    let mut var_ux = 0.0;
    let mut bias_ux = 0.0;
    for b in 0..u_bins {
        let counts = t.bin_counts(b);
        let n_b: u64 = counts.iter().sum();
        let w = n_b as f64 / total;
        let (h, v, r) = corrected_entropy(&counts);
        h_u += w * h;
        var_u += w * w * v;
        bias_u += w * (r + binning_gap(&run.input, ch, u_bins, b, t.i_range()));
        for (a, &(x, _)) in run.input.atoms().iter().enumerate() {
            let c = t.cell_counts(b, a);
            let n_ba: u64 = c.iter().sum();
            let w = n_ba as f64 / total;
            let (h, v, r) = corrected_entropy(c);
            h_ux += w * h;
            var_ux += w * w * v;
            let point = InputDistribution::point(x)?;
            bias_ux += w * (r + binning_gap(&point, ch, u_bins, b, t.i_range()));
        }
    }
    let given_u = IdentityCheck::new(h_u, output_entropy(&run.input, ch, spec)? - ln_d, var_u.sqrt(), bias_u);
    let given_u_x = IdentityCheck::new(h_ux, noise_entropy(ch, spec)? - ln_d, var_ux.sqrt(), bias_ux);
    Ok(EntropyCheckReport {
        pass: given_u.pass && given_u_x.pass,
        given_u,
        given_u_x,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Bias-corrected plug-in `I(X; Y | U)`.
    pub value: f64,
    /// Two standard errors plus the dither-binning bias.
    pub error: f64,
    pub std_error: f64,
    pub binning_bias: f64,
}

/// Maximum number of input atoms accepted by [`mi_estimate`].
pub const MI_MAX_ATOMS: usize = 16;

/// Plug-in `I(X; Y | U)` from joint counts per dither bin.
pub fn mi_estimate(run: &SimRun, u_bins: usize) -> Result<MiEstimate> {
    if run.input.len() > MI_MAX_ATOMS {
        return Err(Error::InvalidParameter(format!(
            "mi_estimate takes at most {MI_MAX_ATOMS} atoms, got {}",
            run.input.len()
        )));
    }
    let t = tally(run, u_bins)?;
    check_counts(run, &t)?;
    let total = t.total as f64;
    let mut value = 0.0;
    let mut var = 0.0;
    let mut binned = 0.0;
    for b in 0..u_bins {
        let counts = t.bin_counts(b);
        let n_b: u64 = counts.iter().sum();
        if n_b == 0 {
            continue;
        }
        let nbf = n_b as f64;
        let (h_y, _, _) = corrected_entropy(&counts);
        let mut h_yx = 0.0;
        // pointwise information ln p(y|x,b) / p(y|b) for the variance
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for a in 0..t.atoms {
            let c = t.cell_counts(b, a);
            let n_ba: u64 = c.iter().sum();
            if n_ba == 0 {
                continue;
            }
            h_yx += n_ba as f64 / nbf * corrected_entropy(c).0;
            for (k, &cnt) in c.iter().enumerate().filter(|(_, &c)| c > 0) {
                let i = (cnt as f64 / n_ba as f64 / (counts[k] as f64 / nbf)).ln();
                let q = cnt as f64 / nbf;
                m1 += q * i;
                m2 += q * i * i;
            }
        }
        let w = nbf / total;
        value += w * (h_y - h_yx);
        var += w * w * (m2 - m1 * m1).max(0.0) / nbf;

        let (u_lo, u_hi) = bin_edges(&run.ch, u_bins, b);
        let joint = entropy_of(t.i_range().map(|i| bin_pmf(&run.input, &run.ch, u_lo, u_hi, i)));
        let cond: f64 = run
            .input
            .atoms()
            .iter()
            .map(|&(x, p)| {
                let pt = InputDistribution::point(x).expect("finite atom");
                p * entropy_of(t.i_range().map(|i| bin_pmf(&pt, &run.ch, u_lo, u_hi, i)))
            })
            .sum();
        binned += (joint - cond) / u_bins as f64;
    }
    let exact = mutual_information(&run.input, &run.ch, &QuadratureSpec::default())?.value;
    let binning_bias = (exact - binned).abs();
    let std_error = var.sqrt();
    Ok(MiEstimate {
        value,
        error: 2.0 * std_error + binning_bias,
        std_error,
        binning_bias,
    })
}

/// Monte Carlo Fisher information: the mean squared score `d/dx ln f_Z(z - x)`
/// over simulated `z = N + U`.
pub fn fisher_score_estimate(ch: &ChannelParams, seed: u64, n_samples: u64) -> Result<Estimate> {
    let run = SimRun::new(seed, n_samples, InputDistribution::point(0.0)?, *ch)?;
    let sampler = Sampler::new(&run);
    let chunks = n_samples.div_ceil(CHUNK);
    let (s1, s2) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n_samples);
            let mut rng = sampler.rng_at(start);
            let mut a = 0.0;
            let mut b = 0.0;
            for _ in start..end {
                let s = sampler.draw(&mut rng);
                let z = s.y_tilde + s.u;
                let score = crate::channel::noise_pdf_dx(z, 0.0, ch) / crate::channel::noise_pdf(z, ch);
                let v = score * score;
                if v.is_finite() {
                    a += v;
                    b += v * v;
                }
            }
            (a, b)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let n = n_samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok(Estimate {
        value: mean,
        error: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(input: InputDistribution, sigma: f64, delta: f64, n: u64, seed: u64) -> SimRun {
        SimRun::new(seed, n, input, ChannelParams::new(sigma, delta).unwrap()).unwrap()
    }

    #[test]
    fn bin_pmf_sums_to_one() {
        let ch = ChannelParams::new(1.0, 0.7).unwrap();
        let d = InputDistribution::antipodal(1.3).unwrap();
        let s: f64 = (-40..40).map(|i| bin_pmf(&d, &ch, -0.1, 0.05, i)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tally_is_deterministic_and_complete() {
        let r = run(InputDistribution::antipodal(1.0).unwrap(), 1.0, 1.0, 100_003, 3);
        let a = tally(&r, 4).unwrap();
        let b = tally(&r, 4).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.total, 100_003);
        assert_eq!(a.counts.iter().sum::<u64>(), 100_003);
    }

    #[test]
    fn pmf_check_passes_and_detects_missing_dither() {
        let r = run(InputDistribution::antipodal(1.0).unwrap(), 1.0, 1.0, 1_000_000, 42);
        let rep = conditional_pmf_check(&r, 8, 4.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = conditional_pmf_check(&r.clone().withhold_dither(), 8, 4.0).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn pmf_check_reports_small_cells() {
        let r = run(InputDistribution::antipodal(1.0).unwrap(), 1.0, 1.0, 2_000, 42);
        assert!(matches!(
            conditional_pmf_check(&r, 8, 4.0),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn entropy_identity_single_atom() {
        let r = run(InputDistribution::point(0.0).unwrap(), 1.0, 1.0, 1_000_000, 5);
        let rep = entropy_identity_check(&r, &QuadratureSpec::default()).unwrap();
        assert!(rep.pass, "{rep:?}");
        // one atom: both identities coincide
        assert!((rep.given_u.estimate - rep.given_u_x.estimate).abs() < 1e-12);
    }

    #[test]
    fn mi_single_atom_is_zero() {
        let r = run(InputDistribution::point(0.3).unwrap(), 1.0, 1.0, 200_000, 9);
        let m = mi_estimate(&r, 4).unwrap();
        assert!(m.value.abs() <= m.error + 1e-12, "{m:?}");
    }

    #[test]
    fn fisher_score_matches_quadrature() {
        let ch = ChannelParams::new(1.0, 1.0).unwrap();
        let est = fisher_score_estimate(&ch, 11, 400_000).unwrap();
        let want = 2.0 * crate::low_snr::low_snr_slope(&ch, &QuadratureSpec::default()).unwrap();
        assert!((est.value - want).abs() < 4.0 * est.error, "{est:?} vs {want}");
    }
}
