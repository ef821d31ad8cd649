//! Power-constrained capacity by alternating maximization over a fixed input
//! grid.
//!
//! The output axis is discretized with Gauss–Legendre panels, which turns the
//! channel into a finite transition matrix. Each iteration multiplies the
//! input law by `exp(D_j - lambda x_j^2)`, where `D_j` is the divergence of
//! row `j` from the current output law and `lambda >= 0` is re-solved so that
//! the new law meets the average power target. The iteration stops when the
//! Lagrangian dual bound `max_j (D_j - lambda x_j^2) + lambda P` is within
//! `convergence_tol` of the achieved rate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::dual_upper_bound_optimized;
use crate::channel::{ChannelParams, GaussianNoise, NoiseModel, Peak, PowerConstraints};
use crate::error::{Error, Result};
use crate::info::{gaussian_capacity, mutual_information_with, InputDistribution};
use crate::numerics::{gauss_legendre, QuadratureSpec};

const GL_ORDER: usize = 16;
const PRUNE_BELOW: f64 = 1e-15;
const MAX_RELAXATION: f64 = 1e6;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Odd number of input grid points; the grid is symmetric and contains 0.
    pub grid_points: usize,
    pub convergence_tol: f64,
    pub max_iterations: usize,
    /// Search range for the average-power multiplier. An infinite upper end
    /// is grown by doubling.
    pub lagrange_bracket: (f64, f64),
    /// Grid half-width is at most this multiple of `sqrt(P)`.
    pub peak_proxy_multiplier: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_points: 129,
            convergence_tol: 1e-7,
            max_iterations: 5000,
            lagrange_bracket: (0.0, f64::INFINITY),
            peak_proxy_multiplier: 6.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 || self.grid_points % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid_points must be odd and >= 3, got {}",
                self.grid_points
            )));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "convergence_tol must be > 0, got {}",
                self.convergence_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        let (lo, hi) = self.lagrange_bracket;
        if !(lo >= 0.0 && lo.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "lagrange_bracket must satisfy 0 <= low < high, got ({lo}, {hi})"
            )));
        }
        if !(self.peak_proxy_multiplier > 0.0 && self.peak_proxy_multiplier.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "peak_proxy_multiplier must be > 0, got {}",
                self.peak_proxy_multiplier
            )));
        }
        Ok(())
    }
}

/// Outcome of a capacity computation. Rates are in nats per channel use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub rate: f64,
    pub distribution: InputDistribution,
    pub iterations: usize,
    pub duality_gap_estimate: f64,
    pub power_used: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub lagrange_multiplier: f64,
    /// Rate of the discretized channel after each iteration.
    pub rate_trace: Vec<f64>,
}

/// Input grid half-width: `min(A, m sqrt(P))`.
pub fn grid_half_width(p: &PowerConstraints, cfg: &SolverConfig) -> f64 {
    let proxy = cfg.peak_proxy_multiplier * p.avg_power().sqrt();
    match p.peak() {
        Peak::Bounded(a) => a.min(proxy),
        Peak::Unbounded => proxy,
    }
}

fn input_grid(half: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|j| half * (2.0 * j as f64 - m) / m).collect()
}

/// Gauss–Legendre nodes and weights covering every input's output window.
fn output_nodes<N: NoiseModel>(xs: &[f64], noise: &N) -> (Vec<f64>, Vec<f64>) {
    let l = noise.half_support();
    let s = noise.scale();
    let lo = xs[0] - l;
    let hi = xs[xs.len() - 1] + l;
    let mut fine: Vec<(f64, f64)> = Vec::new();
    for f in noise.features() {
        for &x in xs {
            let c = x + f;
            fine.push(((c - 10.0 * s).max(lo), (c + 10.0 * s).min(hi)));
        }
    }
    fine.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in fine {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let mut panels: Vec<(f64, f64)> = Vec::new();
    let mut cursor = lo;
    for (a, b) in merged {
        if a > cursor {
            panels.push((cursor, a));
        }
        let k = ((b - a) / s).ceil().max(1.0) as usize;
        let w = (b - a) / k as f64;
        for i in 0..k {
            panels.push((a + i as f64 * w, if i + 1 == k { b } else { a + (i + 1) as f64 * w }));
        }
        cursor = b;
    }
    if hi > cursor {
        panels.push((cursor, hi));
    }
    let (gx, gw) = gauss_legendre(GL_ORDER);
    let mut ys = Vec::with_capacity(panels.len() * GL_ORDER);
    let mut ws = Vec::with_capacity(panels.len() * GL_ORDER);
    for (a, b) in panels {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for (x, w) in gx.iter().zip(&gw) {
            ys.push(c + h * x);
            ws.push(h * w);
        }
    }
    (ys, ws)
}

/// Row-stochastic transition matrix of the discretized channel.
struct Discretized {
    n: usize,
    m: usize,
    t: Vec<f64>,
    /// `sum_k T_jk ln T_jk`
    self_info: Vec<f64>,
}

impl Discretized {
    fn new<N: NoiseModel>(xs: &[f64], noise: &N) -> Self {
        let (ys, ws) = output_nodes(xs, noise);
        let n = xs.len();
        let m = ys.len();
        let l = noise.half_support();
        let mut t = vec![0.0; n * m];
        let mut self_info = vec![0.0; n];
        for (j, &x) in xs.iter().enumerate() {
            let row = &mut t[j * m..(j + 1) * m];
            let mut sum = 0.0;
            for k in 0..m {
                let z = ys[k] - x;
                if z.abs() <= l {
                    row[k] = ws[k] * noise.pdf(z);
                    sum += row[k];
                }
            }
            let mut si = 0.0;
            for v in row.iter_mut() {
                *v /= sum;
                if *v > 0.0 {
                    si += *v * v.ln();
                }
            }
            self_info[j] = si;
        }
        Self { n, m, t, self_info }
    }

    /// Per-row divergence `D_j` from the output law induced by `p`.
    fn divergences(&self, p: &[f64], d: &mut [f64], ln_r: &mut [f64]) {
        ln_r.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let pj = p[j];
            if pj == 0.0 {
                continue;
            }
            let row = &self.t[j * self.m..(j + 1) * self.m];
            for (r, &tv) in ln_r.iter_mut().zip(row) {
                *r += pj * tv;
            }
        }
        for r in ln_r.iter_mut() {
            *r = r.max(f64::MIN_POSITIVE).ln();
        }
        for j in 0..self.n {
            let row = &self.t[j * self.m..(j + 1) * self.m];
            let cross: f64 = row.iter().zip(ln_r.iter()).map(|(t, r)| t * r).sum();
            d[j] = self.self_info[j] - cross;
        }
    }
}

impl Discretized {
    /// Damped Newton ascent step on the current support, holding the total
    /// mass fixed and, when it binds, the power. Returns the new law, its
    /// divergences and rate if the rate increases.
    /// Newton direction on `free` with the mass (and, if binding, power)
    /// constraint held fixed.
    fn kkt_direction(
        &self,
        free: &[usize],
        d: &[f64],
        x2: &[f64],
        inv_sqrt: &[f64],
        power_bound: bool,
    ) -> Option<Vec<f64>> {
        let f = free.len();
        if f < 2 {
            return None;
        }
        let w = DMatrix::from_fn(f, self.m, |i, k| self.t[free[i] * self.m + k] * inv_sqrt[k]);
        // negative Hessian of the rate on the free coordinates
        let neg_h = &w * w.transpose();
        let nc = if power_bound { 2 } else { 1 };
        let reg = 1e-12 * (0..f).map(|i| neg_h[(i, i)]).fold(0.0, f64::max) + 1e-300;
        let mut kkt = DMatrix::zeros(f + nc, f + nc);
        let mut rhs = DVector::zeros(f + nc);
        for i in 0..f {
            for k in 0..f {
                kkt[(i, k)] = neg_h[(i, k)];
            }
            kkt[(i, i)] += reg;
            kkt[(i, f)] = 1.0;
            kkt[(f, i)] = 1.0;
            if power_bound {
                kkt[(i, f + 1)] = x2[free[i]];
                kkt[(f + 1, i)] = x2[free[i]];
            }
            rhs[i] = d[free[i]];
        }
        let sol = kkt.lu().solve(&rhs)?;
        let dir: Vec<f64> = (0..f).map(|i| sol[i]).collect();
        dir.iter().all(|v| v.is_finite()).then_some(dir)
    }

    fn newton_step(
        &self,
        p: &[f64],
        d: &[f64],
        rate: f64,
        x2: &[f64],
        target: f64,
        lambda: f64,
    ) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        // support, plus any point whose penalized divergence beats the average
        let nu: f64 = (0..self.n).map(|j| p[j] * (d[j] - lambda * x2[j])).sum();
        let free: Vec<usize> = (0..self.n)
            .filter(|&j| p[j] > 1e-12 || d[j] - lambda * x2[j] > nu)
            .collect();
        let mut free = free;
        let power: f64 = p.iter().zip(x2).map(|(p, x)| p * x).sum();
        let power_bound = power >= target * (1.0 - 1e-9);
        let mut r = vec![0.0; self.m];
        for j in 0..self.n {
            let row = &self.t[j * self.m..(j + 1) * self.m];
            for (rk, &tv) in r.iter_mut().zip(row) {
                *rk += p[j] * tv;
            }
        }
        let inv_sqrt: Vec<f64> = r
            .iter()
            .map(|&v| if v > 0.0 { v.sqrt().recip() } else { 0.0 })
            .collect();
        // drop empty points the direction wants to push negative, then re-solve
        let dir = loop {
            let dir = self.kkt_direction(&free, d, x2, &inv_sqrt, power_bound)?;
            let before = free.len();
            let keep: Vec<usize> = (0..free.len())
                .filter(|&i| !(p[free[i]] <= 1e-12 && dir[i] < 0.0))
                .collect();
            if keep.len() == before {
                break dir;
            }
            free = keep.into_iter().map(|i| free[i]).collect();
        };
        let f = free.len();
        let slope: f64 = (0..f).map(|i| d[free[i]] * dir[i]).sum();
        if !(slope > 0.0) {
            return None;
        }
        let mut t_max: f64 = 1.0;
        for i in 0..f {
            if dir[i] < 0.0 {
                t_max = t_max.min(p[free[i]] / -dir[i]);
            }
        }
        if !power_bound {
            let dp: f64 = (0..f).map(|i| x2[free[i]] * dir[i]).sum();
            if dp > 0.0 {
                t_max = t_max.min((target - power) / dp);
            }
        }
        let mut t = t_max;
        let mut cand = p.to_vec();
        let mut dc = vec![0.0; self.n];
        let mut ln_r = vec![0.0; self.m];
        for _ in 0..30 {
            for i in 0..f {
                cand[free[i]] = (p[free[i]] + t * dir[i]).max(0.0);
            }
            self.divergences(&cand, &mut dc, &mut ln_r);
            let rc: f64 = cand.iter().zip(&dc).map(|(p, d)| p * d).sum();
            if rc >= rate + 1e-4 * t * slope {
                return Some((cand, dc, rc));
            }
            t *= 0.5;
        }
        None
    }
}

/// Second moment of the law `prop. to exp(a_j - lambda x_j^2)`.
fn tilted_power(a: &[f64], x2: &[f64], lambda: f64) -> f64 {
    let m = a
        .iter()
        .zip(x2)
        .map(|(a, x)| a - lambda * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, x) in a.iter().zip(x2) {
        let w = (a - lambda * x - m).exp();
        num += w * x;
        den += w;
    }
    num / den
}

/// Smallest multiplier in the bracket whose tilted law meets the power target.
fn solve_multiplier(a: &[f64], x2: &[f64], target: f64, bracket: (f64, f64), hint: f64) -> Result<f64> {
    let (low, high) = bracket;
    if tilted_power(a, x2, low) <= target {
        return Ok(low);
    }
    let mut lo = low;
    let mut hi;
    if high.is_finite() {
        hi = high;
        if tilted_power(a, x2, hi) > target {
            return Err(Error::InfeasibleBracket { low, high, target });
        }
    } else {
        hi = hint.max(low).max(1e-3 / target.max(1e-300));
        while tilted_power(a, x2, hi) > target {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::InfeasibleBracket { low, high, target });
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-14 * hi {
            break;
        }
        if tilted_power(a, x2, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Normalized law `prop. to exp(a_j - lambda x_j^2)`.
fn tilt_into(a: &[f64], x2: &[f64], lambda: f64, out: &mut [f64]) {
    let mx = a
        .iter()
        .zip(x2)
        .map(|(a, x)| a - lambda * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for ((o, a), x) in out.iter_mut().zip(a).zip(x2) {
        *o = (a - lambda * x - mx).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// `min over lambda >= 0 of max_j (D_j - lambda x_j^2) + lambda P`, an upper
/// bound on the grid-restricted capacity. The envelope is convex and piecewise
/// linear in `lambda`; its minimum is located by bisection on the subgradient.
fn dual_certificate(d: &[f64], x2: &[f64], target: f64, hint: f64) -> (f64, f64) {
    let eval = |lam: f64| {
        let mut best = f64::NEG_INFINITY;
        let mut slope = 0.0;
        for (dj, xj) in d.iter().zip(x2) {
            let v = dj - lam * xj;
            if v > best {
                best = v;
                slope = target - xj;
            }
        }
        (best + lam * target, slope)
    };
    let (u0, s0) = eval(0.0);
    if s0 >= 0.0 {
        return (u0, 0.0);
    }
    let mut lo = 0.0;
    let mut hi = hint.max(1e-9);
    while eval(hi).1 < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return (u0, 0.0);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid).1 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    [lo, hi, hint]
        .into_iter()
        .map(|l| (eval(l).0, l))
        .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
}

/// Capacity of `X -> X + N` over a grid, for any additive noise law. The
/// caller supplies the upper bound to report.
pub fn capacity_with_noise<N: NoiseModel>(
    p: &PowerConstraints,
    noise: &N,
    cfg: &SolverConfig,
    upper_bound: f64,
) -> Result<CapacityResult> {
    cfg.validate()?;
    let target = p.avg_power();
    if target == 0.0 {
        return Ok(CapacityResult {
            rate: 0.0,
            distribution: InputDistribution::point(0.0)?,
            iterations: 0,
            duality_gap_estimate: 0.0,
            power_used: 0.0,
            upper_bound,
            lower_bound: 0.0,
            lagrange_multiplier: cfg.lagrange_bracket.0,
            rate_trace: Vec::new(),
        });
    }
    let xs = input_grid(grid_half_width(p, cfg), cfg.grid_points);
    let x2: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let chan = Discretized::new(&xs, noise);
    let n = xs.len();

    let mut prob = vec![1.0 / n as f64; n];
    let mut d = vec![0.0; n];
    let mut ln_r = vec![0.0; chan.m];
    let mut cand = vec![0.0; n];
    let mut d_cand = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut step_lambda = cfg.lagrange_bracket.0;
    let mut lambda;
    let mut trace: Vec<f64> = Vec::new();
    let mut gap;
    let mut converged = false;
    let mut iterations = 0;
    // over-relaxation exponent; 1 is the plain alternating-maximization step
    let mut gamma = 1.0;

    chan.divergences(&prob, &mut d, &mut ln_r);
    loop {
        let prev = trace.last().copied();
        let mut rate;
        loop {
            for j in 0..n {
                a[j] = prob[j].max(1e-300).ln() + gamma * d[j];
            }
            let (lo, hi) = cfg.lagrange_bracket;
            let mu = solve_multiplier(&a, &x2, target, (gamma * lo, gamma * hi), step_lambda * gamma)?;
            tilt_into(&a, &x2, mu, &mut cand);
            chan.divergences(&cand, &mut d_cand, &mut ln_r);
            rate = cand.iter().zip(&d_cand).map(|(p, d)| p * d).sum::<f64>();
            // the plain step never decreases the rate once the law is feasible
            if gamma == 1.0 || prev.map_or(true, |r| rate >= r) {
                step_lambda = mu / gamma;
                gamma = (gamma * 1.5).min(MAX_RELAXATION);
                break;
            }
            gamma = (gamma / 4.0).max(1.0);
        }
        std::mem::swap(&mut prob, &mut cand);
        std::mem::swap(&mut d, &mut d_cand);
        let nt = chan.newton_step(&prob, &d, rate, &x2, target, step_lambda);
        if let Some((np, nd, nr)) = nt {
            prob = np;
            d = nd;
            rate = nr;
        }
        iterations += 1;
        trace.push(rate);

        let (dual, lam) = dual_certificate(&d, &x2, target, step_lambda);
        lambda = lam;
        gap = (dual - rate).max(0.0);
        if gap <= cfg.convergence_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
    }

    let kept: Vec<(f64, f64)> = xs
        .iter()
        .zip(&prob)
        .filter(|(_, &p)| p >= PRUNE_BELOW)
        .map(|(&x, &p)| (x, p))
        .collect();
    let distribution = InputDistribution::normalized(kept)?;
    let rate = mutual_information_with(&distribution, noise, &QuadratureSpec::default())?
        .value
        .max(0.0);
    let result = CapacityResult {
        rate,
        power_used: distribution.second_moment(),
        distribution,
        iterations,
        duality_gap_estimate: gap,
        upper_bound,
        lower_bound: rate,
        lagrange_multiplier: lambda,
        rate_trace: trace,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence {
            iterations,
            gap,
            best: Box::new(result),
        })
    }
}

/// Capacity of the dithered quantized channel under `p`.
pub fn capacity(p: &PowerConstraints, ch: &ChannelParams, cfg: &SolverConfig) -> Result<CapacityResult> {
    let gauss = gaussian_capacity(&PowerConstraints::unbounded(p.avg_power())?, ch.sigma())?;
    let dual = dual_upper_bound_optimized(p, ch).value;
    capacity_with_noise(p, ch, cfg, gauss.min(dual))
}

/// Capacity of the unquantized Gaussian channel on the same grid.
pub fn unquantized_capacity_numeric(p: &PowerConstraints, sigma: f64, cfg: &SolverConfig) -> Result<CapacityResult> {
    let noise = GaussianNoise::new(sigma)?;
    let gauss = gaussian_capacity(&PowerConstraints::unbounded(p.avg_power())?, sigma)?;
    capacity_with_noise(p, &noise, cfg, gauss)
}

/// One independent capacity run per channel, in input order.
pub fn capacity_sweep(
    p: &PowerConstraints,
    ch_list: &[ChannelParams],
    cfg: &SolverConfig,
) -> Result<Vec<(f64, Result<CapacityResult>)>> {
    if ch_list.is_empty() {
        return Err(Error::InvalidParameter(
            "capacity sweep needs at least one channel".into(),
        ));
    }
    cfg.validate()?;
    Ok(ch_list
        .par_iter()
        .map(|ch| (ch.delta(), capacity(p, ch, cfg)))
        .collect())
}
