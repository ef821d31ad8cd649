//! Reproducible sample streams.
//!
//! Generator: ChaCha8 (`rand_chacha`) keyed by `seed_from_u64(seed)`. Sample
//! `k` reads four 64-bit words starting at word position `8 k`, so any
//! sample can be regenerated on its own and chunked parallel runs see the
//! same values as a serial pass. Word order per sample: atom pick, two
//! Box–Muller uniforms, dither. The transcendental calls go through `libm`
//! so the stream does not depend on the platform's math library.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{quantize, ChannelParams};
use crate::error::{Error, Result};
use crate::info::InputDistribution;

const WORDS_PER_SAMPLE: u128 = 8;

/// Whether the dither is added before the quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dither {
    Applied,
    /// Negative control: `u` is still drawn and reported, but the quantizer
    /// never sees it.
    Withheld,
}

/// One seeded simulation of `X -> X + N -> floor((X + N + U) / delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub seed: u64,
    pub n_samples: u64,
    pub input: InputDistribution,
    pub ch: ChannelParams,
    pub dither: Dither,
}

impl SimRun {
    pub fn new(seed: u64, n_samples: u64, input: InputDistribution, ch: ChannelParams) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
        }
        Ok(Self {
            seed,
            n_samples,
            input,
            ch,
            dither: Dither::Applied,
        })
    }

    pub fn withhold_dither(mut self) -> Self {
        self.dither = Dither::Withheld;
        self
    }
}

/// One channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x: f64,
    /// Dither, in `[-delta/2, delta/2)`.
    pub u: f64,
    /// `floor((y_tilde + u) / delta)` when the dither is applied.
    pub y_index: i64,
    /// `x + n`, before dither and quantizer.
    pub y_tilde: f64,
    /// Index of `x` among the input atoms.
    pub atom: usize,
}

#[inline]
fn unit(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stateless sampler; cheap to share across threads.
#[derive(Debug, Clone)]
pub(crate) struct Sampler {
    base: ChaCha8Rng,
    xs: Vec<f64>,
    cum: Vec<f64>,
    sigma: f64,
    delta: f64,
    dither: Dither,
}

impl Sampler {
    pub(crate) fn new(run: &SimRun) -> Self {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = run
            .input
            .atoms()
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cum.last_mut() {
            *last = f64::INFINITY;
        }
        Self {
            base: ChaCha8Rng::seed_from_u64(run.seed),
            xs: run.input.atoms().iter().map(|&(x, _)| x).collect(),
            cum,
            sigma: run.ch.sigma(),
            delta: run.ch.delta(),
            dither: run.dither,
        }
    }

    /// Generator positioned at sample `start`.
    pub(crate) fn rng_at(&self, start: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_word_pos(start as u128 * WORDS_PER_SAMPLE);
        rng
    }

    /// Next sample from a generator positioned by [`Sampler::rng_at`].
    #[inline]
    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> SampleRecord {
        let pick = unit(rng.next_u64());
        let u1 = 1.0 - unit(rng.next_u64());
        let u2 = unit(rng.next_u64());
        let ud = unit(rng.next_u64());
        let atom = self.cum.partition_point(|&c| c <= pick).min(self.xs.len() - 1);
        let x = self.xs[atom];
        let n = self.sigma * libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2);
        let u = self.delta * (ud - 0.5);
        let y_tilde = x + n;
        let y_index = match self.dither {
            Dither::Applied => quantize(y_tilde + u, self.delta),
            Dither::Withheld => quantize(y_tilde, self.delta),
        };
        SampleRecord {
            x,
            u,
            y_index,
            y_tilde,
            atom,
        }
    }
}

/// Sample stream of `run`, in index order.
pub fn simulate(run: &SimRun) -> impl Iterator<Item = SampleRecord> + '_ {
    let s = Sampler::new(run);
    let mut rng = s.rng_at(0);
    (0..run.n_samples).map(move |_| s.draw(&mut rng))
}

/// Sample `index` of `run`, without generating the ones before it.
pub fn sample_at(run: &SimRun, index: u64) -> SampleRecord {
    let s = Sampler::new(run);
    s.draw(&mut s.rng_at(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seed: u64, n: u64) -> SimRun {
        SimRun::new(
            seed,
            n,
            InputDistribution::antipodal(1.0).unwrap(),
            ChannelParams::new(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_and_random_access() {
        let r = run(7, 1000);
        let a: Vec<_> = simulate(&r).collect();
        let b: Vec<_> = simulate(&r).collect();
        assert_eq!(a, b);
        for k in [0u64, 1, 63, 64, 500, 999] {
            assert_eq!(sample_at(&r, k), a[k as usize]);
        }
        let c: Vec<_> = simulate(&run(8, 1000)).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn record_invariants() {
        let r = run(1, 10_000);
        for s in simulate(&r) {
            assert!(s.u.abs() <= 0.5);
            assert_eq!(s.y_index, ((s.y_tilde + s.u) / 1.0).floor() as i64);
            assert!(s.x == 1.0 || s.x == -1.0);
        }
        assert!(SimRun::new(1, 0, InputDistribution::point(0.0).unwrap(), r.ch).is_err());
    }

    #[test]
    fn near_noiseless_split() {
        // all mass at 0 and almost no noise: the index is 0 exactly when u >= 0
        let r = SimRun::new(
            42,
            1_000_000,
            InputDistribution::point(0.0).unwrap(),
            ChannelParams::new(1e-12, 1.0).unwrap(),
        )
        .unwrap();
        let mut zeros = 0u64;
        let mut sum_u = 0.0;
        for s in simulate(&r) {
            assert!(s.y_index == 0 || s.y_index == -1);
            zeros += (s.y_index == 0) as u64;
            sum_u += s.u;
        }
        let n = r.n_samples as f64;
        let se = (0.25 / n).sqrt();
        assert!((zeros as f64 / n - 0.5).abs() < 3.0 * se);
        assert!((sum_u / n).abs() < 3.0 / (12.0 * n).sqrt());
    }
}
