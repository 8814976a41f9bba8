//! Counter-based random streams.
//!
//! A stream is the ChaCha8 keystream keyed by the master seed, with the
//! 64-bit ChaCha nonce set to the stream id. Draw `n` of stream `(s, i)` is a
//! pure function of `(s, i, n)`, so replications can be scheduled on any
//! worker in any order without changing their output.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::space::Point;

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Builds the stream `(master_seed, stream_id)` positioned at counter 0.
pub fn make_stream(master_seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(master_seed, stream_id)
}

/// Stream id for a sub-task (e.g. one lineage) of a replication.
///
/// SplitMix64 finalizer over the pair; distinct pairs map to distinct ids
/// except with probability ~2^-64.
pub fn derive_stream_id(replication: u64, lineage: u64) -> u64 {
    let mut z = replication
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(lineage)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        RngStream {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    #[inline]
    pub(crate) fn unit_exponential(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    /// Exponential waiting time with the given rate.
    pub fn sample_exponential(&mut self, rate: f64) -> Result<f64> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::domain("rate", format!("must be positive and finite, got {rate}")));
        }
        Ok(self.unit_exponential() / rate)
    }

    /// Brownian increment over `dt` with per-axis standard deviation `sigma·√dt`.
    pub fn sample_gaussian_step(&mut self, sigma: f64, dt: f64, d: usize) -> Result<Point> {
        if !(1..=3).contains(&d) {
            return Err(Error::domain("d", format!("dimension must be 1..=3, got {d}")));
        }
        if !(sigma >= 0.0) || !(dt >= 0.0) {
            return Err(Error::domain("sigma/dt", format!("need sigma ≥ 0, dt ≥ 0; got {sigma}, {dt}")));
        }
        Ok(self.gaussian_step_unchecked(sigma * dt.sqrt(), d))
    }

    #[inline]
    pub(crate) fn gaussian_step_unchecked(&mut self, scale: f64, d: usize) -> Point {
        let mut out = [0.0; 3];
        if scale > 0.0 {
            for v in out.iter_mut().take(d) {
                *v = scale * self.standard_normal();
            }
        }
        out
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn same_pair_is_bit_identical() {
        let mut a = make_stream(42, 0);
        let mut b = make_stream(42, 0);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        assert_eq!(a.counter(), b.counter());
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = make_stream(42, 0);
        let mut b = make_stream(42, 1);
        let xa: Vec<u64> = (0..10_000).map(|_| a.uniform().to_bits()).collect();
        let xb: Vec<u64> = (0..10_000).map(|_| b.uniform().to_bits()).collect();
        assert_ne!(xa, xb);
        let same = xa.iter().zip(&xb).filter(|(x, y)| x == y).count();
        assert!(same < 3);
    }

    #[test]
    fn counter_starts_at_zero_and_advances() {
        let mut s = make_stream(1, 2);
        assert_eq!(s.counter(), 0);
        s.uniform();
        assert!(s.counter() > 0);
        assert_eq!(s.master_seed(), 1);
        assert_eq!(s.stream_id(), 2);
    }

    #[test]
    fn uniform_mean_in_clt_band() {
        let mut s = make_stream(42, 7);
        let mean = (0..1_000_000).map(|_| s.uniform()).sum::<f64>() / 1e6;
        assert!((0.4985..=0.5015).contains(&mean), "mean {mean}");
    }

    #[test]
    fn exponential_mean_and_median() {
        let mut s = make_stream(3, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| s.sample_exponential(1.0).unwrap()).collect();
        let (m, _) = mean_var(&xs);
        assert!((0.997..=1.003).contains(&m), "mean {m}");

        let mut s = make_stream(3, 1);
        let cut = std::f64::consts::LN_2 / 2.0;
        let frac = (0..1_000_000)
            .filter(|_| s.sample_exponential(2.0).unwrap() > cut)
            .count() as f64
            / 1e6;
        assert!((frac - 0.5).abs() <= 0.0015, "survival {frac}");
    }

    #[test]
    fn exponential_rejects_nonpositive_rate() {
        let mut s = make_stream(0, 0);
        assert!(matches!(s.sample_exponential(0.0), Err(Error::Domain { .. })));
        assert!(s.sample_exponential(-1.0).is_err());
        assert!(s.sample_exponential(f64::NAN).is_err());
    }

    #[test]
    fn exponential_ks_against_cdf() {
        let mut s = make_stream(11, 0);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.sample_exponential(1.0).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let f = 1.0 - (-x).exp();
            d = d.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        // Asymptotic KS critical value at alpha = 1e-3 is 1.9495/sqrt(n).
        assert!(d < 1.9495 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn gaussian_step_zero_sigma() {
        let mut s = make_stream(0, 0);
        assert_eq!(s.sample_gaussian_step(0.0, 1.0, 2).unwrap(), [0.0; 3]);
    }

    #[test]
    fn gaussian_step_variance_and_independence() {
        let mut s = make_stream(5, 0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| s.sample_gaussian_step(1.0, 4.0, 1).unwrap()[0])
            .collect();
        let (_, v) = mean_var(&xs);
        assert!((v - 4.0).abs() <= 0.02, "var {v}");

        let mut s = make_stream(5, 1);
        let pairs: Vec<Point> = (0..1_000_000)
            .map(|_| s.sample_gaussian_step(1.0, 1.0, 2).unwrap())
            .collect();
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p[1]).sum::<f64>() / n;
        let cov = pairs.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum::<f64>() / n;
        let sx = (pairs.iter().map(|p| (p[0] - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (pairs.iter().map(|p| (p[1] - my).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * sy);
        assert!(corr.abs() <= 0.003, "corr {corr}");
    }

    #[test]
    fn gaussian_step_rejects_bad_dimension() {
        let mut s = make_stream(0, 0);
        assert!(s.sample_gaussian_step(1.0, 1.0, 0).is_err());
        assert!(s.sample_gaussian_step(1.0, 1.0, 4).is_err());
        assert!(s.sample_gaussian_step(-1.0, 1.0, 2).is_err());
    }

    #[test]
    fn derived_ids_are_distinct() {
        let mut ids: Vec<u64> = (0..100)
            .flat_map(|r| (0..100).map(move |l| derive_stream_id(r, l)))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10_000);
    }
}
