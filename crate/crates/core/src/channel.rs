//! Discrete-time Poisson channel law, sampling, and the degraded wiretap pair.
//!
//! A channel use maps an emission intensity `x >= 0` to a count `y` drawn
//! from `Poisson(x + λ)`, where `λ` is the receiver's dark current. The
//! eavesdropper of a [`WiretapChannelPair`] sees the same input through a
//! larger dark current, which is exactly Bob's output plus independent
//! `Poisson(λ_E - λ_B)` noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tail mass discarded when truncating the unbounded output alphabet.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Below this mean, samples are drawn by sequential-search inversion.
const INVERSION_CUTOFF: f64 = 30.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ln(n!) - ln(sqrt(2 pi n) (n/e)^n) for n = 0..=15.
#[allow(clippy::excessive_precision)]
const STIRLING_ERROR: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_09,
    0.027_677_925_684_998_339_15,
    0.020_790_672_103_765_093_11,
    0.016_644_691_189_821_192_16,
    0.013_876_128_823_070_747_99,
    0.011_896_709_945_891_770_10,
    0.010_411_265_261_972_096_50,
    0.009_255_462_182_712_732_918,
    0.008_330_563_433_362_871_256,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_866,
    0.006_408_994_188_004_207_068,
    0.005_951_370_112_758_847_736,
    0.005_554_733_551_962_801_371,
];

fn stirling_error(n: u64) -> f64 {
    if n <= 15 {
        return STIRLING_ERROR[n as usize];
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/m) + m - x`, evaluated without cancellation when
/// `x` is close to `m`.
fn deviance(x: f64, m: f64) -> f64 {
    if x == 0.0 {
        return m;
    }
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        let mut j = 1;
        loop {
            ej *= v;
            let next = s + ej / f64::from(2 * j + 1);
            if next == s {
                return next;
            }
            s = next;
            j += 1;
            if j > 1000 {
                return s;
            }
        }
    }
    x * (x / m).ln() + m - x
}

/// Natural log of the Poisson mass `P(N = y)` for `N ~ Poisson(mean)`.
///
/// Uses the saddle-point form `-stirlerr(y) - bd0(y, m) - ln sqrt(2 pi y)`,
/// which keeps full relative precision for large counts.
pub fn poisson_log_pmf(mean: f64, y: u64) -> f64 {
    if mean == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if y == 0 {
        return -mean;
    }
    let yf = y as f64;
    -stirling_error(y) - deviance(yf, mean) - 0.5 * (LN_2PI + yf.ln())
}

/// Draws one `Poisson(mean)` variate.
///
/// Means below 30 use inversion by sequential search over the CDF; larger
/// means use Hörmann's transformed rejection with squeeze (PTRS). Only
/// `Rng::gen::<f64>()` is consumed, so a seeded ChaCha stream reproduces the
/// same counts on every platform.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < INVERSION_CUTOFF {
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        return k;
    }

    let log_mean = mean.ln();
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        let rhs = -mean + k * log_mean - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

fn ln_factorial(n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    stirling_error(n) + (nf + 0.5) * nf.ln() - nf + LN_SQRT_2PI
}

/// A sequence of nonnegative emission intensities, one per channel use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmplitudeSequence(Vec<f64>);

impl AmplitudeSequence {
    pub fn new(symbols: Vec<f64>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::domain("amplitude sequence must be nonempty"));
        }
        if let Some(bad) = symbols.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::domain(format!(
                "amplitude {bad} is not a finite nonnegative intensity"
            )));
        }
        Ok(AmplitudeSequence(symbols))
    }

    pub fn symbols(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Joins two blocks into one transmission.
    pub fn concat(&self, other: &AmplitudeSequence) -> AmplitudeSequence {
        let mut symbols = self.0.clone();
        symbols.extend_from_slice(&other.0);
        AmplitudeSequence(symbols)
    }
}

/// Memoryless Poisson observation law with a fixed dark current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonChannel {
    dark_current: f64,
}

impl PoissonChannel {
    pub fn new(dark_current: f64) -> Result<Self> {
        if !(dark_current.is_finite() && dark_current >= 0.0) {
            return Err(Error::domain(format!(
                "dark current must be finite and nonnegative, got {dark_current}"
            )));
        }
        Ok(PoissonChannel { dark_current })
    }

    pub fn dark_current(&self) -> f64 {
        self.dark_current
    }

    fn check_input(x: f64) -> Result<()> {
        if x.is_finite() && x >= 0.0 {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "input intensity must be finite and nonnegative, got {x}"
            )))
        }
    }

    /// Mean count for input `x`.
    pub fn mean(&self, x: f64) -> f64 {
        x + self.dark_current
    }

    pub fn log_pmf(&self, x: f64, y: u64) -> Result<f64> {
        Self::check_input(x)?;
        Ok(poisson_log_pmf(self.mean(x), y))
    }

    /// `W(y|x) = exp(-(x+λ)) (x+λ)^y / y!`.
    pub fn pmf(&self, x: f64, y: u64) -> Result<f64> {
        Ok(self.log_pmf(x, y)?.exp())
    }

    /// Log of the product law over a block of channel uses.
    pub fn sequence_log_likelihood(&self, x: &AmplitudeSequence, y: &[u64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::domain(format!(
                "input length {} does not match observation length {}",
                x.len(),
                y.len()
            )));
        }
        Ok(x.symbols()
            .iter()
            .zip(y)
            .map(|(&xt, &yt)| poisson_log_pmf(self.mean(xt), yt))
            .sum())
    }

    /// Draws an observation block; a pure function of `(self, x, seed)`.
    pub fn sample(&self, x: &AmplitudeSequence, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(x, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, x: &AmplitudeSequence, rng: &mut R) -> Vec<u64> {
        x.symbols()
            .iter()
            .map(|&xt| sample_poisson(self.mean(xt), rng))
            .collect()
    }

    /// Smallest `y_max` with `P(Y > y_max | x_max) < tail_tol`.
    ///
    /// A Chernoff bound locates a point past which the tail is certainly
    /// negligible; the tail is then accumulated downward by direct summation
    /// with the Chernoff remainder added, so the returned cutoff is certified.
    pub fn truncation_bound(&self, x_max: f64, tail_tol: f64) -> Result<u64> {
        Self::check_input(x_max)?;
        check_tail_tol(tail_tol)?;
        Ok(upper_cutoff(self.mean(x_max), tail_tol))
    }

    /// Largest `y_min` with `P(Y < y_min | x_min) < tail_tol`.
    pub fn lower_truncation_bound(&self, x_min: f64, tail_tol: f64) -> Result<u64> {
        Self::check_input(x_min)?;
        check_tail_tol(tail_tol)?;
        Ok(lower_cutoff(self.mean(x_min), tail_tol))
    }
}

fn check_tail_tol(tail_tol: f64) -> Result<()> {
    if tail_tol > 0.0 && tail_tol < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "tail tolerance must lie in (0, 1), got {tail_tol}"
        )))
    }
}

// Chernoff: P(N >= k) <= exp(-bd0(k, m)) for k >= m, and
// P(N <= k) <= exp(-bd0(k, m)) for k <= m.
fn chernoff(k: u64, mean: f64) -> f64 {
    (-deviance(k as f64, mean)).exp()
}

fn upper_cutoff(mean: f64, tail_tol: f64) -> u64 {
    if mean == 0.0 {
        return 0;
    }
    let slack = tail_tol * 1e-6;
    let mut k = mean.ceil() as u64 + 1;
    let mut step = 1u64;
    while chernoff(k, mean) >= slack {
        k += step;
        step = (step * 2).min(1 + (mean.sqrt() as u64));
    }
    // tail(y) = P(N > y); tail(k - 1) <= chernoff(k).
    let mut tail = chernoff(k, mean);
    let mut y = k - 1;
    while y > 0 {
        let next = tail + poisson_log_pmf(mean, y).exp();
        if next >= tail_tol {
            break;
        }
        tail = next;
        y -= 1;
    }
    y
}

fn lower_cutoff(mean: f64, tail_tol: f64) -> u64 {
    let slack = tail_tol * 1e-6;
    let top = mean.floor() as u64;
    if top == 0 || chernoff(0, mean) >= tail_tol {
        return 0;
    }
    // Largest k below the mean whose Chernoff bound is already negligible.
    let mut k = top;
    let mut step = 1u64;
    while k > 0 && chernoff(k, mean) >= slack {
        let s = step.min(k);
        k -= s;
        step = (step * 2).min(1 + (mean.sqrt() as u64));
    }
    if chernoff(k, mean) >= slack {
        return 0;
    }
    // head(y) = P(N < y); head(k + 1) <= chernoff(k).
    let mut head = chernoff(k, mean);
    let mut y = k + 1;
    loop {
        let next = head + poisson_log_pmf(mean, y).exp();
        if next >= tail_tol {
            return y;
        }
        head = next;
        y += 1;
    }
}

/// Bob's main channel together with Eve's degraded channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WiretapChannelPair {
    main: PoissonChannel,
    eavesdropper: PoissonChannel,
}

impl WiretapChannelPair {
    /// Rejects `λ_E < λ_B`: only the degraded direction is modeled.
    pub fn new(lambda_b: f64, lambda_e: f64) -> Result<Self> {
        let main = PoissonChannel::new(lambda_b)?;
        let eavesdropper = PoissonChannel::new(lambda_e)?;
        if lambda_e < lambda_b {
            return Err(Error::domain(format!(
                "eavesdropper dark current {lambda_e} is below the main dark current {lambda_b}; \
                 only degraded pairs (lambda_e >= lambda_b) are supported"
            )));
        }
        Ok(WiretapChannelPair { main, eavesdropper })
    }

    pub fn main(&self) -> &PoissonChannel {
        &self.main
    }

    pub fn eavesdropper(&self) -> &PoissonChannel {
        &self.eavesdropper
    }

    /// Mean of the Poisson noise `N` with `Z ~ Y + N`.
    pub fn degradation_noise(&self) -> f64 {
        self.eavesdropper.dark_current - self.main.dark_current
    }

    /// Eve's observation generated from Bob's by adding the degradation noise.
    pub fn degrade<R: Rng + ?Sized>(&self, bob: &[u64], rng: &mut R) -> Vec<u64> {
        let noise = self.degradation_noise();
        bob.iter().map(|&y| y + sample_poisson(noise, rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_tail(mean: f64, y: u64) -> f64 {
        // P(N > y) by summing the mass far past the mean.
        let stop = (mean + 60.0 * mean.sqrt() + 200.0) as u64;
        ((y + 1)..=stop).rev().map(|k| poisson_log_pmf(mean, k).exp()).sum()
    }

    #[test]
    fn pmf_examples() {
        let ch = PoissonChannel::new(1.0).unwrap();
        assert!((ch.pmf(0.0, 0).unwrap() - (-1.0f64).exp()).abs() < 1e-16);
        let zero = PoissonChannel::new(0.0).unwrap();
        assert_eq!(zero.pmf(0.0, 0).unwrap(), 1.0);
        assert_eq!(zero.pmf(0.0, 3).unwrap(), 0.0);
        let p = ch.pmf(2.0, 3).unwrap();
        assert!((p - 0.224_041_807_655_387_74).abs() < 1e-15, "{p}");
    }

    #[test]
    fn pmf_rejects_bad_inputs() {
        let ch = PoissonChannel::new(1.0).unwrap();
        assert!(matches!(ch.pmf(-0.5, 1), Err(Error::Domain(_))));
        assert!(matches!(ch.pmf(f64::NAN, 1), Err(Error::Domain(_))));
        assert!(PoissonChannel::new(-1.0).is_err());
    }

    #[test]
    fn ln_factorial_matches_summation() {
        for n in 0..200u64 {
            let direct: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            assert!((ln_factorial(n) - direct).abs() < 1e-11 * direct.max(1.0), "n = {n}");
        }
    }

    #[test]
    fn sequence_likelihood_examples() {
        let zero = PoissonChannel::new(0.0).unwrap();
        let x = AmplitudeSequence::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(zero.sequence_log_likelihood(&x, &[0, 0]).unwrap(), 0.0);

        let ch = PoissonChannel::new(1.0).unwrap();
        let x = AmplitudeSequence::new(vec![0.0]).unwrap();
        assert!((ch.sequence_log_likelihood(&x, &[0]).unwrap() + 1.0).abs() < 1e-15);

        let x = AmplitudeSequence::new(vec![2.0, 0.0]).unwrap();
        let ll = ch.sequence_log_likelihood(&x, &[3, 0]).unwrap();
        assert!((ll - (-2.495_922_603_223_726)).abs() < 1e-12, "{ll}");

        assert!(ch.sequence_log_likelihood(&x, &[3]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let zero = PoissonChannel::new(0.0).unwrap();
        let x = AmplitudeSequence::new(vec![0.0; 3]).unwrap();
        assert_eq!(zero.sample(&x, 99), vec![0, 0, 0]);

        let ch = PoissonChannel::new(1.0).unwrap();
        let x = AmplitudeSequence::new(vec![3.0]).unwrap();
        assert_eq!(ch.sample(&x, 7), ch.sample(&x, 7));

        let big = AmplitudeSequence::new(vec![200.0; 50]).unwrap();
        assert_eq!(ch.sample(&big, 11), ch.sample(&big, 11));
        assert_ne!(ch.sample(&big, 11), ch.sample(&big, 12));
    }

    #[test]
    fn sample_mean_and_variance_follow_the_law() {
        for (mean, seed) in [(5.0, 1u64), (29.5, 2), (30.0, 3), (250.0, 4)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_poisson(mean, &mut rng) as f64).collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {m} vs {mean}");
            assert!((v / mean - 1.0).abs() < 0.03, "variance {v} vs {mean}");
        }
    }

    #[test]
    fn sample_mean_large_run() {
        let ch = PoissonChannel::new(5.0).unwrap();
        let x = AmplitudeSequence::new(vec![0.0; 1_000_000]).unwrap();
        let y = ch.sample(&x, 1);
        let m = y.iter().sum::<u64>() as f64 / y.len() as f64;
        assert!((m - 5.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn degradation_noise_examples() {
        assert_eq!(WiretapChannelPair::new(1.0, 1.5).unwrap().degradation_noise(), 0.5);
        assert_eq!(WiretapChannelPair::new(2.0, 2.0).unwrap().degradation_noise(), 0.0);
        assert_eq!(WiretapChannelPair::new(1.0, 3.0).unwrap().degradation_noise(), 2.0);
        assert!(matches!(WiretapChannelPair::new(2.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn truncation_examples() {
        let zero = PoissonChannel::new(0.0).unwrap();
        assert_eq!(zero.truncation_bound(0.0, 1e-3).unwrap(), 0);

        for (lambda, x_max, tol) in [(1.0, 9.0, 1e-12), (0.5, 0.5, 1e-6), (3.0, 40.0, 1e-12)] {
            let ch = PoissonChannel::new(lambda).unwrap();
            let y_max = ch.truncation_bound(x_max, tol).unwrap();
            let mean = lambda + x_max;
            assert!(direct_tail(mean, y_max) < tol);
            assert!(direct_tail(mean, y_max - 1) >= tol, "cutoff {y_max} not minimal");
        }
        assert!(zero.truncation_bound(1.0, 0.0).is_err());
        assert!(zero.truncation_bound(1.0, 1.0).is_err());
    }

    #[test]
    fn lower_truncation_is_certified() {
        for mean in [0.5, 10.0, 1000.0, 10_000.0] {
            let ch = PoissonChannel::new(mean).unwrap();
            let y_min = ch.lower_truncation_bound(0.0, 1e-12).unwrap();
            let head: f64 = (0..y_min).map(|k| poisson_log_pmf(mean, k).exp()).sum();
            assert!(head < 1e-12, "mean {mean}: head {head}");
            let with_next = head + poisson_log_pmf(mean, y_min).exp();
            assert!(y_min == 0 || with_next >= 1e-12);
        }
    }

    #[test]
    fn normalization_and_mean_over_truncation() {
        for (lambda, x) in [(0.0, 0.5), (0.3, 4.0), (2.0, 25.0), (1.0, 300.0)] {
            let ch = PoissonChannel::new(lambda).unwrap();
            let y_max = ch.truncation_bound(x, DEFAULT_TAIL_TOL).unwrap();
            let (mass, mean) = (0..=y_max).fold((0.0, 0.0), |(s, m), y| {
                let p = ch.pmf(x, y).unwrap();
                (s + p, m + y as f64 * p)
            });
            assert!((1.0 - DEFAULT_TAIL_TOL - 1e-13..=1.0 + 1e-13).contains(&mass));
            assert!((mean - (x + lambda)).abs() < 1e-8 * (x + lambda).max(1.0));
        }
    }
}
