//! Random on-off codebooks for the two physical-layer blocks: a
//! transmission code carrying the coloring number over `n` channel uses and
//! a binned wiretap code carrying the color over `ceil(sqrt n)` uses.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{poisson_log_pmf, AmplitudeSequence, PoissonChannel, WiretapChannelPair};
use crate::error::{Error, Result};

/// Default cap on both codebook sizes.
pub const DEFAULT_CODE_CAP: u64 = 1 << 12;

/// Largest wiretap block length accepted by the exact leakage enumeration.
pub const LEAKAGE_MAX_BLOCK: usize = 4;
/// Largest codeword count accepted by the exact leakage enumeration.
pub const LEAKAGE_MAX_CODEWORDS: usize = 64;
/// Largest number of enumerated observation vectors.
pub const LEAKAGE_MAX_SUPPORT: u64 = 50_000_000;

/// Block length, rate backoff and capacity estimate of one construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBudget {
    n: usize,
    epsilon: f64,
    capacity: f64,
}

impl CodeBudget {
    pub fn new(n: usize, epsilon: f64, capacity: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::domain(format!("block length must be at least 4, got {n}")));
        }
        if !(capacity.is_finite() && epsilon.is_finite() && epsilon > 0.0 && epsilon < capacity) {
            return Err(Error::domain(format!(
                "need 0 < epsilon < capacity, got epsilon = {epsilon}, capacity = {capacity}"
            )));
        }
        Ok(CodeBudget { n, epsilon, capacity })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// `n'' = ceil(sqrt n)`.
    pub fn wiretap_length(&self) -> usize {
        let mut r = (self.n as f64).sqrt() as usize;
        while r * r < self.n {
            r += 1;
        }
        while r > 0 && (r - 1) * (r - 1) >= self.n {
            r -= 1;
        }
        r
    }

    /// `m = n + ceil(sqrt n)`.
    pub fn total_length(&self) -> usize {
        self.n + self.wiretap_length()
    }

    /// `log2` of the ideal transmission code size, `n (C - eps)`.
    pub fn ideal_transmission_log2(&self) -> f64 {
        self.n as f64 * (self.capacity - self.epsilon)
    }

    /// `log2` of the ideal wiretap code size, `sqrt(n) eps`.
    pub fn ideal_wiretap_log2(&self) -> f64 {
        (self.n as f64).sqrt() * self.epsilon
    }

    /// `min(ceil(2^{n (C - eps)}), cap)`.
    pub fn transmission_size(&self, cap: u64) -> u64 {
        capped_size(self.ideal_transmission_log2(), cap)
    }

    /// `min(ceil(2^{sqrt(n) eps}), cap)`.
    pub fn wiretap_size(&self, cap: u64) -> u64 {
        capped_size(self.ideal_wiretap_log2(), cap)
    }
}

fn capped_size(log2: f64, cap: u64) -> u64 {
    if log2 >= 63.0 {
        return cap;
    }
    (log2.exp2().ceil() as u64).min(cap)
}

fn check_peak(peak: f64) -> Result<()> {
    if peak.is_finite() && peak > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("peak amplitude must be positive, got {peak}")))
    }
}

fn fits(count: u64, length: usize) -> bool {
    length >= 64 || count <= 1u64 << length
}

/// `count` distinct uniform binary words of the given length.
fn draw_distinct(count: usize, length: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let w: Vec<bool> = (0..length).map(|_| rng.gen()).collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn to_sequence(word: &[bool], peak: f64) -> AmplitudeSequence {
    AmplitudeSequence::new(word.iter().map(|&b| if b { peak } else { 0.0 }).collect())
        .expect("on-off words are valid amplitude sequences")
}

/// Index of the most likely word, lowest index on ties.
fn most_likely(words: &[Vec<bool>], peak: f64, y: &[u64], channel: &PoissonChannel) -> usize {
    let off: Vec<f64> = y.iter().map(|&yt| poisson_log_pmf(channel.mean(0.0), yt)).collect();
    let on: Vec<f64> = y.iter().map(|&yt| poisson_log_pmf(channel.mean(peak), yt)).collect();
    let mut best = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (m, w) in words.iter().enumerate() {
        let ll: f64 = w.iter().enumerate().map(|(t, &b)| if b { on[t] } else { off[t] }).sum();
        if ll > best_ll {
            best_ll = ll;
            best = m;
        }
    }
    best
}

fn check_length(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "observation has length {got}, codebook block length is {expected}"
        )))
    }
}

/// Code carrying a message index over `n` uses of the main channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionCodebook {
    block_length: usize,
    peak: f64,
    seed: u64,
    words: Vec<Vec<bool>>,
}

impl TransmissionCodebook {
    /// `messages` distinct i.i.d. uniform on-off words.
    pub fn random(block_length: usize, messages: u64, peak: f64, seed: u64) -> Result<Self> {
        check_peak(peak)?;
        if block_length == 0 || messages == 0 {
            return Err(Error::infeasible("empty transmission code"));
        }
        if !fits(messages, block_length) {
            return Err(Error::infeasible(format!(
                "{messages} distinct words do not exist at block length {block_length}"
            )));
        }
        Ok(TransmissionCodebook {
            block_length,
            peak,
            seed,
            words: draw_distinct(messages as usize, block_length, seed),
        })
    }

    /// Sized `min(ceil(2^{n (C - eps)}), cap)` from the budget.
    pub fn build(budget: &CodeBudget, peak: f64, cap: u64, seed: u64) -> Result<Self> {
        let m = budget.transmission_size(cap);
        if m < 2 {
            return Err(Error::infeasible(format!("transmission code size {m} is below 2")));
        }
        Self::random(budget.n(), m, peak, seed)
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }
    pub fn message_count(&self) -> usize {
        self.words.len()
    }
    pub fn peak(&self) -> f64 {
        self.peak
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn codeword(&self, m: usize) -> Result<AmplitudeSequence> {
        self.words
            .get(m)
            .map(|w| to_sequence(w, self.peak))
            .ok_or_else(|| Error::domain(format!("message {m} out of range")))
    }

    /// Maximum-likelihood message; ties go to the lowest index.
    pub fn ml_decode(&self, y: &[u64], channel: &PoissonChannel) -> Result<usize> {
        check_length(self.block_length, y.len())?;
        Ok(most_likely(&self.words, self.peak, y, channel))
    }

    /// Codebook with words reordered so that new word `i` is old word `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != (0..self.words.len()).collect::<Vec<_>>() {
            return Err(Error::domain("not a permutation of the message indices"));
        }
        Ok(TransmissionCodebook {
            words: order.iter().map(|&i| self.words[i].clone()).collect(),
            ..self.clone()
        })
    }
}

/// Binned code: `R` words per secure message, stored bin-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiretapCodebook {
    block_length: usize,
    bin_size: usize,
    peak: f64,
    seed: u64,
    words: Vec<Vec<bool>>,
}

impl WiretapCodebook {
    pub fn random(block_length: usize, messages: u64, bin_size: usize, peak: f64, seed: u64) -> Result<Self> {
        check_peak(peak)?;
        if block_length == 0 || messages == 0 || bin_size == 0 {
            return Err(Error::infeasible("empty wiretap code"));
        }
        let total = messages.saturating_mul(bin_size as u64);
        if !fits(total, block_length) {
            return Err(Error::infeasible(format!(
                "{messages} bins of {bin_size} need {total} distinct words; only 2^{block_length} exist"
            )));
        }
        Ok(WiretapCodebook {
            block_length,
            bin_size,
            peak,
            seed,
            words: draw_distinct(total as usize, block_length, seed),
        })
    }

    /// Block length `ceil(sqrt n)`, `min(ceil(2^{sqrt(n) eps}), cap)` bins.
    pub fn build(budget: &CodeBudget, peak: f64, bin_size: usize, cap: u64, seed: u64) -> Result<Self> {
        let m = budget.wiretap_size(cap);
        if m < 2 {
            return Err(Error::infeasible(format!("wiretap code size {m} is below 2")));
        }
        Self::random(budget.wiretap_length(), m, bin_size, peak, seed)
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }
    pub fn message_count(&self) -> usize {
        self.words.len() / self.bin_size
    }
    pub fn bin_size(&self) -> usize {
        self.bin_size
    }
    pub fn codeword_count(&self) -> usize {
        self.words.len()
    }
    pub fn peak(&self) -> f64 {
        self.peak
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Word `r` of bin `k`.
    pub fn codeword(&self, k: usize, r: usize) -> Result<AmplitudeSequence> {
        if k >= self.message_count() || r >= self.bin_size {
            return Err(Error::domain(format!("codeword ({k}, {r}) out of range")));
        }
        Ok(to_sequence(&self.words[k * self.bin_size + r], self.peak))
    }

    /// Picks a uniform member of bin `k` with local randomness from `seed`.
    pub fn encode(&self, k: usize, seed: u64) -> Result<AmplitudeSequence> {
        self.encode_with(k, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn encode_with<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<AmplitudeSequence> {
        if k >= self.message_count() {
            return Err(Error::domain(format!(
                "secure message {k} out of range 0..{}",
                self.message_count()
            )));
        }
        let r = rng.gen_range(0..self.bin_size);
        self.codeword(k, r)
    }

    /// Bin of the maximum-likelihood word over all `M'' R` words.
    pub fn decode(&self, y: &[u64], channel: &PoissonChannel) -> Result<usize> {
        check_length(self.block_length, y.len())?;
        Ok(most_likely(&self.words, self.peak, y, channel) / self.bin_size)
    }

    /// The same words read as a plain code, one message per word.
    pub fn flattened(&self) -> TransmissionCodebook {
        TransmissionCodebook {
            block_length: self.block_length,
            peak: self.peak,
            seed: self.seed,
            words: self.words.clone(),
        }
    }

    /// `I(K; Y^{n''})` for a uniform secure message through `channel`, in bits.
    pub fn exact_information(&self, channel: &PoissonChannel, tail_tol: f64) -> Result<f64> {
        self.check_guard()?;
        block_information(self, channel, tail_tol)
    }

    /// `I(K; Z^{n''})` at the eavesdropper, in bits.
    pub fn exact_leakage(&self, pair: &WiretapChannelPair, tail_tol: f64) -> Result<f64> {
        self.exact_information(pair.eavesdropper(), tail_tol)
    }

    /// Whether the exact enumeration accepts this codebook's shape.
    pub fn enumeration_feasible(&self) -> bool {
        self.check_guard().is_ok()
    }

    fn check_guard(&self) -> Result<()> {
        if self.block_length > LEAKAGE_MAX_BLOCK {
            return Err(Error::EnumerationGuard(format!(
                "block length {} exceeds {LEAKAGE_MAX_BLOCK}",
                self.block_length
            )));
        }
        if self.words.len() > LEAKAGE_MAX_CODEWORDS {
            return Err(Error::EnumerationGuard(format!(
                "{} codewords exceed {LEAKAGE_MAX_CODEWORDS}",
                self.words.len()
            )));
        }
        Ok(())
    }
}

/// Sums `P(k) P(z|k) log2(P(z|k)/P(z))` over the truncated product support.
fn block_information(code: &WiretapCodebook, channel: &PoissonChannel, tail_tol: f64) -> Result<f64> {
    let messages = code.message_count();
    if messages == 1 {
        return Ok(0.0);
    }
    let per_coord = tail_tol / code.block_length as f64;
    let lo = channel.lower_truncation_bound(0.0, per_coord)?;
    let hi = channel.truncation_bound(code.peak, per_coord)?;
    let width = (hi - lo + 1) as usize;
    let support = (width as f64).powi(code.block_length as i32);
    if support > LEAKAGE_MAX_SUPPORT as f64 {
        return Err(Error::EnumerationGuard(format!(
            "{support:.3e} observation vectors exceed {LEAKAGE_MAX_SUPPORT}"
        )));
    }
    let row = |x: f64| -> Vec<f64> {
        let mean = channel.mean(x);
        let mut r: Vec<f64> = (lo..=hi).map(|y| poisson_log_pmf(mean, y).exp()).collect();
        let total: f64 = r.iter().sum();
        for w in &mut r {
            *w /= total;
        }
        r
    };
    let rows = [row(0.0), row(code.peak)];

    struct Walk<'a> {
        words: &'a [Vec<bool>],
        rows: &'a [Vec<f64>; 2],
        bin: usize,
        messages: usize,
        total: f64,
    }
    impl Walk<'_> {
        fn descend(&mut self, depth: usize, partial: &[f64]) {
            if depth == self.words[0].len() {
                self.leaf(partial);
                return;
            }
            let mut next = vec![0.0; partial.len()];
            for z in 0..self.rows[0].len() {
                let mut any = false;
                for ((out, p), w) in next.iter_mut().zip(partial).zip(self.words) {
                    *out = p * self.rows[w[depth] as usize][z];
                    any |= *out > 0.0;
                }
                if any {
                    self.descend(depth + 1, &next);
                }
            }
        }

        fn leaf(&mut self, likelihood: &[f64]) {
            let bins: Vec<f64> = likelihood
                .chunks(self.bin)
                .map(|c| c.iter().sum::<f64>() / self.bin as f64)
                .collect();
            let marginal = bins.iter().sum::<f64>() / self.messages as f64;
            for &pk in &bins {
                if pk > 0.0 {
                    self.total += pk * (pk / marginal).log2();
                }
            }
        }
    }

    let mut walk = Walk {
        words: &code.words,
        rows: &rows,
        bin: code.bin_size,
        messages,
        total: 0.0,
    };
    walk.descend(0, &vec![1.0; code.words.len()]);
    Ok((walk.total / messages as f64).max(0.0))
}
