//! Coloring functions for identification.
//!
//! An identity is a polynomial of degree `< k1` over `GF(q1)`. A coloring
//! number `j = (j1, j2)` selects a color in two stages: the identity is
//! evaluated at `j1`, the resulting outer symbol is written as `k2` base-`q2`
//! digits, and those digits are evaluated as a polynomial at `j2` over
//! `GF(q2)`. Two distinct identities share a color for at most a
//! `(k1-1)/q1 + (k2-1)/q2` fraction of coloring numbers.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phycode::CodeBudget;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Largest prime `<= n`, if any.
pub fn prev_prime(n: u64) -> Option<u64> {
    (2..=n).rev().find(|&c| is_prime(c))
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Horner evaluation of `sum c_t z^t` over `GF(q)`; `coeffs[0]` is the
/// constant term.
fn horner(coeffs: impl DoubleEndedIterator<Item = u64>, z: u64, q: u64) -> u64 {
    coeffs.rev().fold(0, |acc, c| (mul_mod(acc, z, q) + c) % q)
}

/// Parameters `(q1, k1, q2, k2)` of the two-stage coloring family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagScheme {
    q1: u64,
    k1: usize,
    q2: u64,
    k2: usize,
}

impl TagScheme {
    pub fn new(q1: u64, k1: usize, q2: u64, k2: usize) -> Result<Self> {
        for (name, q) in [("q1", q1), ("q2", q2)] {
            if !is_prime(q) {
                return Err(Error::domain(format!("{name} = {q} is not prime")));
            }
            if q > u32::MAX as u64 {
                return Err(Error::domain(format!("{name} = {q} exceeds 32 bits")));
            }
        }
        if k1 == 0 || k1 as u64 > q1 {
            return Err(Error::domain(format!("k1 = {k1} must lie in 1..={q1}")));
        }
        if k2 == 0 || k2 as u64 > q2 {
            return Err(Error::domain(format!("k2 = {k2} must lie in 1..={q2}")));
        }
        if !inner_covers_outer(q2, k2, q1) {
            return Err(Error::domain(format!(
                "{q2}^{k2} cannot represent every symbol of GF({q1})"
            )));
        }
        Ok(TagScheme { q1, k1, q2, k2 })
    }

    pub fn q1(&self) -> u64 {
        self.q1
    }
    pub fn k1(&self) -> usize {
        self.k1
    }
    pub fn q2(&self) -> u64 {
        self.q2
    }
    pub fn k2(&self) -> usize {
        self.k2
    }

    /// Size of the coloring-number space, `q1 * q2`.
    pub fn coloring_count(&self) -> u64 {
        self.q1 * self.q2
    }

    /// Outer symbol `P_i(j1)` in `GF(q1)`.
    pub fn outer_symbol(&self, identity: &Identity, j1: u64) -> u64 {
        horner(identity.coefficients.iter().copied(), j1, self.q1)
    }

    /// Little-endian base-`q2` digits of an outer symbol, `k2` of them.
    pub fn digits(&self, symbol: u64) -> Vec<u64> {
        let mut rest = symbol;
        (0..self.k2)
            .map(|_| {
                let d = rest % self.q2;
                rest /= self.q2;
                d
            })
            .collect()
    }

    /// `T_i(j)`.
    pub fn tag(&self, identity: &Identity, j: ColoringNumber) -> Color {
        let s = self.outer_symbol(identity, j.j1);
        Color(horner(self.digits(s).into_iter(), j.j2, self.q2))
    }

    /// Accepts iff the received color matches `T_i(j)`.
    pub fn verify(&self, identity: &Identity, j: ColoringNumber, received: Color) -> bool {
        self.tag(identity, j) == received
    }

    /// Upper bound on `Pr_j[T_i(j) = T_i'(j)]` for distinct identities.
    pub fn collision_bound(&self) -> f64 {
        (self.k1 - 1) as f64 / self.q1 as f64 + (self.k2 - 1) as f64 / self.q2 as f64
    }

    /// `N = q1^k1`, exactly.
    pub fn identity_count(&self) -> BigUint {
        BigUint::from(self.q1).pow(self.k1 as u32)
    }

    /// `log2 log2 N = log2(k1 log2 q1)`.
    pub fn log2_log2(&self) -> f64 {
        (self.k1 as f64 * (self.q1 as f64).log2()).log2()
    }

    pub fn random_identity(&self, seed: u64) -> Identity {
        Identity::random(self, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn random_coloring_number(&self, seed: u64) -> ColoringNumber {
        ColoringNumber::random(self, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `j1`-major index of a coloring number.
    pub fn coloring_index(&self, j: ColoringNumber) -> u64 {
        j.j1 * self.q2 + j.j2
    }

    pub fn coloring_from_index(&self, index: u64) -> Option<ColoringNumber> {
        (index < self.coloring_count()).then(|| ColoringNumber {
            j1: index / self.q2,
            j2: index % self.q2,
        })
    }
}

fn inner_covers_outer(q2: u64, k2: usize, q1: u64) -> bool {
    let mut reach: u128 = 1;
    for _ in 0..k2 {
        reach *= q2 as u128;
        if reach >= q1 as u128 {
            return true;
        }
    }
    reach >= q1 as u128
}

/// An identification message: `k1` coefficients in `GF(q1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Identity {
    coefficients: Vec<u64>,
}

impl Identity {
    pub fn new(scheme: &TagScheme, coefficients: Vec<u64>) -> Result<Self> {
        if coefficients.len() != scheme.k1 {
            return Err(Error::domain(format!(
                "identity needs {} coefficients, got {}",
                scheme.k1,
                coefficients.len()
            )));
        }
        if let Some(c) = coefficients.iter().find(|&&c| c >= scheme.q1) {
            return Err(Error::domain(format!("coefficient {c} outside GF({})", scheme.q1)));
        }
        Ok(Identity { coefficients })
    }

    /// Identity with the little-endian base-`q1` digits of `index`.
    pub fn from_index(scheme: &TagScheme, index: &BigUint) -> Result<Self> {
        if *index >= scheme.identity_count() {
            return Err(Error::domain(format!("identity index {index} out of range")));
        }
        let q = BigUint::from(scheme.q1);
        let mut rest = index.clone();
        let coefficients = (0..scheme.k1)
            .map(|_| {
                let d = (&rest % &q).iter_u64_digits().next().unwrap_or(0);
                rest /= &q;
                d
            })
            .collect();
        Ok(Identity { coefficients })
    }

    pub fn index(&self, scheme: &TagScheme) -> BigUint {
        let q = BigUint::from(scheme.q1);
        self.coefficients
            .iter()
            .rev()
            .fold(BigUint::ZERO, |acc, &c| acc * &q + BigUint::from(c))
    }

    pub fn random<R: Rng + ?Sized>(scheme: &TagScheme, rng: &mut R) -> Self {
        Identity {
            coefficients: (0..scheme.k1).map(|_| rng.gen_range(0..scheme.q1)).collect(),
        }
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coefficients
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColoringNumber {
    pub j1: u64,
    pub j2: u64,
}

impl ColoringNumber {
    pub fn new(scheme: &TagScheme, j1: u64, j2: u64) -> Result<Self> {
        if j1 >= scheme.q1 || j2 >= scheme.q2 {
            return Err(Error::domain(format!(
                "coloring number ({j1}, {j2}) outside GF({}) x GF({})",
                scheme.q1, scheme.q2
            )));
        }
        Ok(ColoringNumber { j1, j2 })
    }

    pub fn random<R: Rng + ?Sized>(scheme: &TagScheme, rng: &mut R) -> Self {
        ColoringNumber {
            j1: rng.gen_range(0..scheme.q1),
            j2: rng.gen_range(0..scheme.q2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Color(u64);

impl Color {
    pub fn new(scheme: &TagScheme, value: u64) -> Result<Self> {
        if value >= scheme.q2 {
            return Err(Error::domain(format!("color {value} outside GF({})", scheme.q2)));
        }
        Ok(Color(value))
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

/// Maps a code budget to scheme parameters.
///
/// `q1` is the smallest prime `>= 2^b` with `b = min(floor(n (C - eps)), cap)`,
/// `q2` the smallest prime `>= 2^c` with `c = min(ceil(sqrt(n) eps), cap)`,
/// `k2 = ceil(log_q2 q1)` and `k1 = max(2, floor(delta q1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSelector {
    pub delta: f64,
    pub field_cap_bits: u32,
}

impl Default for SchemeSelector {
    fn default() -> Self {
        SchemeSelector {
            delta: 1.0 / 16.0,
            field_cap_bits: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeChoice {
    pub scheme: TagScheme,
    /// Exponent `b` of the outer field size.
    pub outer_bits: u32,
    /// Exponent `c` of the inner field size.
    pub inner_bits: u32,
    /// Whether the field cap cut either exponent.
    pub capped: bool,
}

impl SchemeSelector {
    pub fn select(&self, budget: &CodeBudget) -> Result<SchemeChoice> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::domain(format!("delta must be positive, got {}", self.delta)));
        }
        if self.field_cap_bits == 0 || self.field_cap_bits > 31 {
            return Err(Error::domain("field cap must be between 1 and 31 bits"));
        }
        let n = budget.n() as f64;
        let ideal_outer = (n * (budget.capacity() - budget.epsilon())).floor().max(0.0);
        let ideal_inner = (n.sqrt() * budget.epsilon()).ceil().max(0.0);
        let cap = f64::from(self.field_cap_bits);
        let outer_bits = ideal_outer.min(cap) as u32;
        let inner_bits = ideal_inner.min(cap) as u32;
        let q1 = next_prime(1u64 << outer_bits);
        let q2 = next_prime(1u64 << inner_bits);
        let mut k2 = 1;
        while !inner_covers_outer(q2, k2, q1) {
            k2 += 1;
        }
        if k2 as u64 > q2 {
            return Err(Error::infeasible(format!(
                "GF({q2}) needs {k2} digits per outer symbol of GF({q1}), more than its size"
            )));
        }
        let k1 = ((self.delta * q1 as f64).floor() as usize).max(2).min(q1 as usize);
        Ok(SchemeChoice {
            scheme: TagScheme::new(q1, k1, q2, k2)?,
            outer_bits,
            inner_bits,
            capped: ideal_outer > cap || ideal_inner > cap,
        })
    }
}
