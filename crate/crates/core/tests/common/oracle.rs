//! Reference computations that share no code with the library.
//!
//! `BigFloat` is a minimal binary floating point with a 320-bit mantissa, enough
//! to evaluate Poisson masses to far below double precision. The scalar
//! searches evaluate information quantities with pmfs built by the forward
//! recurrence `W(y+1) = W(y) m / (y+1)`.

use num_bigint::BigUint;

const BITS: u64 = 320;

#[derive(Clone, Debug)]
pub struct BigFloat {
    mant: BigUint,
    exp: i64,
}

impl BigFloat {
    fn normalize(mut self) -> Self {
        let len = self.mant.bits();
        if len > BITS {
            let shift = len - BITS;
            self.mant >>= shift;
            self.exp += shift as i64;
        }
        self
    }

    pub fn from_f64(v: f64) -> Self {
        assert!(v >= 0.0 && v.is_finite());
        if v == 0.0 {
            return BigFloat {
                mant: BigUint::ZERO,
                exp: 0,
            };
        }
        let bits = v.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        BigFloat {
            mant: BigUint::from(m),
            exp: e,
        }
    }

    pub fn from_u64(v: u64) -> Self {
        BigFloat {
            mant: BigUint::from(v),
            exp: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant == BigUint::ZERO
    }

    pub fn mul(&self, o: &BigFloat) -> BigFloat {
        BigFloat {
            mant: &self.mant * &o.mant,
            exp: self.exp + o.exp,
        }
        .normalize()
    }

    pub fn div(&self, o: &BigFloat) -> BigFloat {
        assert!(!o.is_zero());
        let shift = BITS + o.mant.bits();
        BigFloat {
            mant: (&self.mant << shift) / &o.mant,
            exp: self.exp - shift as i64 - o.exp,
        }
        .normalize()
    }

    pub fn add(&self, o: &BigFloat) -> BigFloat {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(o.exp);
        // Drop far smaller addends rather than build huge integers.
        let (hi, lo) = if self.exp + self.mant.bits() as i64 >= o.exp + o.mant.bits() as i64 {
            (self, o)
        } else {
            (o, self)
        };
        if (hi.exp + hi.mant.bits() as i64) - (lo.exp + lo.mant.bits() as i64) > 2 * BITS as i64 {
            return hi.clone();
        }
        BigFloat {
            mant: (&self.mant << (self.exp - e) as u64) + (&o.mant << (o.exp - e) as u64),
            exp: e,
        }
        .normalize()
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let len = self.mant.bits() as i64;
        let shift = len - 64;
        let top: u64 = if shift > 0 {
            (&self.mant >> shift as u64).iter_u64_digits().next().unwrap_or(0)
        } else {
            (&self.mant << (-shift) as u64).iter_u64_digits().next().unwrap_or(0)
        };
        // top has 64 significant bits; scale in two steps to avoid overflow.
        let e = self.exp + shift;
        let mut v = top as f64;
        let mut e = e;
        while e > 0 {
            let s = e.min(1000);
            v *= 2f64.powi(s as i32);
            e -= s;
        }
        while e < 0 {
            let s = (-e).min(1000);
            v /= 2f64.powi(s as i32);
            e += s;
        }
        v
    }
}

/// `e^m` for `m >= 0`, by halving and a Taylor series.
pub fn big_exp(m: &BigFloat) -> BigFloat {
    let mut halvings = 0i64;
    let mut r = m.clone();
    // Reduce below 2^-8.
    let mag = r.exp + r.mant.bits() as i64;
    if mag > -8 {
        halvings = mag + 8;
        r.exp -= halvings;
    }
    let one = BigFloat::from_u64(1);
    let mut sum = one.clone();
    let mut term = one;
    for k in 1..80u64 {
        term = term.mul(&r).div(&BigFloat::from_u64(k));
        sum = sum.add(&term);
    }
    for _ in 0..halvings {
        sum = sum.mul(&sum);
    }
    sum
}

/// `exp(-m) m^y / y!` with `m = x + lambda`, to roughly 300 bits.
pub fn poisson_pmf(lambda: f64, x: f64, y: u64) -> f64 {
    let m = BigFloat::from_f64(lambda).add(&BigFloat::from_f64(x));
    if m.is_zero() {
        return if y == 0 { 1.0 } else { 0.0 };
    }
    let mut num = BigFloat::from_u64(1);
    for k in 1..=y {
        num = num.mul(&m).div(&BigFloat::from_u64(k));
    }
    num.div(&big_exp(&m)).to_f64()
}

/// Poisson row on `0..=y_max` by the forward recurrence.
pub fn recurrence_row(mean: f64, y_max: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(y_max + 1);
    let mut w = (-mean).exp();
    for y in 0..=y_max {
        row.push(w);
        w *= mean / (y + 1) as f64;
    }
    row
}

fn entropy_terms(rows: &[Vec<f64>], px: &[f64]) -> f64 {
    let width = rows[0].len();
    let mut info = 0.0;
    for y in 0..width {
        let q: f64 = rows.iter().zip(px).map(|(r, p)| p * r[y]).sum();
        for (r, p) in rows.iter().zip(px) {
            if *p > 0.0 && r[y] > 0.0 {
                info += p * r[y] * (r[y] / q).log2();
            }
        }
    }
    info
}

/// `I(X;Y)` in bits on a finite grid, rows truncated at `y_max`.
pub fn information(points: &[f64], px: &[f64], lambda: f64, y_max: usize) -> f64 {
    let rows: Vec<Vec<f64>> = points.iter().map(|x| recurrence_row(x + lambda, y_max)).collect();
    entropy_terms(&rows, px)
}

/// Width that holds essentially all mass for means up to `mean`.
pub fn generous_cutoff(mean: f64) -> usize {
    (mean + 20.0 * mean.sqrt() + 60.0) as usize
}

/// Maximum of `f(p)` over `p in [0, 1]` at the given step.
pub fn scalar_max(step: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=n {
        let p = i as f64 * step;
        let v = f(p);
        if v > best.0 {
            best = (v, p);
        }
    }
    best
}

/// Two-point capacity `max_p I` on `{0, a}` at dark current `lambda`.
pub fn two_point_capacity(a: f64, lambda: f64, step: f64) -> f64 {
    let y_max = generous_cutoff(a + lambda);
    let r0 = recurrence_row(lambda, y_max);
    let r1 = recurrence_row(a + lambda, y_max);
    let rows = [r0, r1];
    scalar_max(step, |p| entropy_terms(&rows, &[1.0 - p, p])).0
}

/// Two-point secrecy capacity `max_p I(X;Y) - I(X;Z)` on `{0, a}`.
pub fn two_point_secrecy(a: f64, lambda_b: f64, lambda_e: f64, step: f64) -> f64 {
    let y_max = generous_cutoff(a + lambda_e);
    let bob = [recurrence_row(lambda_b, y_max), recurrence_row(a + lambda_b, y_max)];
    let eve = [recurrence_row(lambda_e, y_max), recurrence_row(a + lambda_e, y_max)];
    scalar_max(step, |p| {
        let px = [1.0 - p, p];
        entropy_terms(&bob, &px) - entropy_terms(&eve, &px)
    })
    .0
}
