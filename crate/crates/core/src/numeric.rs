//! Numeric helpers: correctly rounded summation and a nonnegative float
//! with an unbounded binary exponent.

use std::cmp::Ordering;
use std::fmt;

/// Correctly rounded sum of finite `f64` values (Shewchuk partials with
/// the half-even fix-up of CPython's `math.fsum`).
///
/// The result does not depend on the order of the inputs.
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Nonnegative binary floating-point number with a 53-bit mantissa and an
/// `i64` exponent.
///
/// Value is `mant * 2^exp` with `mant` in `[0.5, 1)`, or zero. Addition and
/// multiplication are correctly rounded to 53 bits, so results agree with
/// ideal `f64` arithmetic that never overflows or underflows. Scaling by a
/// power of two is exact.
#[derive(Clone, Copy, PartialEq)]
pub struct WideFloat {
    mant: f64,
    exp: i64,
}

const MANT_MASK: u64 = (1u64 << 52) - 1;

/// Splits a positive finite `f64` into `(m, e)` with `m` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i64) {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    if exp_bits == 0 {
        // subnormal
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & MANT_MASK) | (1022u64 << 52));
    (m, exp_bits - 1022)
}

/// `2^k` for `k` in the normal exponent range.
fn pow2(k: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

impl WideFloat {
    pub const ZERO: WideFloat = WideFloat { mant: 0.0, exp: 0 };
    pub const ONE: WideFloat = WideFloat { mant: 0.5, exp: 1 };

    /// Converts a nonnegative finite `f64` exactly.
    ///
    /// Panics on negative, NaN or infinite input.
    pub fn from_f64(x: f64) -> Self {
        assert!(x >= 0.0 && x.is_finite(), "WideFloat requires finite x >= 0, got {x}");
        if x == 0.0 {
            return Self::ZERO;
        }
        let (mant, exp) = frexp(x);
        WideFloat { mant, exp }
    }

    /// `2^k` exactly.
    pub fn pow2(k: i64) -> Self {
        WideFloat { mant: 0.5, exp: k + 1 }
    }

    fn normalized(m: f64, e: i64) -> Self {
        if m == 0.0 {
            return Self::ZERO;
        }
        let (mm, me) = frexp(m);
        WideFloat { mant: mm, exp: e + me }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }

    /// Exact multiplication by `2^k`.
    pub fn mul_pow2(self, k: i64) -> Self {
        if self.is_zero() {
            self
        } else {
            WideFloat { mant: self.mant, exp: self.exp + k }
        }
    }

    /// Nearest `f64`, saturating to `+inf` and flushing to `0`.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.exp > 1024 {
            return f64::INFINITY;
        }
        if self.exp < -1080 {
            return 0.0;
        }
        // two steps keep every intermediate in range
        let half = self.exp / 2;
        self.mant * 2f64.powi(half as i32) * 2f64.powi((self.exp - half) as i32)
    }

    /// Base-2 logarithm (`-inf` for zero).
    pub fn log2(self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mant.log2() + self.exp as f64
        }
    }
}

impl std::ops::Add for WideFloat {
    type Output = WideFloat;

    fn add(self, rhs: WideFloat) -> WideFloat {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let shift = small.exp - big.exp;
        if shift < -60 {
            // below half an ulp of `big`
            return big;
        }
        WideFloat::normalized(big.mant + small.mant * pow2(shift), big.exp)
    }
}

impl std::ops::Mul for WideFloat {
    type Output = WideFloat;

    fn mul(self, rhs: WideFloat) -> WideFloat {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        WideFloat::normalized(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl PartialOrd for WideFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Eq for WideFloat {}

impl Ord for WideFloat {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self
                .exp
                .cmp(&other.exp)
                .then_with(|| self.mant.partial_cmp(&other.mant).unwrap()),
        }
    }
}

impl fmt::Debug for WideFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp.abs() < 1000 {
            write!(f, "{:e}", self.to_f64())
        } else {
            write!(f, "{}*2^{}", self.mant, self.exp)
        }
    }
}

impl From<f64> for WideFloat {
    fn from(x: f64) -> Self {
        WideFloat::from_f64(x)
    }
}
