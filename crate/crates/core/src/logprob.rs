//! Log-space probability arithmetic.
//!
//! Every probability in this crate travels as a natural logarithm so that
//! products of hundreds of CPT factors stay representable: joint
//! probabilities routinely fall far below the smallest positive `f64`.
//! [`LogProb`] wraps the log value and keeps the zero-probability case
//! explicit as negative infinity.
//!
//! All transcendental math goes through [`libm`] rather than the `std`
//! float intrinsics, so results are bit-identical whether or not the `std`
//! feature is enabled.

use core::fmt;
use core::ops::{Mul, MulAssign};

pub(crate) mod math {
    //! Thin wrappers over libm, usable with or without `std`.

    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }

    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }

    #[inline]
    pub fn ln_1p(x: f64) -> f64 {
        libm::log1p(x)
    }

    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }

    #[inline]
    pub fn ln_gamma(x: f64) -> f64 {
        libm::lgamma(x)
    }

    #[inline]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }

    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
}

/// Natural logarithm of a nonnegative real number.
///
/// `log 0` is represented as `f64::NEG_INFINITY`. The value is never NaN:
/// constructors reject NaN and the arithmetic below cannot produce one.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    /// Probability zero (`ln 0 = -inf`).
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    /// Probability one (`ln 1 = 0`).
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a log-space value.
    ///
    /// Panics on NaN: a NaN here is always an upstream arithmetic bug, and
    /// letting it propagate silently would poison every later comparison.
    #[inline]
    pub fn from_ln(ln: f64) -> LogProb {
        assert!(!ln.is_nan(), "LogProb must not be NaN");
        LogProb(ln)
    }

    /// Converts a linear-space probability (or weight) to log space.
    ///
    /// Panics if `p` is negative or NaN.
    #[inline]
    pub fn from_linear(p: f64) -> LogProb {
        assert!(p >= 0.0, "LogProb requires a nonnegative value, got {p}");
        LogProb(math::ln(p))
    }

    /// The raw natural-log value (`-inf` for probability zero).
    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    /// Back to linear space. Underflows to 0.0 for very small probabilities.
    #[inline]
    pub fn linear(self) -> f64 {
        math::exp(self.0)
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Ratio `self / rhs` in log space.
    ///
    /// `0 / q` is 0 for any `q > 0`. Dividing a nonzero probability by zero
    /// panics; callers are expected to rule that case out structurally
    /// (e.g. importance weights only divide by the density of the sampled
    /// point, which is positive by construction).
    #[inline]
    pub fn ratio(self, rhs: LogProb) -> LogProb {
        if self.is_zero() {
            return LogProb::ZERO;
        }
        assert!(
            !rhs.is_zero(),
            "division of a nonzero probability by zero"
        );
        LogProb(self.0 - rhs.0)
    }

    /// Log-space addition (linear-space sum) of two values.
    #[inline]
    pub fn add(self, rhs: LogProb) -> LogProb {
        LogProb(log_sum_exp_pair(self.0, rhs.0))
    }

    /// Log-space sum of an iterator of values.
    pub fn sum<I: IntoIterator<Item = LogProb>>(iter: I) -> LogProb {
        let mut acc = LogSumExp::new();
        for lp in iter {
            acc.push(lp.ln());
        }
        LogProb(acc.value())
    }

    #[inline]
    pub fn max(self, rhs: LogProb) -> LogProb {
        if self.0 >= rhs.0 {
            self
        } else {
            rhs
        }
    }

    #[inline]
    pub fn min(self, rhs: LogProb) -> LogProb {
        if self.0 <= rhs.0 {
            self
        } else {
            rhs
        }
    }
}

/// Product of probabilities = sum of logs. `0 * q = 0`.
impl Mul for LogProb {
    type Output = LogProb;

    #[inline]
    fn mul(self, rhs: LogProb) -> LogProb {
        // -inf + -inf = -inf and -inf + finite = -inf; no NaN can appear
        // because +inf never enters (logs of probabilities are <= 0 and
        // finite weights stay far from overflow).
        LogProb(self.0 + rhs.0)
    }
}

impl MulAssign for LogProb {
    #[inline]
    fn mul_assign(&mut self, rhs: LogProb) {
        self.0 += rhs.0;
    }
}

impl fmt::Debug for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogProb({})", self.0)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// `ln(exp(a) + exp(b))` without leaving log space.
#[inline]
pub fn log_sum_exp_pair(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a >= b {
        a + math::ln_1p(math::exp(b - a))
    } else {
        b + math::ln_1p(math::exp(a - b))
    }
}

/// `ln(sum_i exp(v_i))` over a slice, with the usual max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &v in values {
        acc.push(v);
    }
    acc.value()
}

/// Streaming log-sum-exp accumulator.
///
/// Keeps the running maximum and the sum of terms rescaled to it, so an
/// arbitrarily long stream can be summed in one pass without materializing
/// the terms. `-inf` addends are dropped.
#[derive(Clone, Debug)]
pub struct LogSumExp {
    max_term: f64,
    scaled_sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max_term: f64::NEG_INFINITY,
            scaled_sum: 0.0,
        }
    }

    pub fn push(&mut self, ln_term: f64) {
        debug_assert!(!ln_term.is_nan());
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if ln_term <= self.max_term {
            self.scaled_sum += math::exp(ln_term - self.max_term);
        } else {
            // exp(-inf - finite) = 0, so the first finite term lands cleanly.
            self.scaled_sum = self.scaled_sum * math::exp(self.max_term - ln_term) + 1.0;
            self.max_term = ln_term;
        }
    }

    pub fn value(&self) -> f64 {
        if self.scaled_sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max_term + math::ln(self.scaled_sum)
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}
