//! Signed reals stored as a sign plus `log2 |x|`.
//!
//! The growth tents reach magnitudes like `2^729`, far outside `f64`, while
//! the decay tents shrink below the smallest subnormal. Every quantity that
//! has to survive those ranges (primitives, spike energies, ratios) is carried
//! as a [`LogReal`].

use std::cmp::Ordering;
use std::f64::consts::LN_2;
use std::fmt;
use std::ops::{Div, Mul, Neg};

use serde::{Deserialize, Serialize};

/// Relative gap below which a signed difference is reported as indeterminate.
pub const CANCELLATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    fn times(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (a, b) if a == b => Sign::Positive,
            _ => Sign::Negative,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Zero => 0.0,
            Sign::Positive => 1.0,
        }
    }
}

/// `sign · 2^log2_abs`. Zero is `(Zero, -inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogReal {
    sign: Sign,
    #[serde(with = "finite_or_null")]
    log2_abs: f64,
}

/// JSON has no infinities; the zero exponent `-inf` is written as `null`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_some(x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// `log2(1 + 2^-gap)` for `gap >= 0`.
fn log2_one_plus_pow2(gap: f64) -> f64 {
    (-gap * LN_2).exp().ln_1p() / LN_2
}

/// `log2(1 - 2^-gap)` for `gap > 0`.
pub(crate) fn log2_one_minus_pow2(gap: f64) -> f64 {
    (-(-gap * LN_2).exp_m1()).ln() / LN_2
}

impl LogReal {
    pub const ZERO: LogReal = LogReal {
        sign: Sign::Zero,
        log2_abs: f64::NEG_INFINITY,
    };
    pub const ONE: LogReal = LogReal {
        sign: Sign::Positive,
        log2_abs: 0.0,
    };

    pub fn from_f64(x: f64) -> LogReal {
        if x == 0.0 {
            LogReal::ZERO
        } else {
            let sign = if x > 0.0 { Sign::Positive } else { Sign::Negative };
            LogReal {
                sign,
                log2_abs: x.abs().log2(),
            }
        }
    }

    /// `sign · 2^log2_abs`; a `-inf` exponent or a zero sign collapses to zero.
    pub fn from_log2(sign: Sign, log2_abs: f64) -> LogReal {
        if sign == Sign::Zero || log2_abs == f64::NEG_INFINITY {
            LogReal::ZERO
        } else {
            LogReal { sign, log2_abs }
        }
    }

    /// `2^e`.
    pub fn pow2(e: f64) -> LogReal {
        LogReal::from_log2(Sign::Positive, e)
    }

    pub fn sign(self) -> Sign {
        self.sign
    }

    pub fn log2_abs(self) -> f64 {
        self.log2_abs
    }

    pub fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn is_positive(self) -> bool {
        self.sign == Sign::Positive
    }

    pub fn is_negative(self) -> bool {
        self.sign == Sign::Negative
    }

    /// Linear value; saturates to `±inf` or `±0` outside the `f64` range.
    pub fn to_f64(self) -> f64 {
        self.sign.as_f64() * self.log2_abs.exp2()
    }

    /// Linear value if it is a finite normal (or exact zero) `f64`.
    pub fn to_f64_checked(self) -> Option<f64> {
        if self.is_zero() {
            return Some(0.0);
        }
        let v = self.to_f64();
        (v.is_finite() && v.is_normal()).then_some(v)
    }

    pub fn abs(self) -> LogReal {
        match self.sign {
            Sign::Zero => self,
            _ => LogReal {
                sign: Sign::Positive,
                log2_abs: self.log2_abs,
            },
        }
    }

    /// `|x|^p` for `p > 0`.
    pub fn abs_powf(self, p: f64) -> LogReal {
        match self.sign {
            Sign::Zero => LogReal::ZERO,
            _ => LogReal::pow2(p * self.log2_abs),
        }
    }

    pub fn add(self, other: LogReal) -> LogReal {
        self.checked_add(other).unwrap_or(LogReal::ZERO)
    }

    pub fn sub(self, other: LogReal) -> LogReal {
        self.add(-other)
    }

    /// Sum that refuses to resolve a near-total cancellation: returns `None`
    /// when the operands have opposite signs and magnitudes within
    /// [`CANCELLATION_TOL`] of each other.
    pub fn checked_add(self, other: LogReal) -> Option<LogReal> {
        if self.is_zero() {
            return Some(other);
        }
        if other.is_zero() {
            return Some(self);
        }
        let (big, small) = if self.log2_abs >= other.log2_abs {
            (self, other)
        } else {
            (other, self)
        };
        let gap = big.log2_abs - small.log2_abs;
        if big.sign == small.sign {
            if gap.is_infinite() {
                return Some(big);
            }
            return Some(LogReal {
                sign: big.sign,
                log2_abs: big.log2_abs + log2_one_plus_pow2(gap),
            });
        }
        // 1 - 2^-gap <= tol  <=>  2^-gap >= 1 - tol
        if (-gap * LN_2).exp() >= 1.0 - CANCELLATION_TOL {
            return None;
        }
        if gap.is_infinite() {
            return Some(big);
        }
        Some(LogReal {
            sign: big.sign,
            log2_abs: big.log2_abs + log2_one_minus_pow2(gap),
        })
    }

    pub fn checked_sub(self, other: LogReal) -> Option<LogReal> {
        self.checked_add(-other)
    }

    pub fn sum<I: IntoIterator<Item = LogReal>>(items: I) -> LogReal {
        items.into_iter().fold(LogReal::ZERO, LogReal::add)
    }

    /// Ordering by signed value.
    pub fn total_cmp(&self, other: &LogReal) -> Ordering {
        let key = |x: &LogReal| match x.sign {
            Sign::Negative => (0, -x.log2_abs),
            Sign::Zero => (1, 0.0),
            Sign::Positive => (2, x.log2_abs),
        };
        let (a, b) = (key(self), key(other));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    }

    pub fn max(self, other: LogReal) -> LogReal {
        if self.total_cmp(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }
}

impl Neg for LogReal {
    type Output = LogReal;
    fn neg(self) -> LogReal {
        LogReal {
            sign: self.sign.flip(),
            log2_abs: self.log2_abs,
        }
    }
}

impl Mul for LogReal {
    type Output = LogReal;
    fn mul(self, rhs: LogReal) -> LogReal {
        LogReal::from_log2(self.sign.times(rhs.sign), self.log2_abs + rhs.log2_abs)
    }
}

impl Div for LogReal {
    type Output = LogReal;
    fn div(self, rhs: LogReal) -> LogReal {
        assert!(!rhs.is_zero(), "LogReal division by zero");
        LogReal::from_log2(self.sign.times(rhs.sign), self.log2_abs - rhs.log2_abs)
    }
}

impl From<f64> for LogReal {
    fn from(x: f64) -> LogReal {
        LogReal::from_f64(x)
    }
}

impl fmt::Display for LogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Zero => write!(f, "0"),
            Sign::Positive => write!(f, "2^{}", self.log2_abs),
            Sign::Negative => write!(f, "-2^{}", self.log2_abs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_ordinary_values() {
        for x in [1.0, -3.5, 1e-300, 7.25e200, -0.125] {
            let back = LogReal::from_f64(x).to_f64();
            // the exponent carries ~|log2 x| ulps of absolute error
            assert!((back - x).abs() <= 1e-13 * x.abs(), "{x} -> {back}");
        }
        assert!(LogReal::from_f64(0.0).is_zero());
    }

    #[test]
    fn addition_matches_linear_arithmetic() {
        let cases = [(3.0, 5.0), (-2.0, 7.0), (1e-5, -4.0), (-1.5, -2.25), (8.0, -8.0)];
        for (a, b) in cases {
            let got = LogReal::from_f64(a).add(LogReal::from_f64(b)).to_f64();
            assert!((got - (a + b)).abs() <= 1e-14 * (a.abs() + b.abs()), "{a}+{b}={got}");
        }
    }

    #[test]
    fn cancellation_is_flagged() {
        let a = LogReal::pow2(81.0);
        assert!(a.checked_sub(a).is_none());
        let slightly = LogReal::from_log2(Sign::Positive, 81.0 + 1e-14);
        assert!(slightly.checked_sub(a).is_none());
        let far = LogReal::from_log2(Sign::Positive, 81.0 + 1e-6);
        assert!(far.checked_sub(a).is_some());
    }

    #[test]
    fn huge_difference_keeps_sign_and_magnitude() {
        // 1.5 * 2^54 - 2^81
        let phi = LogReal::from_log2(Sign::Positive, 54.0 + 1.5f64.log2());
        let j = phi.checked_sub(LogReal::pow2(81.0)).unwrap();
        assert!(j.is_negative());
        let expected = 81.0 + (1.0 - 1.5 * 2f64.powi(-27)).log2();
        assert!((j.log2_abs() - expected).abs() < 1e-12);
    }

    #[test]
    fn ordering_is_by_signed_value() {
        let mut v: Vec<(LogReal, f64)> = [-4.0, 0.0, 2.0, -0.5, 1e10]
            .into_iter()
            .map(|x| (LogReal::from_f64(x), x))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let order: Vec<f64> = v.iter().map(|x| x.1).collect();
        assert_eq!(order, vec![-4.0, -0.5, 0.0, 2.0, 1e10]);
    }
}
