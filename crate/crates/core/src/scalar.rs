//! Scalar types that can carry publication credit.
//!
//! Every counting regime tallies integers internally (a numerator per
//! denominator), so a credit scalar only has to know how to turn an exact
//! ratio into itself and how to add. Floating point scalars are finalized by
//! summing ratios in ascending-denominator order, which makes the result
//! independent of how records were chunked across workers.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};

/// Exact rational credit.
pub type Rational = Ratio<i128>;

pub trait Credit: Num + Copy + PartialOrd + Debug + Display + Send + Sync + 'static {
    fn from_ratio(num: u64, den: u64) -> Self;

    fn from_count(n: u64) -> Self {
        Self::from_ratio(n, 1)
    }

    fn to_f64(&self) -> f64;

    /// True when the value has no fractional part.
    fn is_whole(&self) -> bool;
}

impl Credit for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_whole(&self) -> bool {
        self.fract() == 0.0
    }
}

impl Credit for f32 {
    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }

    fn is_whole(&self) -> bool {
        self.fract() == 0.0
    }
}

impl Credit for Rational {
    fn from_ratio(num: u64, den: u64) -> Self {
        Ratio::new(num as i128, den as i128)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_whole(&self) -> bool {
        self.is_integer()
    }
}

/// Sums `(denominator, numerator)` pairs, smallest denominator first.
pub fn sum_ratios<S: Credit>(parts: impl IntoIterator<Item = (u64, u64)>) -> S {
    let mut parts: Vec<(u64, u64)> = parts.into_iter().collect();
    parts.sort_unstable();
    parts
        .into_iter()
        .fold(S::zero(), |acc, (den, num)| acc + S::from_ratio(num, den))
}
