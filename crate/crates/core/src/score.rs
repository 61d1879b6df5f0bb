//! Scalar quality scores and two-decimal percentages.

use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// A translation-quality value produced by a scorer. Not clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityScore<S>(S);

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("quality score is not finite")]
pub struct NonFiniteScore;

impl<S: Float> QualityScore<S> {
    pub fn new(value: S) -> Result<Self, NonFiniteScore> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(NonFiniteScore)
        }
    }

    pub fn value(self) -> S {
        self.0
    }
}

/// `numerator / denominator` expressed as a percentage, rounded half-up to
/// two decimals using integer arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PercentageRepr", into = "PercentageRepr")]
pub struct Percentage {
    numerator: u64,
    denominator: u64,
}

impl Percentage {
    /// Returns `None` when `denominator` is zero or `numerator > denominator`.
    pub fn new(numerator: u64, denominator: u64) -> Option<Self> {
        (denominator > 0 && numerator <= denominator).then_some(Self {
            numerator,
            denominator,
        })
    }

    pub fn numerator(self) -> u64 {
        self.numerator
    }

    pub fn denominator(self) -> u64 {
        self.denominator
    }

    /// Percentage in hundredths of a percent, i.e. `round(10000 * k / n)`.
    pub fn hundredths(self) -> u64 {
        let k = u128::from(self.numerator);
        let n = u128::from(self.denominator);
        ((20_000 * k + n) / (2 * n)) as u64
    }

    /// Two-decimal percent value, e.g. `92.11`.
    pub fn percent(self) -> f64 {
        self.hundredths() as f64 / 100.0
    }

    /// Unrounded percent value.
    pub fn exact(self) -> f64 {
        100.0 * self.numerator as f64 / self.denominator as f64
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

#[derive(Serialize, Deserialize)]
struct PercentageRepr {
    numerator: u64,
    denominator: u64,
    percent: f64,
}

impl From<Percentage> for PercentageRepr {
    fn from(p: Percentage) -> Self {
        Self {
            numerator: p.numerator,
            denominator: p.denominator,
            percent: p.percent(),
        }
    }
}

impl TryFrom<PercentageRepr> for Percentage {
    type Error = String;

    fn try_from(r: PercentageRepr) -> Result<Self, Self::Error> {
        Percentage::new(r.numerator, r.denominator)
            .ok_or_else(|| format!("invalid percentage {}/{}", r.numerator, r.denominator))
    }
}
