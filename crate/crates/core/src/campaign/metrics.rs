//! Campaign metrics. All values are exact rationals; percentages are
//! scaled by 100.

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Exact non-negative rational, serialized as `{num, den, value}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(pub Ratio<u64>);

impl Rational {
    pub fn new(num: u64, den: u64) -> Self {
        Rational(Ratio::new(num, den))
    }

    pub fn integer(n: u64) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    num: u64,
    den: u64,
    #[serde(default)]
    value: f64,
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RationalRepr {
            num: self.numer(),
            den: self.denom(),
            value: self.to_f64(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = RationalRepr::deserialize(d)?;
        if r.den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Rational::new(r.num, r.den))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric over zero runs")]
    ZeroRuns,
    #[error("numerator {num} exceeds denominator {den}")]
    Inconsistent { num: u64, den: u64 },
}

fn percent(num: u64, den: u64) -> Rational {
    Rational::new(num * 100, den)
}

/// Error detection rate: runs with a detection over all runs, in percent.
pub fn compute_edr(runs_with_detection: u64, runs: u64) -> Result<Rational, MetricError> {
    if runs == 0 {
        return Err(MetricError::ZeroRuns);
    }
    if runs_with_detection > runs {
        return Err(MetricError::Inconsistent {
            num: runs_with_detection,
            den: runs,
        });
    }
    Ok(percent(runs_with_detection, runs))
}

/// Error frequency: detections per run.
pub fn compute_ef(detections: u64, runs: u64) -> Result<Rational, MetricError> {
    if runs == 0 {
        return Err(MetricError::ZeroRuns);
    }
    Ok(Rational::new(detections, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtdSummary {
    pub min: u64,
    pub median: Rational,
    pub mean: Rational,
    pub max: u64,
}

/// Summary of per-run first-detection steps; absent without detections.
pub fn compute_ttd(first_detection_steps: &[u64]) -> Option<TtdSummary> {
    if first_detection_steps.is_empty() {
        return None;
    }
    let mut v = first_detection_steps.to_vec();
    v.sort_unstable();
    let n = v.len();
    let median = if n % 2 == 1 {
        Rational::integer(v[n / 2])
    } else {
        Rational::new(v[n / 2 - 1] + v[n / 2], 2)
    };
    Some(TtdSummary {
        min: v[0],
        median,
        mean: Rational::new(v.iter().sum(), n as u64),
        max: v[n - 1],
    })
}

fn sensitivity(failing: u64, total: u64) -> Option<Rational> {
    (total > 0).then(|| percent(failing.min(total), total))
}

/// Failing static sites of an opcode over all its sites, in percent.
pub fn compute_pc_sensitivity(failing: u64, total: u64) -> Option<Rational> {
    sensitivity(failing, total)
}

/// Failing basic blocks of an opcode over all blocks holding it, in
/// percent.
pub fn compute_bb_sensitivity(failing: u64, total: u64) -> Option<Rational> {
    sensitivity(failing, total)
}

/// Unique failing inputs over all failing inputs, in percent.
pub fn compute_input_breadth(failing_inputs: &[u64]) -> Option<Rational> {
    if failing_inputs.is_empty() {
        return None;
    }
    let unique = failing_inputs.iter().collect::<BTreeSet<_>>().len() as u64;
    Some(percent(unique, failing_inputs.len() as u64))
}
