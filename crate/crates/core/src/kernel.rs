//! Smoothing kernels and bandwidth rules.
//!
//! Kernels use the convention `K_h(x) = K(x / h)` with `K` a unit-mass
//! density, so the Gaussian kernel is the standard normal density.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Kernel {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Peak value `K(0)`.
    pub fn peak(self) -> f64 {
        self.eval(0.0)
    }

    /// `∫ K(t)^2 dt`.
    pub fn roughness(self) -> f64 {
        match self {
            Kernel::Gaussian => 1.0 / (2.0 * PI.sqrt()),
            Kernel::Epanechnikov => 0.6,
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

/// `max(1.06 sqrt(s(1-s)) n^(-1/5), n^(-1/5) / 10)`: the Gaussian
/// rule-of-thumb with Bernoulli variance at `s`, floored so that the bandwidth
/// never collapses near the ends of the unit interval.
pub fn rule_of_thumb_bandwidth(s: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("bandwidth needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "rule-of-thumb bandwidth needs s in [0, 1], got {s}"
        )));
    }
    let rate = (n as f64).powf(-0.2);
    Ok((1.06 * (s * (1.0 - s)).sqrt() * rate).max(rate / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    #[default]
    RuleOfThumb,
    Fixed(f64),
}

impl BandwidthRule {
    /// Bandwidth at `s` for an estimator backed by `n` samples. For unbounded
    /// scores the rule-of-thumb evaluates its variance term at `s` clamped to
    /// the unit interval.
    pub fn bandwidth(&self, s: f64, n: usize, bounded: bool) -> Result<f64> {
        match *self {
            BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            BandwidthRule::Fixed(h) => Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {h}"
            ))),
            BandwidthRule::RuleOfThumb => {
                let s = if bounded { s } else { s.clamp(0.0, 1.0) };
                rule_of_thumb_bandwidth(s, n)
            }
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BandwidthRule::RuleOfThumb);
        }
        let h: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bandwidth must be `auto` or a number, got `{s}`")))?;
        if h > 0.0 && h.is_finite() {
            Ok(BandwidthRule::Fixed(h))
        } else {
            Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")))
        }
    }
}
