//! Rate and probability conversions, hazard ratios and the Weibull
//! residence-time hazard.
//!
//! Rates and probabilities are distinct types: hazard ratios only apply to
//! [`Rate`], which is then converted to a [`Probability`] under a constant
//! hazard within each cycle,
//!
//! ```text
//! p = 1 - exp(-r * cycle_length)
//! ```
//!
//! For residence-dependent progression the per-cycle rate is the increment
//! of the Weibull cumulative hazard `H(tau) = (scale * tau)^shape` over one
//! cycle of residence, so partial sums of the rates telescope back to `H`.

use crate::{Error, Result};

/// Hazard per unit time (years). Finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Rate(f64);

impl Rate {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidRate(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidProbability {
                value,
                range: "[0, 1]",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_cycle_length(cycle_length: f64) -> Result<()> {
    if cycle_length.is_finite() && cycle_length > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidCycleLength(cycle_length))
    }
}

/// Probability of at least one event within a cycle under a constant rate.
pub fn prob_from_rate(rate: Rate, cycle_length: f64) -> Result<Probability> {
    check_cycle_length(cycle_length)?;
    Ok(Probability(-(-rate.0 * cycle_length).exp_m1()))
}

/// Inverse of [`prob_from_rate`]. `p = 1` has no finite rate and is rejected.
pub fn rate_from_prob(p: Probability, cycle_length: f64) -> Result<Rate> {
    check_cycle_length(cycle_length)?;
    if p.0 >= 1.0 {
        return Err(Error::InvalidProbability {
            value: p.0,
            range: "[0, 1)",
        });
    }
    Ok(Rate(-(-p.0).ln_1p() / cycle_length))
}

pub fn apply_hazard_ratio(rate: Rate, hr: f64) -> Result<Rate> {
    if !(hr.is_finite() && hr > 0.0) {
        return Err(Error::InvalidHazardRatio(hr));
    }
    Rate::new(rate.0 * hr)
}

/// Rescales a probability by a hazard ratio on the rate scale.
pub fn adjust_probability(p: Probability, hr: f64, cycle_length: f64) -> Result<Probability> {
    let rate = rate_from_prob(p, cycle_length)?;
    prob_from_rate(apply_hazard_ratio(rate, hr)?, cycle_length)
}

fn check_weibull(scale: f64, shape: f64) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidWeibull {
            name: "scale",
            value: scale,
        });
    }
    if !(shape.is_finite() && shape > 0.0) {
        return Err(Error::InvalidWeibull {
            name: "shape",
            value: shape,
        });
    }
    Ok(())
}

/// Weibull cumulative hazard `(scale * tau)^shape`.
pub fn weibull_cumulative_hazard(scale: f64, shape: f64, tau: f64) -> f64 {
    (scale * tau).powf(shape)
}

/// Per-cycle rates for residence cycles `1..=n`; element `tau - 1` is
/// `H(tau) - H(tau - 1)`.
pub fn weibull_cycle_rates(scale: f64, shape: f64, n: usize) -> Result<Vec<Rate>> {
    check_weibull(scale, shape)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "tunnel count must be at least 1".into(),
        ));
    }
    (1..=n)
        .map(|tau| {
            let tau = tau as f64;
            Rate::new(
                weibull_cumulative_hazard(scale, shape, tau)
                    - weibull_cumulative_hazard(scale, shape, tau - 1.0),
            )
        })
        .collect()
}

pub fn weibull_cycle_probs(
    scale: f64,
    shape: f64,
    n: usize,
    cycle_length: f64,
) -> Result<Vec<Probability>> {
    weibull_cycle_rates(scale, shape, n)?
        .into_iter()
        .map(|r| prob_from_rate(r, cycle_length))
        .collect()
}
