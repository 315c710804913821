//! State and transition rewards, per-cycle outcomes, within-cycle
//! correction and discounting.
//!
//! Mass flowing `i -> j` during cycle `t` is credited with the reward of
//! the destination `j` plus any one-off increment attached to `i -> j`.
//! Per-cycle outcomes are totals of the element-wise product of the
//! transition-dynamics array and the reward array.

use std::collections::BTreeMap;

use ndarray::{Array3, ArrayView2, Axis};

use crate::engine::TransitionDynamicsArray;
use crate::{Error, Result};

/// One-off reward increment on a transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEdit {
    pub from: String,
    pub to: String,
    pub delta: f64,
}

impl TransitionEdit {
    pub fn new(from: impl Into<String>, to: impl Into<String>, delta: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            delta,
        }
    }
}

/// Rewards `[cycle, from, to]` over `n_cycles + 1` slices.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardArray {
    labels: Vec<String>,
    values: Array3<f64>,
}

impl RewardArray {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn slice(&self, t: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), t)
    }
}

fn index(labels: &[String], label: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownState(label.to_string()))
}

/// Entry `(i, j, t)` is `state_rewards[j]` plus the sum of the edits on
/// `i -> j`. Every label needs a state reward.
pub fn build_reward_array(
    labels: &[String],
    state_rewards: &BTreeMap<String, f64>,
    transition_edits: &[TransitionEdit],
    n_cycles: usize,
) -> Result<RewardArray> {
    for key in state_rewards.keys() {
        index(labels, key)?;
    }
    let n = labels.len();
    let mut slice = ndarray::Array2::<f64>::zeros((n, n));
    for (j, label) in labels.iter().enumerate() {
        let r = *state_rewards
            .get(label)
            .ok_or_else(|| Error::InvalidArgument(format!("no state reward for `{label}`")))?;
        slice.column_mut(j).fill(r);
    }
    for edit in transition_edits {
        slice[[index(labels, &edit.from)?, index(labels, &edit.to)?]] += edit.delta;
    }
    if slice.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("reward values must be finite".into()));
    }
    let values = slice
        .insert_axis(Axis(0))
        .broadcast((n_cycles + 1, n, n))
        .expect("broadcast of a single slice")
        .to_owned();
    Ok(RewardArray {
        labels: labels.to_vec(),
        values,
    })
}

/// `y_t = sum_ij A[t, i, j] * R[t, i, j]` for `t = 0..=n_cycles`.
pub fn cycle_outcomes(a: &TransitionDynamicsArray, r: &RewardArray) -> Result<Vec<f64>> {
    if a.values().dim() != r.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "dynamics array {:?} vs reward array {:?}",
            a.values().dim(),
            r.values().dim()
        )));
    }
    if a.labels() != r.labels() {
        return Err(Error::DimensionMismatch(
            "dynamics and reward arrays have different state labels".into(),
        ));
    }
    Ok(a.values()
        .outer_iter()
        .zip(r.values().outer_iter())
        .map(|(at, rt)| at.iter().zip(rt.iter()).map(|(x, y)| x * y).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WccVector(Vec<f64>);

impl WccVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountVector(Vec<f64>);

impl DiscountVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Simpson-type weights on the `n_cycles + 1` cycle points: with 1-based
/// position `k`, even `k` gets 2/3 and odd `k` gets 4/3, then the first and
/// last weights are set to 1/3.
///
/// For odd `n_cycles` the last interior weight and the endpoint do not
/// follow the textbook composite Simpson pattern; the rule is kept as is.
pub fn wcc_weights(n_cycles: usize) -> Result<WccVector> {
    if n_cycles < 2 {
        return Err(Error::InvalidArgument(format!(
            "within-cycle correction needs at least 2 cycles, got {n_cycles}"
        )));
    }
    let mut w: Vec<f64> = (1..=n_cycles + 1)
        .map(|k| if k % 2 == 0 { 2.0 / 3.0 } else { 4.0 / 3.0 })
        .collect();
    w[0] = 1.0 / 3.0;
    w[n_cycles] = 1.0 / 3.0;
    Ok(WccVector(w))
}

/// `(1 + d)^-t` for `t = 0..=n_cycles`.
pub fn discount_weights(rate: f64, n_cycles: usize) -> Result<DiscountVector> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "discount rate must be non-negative, got {rate}"
        )));
    }
    Ok(DiscountVector(
        (0..=n_cycles)
            .map(|t| 1.0 / (1.0 + rate).powi(t as i32))
            .collect(),
    ))
}

/// `y' (d * w)`.
pub fn total_discounted(y: &[f64], d: &DiscountVector, w: &WccVector) -> Result<f64> {
    if y.len() != d.0.len() || y.len() != w.0.len() {
        return Err(Error::DimensionMismatch(format!(
            "outcome length {}, discount length {}, correction length {}",
            y.len(),
            d.0.len(),
            w.0.len()
        )));
    }
    Ok(y.iter()
        .zip(&d.0)
        .zip(&w.0)
        .map(|((y, d), w)| y * d * w)
        .sum())
}
