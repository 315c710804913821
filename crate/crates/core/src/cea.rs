//! Incremental cost-effectiveness with strong and extended dominance.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// On the efficient frontier.
    NonDominated,
    /// Costs at least as much and yields no more effect than another strategy.
    Dominated,
    /// Beaten by a mix of two frontier neighbours.
    ExtendedlyDominated,
}

impl Status {
    pub fn code(self) -> &'static str {
        match self {
            Status::NonDominated => "ND",
            Status::Dominated => "D",
            Status::ExtendedlyDominated => "ED",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeaRow {
    pub strategy: String,
    pub cost: f64,
    pub effect: f64,
    /// Versus the previous frontier strategy; `None` off the frontier and
    /// for the cheapest frontier strategy.
    pub inc_cost: Option<f64>,
    pub inc_effect: Option<f64>,
    pub icer: Option<f64>,
    pub status: Status,
}

fn icer(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.0 - a.0) / (b.1 - a.1)
}

/// Classifies strategies and computes ICERs along the efficient frontier.
///
/// Frontier rows come first in ascending cost, followed by the remaining
/// rows in ascending cost. Identical `(cost, effect)` points keep the one
/// listed first; at equal cost the more effective strategy dominates.
pub fn calculate_icers<S: AsRef<str>>(
    costs: &[f64],
    effects: &[f64],
    names: &[S],
) -> Result<Vec<CeaRow>> {
    let n = names.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no strategies to compare".into()));
    }
    if costs.len() != n || effects.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} names, {} costs, {} effects",
            costs.len(),
            effects.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for (i, name) in names.iter().enumerate() {
        let name = name.as_ref();
        if !seen.insert(name) {
            return Err(Error::InvalidArgument(format!("duplicate strategy name `{name}`")));
        }
        if !costs[i].is_finite() || !effects[i].is_finite() {
            return Err(Error::InvalidArgument(format!(
                "strategy `{name}` has a non-finite cost or effect"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .unwrap_or(Ordering::Equal)
            .then(effects[b].partial_cmp(&effects[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });

    let mut status = vec![Status::NonDominated; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let no_worse = costs[j] <= costs[i] && effects[j] >= effects[i];
            let strictly = costs[j] < costs[i] || effects[j] > effects[i];
            let tie_loses = !strictly && j < i;
            if no_worse && (strictly || tie_loses) {
                status[i] = Status::Dominated;
                break;
            }
        }
    }

    let mut frontier: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| status[i] == Status::NonDominated)
        .collect();
    let point = |i: usize| (costs[i], effects[i]);
    'prune: loop {
        for k in 1..frontier.len().saturating_sub(1) {
            let here = icer(point(frontier[k - 1]), point(frontier[k]));
            let next = icer(point(frontier[k]), point(frontier[k + 1]));
            if here >= next {
                status[frontier[k]] = Status::ExtendedlyDominated;
                frontier.remove(k);
                continue 'prune;
            }
        }
        break;
    }

    let mut rows = Vec::with_capacity(n);
    for (pos, &i) in frontier.iter().enumerate() {
        let (inc_cost, inc_effect, icer) = if pos == 0 {
            (None, None, None)
        } else {
            let prev = frontier[pos - 1];
            let dc = costs[i] - costs[prev];
            let de = effects[i] - effects[prev];
            (Some(dc), Some(de), Some(dc / de))
        };
        rows.push(CeaRow {
            strategy: names[i].as_ref().to_string(),
            cost: costs[i],
            effect: effects[i],
            inc_cost,
            inc_effect,
            icer,
            status: Status::NonDominated,
        });
    }
    for &i in order.iter().filter(|&&i| status[i] != Status::NonDominated) {
        rows.push(CeaRow {
            strategy: names[i].as_ref().to_string(),
            cost: costs[i],
            effect: effects[i],
            inc_cost: None,
            inc_effect: None,
            icer: None,
            status: status[i],
        });
    }
    Ok(rows)
}

/// Frontier rows in ascending cost.
pub fn frontier(rows: &[CeaRow]) -> Vec<CeaRow> {
    let mut out: Vec<CeaRow> = rows
        .iter()
        .filter(|r| r.status == Status::NonDominated)
        .cloned()
        .collect();
    out.sort_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap_or(Ordering::Equal));
    out
}
