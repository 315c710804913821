//! Time-dependent transition probability arrays.
//!
//! Every non-absorbing origin first faces age-specific background mortality
//! (scaled by a per-state hazard ratio); the remaining transitions are
//! conditional on surviving the cycle, and whatever is left stays put. With
//! a [`TunnelPlan`] the tunneled state is split into one copy per cycle of
//! residence so that its exit probabilities can depend on time spent there.

use ndarray::{Array3, ArrayView2};

use crate::hazards::{self, Probability, Rate};
use crate::model::{LifeTable, ModelSpec, StateSpace, Strategy, TimeGrid};
use crate::validation::ValidationReport;
use crate::{Error, Result};

/// Default tolerance for row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Transition probabilities indexed `[cycle, from, to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionArray {
    labels: Vec<String>,
    values: Array3<f64>,
}

impl TransitionArray {
    /// Wraps raw values laid out `[cycle, from, to]`. Only shapes are checked
    /// here; use [`check_transition_array`] for the probability constraints.
    pub fn new(labels: Vec<String>, values: Array3<f64>) -> Result<Self> {
        let (_, n_from, n_to) = values.dim();
        if n_from != labels.len() || n_to != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {n_from}x{n_to} array",
                labels.len()
            )));
        }
        Ok(Self { labels, values })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cycles(&self) -> usize {
        self.values.dim().0
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, from: usize, to: usize, cycle: usize) -> f64 {
        self.values[[cycle, from, to]]
    }

    /// Looks up an entry by state labels.
    pub fn prob(&self, from: &str, to: &str, cycle: usize) -> Result<f64> {
        let i = self
            .index_of(from)
            .ok_or_else(|| Error::UnknownState(from.into()))?;
        let j = self
            .index_of(to)
            .ok_or_else(|| Error::UnknownState(to.into()))?;
        Ok(self.get(i, j, cycle))
    }

    pub fn slice(&self, cycle: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(ndarray::Axis(0), cycle)
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }
}

/// Expansion of one state into `tunnel_size` residence copies.
///
/// Expanded labels keep the base order with the tunneled state replaced in
/// place by `S_1Yr ... S_nYr`.
#[derive(Debug, Clone, PartialEq)]
pub struct TunnelPlan {
    expanded_state: String,
    tunnel_size: usize,
    base_labels: Vec<String>,
    expanded_labels: Vec<String>,
    base_of: Vec<usize>,
    residence_of: Vec<Option<usize>>,
    first_tunnel: usize,
}

impl TunnelPlan {
    pub fn new(states: &StateSpace, state: &str, tunnel_size: usize) -> Result<Self> {
        let target = states.require(state)?;
        if tunnel_size == 0 {
            return Err(Error::InvalidArgument(
                "tunnel size must be at least 1".into(),
            ));
        }
        let mut expanded_labels = Vec::new();
        let mut base_of = Vec::new();
        let mut residence_of = Vec::new();
        for (b, name) in states.names.iter().enumerate() {
            if b == target {
                for k in 0..tunnel_size {
                    expanded_labels.push(format!("{name}_{}Yr", k + 1));
                    base_of.push(b);
                    residence_of.push(Some(k));
                }
            } else {
                expanded_labels.push(name.clone());
                base_of.push(b);
                residence_of.push(None);
            }
        }
        Ok(Self {
            expanded_state: state.to_string(),
            tunnel_size,
            base_labels: states.names.clone(),
            expanded_labels,
            base_of,
            residence_of,
            first_tunnel: target,
        })
    }

    pub fn expanded_state(&self) -> &str {
        &self.expanded_state
    }

    pub fn tunnel_size(&self) -> usize {
        self.tunnel_size
    }

    pub fn base_labels(&self) -> &[String] {
        &self.base_labels
    }

    pub fn expanded_labels(&self) -> &[String] {
        &self.expanded_labels
    }

    /// Base state index of an expanded index.
    pub fn base_of(&self, expanded: usize) -> usize {
        self.base_of[expanded]
    }

    pub fn base_label_of(&self, expanded: usize) -> &str {
        &self.base_labels[self.base_of[expanded]]
    }

    /// Zero-based residence cycle for tunnel states, `None` otherwise.
    pub fn residence_of(&self, expanded: usize) -> Option<usize> {
        self.residence_of[expanded]
    }

    /// Expanded index that mass entering base state `base` lands in.
    pub fn entry_index(&self, base: usize) -> usize {
        if base <= self.first_tunnel {
            base
        } else {
            base + self.tunnel_size - 1
        }
    }

    /// Expanded index of tunnel `k` (zero-based).
    pub fn tunnel_index(&self, k: usize) -> usize {
        self.first_tunnel + k
    }
}

/// Background mortality rate for each cycle of the grid.
pub fn background_rates(life_table: &LifeTable, grid: &TimeGrid) -> Result<Vec<Rate>> {
    (0..grid.n_cycles)
        .map(|t| {
            let age = grid.age_at_cycle(t);
            life_table
                .rate_at(age)
                .ok_or(Error::LifeTableCoverage(age))
                .and_then(Rate::new)
        })
        .collect()
}

/// Per-cycle probabilities of dying, one vector per hazard ratio:
/// element `t` is `1 - exp(-mu(age_t) * hr * cycle_length)`.
pub fn mortality_vectors(
    life_table: &LifeTable,
    grid: &TimeGrid,
    hazard_ratios: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let rates = background_rates(life_table, grid)?;
    hazard_ratios
        .iter()
        .map(|&hr| {
            rates
                .iter()
                .map(|&r| {
                    let p = hazards::prob_from_rate(
                        hazards::apply_hazard_ratio(r, hr)?,
                        grid.cycle_length,
                    )?;
                    Ok(p.value())
                })
                .collect()
        })
        .collect()
}

enum EdgeProbs {
    Constant(f64),
    ByResidence(Vec<f64>),
}

struct OriginRule {
    death: Vec<f64>,
    edges: Vec<(usize, EdgeProbs)>,
}

fn origin_rules(
    spec: &ModelSpec,
    life_table: &LifeTable,
    strategy: &Strategy,
    plan: Option<&TunnelPlan>,
) -> Result<Vec<Option<OriginRule>>> {
    let params = &spec.parameters;
    let states = &spec.states;
    let tr = &spec.transitions;
    let cl = spec.time.cycle_length;
    let death_idx = states.require(&tr.death_state)?;
    let background = background_rates(life_table, &spec.time)?;

    let mut rules = Vec::with_capacity(states.len());
    for (b, name) in states.names.iter().enumerate() {
        if states.is_absorbing(name) {
            rules.push(None);
            continue;
        }
        let death = match tr.mortality.get(name) {
            Some(expr) => {
                let hr = expr.eval(params)?
                    * strategy.hazard_modifier(name, &tr.death_state, params)?;
                background
                    .iter()
                    .map(|&r| {
                        hazards::prob_from_rate(hazards::apply_hazard_ratio(r, hr)?, cl)
                            .map(Probability::value)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => vec![0.0; spec.time.n_cycles],
        };

        let tunneled = plan.is_some_and(|p| p.expanded_state() == name);
        let mut edges = Vec::new();
        for edge in tr.edges.iter().filter(|e| &e.from == name) {
            let to = states.require(&edge.to)?;
            if to == b || to == death_idx {
                return Err(Error::Model(format!(
                    "transition {} -> {} cannot be listed as an edge",
                    edge.from, edge.to
                )));
            }
            let hr = strategy.hazard_modifier(name, &edge.to, params)?;
            let probs = match (&edge.residence, plan) {
                (Some(w), Some(plan)) if tunneled => {
                    let scale = w.scale.eval(params)?;
                    let shape = w.shape.eval(params)?;
                    let probs = hazards::weibull_cycle_rates(scale, shape, plan.tunnel_size())?
                        .into_iter()
                        .map(|r| {
                            hazards::prob_from_rate(hazards::apply_hazard_ratio(r, hr)?, cl)
                                .map(Probability::value)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    EdgeProbs::ByResidence(probs)
                }
                (Some(_), Some(_)) => {
                    return Err(Error::Model(format!(
                        "residence hazard on {} -> {} but `{}` is not the tunneled state",
                        edge.from,
                        edge.to,
                        plan.map(TunnelPlan::expanded_state).unwrap_or_default()
                    )))
                }
                _ => {
                    let p = Probability::new(edge.probability.eval(params)?)?;
                    let p = if hr == 1.0 {
                        p
                    } else {
                        hazards::adjust_probability(p, hr, cl)?
                    };
                    EdgeProbs::Constant(p.value())
                }
            };
            edges.push((to, probs));
        }
        rules.push(Some(OriginRule { death, edges }));
    }
    Ok(rules)
}

fn fill(
    spec: &ModelSpec,
    labels: Vec<String>,
    rules: &[Option<OriginRule>],
    plan: Option<&TunnelPlan>,
) -> Result<TransitionArray> {
    let n = labels.len();
    let n_cycles = spec.time.n_cycles;
    let base_death = spec.states.require(&spec.transitions.death_state)?;
    let entry = |b: usize| plan.map_or(b, |p| p.entry_index(b));
    let death = entry(base_death);

    let mut values = Array3::<f64>::zeros((n_cycles, n, n));
    for t in 0..n_cycles {
        for e in 0..n {
            let (base, residence) = match plan {
                Some(p) => (p.base_of(e), p.residence_of(e)),
                None => (e, None),
            };
            let Some(rule) = &rules[base] else {
                values[[t, e, e]] = 1.0;
                continue;
            };
            let p_die = rule.death[t];
            let alive = 1.0 - p_die;
            let mut stay = 1.0;
            for (to, probs) in &rule.edges {
                let p = match probs {
                    EdgeProbs::Constant(p) => *p,
                    EdgeProbs::ByResidence(v) => v[residence.expect("residence edge on tunnel")],
                };
                stay -= p;
                values[[t, e, entry(*to)]] += alive * p;
            }
            let stay_at = match (plan, residence) {
                (Some(p), Some(k)) if k + 1 < p.tunnel_size() => p.tunnel_index(k + 1),
                _ => e,
            };
            values[[t, e, stay_at]] += alive * stay;
            values[[t, e, death]] += p_die;
        }
    }
    let arr = TransitionArray::new(labels, values)?;
    let report = check_transition_array(&arr, ROW_SUM_TOLERANCE);
    if report.is_pass() {
        Ok(arr)
    } else {
        Err(Error::InvalidArray(report))
    }
}

/// Age-dependent array for `strategy` on the base state space.
pub fn build_simtime_array(
    spec: &ModelSpec,
    life_table: &LifeTable,
    strategy: &Strategy,
) -> Result<TransitionArray> {
    let rules = origin_rules(spec, life_table, strategy, None)?;
    fill(spec, spec.states.names.clone(), &rules, None)
}

/// Age- and residence-dependent array on the tunnel-expanded state space.
pub fn build_tunnel_array(
    spec: &ModelSpec,
    life_table: &LifeTable,
    strategy: &Strategy,
    plan: &TunnelPlan,
) -> Result<TransitionArray> {
    if plan.base_labels() != spec.states.names.as_slice() {
        return Err(Error::DimensionMismatch(
            "tunnel plan was built for a different state space".into(),
        ));
    }
    let rules = origin_rules(spec, life_table, strategy, Some(plan))?;
    fill(spec, plan.expanded_labels().to_vec(), &rules, Some(plan))
}

/// Reports entries outside `[0, 1]` and rows whose sum is off by more than
/// `tolerance`.
pub fn check_transition_array(arr: &TransitionArray, tolerance: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    let labels = arr.labels();
    for t in 0..arr.n_cycles() {
        let slice = arr.slice(t);
        for (i, row) in slice.outer_iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    report.push(
                        format!("P[{} -> {}, cycle {t}]", labels[i], labels[j]),
                        format!("probability out of bounds: {p}"),
                    );
                }
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > tolerance || sum.is_nan() {
                report.push(
                    format!("P[{}, cycle {t}]", labels[i]),
                    format!("row sums to {sum}, off by {:e}", sum - 1.0),
                );
            }
        }
    }
    report
}
