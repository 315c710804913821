//! Domain types shared by every stage of the pipeline, the bundled
//! Sick-Sicker specification and spec validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::io;
use crate::psa::DistributionSpec;
use crate::transition::{self, TunnelPlan};
use crate::validation::ValidationReport;
use crate::{Error, Result};

const BUILTIN_SPEC: &str = include_str!("../data/sick_sicker.toml");
const BUILTIN_LIFE_TABLE: &str = include_str!("../data/us_life_table_2014.csv");

/// Tolerance on the sum of the initial state vector.
pub const INITIAL_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub names: Vec<String>,
    #[serde(default)]
    pub absorbing: Vec<String>,
    #[serde(default)]
    pub death_states: Vec<String>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    pub fn is_absorbing(&self, label: &str) -> bool {
        self.absorbing.iter().any(|a| a == label)
    }

    fn validate(&self, report: &mut ValidationReport) {
        if self.names.is_empty() {
            report.push("states.names", "state space is empty");
        }
        let mut seen = BTreeSet::new();
        for name in &self.names {
            if name.trim().is_empty() {
                report.push("states.names", "empty state label");
            } else if !seen.insert(name.as_str()) {
                report.push("states.names", format!("duplicate state name `{name}`"));
            }
        }
        for (field, list) in [("absorbing", &self.absorbing), ("death_states", &self.death_states)] {
            for label in list {
                if self.index_of(label).is_none() {
                    report.push(format!("states.{field}"), format!("unknown state `{label}`"));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_cycles: usize,
    pub cycle_length: f64,
    pub age_init: f64,
    pub age_max: f64,
}

impl TimeGrid {
    /// Integer life-table age used for cycle `t`.
    pub fn age_at_cycle(&self, t: usize) -> u32 {
        // small epsilon so that 25 + 3 * (1/3) lands on 26, not 25.999...
        (self.age_init + t as f64 * self.cycle_length + 1e-9).floor() as u32
    }

    fn validate(&self, report: &mut ValidationReport) {
        if !(self.cycle_length.is_finite() && self.cycle_length > 0.0) {
            report.push("time.cycle_length", format!("must be positive, got {}", self.cycle_length));
            return;
        }
        if self.n_cycles == 0 {
            report.push("time.n_cycles", "must be at least 1");
        }
        if !(self.age_init.is_finite() && self.age_init >= 0.0) {
            report.push("time.age_init", format!("must be non-negative, got {}", self.age_init));
        }
        let implied = (self.age_max - self.age_init) / self.cycle_length;
        if (implied - self.n_cycles as f64).abs() > 1e-9 {
            report.push(
                "time.n_cycles",
                format!(
                    "n_cycles {} does not equal (age_max - age_init) / cycle_length = {implied}",
                    self.n_cycles
                ),
            );
        }
    }
}

/// What a parameter means, inferred from its name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Probability,
    Utility,
    UtilityDecrement,
    Cost,
    HazardRatio,
    DiscountRate,
    WeibullScale,
    WeibullShape,
    Other,
}

impl ParamKind {
    pub fn of(name: &str) -> Self {
        if name.ends_with("_scale") {
            ParamKind::WeibullScale
        } else if name.ends_with("_shape") {
            ParamKind::WeibullShape
        } else if name.starts_with("p_") {
            ParamKind::Probability
        } else if name.starts_with("du_") {
            ParamKind::UtilityDecrement
        } else if name.starts_with("u_") {
            ParamKind::Utility
        } else if name.starts_with("c_") || name.starts_with("ic_") {
            ParamKind::Cost
        } else if name.starts_with("hr_") {
            ParamKind::HazardRatio
        } else if name.starts_with("d_") {
            ParamKind::DiscountRate
        } else {
            ParamKind::Other
        }
    }

    /// Describes why `value` is out of range, or `None` if it is fine.
    pub fn check(self, value: f64) -> Option<String> {
        if !value.is_finite() {
            return Some(format!("value {value} is not finite"));
        }
        match self {
            ParamKind::Probability if !(0.0..=1.0).contains(&value) => {
                Some(format!("probability out of range [0, 1]: {value}"))
            }
            ParamKind::Utility | ParamKind::UtilityDecrement if !(0.0..=1.0).contains(&value) => {
                Some(format!("utility out of range [0, 1]: {value}"))
            }
            ParamKind::Cost if value < 0.0 => Some(format!("cost must be non-negative: {value}")),
            ParamKind::HazardRatio if value <= 0.0 => {
                Some(format!("hazard ratio must be positive: {value}"))
            }
            ParamKind::DiscountRate if value < 0.0 => {
                Some(format!("discount rate must be non-negative: {value}"))
            }
            ParamKind::WeibullScale | ParamKind::WeibullShape if value <= 0.0 => {
                Some(format!("Weibull parameter must be positive: {value}"))
            }
            _ => None,
        }
    }
}

/// Named scalar parameters. Iteration order is by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSet(BTreeMap<String, f64>);

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bound checks by parameter kind.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::new();
        for (name, value) in self.iter() {
            if let Some(msg) = ParamKind::of(name).check(value) {
                report.push(format!("parameters.{name}"), msg);
            }
        }
        report
    }
}

impl FromIterator<(String, f64)> for ParameterSet {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A number, a parameter reference (`"p_HS1"`, negated as `"-du_HS1"`), or a
/// list whose evaluated terms are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamExpr {
    Number(f64),
    Name(String),
    Sum(Vec<ParamExpr>),
}

impl ParamExpr {
    pub fn eval(&self, params: &ParameterSet) -> Result<f64> {
        match self {
            ParamExpr::Number(x) => Ok(*x),
            ParamExpr::Name(name) => match name.strip_prefix('-') {
                Some(inner) => Ok(-params.get(inner.trim())?),
                None => params.get(name.trim()),
            },
            ParamExpr::Sum(terms) => terms.iter().map(|t| t.eval(params)).sum(),
        }
    }

    /// Parameter names referenced by this expression.
    pub fn references(&self) -> Vec<&str> {
        match self {
            ParamExpr::Number(_) => Vec::new(),
            ParamExpr::Name(name) => {
                vec![name.strip_prefix('-').unwrap_or(name).trim()]
            }
            ParamExpr::Sum(terms) => terms.iter().flat_map(|t| t.references()).collect(),
        }
    }
}

impl From<f64> for ParamExpr {
    fn from(x: f64) -> Self {
        ParamExpr::Number(x)
    }
}

impl From<&str> for ParamExpr {
    fn from(s: &str) -> Self {
        ParamExpr::Name(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifeTable {
    first_age: u32,
    rates: Vec<f64>,
}

impl LifeTable {
    /// Builds a table from `(age, rate)` rows; ages must be contiguous and
    /// ascending, rates finite and non-negative.
    pub fn new(rows: Vec<(u32, f64)>) -> Result<Self> {
        let Some(&(first_age, _)) = rows.first() else {
            return Err(Error::Parse("life table is empty".into()));
        };
        let mut rates = Vec::with_capacity(rows.len());
        for (i, (age, rate)) in rows.into_iter().enumerate() {
            if age != first_age + i as u32 {
                return Err(Error::Parse(format!(
                    "life table ages must be contiguous and ascending; expected {}, found {age}",
                    first_age + i as u32
                )));
            }
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::Parse(format!(
                    "life table rate at age {age} must be finite and non-negative, got {rate}"
                )));
            }
            rates.push(rate);
        }
        Ok(Self { first_age, rates })
    }

    pub fn first_age(&self) -> u32 {
        self.first_age
    }

    pub fn last_age(&self) -> u32 {
        self.first_age + self.rates.len() as u32 - 1
    }

    pub fn rate_at(&self, age: u32) -> Option<f64> {
        age.checked_sub(self.first_age)
            .and_then(|i| self.rates.get(i as usize))
            .copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.rates
            .iter()
            .enumerate()
            .map(|(i, r)| (self.first_age + i as u32, *r))
    }

    /// Returns a copy with the rate at `age` replaced.
    pub fn with_rate(&self, age: u32, rate: f64) -> Result<Self> {
        let mut rows: Vec<_> = self.rows().collect();
        let slot = rows
            .iter_mut()
            .find(|(a, _)| *a == age)
            .ok_or(Error::LifeTableCoverage(age))?;
        slot.1 = rate;
        Self::new(rows)
    }
}

/// Cohort distribution at cycle 0, ordered like the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateVector(Vec<f64>);

impl InitialStateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "initial state entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > INITIAL_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "initial state entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_map(states: &StateSpace, map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values = vec![0.0; states.len()];
        for (label, v) in map {
            values[states.require(label)?] = *v;
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Moves mass in the tunneled state into its first tunnel.
    pub fn expand(&self, plan: &TunnelPlan) -> Result<Self> {
        if self.0.len() != plan.base_labels().len() {
            return Err(Error::DimensionMismatch(format!(
                "initial vector has {} entries, state space has {}",
                self.0.len(),
                plan.base_labels().len()
            )));
        }
        let mut out = vec![0.0; plan.expanded_labels().len()];
        for (base_idx, v) in self.0.iter().enumerate() {
            out[plan.entry_index(base_idx)] += v;
        }
        Ok(Self(out))
    }
}

/// Survival-conditional transition from one state to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub probability: ParamExpr,
    /// Weibull residence hazard used instead of `probability` when the origin
    /// is expanded into tunnels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residence: Option<WeibullSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullSpec {
    pub scale: ParamExpr,
    pub shape: ParamExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    /// Destination of background mortality.
    pub death_state: String,
    /// Hazard-ratio multiplier on background mortality per origin state.
    /// Non-absorbing states missing here face no background mortality.
    pub mortality: BTreeMap<String, ParamExpr>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

/// One-off increments attached to transitions `from -> to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReward {
    pub from: Vec<String>,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<ParamExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<ParamExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub state_costs: BTreeMap<String, ParamExpr>,
    pub state_utilities: BTreeMap<String, ParamExpr>,
    #[serde(default)]
    pub transitions: Vec<TransitionReward>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    pub cost: ParamExpr,
    pub effect: ParamExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub utility_overrides: BTreeMap<String, ParamExpr>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cost_addons: BTreeMap<String, ParamExpr>,
    /// Keys are `"FROM->TO"`; values multiply the rate of that transition.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hazard_modifiers: BTreeMap<String, ParamExpr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transition_rewards: Vec<TransitionReward>,
}

impl Strategy {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            utility_overrides: BTreeMap::new(),
            cost_addons: BTreeMap::new(),
            hazard_modifiers: BTreeMap::new(),
            transition_rewards: Vec::new(),
        }
    }

    /// File-name friendly form of the name.
    pub fn slug(&self) -> String {
        let mut out = String::new();
        for c in self.name.chars() {
            if c.is_ascii_alphanumeric() {
                out.push(c.to_ascii_lowercase());
            } else if !out.ends_with('_') {
                out.push('_');
            }
        }
        out.trim_matches('_').to_string()
    }

    /// Hazard ratio for `from -> to`, 1 when unmodified.
    pub fn hazard_modifier(&self, from: &str, to: &str, params: &ParameterSet) -> Result<f64> {
        for (key, hr) in &self.hazard_modifiers {
            if let Some((f, t)) = parse_transition_key(key) {
                if f == from && t == to {
                    return hr.eval(params);
                }
            }
        }
        Ok(1.0)
    }
}

/// Splits `"S1->S2"` into its endpoints.
pub fn parse_transition_key(key: &str) -> Option<(&str, &str)> {
    let (from, to) = key.split_once("->")?;
    let (from, to) = (from.trim(), to.trim());
    (!from.is_empty() && !to.is_empty()).then_some((from, to))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelSpec {
    pub state: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Life-table CSV, relative to the spec file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub life_table: Option<String>,
    pub states: StateSpace,
    pub time: TimeGrid,
    pub initial: BTreeMap<String, f64>,
    pub discount: DiscountSpec,
    pub parameters: ParameterSet,
    pub transitions: TransitionSpec,
    pub rewards: RewardSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tunnels: Option<TunnelSpec>,
    /// Named groups of states reported as prevalence; defaults to each
    /// non-death state on its own.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub prevalence: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psa: Option<DistributionSpec>,
    pub strategies: Vec<Strategy>,
}

impl ModelSpec {
    pub fn initial_vector(&self) -> Result<InitialStateVector> {
        InitialStateVector::from_map(&self.states, &self.initial)
    }

    pub fn strategy(&self, name: &str) -> Option<&Strategy> {
        self.strategies.iter().find(|s| s.name == name)
    }

    pub fn tunnel_plan(&self) -> Result<Option<TunnelPlan>> {
        self.tunnels
            .as_ref()
            .map(|t| TunnelPlan::new(&self.states, &t.state, t.size))
            .transpose()
    }

    pub fn prevalence_groups(&self) -> Vec<(String, Vec<String>)> {
        if self.prevalence.is_empty() {
            self.states
                .names
                .iter()
                .filter(|n| !self.states.death_states.contains(n))
                .map(|n| (n.clone(), vec![n.clone()]))
                .collect()
        } else {
            self.prevalence
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        }
    }

    /// Checks that do not need a life table: parameter bounds, references
    /// and per-state edge probability sums under `params`.
    pub fn check_parameters(&self, params: &ParameterSet) -> ValidationReport {
        let mut report = params.validate();
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for edge in &self.transitions.edges {
            match edge.probability.eval(params) {
                Ok(p) => {
                    if !(0.0..=1.0).contains(&p) {
                        report.push(
                            format!("transitions.edges[{} -> {}]", edge.from, edge.to),
                            format!("probability out of range [0, 1]: {p}"),
                        );
                    }
                    *sums.entry(edge.from.as_str()).or_default() += p;
                }
                Err(e) => report.push(
                    format!("transitions.edges[{} -> {}]", edge.from, edge.to),
                    e.to_string(),
                ),
            }
        }
        for (from, sum) in sums {
            if sum > 1.0 + 1e-12 {
                report.push(
                    format!("transitions.edges[{from}]"),
                    format!("probability out of range: edges leaving {from} sum to {sum}"),
                );
            }
        }
        report
    }
}

fn check_refs(
    report: &mut ValidationReport,
    path: &str,
    expr: &ParamExpr,
    params: &ParameterSet,
) {
    for name in expr.references() {
        if !params.contains(name) {
            report.push(path, format!("unknown parameter `{name}`"));
        }
    }
}

fn check_state(report: &mut ValidationReport, path: &str, label: &str, states: &StateSpace) {
    if states.index_of(label).is_none() {
        report.push(path, format!("unknown state `{label}`"));
    }
}

fn check_reward_edits(
    report: &mut ValidationReport,
    path: &str,
    edits: &[TransitionReward],
    spec: &ModelSpec,
) {
    for (i, edit) in edits.iter().enumerate() {
        let p = format!("{path}[{i}]");
        for from in &edit.from {
            check_state(report, &p, from, &spec.states);
        }
        check_state(report, &p, &edit.to, &spec.states);
        for expr in edit.cost.iter().chain(edit.utility.iter()) {
            check_refs(report, &p, expr, &spec.parameters);
        }
    }
}

/// Full structural and numerical check of a specification. When a life
/// table is given, every strategy's arrays are built and checked as well.
pub fn validate_spec(spec: &ModelSpec, life_table: Option<&LifeTable>) -> ValidationReport {
    let mut report = ValidationReport::new();
    let states = &spec.states;
    let params = &spec.parameters;

    states.validate(&mut report);
    spec.time.validate(&mut report);

    let mut total = 0.0;
    for (label, v) in &spec.initial {
        check_state(&mut report, "initial", label, states);
        if !(v.is_finite() && *v >= 0.0) {
            report.push(format!("initial.{label}"), format!("occupancy must be non-negative, got {v}"));
        }
        total += v;
    }
    if (total - 1.0).abs() > INITIAL_SUM_TOLERANCE {
        report.push("initial", format!("occupancies sum to {total}, expected 1"));
    }

    check_refs(&mut report, "discount.cost", &spec.discount.cost, params);
    check_refs(&mut report, "discount.effect", &spec.discount.effect, params);

    let tr = &spec.transitions;
    check_state(&mut report, "transitions.death_state", &tr.death_state, states);
    for (label, expr) in &tr.mortality {
        let path = format!("transitions.mortality.{label}");
        check_state(&mut report, &path, label, states);
        check_refs(&mut report, &path, expr, params);
        if states.is_absorbing(label) {
            report.push(path, "absorbing state cannot have mortality");
        }
    }
    let mut edge_keys = BTreeSet::new();
    for edge in &tr.edges {
        let path = format!("transitions.edges[{} -> {}]", edge.from, edge.to);
        check_state(&mut report, &path, &edge.from, states);
        check_state(&mut report, &path, &edge.to, states);
        check_refs(&mut report, &path, &edge.probability, params);
        if let Some(w) = &edge.residence {
            check_refs(&mut report, &path, &w.scale, params);
            check_refs(&mut report, &path, &w.shape, params);
        }
        if edge.from == edge.to {
            report.push(&path, "self transitions are implied by the residual and cannot be listed");
        }
        if states.is_absorbing(&edge.from) {
            report.push(&path, "absorbing state cannot have outgoing transitions");
        }
        if edge.to == tr.death_state {
            report.push(&path, "death is modelled through background mortality");
        }
        if !edge_keys.insert((edge.from.as_str(), edge.to.as_str())) {
            report.push(&path, "duplicate transition");
        }
    }

    for (label, expr) in spec.rewards.state_costs.iter().chain(&spec.rewards.state_utilities) {
        check_state(&mut report, "rewards", label, states);
        check_refs(&mut report, &format!("rewards.{label}"), expr, params);
    }
    for name in &states.names {
        if !spec.rewards.state_costs.contains_key(name) {
            report.push("rewards.state_costs", format!("missing cost for state `{name}`"));
        }
        if !spec.rewards.state_utilities.contains_key(name) {
            report.push("rewards.state_utilities", format!("missing utility for state `{name}`"));
        }
    }
    check_reward_edits(&mut report, "rewards.transitions", &spec.rewards.transitions, spec);

    if let Some(t) = &spec.tunnels {
        check_state(&mut report, "tunnels.state", &t.state, states);
        if t.size == 0 {
            report.push("tunnels.size", "must be at least 1");
        }
        if states.is_absorbing(&t.state) {
            report.push("tunnels.state", "cannot expand an absorbing state");
        }
    }
    for edge in &tr.edges {
        if edge.residence.is_some() && spec.tunnels.as_ref().map(|t| &t.state) != Some(&edge.from) {
            report.push(
                format!("transitions.edges[{} -> {}]", edge.from, edge.to),
                "residence hazard requires the origin to be the tunneled state",
            );
        }
    }

    for (group, members) in &spec.prevalence {
        for m in members {
            check_state(&mut report, &format!("prevalence.{group}"), m, states);
            if states.death_states.contains(m) {
                report.push(format!("prevalence.{group}"), format!("`{m}` is a death state"));
            }
        }
    }

    if spec.strategies.is_empty() {
        report.push("strategies", "at least one strategy is required");
    }
    let mut names = BTreeSet::new();
    for s in &spec.strategies {
        let path = format!("strategies[{}]", s.name);
        if !names.insert(s.name.as_str()) {
            report.push(&path, "duplicate strategy name");
        }
        for (label, expr) in s.utility_overrides.iter().chain(&s.cost_addons) {
            check_state(&mut report, &path, label, states);
            check_refs(&mut report, &path, expr, params);
        }
        for (key, expr) in &s.hazard_modifiers {
            check_refs(&mut report, &path, expr, params);
            match parse_transition_key(key) {
                None => report.push(&path, format!("malformed transition key `{key}`")),
                Some((f, t)) => {
                    let is_edge = edge_keys.contains(&(f, t));
                    let is_mortality = t == tr.death_state && tr.mortality.contains_key(f);
                    if !is_edge && !is_mortality {
                        report.push(&path, format!("unknown transition `{key}`"));
                    }
                }
            }
        }
        check_reward_edits(&mut report, &format!("{path}.transition_rewards"), &s.transition_rewards, spec);
    }

    if let Some(psa) = &spec.psa {
        for name in psa.parameters.keys() {
            if !params.contains(name) {
                report.push(format!("psa.{name}"), "unknown parameter");
            }
        }
    }

    report.extend(spec.check_parameters(params));

    match life_table {
        None => report.push("life_table", "life table coverage: no life table supplied"),
        Some(lt) => {
            let missing: Vec<u32> = (0..spec.time.n_cycles)
                .map(|t| spec.time.age_at_cycle(t))
                .filter(|a| lt.rate_at(*a).is_none())
                .collect();
            if let (Some(lo), Some(hi)) = (missing.first(), missing.last()) {
                report.push(
                    "life_table",
                    format!(
                        "life table coverage: ages {lo}..={hi} missing (table covers {}..={})",
                        lt.first_age(),
                        lt.last_age()
                    ),
                );
            }
        }
    }

    // Only attempt construction when the inputs are otherwise sound.
    if report.is_pass() {
        if let Some(lt) = life_table {
            check_built_arrays(spec, lt, &mut report);
        }
    }
    report
}

fn check_built_arrays(spec: &ModelSpec, lt: &LifeTable, report: &mut ValidationReport) {
    let plan = match spec.tunnel_plan() {
        Ok(p) => p,
        Err(e) => {
            report.push("tunnels", e.to_string());
            return;
        }
    };
    for s in &spec.strategies {
        let path = format!("strategies[{}]", s.name);
        let built = transition::build_simtime_array(spec, lt, s)
            .map(|a| ("simtime", transition::check_transition_array(&a, transition::ROW_SUM_TOLERANCE)));
        record_build(report, &path, built);
        if let Some(plan) = &plan {
            let built = transition::build_tunnel_array(spec, lt, s, plan)
                .map(|a| ("tunnels", transition::check_transition_array(&a, transition::ROW_SUM_TOLERANCE)));
            record_build(report, &path, built);
        }
    }
}

fn record_build(
    report: &mut ValidationReport,
    path: &str,
    built: Result<(&str, ValidationReport)>,
) {
    match built {
        Ok((variant, r)) => report.extend_prefixed(&format!("{path}.{variant}"), r),
        Err(Error::InvalidArray(r)) => report.extend_prefixed(path, r),
        Err(e) => report.push(path, e.to_string()),
    }
}

/// The four-strategy Sick-Sicker model with its base-case parameters.
pub fn builtin_sick_sicker() -> ModelSpec {
    io::parse_spec(BUILTIN_SPEC).expect("bundled specification parses")
}

/// US 2014 period life table (central death rates by single year of age).
pub fn builtin_life_table() -> LifeTable {
    io::parse_life_table(BUILTIN_LIFE_TABLE.as_bytes()).expect("bundled life table parses")
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamKind::Probability => "probability",
            ParamKind::Utility => "utility",
            ParamKind::UtilityDecrement => "utility decrement",
            ParamKind::Cost => "cost",
            ParamKind::HazardRatio => "hazard ratio",
            ParamKind::DiscountRate => "discount rate",
            ParamKind::WeibullScale => "Weibull scale",
            ParamKind::WeibullShape => "Weibull shape",
            ParamKind::Other => "other",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        let spec = builtin_sick_sicker();
        let p = &spec.parameters;
        assert_eq!(p.get("p_HS1").unwrap(), 0.15);
        assert_eq!(p.get("hr_S2").unwrap(), 10.0);
        assert_eq!(p.get("c_trtB").unwrap(), 13000.0);
        assert_eq!(p.get("du_HS1").unwrap(), 0.01);
        assert_eq!(p.get("ic_HS1").unwrap(), 1000.0);
        assert_eq!(p.get("ic_D").unwrap(), 2000.0);
        assert_eq!(spec.states.names, ["H", "S1", "S2", "D"]);
        assert_eq!(spec.time.n_cycles, 75);
        assert_eq!(spec.time.age_init, 25.0);
        assert_eq!(spec.time.age_max, 100.0);
    }

    #[test]
    fn builtin_has_every_listed_parameter() {
        let spec = builtin_sick_sicker();
        for name in [
            "p_HS1", "p_S1H", "p_S1S2", "hr_S1", "hr_S2", "hr_S1S2_trtB", "p_S1S2_scale",
            "p_S1S2_shape", "c_H", "c_S1", "c_S2", "c_D", "c_trtA", "c_trtB", "u_H", "u_S1",
            "u_S2", "u_D", "u_trtA", "du_HS1", "ic_HS1", "ic_D", "d_c", "d_e",
        ] {
            assert!(spec.parameters.contains(name), "missing {name}");
        }
    }

    #[test]
    fn builtin_validates() {
        let spec = builtin_sick_sicker();
        let report = validate_spec(&spec, Some(&builtin_life_table()));
        assert!(report.is_pass(), "{report}");
    }

    #[test]
    fn probability_out_of_range() {
        let mut spec = builtin_sick_sicker();
        spec.parameters.set("p_HS1", 1.5);
        let report = validate_spec(&spec, Some(&builtin_life_table()));
        assert!(report.mentions("probability out of range"), "{report}");
        assert!(report.violations().iter().any(|v| v.path == "parameters.p_HS1"));
    }

    #[test]
    fn short_life_table() {
        let spec = builtin_sick_sicker();
        let rows: Vec<_> = builtin_life_table().rows().filter(|(a, _)| *a <= 80).collect();
        let lt = LifeTable::new(rows).unwrap();
        let report = validate_spec(&spec, Some(&lt));
        assert!(report.mentions("life table coverage"), "{report}");
        assert!(validate_spec(&spec, None).mentions("life table coverage"));
    }

    #[test]
    fn duplicate_states_and_bad_references() {
        let mut spec = builtin_sick_sicker();
        spec.states.names.push("S1".into());
        spec.strategies[1].cost_addons.insert("S9".into(), "c_nope".into());
        spec.strategies[2].hazard_modifiers.insert("S2->H".into(), 0.5.into());
        let report = validate_spec(&spec, None);
        assert!(report.mentions("duplicate state name `S1`"));
        assert!(report.mentions("unknown state `S9`"));
        assert!(report.mentions("unknown parameter `c_nope`"));
        assert!(report.mentions("unknown transition `S2->H`"));
    }

    #[test]
    fn inconsistent_time_grid() {
        let mut spec = builtin_sick_sicker();
        spec.time.n_cycles = 70;
        assert!(validate_spec(&spec, Some(&builtin_life_table())).mentions("does not equal"));
    }

    #[test]
    fn initial_vector_checks() {
        assert!(InitialStateVector::new(vec![0.5, 0.5]).is_ok());
        assert!(InitialStateVector::new(vec![0.5, 0.4]).is_err());
        assert!(InitialStateVector::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn life_table_must_be_contiguous() {
        assert!(LifeTable::new(vec![(0, 0.1), (2, 0.2)]).is_err());
        assert!(LifeTable::new(vec![(0, -0.1)]).is_err());
        assert!(LifeTable::new(vec![]).is_err());
        let lt = LifeTable::new(vec![(10, 0.1), (11, 0.2)]).unwrap();
        assert_eq!(lt.rate_at(11), Some(0.2));
        assert_eq!(lt.rate_at(9), None);
        assert_eq!(lt.rate_at(12), None);
    }

    #[test]
    fn param_expr_eval() {
        let mut p = ParameterSet::new();
        p.set("u_S1", 0.75);
        p.set("du_HS1", 0.01);
        let e = ParamExpr::Sum(vec!["u_S1".into(), "-du_HS1".into(), 1.0.into()]);
        assert!((e.eval(&p).unwrap() - 1.74).abs() < 1e-15);
        assert_eq!(e.references(), ["u_S1", "du_HS1"]);
        assert!(ParamExpr::from("nope").eval(&p).is_err());
    }

    #[test]
    fn kinds_from_names() {
        assert_eq!(ParamKind::of("p_HS1"), ParamKind::Probability);
        assert_eq!(ParamKind::of("p_S1S2_scale"), ParamKind::WeibullScale);
        assert_eq!(ParamKind::of("du_HS1"), ParamKind::UtilityDecrement);
        assert_eq!(ParamKind::of("ic_D"), ParamKind::Cost);
        assert_eq!(ParamKind::of("hr_S1S2_trtB"), ParamKind::HazardRatio);
        assert_eq!(ParamKind::of("d_e"), ParamKind::DiscountRate);
        assert_eq!(ParamKind::of("n_age"), ParamKind::Other);
    }

    #[test]
    fn slugs() {
        assert_eq!(Strategy::named("Standard of care").slug(), "standard_of_care");
        assert_eq!(Strategy::named("Strategy AB").slug(), "strategy_ab");
    }

    #[test]
    fn age_index_with_fractional_cycles() {
        let g = TimeGrid { n_cycles: 6, cycle_length: 1.0 / 3.0, age_init: 25.0, age_max: 27.0 };
        let ages: Vec<u32> = (0..6).map(|t| g.age_at_cycle(t)).collect();
        assert_eq!(ages, [25, 25, 25, 26, 26, 26]);
    }
}
