//! End-to-end evaluation of a validated model: arrays, traces, epidemiology
//! and discounted totals for every strategy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::econ::{self, RewardArray, TransitionEdit};
use crate::engine::{self, CohortTrace};
use crate::epi::{self, SurvivalCurve};
use crate::model::{self, LifeTable, ModelSpec, ParameterSet, Strategy};
use crate::transition::{self, TransitionArray, TunnelPlan};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelVariant {
    /// Age-dependent probabilities only.
    #[default]
    SimTime,
    /// Age- and residence-dependent, using tunnel states.
    Tunnels,
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simtime" => Ok(Self::SimTime),
            "tunnels" => Ok(Self::Tunnels),
            other => Err(Error::InvalidArgument(format!(
                "unknown model variant `{other}` (expected simtime or tunnels)"
            ))),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SimTime => "simtime",
            Self::Tunnels => "tunnels",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTotals {
    pub strategy: String,
    pub cost: f64,
    pub qaly: f64,
}

#[derive(Debug, Clone)]
pub struct StrategyResult {
    pub strategy: String,
    /// Trace on the base states (tunnels summed when expanded).
    pub trace: CohortTrace,
    /// Trace on the expanded states for the tunnel variant.
    pub expanded_trace: Option<CohortTrace>,
    pub survival: SurvivalCurve,
    pub life_expectancy: f64,
    pub prevalence: Vec<(String, Vec<Option<f64>>)>,
    pub cost_per_cycle: Vec<f64>,
    pub qaly_per_cycle: Vec<f64>,
    pub total_cost: f64,
    pub total_qaly: f64,
}

impl StrategyResult {
    pub fn totals(&self) -> StrategyTotals {
        StrategyTotals {
            strategy: self.strategy.clone(),
            cost: self.total_cost,
            qaly: self.total_qaly,
        }
    }
}

struct Run {
    trace: CohortTrace,
    costs: Vec<f64>,
    qalys: Vec<f64>,
    total_cost: f64,
    total_qaly: f64,
}

/// A validated specification paired with its life table.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    life_table: LifeTable,
    plan: Option<TunnelPlan>,
}

impl Model {
    /// Validates `spec` against `life_table`, building every array once.
    pub fn new(spec: ModelSpec, life_table: LifeTable) -> Result<Self> {
        model::validate_spec(&spec, Some(&life_table)).into_result(())?;
        let plan = spec.tunnel_plan()?;
        Ok(Self {
            spec,
            life_table,
            plan,
        })
    }

    /// The bundled Sick-Sicker model and life table.
    pub fn builtin() -> Self {
        Self::new(model::builtin_sick_sicker(), model::builtin_life_table())
            .expect("bundled model is valid")
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn life_table(&self) -> &LifeTable {
        &self.life_table
    }

    pub fn tunnel_plan(&self) -> Option<&TunnelPlan> {
        self.plan.as_ref()
    }

    /// Same structure with a different parameter set. Parameter bounds are
    /// checked; array construction errors surface on evaluation.
    pub fn with_parameters(&self, params: ParameterSet) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.parameters = params;
        spec.check_parameters(&spec.parameters).into_result(())?;
        Ok(Self {
            spec,
            life_table: self.life_table.clone(),
            plan: self.plan.clone(),
        })
    }

    fn plan_for(&self, variant: ModelVariant) -> Result<Option<&TunnelPlan>> {
        match variant {
            ModelVariant::SimTime => Ok(None),
            ModelVariant::Tunnels => self.plan.as_ref().map(Some).ok_or_else(|| {
                Error::InvalidArgument("the specification defines no tunnel state".into())
            }),
        }
    }

    pub fn strategy(&self, name: &str) -> Result<&Strategy> {
        self.spec
            .strategy(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{name}`")))
    }

    pub fn transition_array(&self, strategy: &Strategy, variant: ModelVariant) -> Result<TransitionArray> {
        match self.plan_for(variant)? {
            None => transition::build_simtime_array(&self.spec, &self.life_table, strategy),
            Some(plan) => transition::build_tunnel_array(&self.spec, &self.life_table, strategy, plan),
        }
    }

    /// Cost and utility reward arrays for `strategy`.
    pub fn reward_arrays(
        &self,
        strategy: &Strategy,
        variant: ModelVariant,
    ) -> Result<(RewardArray, RewardArray)> {
        let spec = &self.spec;
        let params = &spec.parameters;
        let mut costs = BTreeMap::new();
        let mut utils = BTreeMap::new();
        for name in &spec.states.names {
            let mut c = spec.rewards.state_costs[name].eval(params)?;
            if let Some(add) = strategy.cost_addons.get(name) {
                c += add.eval(params)?;
            }
            let u = match strategy.utility_overrides.get(name) {
                Some(expr) => expr.eval(params)?,
                None => spec.rewards.state_utilities[name].eval(params)?,
            };
            costs.insert(name.clone(), c);
            utils.insert(name.clone(), u);
        }
        let mut cost_edits = Vec::new();
        let mut util_edits = Vec::new();
        for tr in spec.rewards.transitions.iter().chain(&strategy.transition_rewards) {
            for from in &tr.from {
                if let Some(c) = &tr.cost {
                    cost_edits.push(TransitionEdit::new(from.clone(), tr.to.clone(), c.eval(params)?));
                }
                if let Some(u) = &tr.utility {
                    util_edits.push(TransitionEdit::new(from.clone(), tr.to.clone(), u.eval(params)?));
                }
            }
        }

        let n_cycles = spec.time.n_cycles;
        match self.plan_for(variant)? {
            None => Ok((
                econ::build_reward_array(&spec.states.names, &costs, &cost_edits, n_cycles)?,
                econ::build_reward_array(&spec.states.names, &utils, &util_edits, n_cycles)?,
            )),
            Some(plan) => {
                let labels = plan.expanded_labels();
                Ok((
                    econ::build_reward_array(labels, &expand_rewards(plan, &costs), &expand_edits(plan, &cost_edits), n_cycles)?,
                    econ::build_reward_array(labels, &expand_rewards(plan, &utils), &expand_edits(plan, &util_edits), n_cycles)?,
                ))
            }
        }
    }

    fn run(&self, strategy: &Strategy, variant: ModelVariant) -> Result<Run> {
        let arr = self.transition_array(strategy, variant)?;
        let mut init = self.spec.initial_vector()?;
        if let Some(plan) = self.plan_for(variant)? {
            init = init.expand(plan)?;
        }
        let trace = engine::run_cohort(&init, &arr)?;
        let dynamics = engine::run_transition_dynamics(&init, &arr)?;
        let (r_cost, r_util) = self.reward_arrays(strategy, variant)?;
        let costs = econ::cycle_outcomes(&dynamics, &r_cost)?;
        let qalys = econ::cycle_outcomes(&dynamics, &r_util)?;

        let n = self.spec.time.n_cycles;
        let wcc = econ::wcc_weights(n)?;
        let d_c = econ::discount_weights(self.spec.discount.cost.eval(&self.spec.parameters)?, n)?;
        let d_e = econ::discount_weights(self.spec.discount.effect.eval(&self.spec.parameters)?, n)?;
        let total_cost = econ::total_discounted(&costs, &d_c, &wcc)?;
        let total_qaly = econ::total_discounted(&qalys, &d_e, &wcc)?;
        Ok(Run {
            trace,
            costs,
            qalys,
            total_cost,
            total_qaly,
        })
    }

    pub fn evaluate_strategy(&self, strategy: &Strategy, variant: ModelVariant) -> Result<StrategyResult> {
        let Run {
            trace,
            costs: cost_per_cycle,
            qalys: qaly_per_cycle,
            total_cost,
            total_qaly,
        } = self.run(strategy, variant)?;
        let (trace, expanded_trace) = match self.plan_for(variant)? {
            Some(plan) => (engine::aggregate_tunnels(&trace, plan)?, Some(trace)),
            None => (trace, None),
        };
        let deaths = &self.spec.states.death_states;
        let survival = epi::survival(&trace, deaths)?;
        let life_expectancy = epi::life_expectancy(&survival, self.spec.time.cycle_length);
        let prevalence = self
            .spec
            .prevalence_groups()
            .into_iter()
            .map(|(name, states)| Ok((name, epi::prevalence(&trace, &states, deaths)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(StrategyResult {
            strategy: strategy.name.clone(),
            trace,
            expanded_trace,
            survival,
            life_expectancy,
            prevalence,
            cost_per_cycle,
            qaly_per_cycle,
            total_cost,
            total_qaly,
        })
    }

    pub fn evaluate(&self, variant: ModelVariant) -> Result<Vec<StrategyResult>> {
        self.spec
            .strategies
            .iter()
            .map(|s| self.evaluate_strategy(s, variant))
            .collect()
    }

    /// Discounted totals only, in strategy order.
    pub fn totals(&self, variant: ModelVariant) -> Result<Vec<StrategyTotals>> {
        self.spec
            .strategies
            .iter()
            .map(|s| {
                let run = self.run(s, variant)?;
                Ok(StrategyTotals {
                    strategy: s.name.clone(),
                    cost: run.total_cost,
                    qaly: run.total_qaly,
                })
            })
            .collect()
    }
}

fn expand_rewards(plan: &TunnelPlan, base: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    plan.expanded_labels()
        .iter()
        .enumerate()
        .map(|(e, label)| (label.clone(), base[plan.base_label_of(e)]))
        .collect()
}

/// Applies each base edit to every expanded pair with matching base states.
/// Pairs that cannot carry flow get the increment too, which is harmless.
fn expand_edits(plan: &TunnelPlan, edits: &[TransitionEdit]) -> Vec<TransitionEdit> {
    let labels = plan.expanded_labels();
    let mut out = Vec::new();
    for edit in edits {
        for (i, from) in labels.iter().enumerate() {
            if plan.base_label_of(i) != edit.from {
                continue;
            }
            for (j, to) in labels.iter().enumerate() {
                if plan.base_label_of(j) == edit.to {
                    out.push(TransitionEdit::new(from.clone(), to.clone(), edit.delta));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variants_parse() {
        assert_eq!("simtime".parse::<ModelVariant>().unwrap(), ModelVariant::SimTime);
        assert_eq!("tunnels".parse::<ModelVariant>().unwrap(), ModelVariant::Tunnels);
        assert!("nope".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn builtin_totals_are_ordered() {
        let model = Model::builtin();
        let t = model.totals(ModelVariant::SimTime).unwrap();
        let names: Vec<_> = t.iter().map(|x| x.strategy.as_str()).collect();
        assert_eq!(names, ["Standard of care", "Strategy A", "Strategy B", "Strategy AB"]);
        // treatment raises both cost and QALYs; AB costs the most and gains the most
        assert!(t[1].cost > t[0].cost && t[1].qaly > t[0].qaly);
        assert!(t[3].cost > t[2].cost && t[3].qaly > t[2].qaly);
        assert!(t[2].cost < t[1].cost && t[2].qaly > t[1].qaly);
    }

    #[test]
    fn evaluate_matches_totals() {
        let model = Model::builtin();
        for variant in [ModelVariant::SimTime, ModelVariant::Tunnels] {
            let full = model.evaluate(variant).unwrap();
            let quick = model.totals(variant).unwrap();
            for (f, q) in full.iter().zip(&quick) {
                assert_eq!(f.totals(), *q);
            }
        }
    }

    #[test]
    fn tunnel_results_keep_base_labels() {
        let model = Model::builtin();
        let r = model.evaluate_strategy(&model.spec().strategies[0], ModelVariant::Tunnels).unwrap();
        assert_eq!(r.trace.labels(), ["H", "S1", "S2", "D"]);
        assert_eq!(r.expanded_trace.as_ref().unwrap().labels().len(), 78);
        let agg_le = r.life_expectancy;
        let expanded_le = epi::life_expectancy(
            &epi::survival(r.expanded_trace.as_ref().unwrap(), &["D".to_string()]).unwrap(),
            1.0,
        );
        assert_abs_diff_eq!(agg_le, expanded_le, epsilon = 1e-10);
    }

    #[test]
    fn free_treatment_a_costs_like_soc() {
        let model = Model::builtin();
        let mut params = model.spec().parameters.clone();
        params.set("c_trtA", 0.0);
        let model = model.with_parameters(params).unwrap();
        let soc = model.evaluate_strategy(&model.spec().strategies[0], ModelVariant::SimTime).unwrap();
        let a = model.evaluate_strategy(&model.spec().strategies[1], ModelVariant::SimTime).unwrap();
        for (x, y) in soc.cost_per_cycle.iter().zip(&a.cost_per_cycle) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let model = Model::builtin();
        let mut params = model.spec().parameters.clone();
        params.set("hr_S1", -1.0);
        assert!(model.with_parameters(params).is_err());
    }

    #[test]
    fn tunnels_need_a_plan() {
        let mut spec = model::builtin_sick_sicker();
        spec.tunnels = None;
        for e in &mut spec.transitions.edges {
            e.residence = None;
        }
        let model = Model::new(spec, model::builtin_life_table()).unwrap();
        assert!(model.totals(ModelVariant::Tunnels).is_err());
        assert!(model.totals(ModelVariant::SimTime).is_ok());
    }
}
