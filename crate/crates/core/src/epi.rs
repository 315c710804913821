//! Survival, restricted life expectancy and prevalence from a cohort trace.

use crate::engine::CohortTrace;
use crate::{Error, Result};

/// Proportion alive at the start of each cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn death_columns(trace: &CohortTrace, death_states: &[String]) -> Result<Vec<bool>> {
    let mut is_death = vec![false; trace.labels().len()];
    for d in death_states {
        is_death[trace.require(d)?] = true;
    }
    Ok(is_death)
}

/// `S(t)`: sum of the non-death columns of row `t`.
pub fn survival(trace: &CohortTrace, death_states: &[String]) -> Result<SurvivalCurve> {
    let is_death = death_columns(trace, death_states)?;
    let values = trace
        .values()
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&is_death)
                .filter(|(_, d)| !**d)
                .map(|(x, _)| x)
                .sum()
        })
        .collect();
    Ok(SurvivalCurve { values })
}

/// Sum of `S(t)` over `t = 0..=n_cycles`, in years. No half-cycle
/// correction is applied.
pub fn life_expectancy(s: &SurvivalCurve, cycle_length: f64) -> f64 {
    s.values.iter().sum::<f64>() * cycle_length
}

/// Share of the living cohort found in `states` at each cycle. Cycles with
/// nobody alive have no defined prevalence and yield `None`.
pub fn prevalence(
    trace: &CohortTrace,
    states: &[String],
    death_states: &[String],
) -> Result<Vec<Option<f64>>> {
    let mut cols = Vec::with_capacity(states.len());
    for s in states {
        if death_states.contains(s) {
            return Err(Error::InvalidArgument(format!(
                "prevalence of death state `{s}` is undefined"
            )));
        }
        cols.push(trace.require(s)?);
    }
    let surv = survival(trace, death_states)?;
    Ok(trace
        .values()
        .rows()
        .into_iter()
        .zip(surv.values())
        .map(|(row, &alive)| {
            if alive > 0.0 {
                Some(cols.iter().map(|&c| row[c]).sum::<f64>() / alive)
            } else {
                None
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{aggregate_tunnels, run_cohort};
    use crate::model::{builtin_life_table, builtin_sick_sicker};
    use crate::transition::{build_simtime_array, build_tunnel_array};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn d() -> Vec<String> {
        vec!["D".to_string()]
    }

    fn toy_trace(rows: &[[f64; 2]]) -> CohortTrace {
        let mut v = Array2::zeros((rows.len(), 2));
        for (t, r) in rows.iter().enumerate() {
            v[[t, 0]] = r[0];
            v[[t, 1]] = r[1];
        }
        CohortTrace::new(vec!["A".into(), "D".into()], v).unwrap()
    }

    #[test]
    fn halving_survival() {
        let rows: Vec<[f64; 2]> = (0..6).map(|t| {
            let a = 0.5f64.powi(t);
            [a, 1.0 - a]
        }).collect();
        let s = survival(&toy_trace(&rows), &d()).unwrap();
        for (t, v) in s.values().iter().enumerate() {
            assert_eq!(*v, 0.5f64.powi(t as i32));
        }
    }

    #[test]
    fn life_expectancy_edges() {
        let s = SurvivalCurve::new(vec![1.0; 11]);
        assert_eq!(life_expectancy(&s, 1.0), 11.0);
        assert_eq!(life_expectancy(&s, 0.5), 5.5);
        let s = SurvivalCurve::new(vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(life_expectancy(&s, 1.0), 1.0);
    }

    #[test]
    fn prevalence_undefined_after_extinction() {
        let trace = toy_trace(&[[1.0, 0.0], [0.0, 1.0]]);
        let p = prevalence(&trace, &["A".to_string()], &d()).unwrap();
        assert_eq!(p, vec![Some(1.0), None]);
        assert!(prevalence(&trace, &d(), &d()).is_err());
        assert!(prevalence(&trace, &["Z".to_string()], &d()).is_err());
        assert!(survival(&trace, &["Z".to_string()]).is_err());
    }

    #[test]
    fn sick_sicker_epi() {
        let spec = builtin_sick_sicker();
        let arr = build_simtime_array(&spec, &builtin_life_table(), &spec.strategies[0]).unwrap();
        let trace = run_cohort(&spec.initial_vector().unwrap(), &arr).unwrap();
        let s = survival(&trace, &d()).unwrap();
        assert_eq!(s.values()[0], 1.0);
        assert!(s.values().windows(2).all(|w| w[1] < w[0]));

        let s1 = prevalence(&trace, &["S1".to_string()], &d()).unwrap();
        let s2 = prevalence(&trace, &["S2".to_string()], &d()).unwrap();
        let both = prevalence(&trace, &["S1".to_string(), "S2".to_string()], &d()).unwrap();
        let h = prevalence(&trace, &["H".to_string()], &d()).unwrap();
        assert_eq!(s1[0], Some(0.0));
        for t in 0..=75 {
            let (a, b, c, hh) = (s1[t].unwrap(), s2[t].unwrap(), both[t].unwrap(), h[t].unwrap());
            assert_abs_diff_eq!(a + b, c, epsilon = 1e-12);
            assert_abs_diff_eq!(a + b + hh, 1.0, epsilon = 1e-12);
            assert!((0.0..=1.0).contains(&c));
        }
        // sick prevalence climbs early and peaks mid-horizon
        let both: Vec<f64> = both.into_iter().map(Option::unwrap).collect();
        let peak = (0..=75).max_by(|&a, &b| both[a].total_cmp(&both[b])).unwrap();
        assert!((10..60).contains(&peak), "peak at {peak}");
        assert!(both[10] > both[1]);
    }

    #[test]
    fn tunnel_expansion_keeps_life_expectancy() {
        let spec = builtin_sick_sicker();
        let plan = spec.tunnel_plan().unwrap().unwrap();
        let arr = build_tunnel_array(&spec, &builtin_life_table(), &spec.strategies[2], &plan).unwrap();
        let expanded = run_cohort(&spec.initial_vector().unwrap().expand(&plan).unwrap(), &arr).unwrap();
        let agg = aggregate_tunnels(&expanded, &plan).unwrap();
        let le_e = life_expectancy(&survival(&expanded, &d()).unwrap(), 1.0);
        let le_a = life_expectancy(&survival(&agg, &d()).unwrap(), 1.0);
        assert_abs_diff_eq!(le_e, le_a, epsilon = 1e-10);
    }
}
