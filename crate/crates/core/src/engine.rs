//! Cohort simulation: state occupancy per cycle and the flows behind it.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::model::InitialStateVector;
use crate::transition::{TransitionArray, TunnelPlan};
use crate::{Error, Result};

/// Occupancy by cycle, `(n_cycles + 1) x n_states`. Row `t` is the cohort
/// distribution at the start of cycle `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTrace {
    labels: Vec<String>,
    values: Array2<f64>,
}

impl CohortTrace {
    pub fn new(labels: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.ncols() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} trace columns",
                labels.len(),
                values.ncols()
            )));
        }
        Ok(Self { labels, values })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_cycles(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.values.row(t)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    pub fn column(&self, label: &str) -> Result<ArrayView1<'_, f64>> {
        Ok(self.values.column(self.require(label)?))
    }
}

/// Flows `[cycle, from, to]` over `n_cycles + 1` slices. Slice 0 holds the
/// initial distribution on its diagonal; slice `t + 1` is
/// `diag(m_t) * P_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDynamicsArray {
    labels: Vec<String>,
    values: Array3<f64>,
}

impl TransitionDynamicsArray {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn n_cycles(&self) -> usize {
        self.values.dim().0 - 1
    }

    pub fn slice(&self, t: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), t)
    }

    /// Mass arriving in each state during slice `t`.
    pub fn arrivals(&self, t: usize) -> ndarray::Array1<f64> {
        self.slice(t).sum_axis(Axis(0))
    }
}

fn check_dims(init: &InitialStateVector, arr: &TransitionArray) -> Result<()> {
    if init.len() != arr.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "initial vector has {} entries, transition array has {} states",
            init.len(),
            arr.n_states()
        )));
    }
    Ok(())
}

/// Iterates `m_{t+1} = m_t P_t`. The array is assumed to have passed
/// [`check_transition_array`](crate::transition::check_transition_array).
pub fn run_cohort(init: &InitialStateVector, arr: &TransitionArray) -> Result<CohortTrace> {
    check_dims(init, arr)?;
    let n = arr.n_states();
    let n_cycles = arr.n_cycles();
    let mut values = Array2::<f64>::zeros((n_cycles + 1, n));
    values
        .row_mut(0)
        .assign(&ArrayView1::from(init.values()));
    for t in 0..n_cycles {
        let next = values.row(t).dot(&arr.slice(t));
        values.row_mut(t + 1).assign(&next);
    }
    CohortTrace::new(arr.labels().to_vec(), values)
}

pub fn run_transition_dynamics(
    init: &InitialStateVector,
    arr: &TransitionArray,
) -> Result<TransitionDynamicsArray> {
    check_dims(init, arr)?;
    let n = arr.n_states();
    let n_cycles = arr.n_cycles();
    let mut values = Array3::<f64>::zeros((n_cycles + 1, n, n));
    let mut m = init.values().to_vec();
    for (i, v) in m.iter().enumerate() {
        values[[0, i, i]] = *v;
    }
    for t in 0..n_cycles {
        let p = arr.slice(t);
        let mut next = vec![0.0; n];
        for i in 0..n {
            if m[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let flow = m[i] * p[[i, j]];
                values[[t + 1, i, j]] = flow;
                next[j] += flow;
            }
        }
        m = next;
    }
    Ok(TransitionDynamicsArray {
        labels: arr.labels().to_vec(),
        values,
    })
}

/// Sums tunnel columns of an expanded trace back into the base state.
pub fn aggregate_tunnels(trace: &CohortTrace, plan: &TunnelPlan) -> Result<CohortTrace> {
    if trace.labels() != plan.expanded_labels() {
        return Err(Error::DimensionMismatch(
            "trace labels do not match the tunnel plan".into(),
        ));
    }
    let n_base = plan.base_labels().len();
    let mut values = Array2::<f64>::zeros((trace.values.nrows(), n_base));
    for (e, col) in trace.values.columns().into_iter().enumerate() {
        let mut target = values.column_mut(plan.base_of(e));
        target += &col;
    }
    CohortTrace::new(plan.base_labels().to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_life_table, builtin_sick_sicker};
    use crate::transition::{build_simtime_array, build_tunnel_array};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("X{i}")).collect()
    }

    fn two_state(p: f64, n_cycles: usize) -> TransitionArray {
        let mut v = Array3::zeros((n_cycles, 2, 2));
        for t in 0..n_cycles {
            v[[t, 0, 0]] = 1.0 - p;
            v[[t, 0, 1]] = p;
            v[[t, 1, 1]] = 1.0;
        }
        TransitionArray::new(labels(2), v).unwrap()
    }

    #[test]
    fn identity_keeps_init() {
        let mut v = Array3::zeros((5, 3, 3));
        for t in 0..5 {
            for i in 0..3 {
                v[[t, i, i]] = 1.0;
            }
        }
        let arr = TransitionArray::new(labels(3), v).unwrap();
        let init = InitialStateVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let trace = run_cohort(&init, &arr).unwrap();
        for t in 0..=5 {
            assert_eq!(trace.row(t).to_vec(), vec![0.2, 0.3, 0.5]);
        }
    }

    #[test]
    fn geometric_decay() {
        let arr = two_state(0.5, 10);
        let init = InitialStateVector::new(vec![1.0, 0.0]).unwrap();
        let trace = run_cohort(&init, &arr).unwrap();
        for t in 0..=10 {
            let alive = 0.5f64.powi(t as i32);
            assert_abs_diff_eq!(trace.row(t)[0], alive, epsilon = 1e-15);
            assert_abs_diff_eq!(trace.row(t)[1], 1.0 - alive, epsilon = 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let arr = two_state(0.5, 3);
        let init = InitialStateVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(run_cohort(&init, &arr).is_err());
        assert!(run_transition_dynamics(&init, &arr).is_err());
    }

    #[test]
    fn sick_sicker_trace_and_dynamics() {
        let spec = builtin_sick_sicker();
        let arr = build_simtime_array(&spec, &builtin_life_table(), &spec.strategies[0]).unwrap();
        let init = spec.initial_vector().unwrap();
        let trace = run_cohort(&init, &arr).unwrap();
        let dyn_ = run_transition_dynamics(&init, &arr).unwrap();
        assert_eq!(trace.values().nrows(), 76);
        assert_eq!(dyn_.n_cycles(), 75);

        let d = trace.column("D").unwrap();
        assert!(d.windows(2).into_iter().all(|w| w[1] >= w[0]));
        let h = trace.column("H").unwrap();
        assert!(h[75] < h[0]);

        let slice0 = dyn_.slice(0);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_eq!(slice0[[i, j]], want);
            }
        }
        for t in 0..=75 {
            assert_abs_diff_eq!(trace.row(t).sum(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(dyn_.slice(t).sum(), 1.0, epsilon = 1e-10);
            let arrivals = dyn_.arrivals(t);
            for j in 0..4 {
                assert_abs_diff_eq!(arrivals[j], trace.row(t)[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tunnel_aggregation() {
        let spec = builtin_sick_sicker();
        let lt = builtin_life_table();
        let plan = spec.tunnel_plan().unwrap().unwrap();
        let arr = build_tunnel_array(&spec, &lt, &spec.strategies[0], &plan).unwrap();
        let init = spec.initial_vector().unwrap().expand(&plan).unwrap();
        let expanded = run_cohort(&init, &arr).unwrap();
        let agg = aggregate_tunnels(&expanded, &plan).unwrap();
        assert_eq!(agg.labels(), ["H", "S1", "S2", "D"]);
        for t in 0..=75 {
            let tunnels: f64 = (0..75).map(|k| expanded.row(t)[plan.tunnel_index(k)]).sum();
            assert_abs_diff_eq!(agg.row(t)[1], tunnels, epsilon = 1e-15);
            assert_abs_diff_eq!(agg.row(t).sum(), expanded.row(t).sum(), epsilon = 1e-12);
        }
        assert!(aggregate_tunnels(&agg, &plan).is_err());
    }

    #[test]
    fn single_tunnel_is_relabeling() {
        let spec = builtin_sick_sicker();
        let plan = TunnelPlan::new(&spec.states, "S1", 1).unwrap();
        let arr = build_tunnel_array(&spec, &builtin_life_table(), &spec.strategies[0], &plan).unwrap();
        let init = spec.initial_vector().unwrap().expand(&plan).unwrap();
        let expanded = run_cohort(&init, &arr).unwrap();
        let agg = aggregate_tunnels(&expanded, &plan).unwrap();
        assert_eq!(agg.values(), expanded.values());
    }

    /// Random row-stochastic arrays with the last state absorbing.
    fn random_model(max_states: usize, max_cycles: usize) -> impl Strategy<Value = (Vec<f64>, TransitionArray)> {
        (2..=max_states, 1..=max_cycles).prop_flat_map(|(n, c)| {
            let rows = proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, n), n * c);
            let init = proptest::collection::vec(0.0f64..1.0, n);
            (rows, init).prop_map(move |(rows, init)| {
                let mut v = Array3::zeros((c, n, n));
                for t in 0..c {
                    for i in 0..n {
                        if i == n - 1 {
                            v[[t, i, i]] = 1.0;
                            continue;
                        }
                        let row = &rows[t * n + i];
                        let s: f64 = row.iter().sum();
                        for j in 0..n {
                            v[[t, i, j]] = row[j] / s;
                        }
                    }
                }
                let s: f64 = init.iter().sum::<f64>() + 1e-9;
                let mut init: Vec<f64> = init.iter().map(|x| (x + 1e-9 / n as f64) / s).collect();
                let total: f64 = init.iter().sum();
                init[0] += 1.0 - total;
                (init, TransitionArray::new(labels(n), v).unwrap())
            })
        })
    }

    /// Occupancy by enumerating every state path.
    fn enumerate_paths(init: &[f64], arr: &TransitionArray) -> Vec<Vec<f64>> {
        let n = arr.n_states();
        let c = arr.n_cycles();
        let mut out = vec![vec![0.0; n]; c + 1];
        fn walk(arr: &TransitionArray, t: usize, state: usize, prob: f64, out: &mut [Vec<f64>]) {
            out[t][state] += prob;
            if t == arr.n_cycles() {
                return;
            }
            for j in 0..arr.n_states() {
                walk(arr, t + 1, j, prob * arr.get(state, j, t), out);
            }
        }
        for (s, &m) in init.iter().enumerate() {
            walk(arr, 0, s, m, &mut out);
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_path_enumeration((init, arr) in random_model(4, 8)) {
            let init_v = InitialStateVector::new(init.clone()).unwrap();
            let trace = run_cohort(&init_v, &arr).unwrap();
            let oracle = enumerate_paths(&init, &arr);
            for (t, row) in oracle.iter().enumerate() {
                for (j, want) in row.iter().enumerate() {
                    prop_assert!((trace.row(t)[j] - want).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn conservation_and_consistency((init, arr) in random_model(6, 30)) {
            let init_v = InitialStateVector::new(init).unwrap();
            let trace = run_cohort(&init_v, &arr).unwrap();
            let dyn_ = run_transition_dynamics(&init_v, &arr).unwrap();
            let absorbing = arr.n_states() - 1;
            for t in 0..=arr.n_cycles() {
                prop_assert!((trace.row(t).sum() - 1.0).abs() <= 1e-10);
                prop_assert!((dyn_.slice(t).sum() - 1.0).abs() <= 1e-10);
                prop_assert!(trace.row(t).iter().all(|x| *x >= 0.0));
                let arrivals = dyn_.arrivals(t);
                for j in 0..arr.n_states() {
                    prop_assert!((arrivals[j] - trace.row(t)[j]).abs() <= 1e-12);
                }
                if t > 0 {
                    prop_assert!(trace.row(t)[absorbing] >= trace.row(t - 1)[absorbing]);
                }
            }
        }
    }
}
