//! Python bindings for `cstm-core`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cstm_core::psa::{run_psa, wtp_grid, DecisionCurves, PsaResult};
use cstm_core::{cea, hazards, io, Error, ModelVariant};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// State labels and `array[t][i][j]`.
type LabelledArray = (Vec<String>, Vec<Vec<Vec<f64>>>);

fn variant(name: &str) -> PyResult<ModelVariant> {
    name.parse().map_err(to_py)
}

/// A validated model specification and life table.
#[pyclass(frozen, module = "cstm")]
struct Model {
    inner: cstm_core::Model,
}

/// Outcomes of one strategy.
#[pyclass(frozen, get_all, module = "cstm")]
struct StrategyResult {
    strategy: String,
    labels: Vec<String>,
    /// Rows are cycles `0..=n_cycles`, columns follow `labels`.
    trace: Vec<Vec<f64>>,
    survival: Vec<f64>,
    life_expectancy: f64,
    /// Group name to per-cycle prevalence; `None` once nobody is alive.
    prevalence: BTreeMap<String, Vec<Option<f64>>>,
    cost_per_cycle: Vec<f64>,
    qaly_per_cycle: Vec<f64>,
    total_cost: f64,
    total_qaly: f64,
}

#[pymethods]
impl StrategyResult {
    fn __repr__(&self) -> String {
        format!(
            "StrategyResult({:?}, cost={:.2}, qaly={:.4}, life_expectancy={:.3})",
            self.strategy, self.total_cost, self.total_qaly, self.life_expectancy
        )
    }
}

#[pymethods]
impl Model {
    /// The bundled Sick-Sicker model.
    #[staticmethod]
    fn builtin() -> Self {
        Model {
            inner: cstm_core::Model::builtin(),
        }
    }

    /// Loads a TOML spec. The life table defaults to the file named in the
    /// spec, resolved relative to it.
    #[staticmethod]
    #[pyo3(signature = (spec, life_table = None))]
    fn from_file(spec: PathBuf, life_table: Option<PathBuf>) -> PyResult<Self> {
        let parsed = io::read_spec(&spec).map_err(to_py)?;
        let table_path = match (life_table, &parsed.life_table) {
            (Some(p), _) => p,
            (None, Some(name)) => spec.parent().unwrap_or(&PathBuf::from(".")).join(name),
            (None, None) => return Err(PyValueError::new_err("no life table given or named in the spec")),
        };
        let table = io::read_life_table(&table_path).map_err(to_py)?;
        let inner = cstm_core::Model::new(parsed, table).map_err(to_py)?;
        Ok(Model { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.spec().name.clone()
    }

    #[getter]
    fn strategies(&self) -> Vec<String> {
        self.inner.spec().strategies.iter().map(|s| s.name.clone()).collect()
    }

    #[getter]
    fn parameters(&self) -> BTreeMap<String, f64> {
        self.inner.spec().parameters.iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Copy of the model with some parameters replaced.
    fn with_parameters(&self, updates: BTreeMap<String, f64>) -> PyResult<Self> {
        let mut params = self.inner.spec().parameters.clone();
        for (k, v) in updates {
            if !params.contains(&k) {
                return Err(PyValueError::new_err(format!("unknown parameter `{k}`")));
            }
            params.set(k, v);
        }
        let inner = self.inner.with_parameters(params).map_err(to_py)?;
        Ok(Model { inner })
    }

    /// `(labels, array)` with `array[t][i][j]` the probability of moving
    /// from state `i` to `j` during cycle `t`.
    #[pyo3(signature = (strategy, variant = "simtime"))]
    fn transition_array(&self, strategy: &str, variant: &str) -> PyResult<LabelledArray> {
        let s = self.inner.strategy(strategy).map_err(to_py)?;
        let arr = self.inner.transition_array(s, self::variant(variant)?).map_err(to_py)?;
        let values = arr
            .values()
            .outer_iter()
            .map(|slice| slice.outer_iter().map(|row| row.to_vec()).collect())
            .collect();
        Ok((arr.labels().to_vec(), values))
    }

    #[pyo3(signature = (strategy, variant = "simtime"))]
    fn evaluate(&self, strategy: &str, variant: &str) -> PyResult<StrategyResult> {
        let s = self.inner.strategy(strategy).map_err(to_py)?;
        let r = self.inner.evaluate_strategy(s, self::variant(variant)?).map_err(to_py)?;
        Ok(StrategyResult {
            strategy: r.strategy,
            labels: r.trace.labels().to_vec(),
            trace: r.trace.values().outer_iter().map(|row| row.to_vec()).collect(),
            survival: r.survival.values().to_vec(),
            life_expectancy: r.life_expectancy,
            prevalence: r.prevalence.into_iter().collect(),
            cost_per_cycle: r.cost_per_cycle,
            qaly_per_cycle: r.qaly_per_cycle,
            total_cost: r.total_cost,
            total_qaly: r.total_qaly,
        })
    }

    /// `[(strategy, cost, qaly), ...]` in declaration order.
    #[pyo3(signature = (variant = "simtime"))]
    fn totals(&self, variant: &str) -> PyResult<Vec<(String, f64, f64)>> {
        Ok(self
            .inner
            .totals(self::variant(variant)?)
            .map_err(to_py)?
            .into_iter()
            .map(|t| (t.strategy, t.cost, t.qaly))
            .collect())
    }

    /// Incremental analysis of the deterministic totals.
    #[pyo3(signature = (variant = "simtime"))]
    fn cea(&self, py: Python<'_>, variant: &str) -> PyResult<Vec<Py<PyAny>>> {
        let totals = self.inner.totals(self::variant(variant)?).map_err(to_py)?;
        let costs: Vec<f64> = totals.iter().map(|t| t.cost).collect();
        let effects: Vec<f64> = totals.iter().map(|t| t.qaly).collect();
        let names: Vec<&str> = totals.iter().map(|t| t.strategy.as_str()).collect();
        icer_rows(py, &costs, &effects, &names)
    }

    /// Probabilistic sensitivity analysis using the spec's distributions.
    #[pyo3(signature = (n_samples, seed, variant = "simtime"))]
    fn psa(&self, py: Python<'_>, n_samples: usize, seed: u64, variant: &str) -> PyResult<Psa> {
        let dists = self.inner.spec().psa.clone().unwrap_or_default();
        let v = self::variant(variant)?;
        let inner = py
            .detach(|| run_psa(&self.inner, &dists, n_samples, seed, v))
            .map_err(to_py)?;
        Ok(Psa { inner })
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, strategies={:?})", self.name(), self.strategies())
    }
}

/// Per-sample discounted totals from a PSA run.
#[pyclass(frozen, module = "cstm")]
struct Psa {
    inner: PsaResult,
}

#[pymethods]
impl Psa {
    #[getter]
    fn strategies(&self) -> Vec<String> {
        self.inner.strategies.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// `costs[sample][strategy]`.
    #[getter]
    fn costs(&self) -> Vec<Vec<f64>> {
        self.inner.costs.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// `effects[sample][strategy]`.
    #[getter]
    fn effects(&self) -> Vec<Vec<f64>> {
        self.inner.effects.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// Sampled parameter sets, one dict per sample.
    #[getter]
    fn parameters(&self) -> Vec<BTreeMap<String, f64>> {
        self.inner
            .parameters
            .iter()
            .map(|p| p.iter().map(|(k, v)| (k.to_string(), v)).collect())
            .collect()
    }

    /// CEAC, CEAF, expected loss and EVPI over `min, min + step, ..., max`.
    #[pyo3(signature = (wtp_min = 0.0, wtp_max = 200_000.0, wtp_step = 5_000.0))]
    fn curves(&self, py: Python<'_>, wtp_min: f64, wtp_max: f64, wtp_step: f64) -> PyResult<Py<PyAny>> {
        let grid = wtp_grid(wtp_min, wtp_max, wtp_step).map_err(to_py)?;
        let c = DecisionCurves::compute(&self.inner, &grid).map_err(to_py)?;
        let rows = |a: &ndarray::Array2<f64>| a.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        let d = pyo3::types::PyDict::new(py);
        d.set_item("wtp", grid)?;
        d.set_item("ceac", rows(&c.acceptability.ceac))?;
        d.set_item("expected_nmb", rows(&c.acceptability.expected_nmb))?;
        let ceaf: Vec<&str> = c.acceptability.ceaf.iter().map(|&s| c.strategies[s].as_str()).collect();
        d.set_item("ceaf", ceaf)?;
        d.set_item("loss", rows(&c.loss.loss))?;
        d.set_item("evpi", c.loss.evpi)?;
        Ok(d.into_any().unbind())
    }

    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }
}

fn icer_rows(py: Python<'_>, costs: &[f64], effects: &[f64], names: &[&str]) -> PyResult<Vec<Py<PyAny>>> {
    let rows = cea::calculate_icers(costs, effects, names).map_err(to_py)?;
    rows.into_iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("strategy", r.strategy)?;
            d.set_item("cost", r.cost)?;
            d.set_item("effect", r.effect)?;
            d.set_item("inc_cost", r.inc_cost)?;
            d.set_item("inc_effect", r.inc_effect)?;
            d.set_item("icer", r.icer)?;
            d.set_item("status", r.status.code())?;
            Ok(d.into_any().unbind())
        })
        .collect()
}

/// ICERs and dominance status. Frontier rows come first, by cost.
#[pyfunction]
fn calculate_icers(py: Python<'_>, costs: Vec<f64>, effects: Vec<f64>, names: Vec<String>) -> PyResult<Vec<Py<PyAny>>> {
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    icer_rows(py, &costs, &effects, &names)
}

#[pyfunction]
#[pyo3(signature = (rate, cycle_length = 1.0))]
fn prob_from_rate(rate: f64, cycle_length: f64) -> PyResult<f64> {
    let r = hazards::Rate::new(rate).map_err(to_py)?;
    Ok(hazards::prob_from_rate(r, cycle_length).map_err(to_py)?.value())
}

#[pyfunction]
#[pyo3(signature = (prob, cycle_length = 1.0))]
fn rate_from_prob(prob: f64, cycle_length: f64) -> PyResult<f64> {
    let p = hazards::Probability::new(prob).map_err(to_py)?;
    Ok(hazards::rate_from_prob(p, cycle_length).map_err(to_py)?.value())
}

#[pymodule]
fn cstm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<StrategyResult>()?;
    m.add_class::<Psa>()?;
    m.add_function(wrap_pyfunction!(calculate_icers, m)?)?;
    m.add_function(wrap_pyfunction!(prob_from_rate, m)?)?;
    m.add_function(wrap_pyfunction!(rate_from_prob, m)?)?;
    Ok(())
}
