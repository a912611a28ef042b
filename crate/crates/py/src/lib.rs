//! Python bindings: experiment runner, sweeps, the acceptance suite and the
//! main parameter types.

use std::collections::BTreeMap;

use chs_core::acceptance;
use chs_core::commitments;
use chs_core::pgm;
use chs_core::prsg::{self, Mode};
use chs_core::runner::{self, Experiment, ExperimentConfig, DEFAULT_SEED, DEFAULT_TRIALS};
use chs_core::{Budget, ExperimentReport, LabError};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(chs_lab, ChsError, PyValueError);

fn to_py(e: LabError) -> PyErr {
    ChsError::new_err(e.to_string())
}

/// Resource limits checked before every enumeration or dense allocation.
#[pyclass(name = "Budget", module = "chs_lab", from_py_object)]
#[derive(Clone)]
struct PyBudget {
    inner: Budget,
}

#[pymethods]
impl PyBudget {
    #[new]
    #[pyo3(signature = (max_dense_dim=None, max_types=None, max_subset_pairs=None, max_members=None, max_state_dim=None))]
    fn new(
        max_dense_dim: Option<usize>,
        max_types: Option<u64>,
        max_subset_pairs: Option<u64>,
        max_members: Option<u64>,
        max_state_dim: Option<usize>,
    ) -> Self {
        let mut b = Budget::default();
        if let Some(v) = max_dense_dim {
            b.max_dense_dim = v;
        }
        if let Some(v) = max_types {
            b.max_types = v;
        }
        if let Some(v) = max_subset_pairs {
            b.max_subset_pairs = v;
        }
        if let Some(v) = max_members {
            b.max_members = v;
        }
        if let Some(v) = max_state_dim {
            b.max_state_dim = v;
        }
        PyBudget { inner: b }
    }

    #[getter]
    fn max_dense_dim(&self) -> usize {
        self.inner.max_dense_dim
    }

    #[getter]
    fn max_types(&self) -> u64 {
        self.inner.max_types
    }

    #[getter]
    fn max_subset_pairs(&self) -> u64 {
        self.inner.max_subset_pairs
    }

    #[getter]
    fn max_members(&self) -> u64 {
        self.inner.max_members
    }

    #[getter]
    fn max_state_dim(&self) -> usize {
        self.inner.max_state_dim
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn budget(b: Option<PyBudget>) -> Budget {
    b.map(|b| b.inner).unwrap_or_default()
}

/// Key length `lam`, state size `n`, generated copies `ell`, common copies
/// `t` and keys `p`.
#[pyclass(name = "PrsParams", module = "chs_lab", frozen, from_py_object)]
#[derive(Clone)]
struct PyPrsParams {
    inner: prsg::PrsParams,
}

#[pymethods]
impl PyPrsParams {
    #[new]
    #[pyo3(signature = (lam, n, ell, t, p=1))]
    fn new(lam: u32, n: u32, ell: usize, t: usize, p: usize) -> PyResult<Self> {
        Ok(PyPrsParams {
            inner: prsg::PrsParams::new(lam, n, ell, t, p).map_err(to_py)?,
        })
    }

    #[getter]
    fn lam(&self) -> u32 {
        self.inner.lam
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }

    #[getter]
    fn ell(&self) -> usize {
        self.inner.ell
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }

    fn __repr__(&self) -> String {
        let q = &self.inner;
        format!(
            "PrsParams(lam={}, n={}, ell={}, t={}, p={})",
            q.lam, q.n, q.ell, q.t, q.p
        )
    }
}

/// `n` qubits and `m` extra copies for phase-ensemble discrimination.
#[pyclass(name = "PgmParams", module = "chs_lab", frozen, from_py_object)]
#[derive(Clone)]
struct PyPgmParams {
    inner: pgm::PgmParams,
}

#[pymethods]
impl PyPgmParams {
    #[new]
    #[pyo3(signature = (n, m, budget=None))]
    fn new(n: u32, m: usize, budget: Option<PyBudget>) -> PyResult<Self> {
        Ok(PyPgmParams {
            inner: pgm::PgmParams::new(n, m, &self::budget(budget)).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn d(&self) -> u64 {
        self.inner.d()
    }

    fn __repr__(&self) -> String {
        format!("PgmParams(n={}, m={})", self.inner.n, self.inner.m)
    }
}

/// Result of one experiment: parameters, computed quantities, reference
/// bounds and named checks.
#[pyclass(name = "Report", module = "chs_lab", frozen)]
struct PyReport {
    inner: ExperimentReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn experiment(&self) -> &str {
        &self.inner.experiment
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }

    #[getter]
    fn estimate(&self) -> bool {
        self.inner.estimate
    }

    #[getter]
    fn params(&self) -> BTreeMap<String, String> {
        self.inner.params.clone()
    }

    #[getter]
    fn quantities(&self) -> BTreeMap<String, f64> {
        self.inner.quantities.clone()
    }

    #[getter]
    fn bounds(&self) -> BTreeMap<String, f64> {
        self.inner.bounds.clone()
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.inner.notes.clone()
    }

    #[getter]
    fn checks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for c in &self.inner.checks {
            let d = PyDict::new(py);
            d.set_item("name", &c.name)?;
            d.set_item("inequality", &c.inequality)?;
            d.set_item("lhs", c.lhs)?;
            d.set_item("rhs", c.rhs)?;
            d.set_item("tol", c.tol)?;
            d.set_item("passed", c.passed)?;
            out.append(d)?;
        }
        Ok(out)
    }

    #[getter]
    fn all_passed(&self) -> bool {
        self.inner.all_passed()
    }

    fn failed_checks(&self) -> Vec<String> {
        self.inner.failed_checks().map(|c| c.name.clone()).collect()
    }

    /// A quantity, or failing that a bound, by name.
    fn __getitem__(&self, key: &str) -> PyResult<f64> {
        self.inner
            .get(key)
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(key.to_string()))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report({}, {} quantities, all_passed={})",
            self.inner.experiment,
            self.inner.quantities.len(),
            self.inner.all_passed()
        )
    }
}

fn report(r: chs_core::Result<ExperimentReport>) -> PyResult<PyReport> {
    r.map(|inner| PyReport { inner }).map_err(to_py)
}

fn config(
    experiment: &str,
    params: Option<BTreeMap<String, Bound<'_, PyAny>>>,
    seed: u64,
    trials: u64,
    budget: Option<PyBudget>,
) -> PyResult<ExperimentConfig> {
    let exp: Experiment = experiment.parse().map_err(to_py)?;
    let mut cfg = ExperimentConfig::new(exp).with_seed(seed);
    cfg.trials = trials;
    cfg.budget = self::budget(budget);
    for (k, v) in params.unwrap_or_default() {
        cfg.params.insert(k, v.str()?.to_string());
    }
    Ok(cfg)
}

/// Names and one-line descriptions of every experiment.
#[pyfunction]
fn experiments() -> Vec<(&'static str, &'static str)> {
    Experiment::ALL
        .iter()
        .map(|e| (e.name(), e.about()))
        .collect()
}

/// Parameter names, defaults and help text for one experiment.
#[pyfunction]
fn schema(py: Python<'_>, experiment: &str) -> PyResult<Py<PyList>> {
    let exp: Experiment = experiment.parse().map_err(to_py)?;
    let out = PyList::empty(py);
    for s in exp.schema() {
        let d = PyDict::new(py);
        d.set_item("name", s.name)?;
        d.set_item("default", s.default)?;
        d.set_item("help", s.help)?;
        out.append(d)?;
    }
    Ok(out.unbind())
}

/// Run one experiment by name with schema parameters given as a dict.
#[pyfunction]
#[pyo3(signature = (experiment, params=None, seed=DEFAULT_SEED, trials=DEFAULT_TRIALS, budget=None))]
fn run(
    py: Python<'_>,
    experiment: &str,
    params: Option<BTreeMap<String, Bound<'_, PyAny>>>,
    seed: u64,
    trials: u64,
    budget: Option<PyBudget>,
) -> PyResult<PyReport> {
    let cfg = config(experiment, params, seed, trials, budget)?;
    report(py.detach(|| runner::run(&cfg)))
}

/// Run an experiment once per value of `axis`. Each entry is
/// `(value, report, error)` with exactly one of the last two set.
#[pyfunction]
#[pyo3(signature = (experiment, axis, values, params=None, seed=DEFAULT_SEED, trials=DEFAULT_TRIALS, budget=None))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn sweep(
    py: Python<'_>,
    experiment: &str,
    axis: &str,
    values: Vec<Bound<'_, PyAny>>,
    params: Option<BTreeMap<String, Bound<'_, PyAny>>>,
    seed: u64,
    trials: u64,
    budget: Option<PyBudget>,
) -> PyResult<Vec<(String, Option<PyReport>, Option<String>)>> {
    let cfg = config(experiment, params, seed, trials, budget)?;
    let values = values
        .iter()
        .map(|v| Ok(v.str()?.to_string()))
        .collect::<PyResult<Vec<String>>>()?;
    let result = py
        .detach(|| runner::sweep(&cfg, axis, &values))
        .map_err(to_py)?;
    Ok(result
        .values
        .into_iter()
        .zip(result.runs)
        .map(|(v, r)| match r {
            Ok(inner) => (v, Some(PyReport { inner }), None),
            Err(e) => (v, None, Some(e.to_string())),
        })
        .collect())
}

/// Exact trace distance between the generator's output and Haar copies,
/// with every hybrid step.
#[pyfunction]
#[pyo3(signature = (params, budget=None))]
fn prsg_td(py: Python<'_>, params: PyPrsParams, budget: Option<PyBudget>) -> PyResult<PyReport> {
    let b = self::budget(budget);
    report(py.detach(|| prsg::prsg_td(&params.inner, Mode::Exact, &b)))
}

/// Sampled variant of [`prsg_td`]; quantities are estimates with standard errors.
#[pyfunction]
#[pyo3(signature = (params, trials, batches=4, seed=DEFAULT_SEED, budget=None))]
fn prsg_td_sampled(
    py: Python<'_>,
    params: PyPrsParams,
    trials: u64,
    batches: u64,
    seed: u64,
    budget: Option<PyBudget>,
) -> PyResult<PyReport> {
    let b = self::budget(budget);
    let mode = Mode::Sampled {
        trials,
        batches,
        seed,
    };
    report(py.detach(|| prsg::prsg_td(&params.inner, mode, &b)))
}

/// Distance chain for `p` independent keys sharing the common copies.
#[pyfunction]
#[pyo3(signature = (params, budget=None))]
fn multikey_td(
    py: Python<'_>,
    params: PyPrsParams,
    budget: Option<PyBudget>,
) -> PyResult<PyReport> {
    let b = self::budget(budget);
    report(py.detach(|| prsg::multikey_td(&params.inner, &b)))
}

/// Rank-projector distinguisher against the generator.
#[pyfunction]
#[pyo3(signature = (params, budget=None))]
fn impossibility(
    py: Python<'_>,
    params: PyPrsParams,
    budget: Option<PyBudget>,
) -> PyResult<PyReport> {
    let b = self::budget(budget);
    report(py.detach(|| prsg::impossibility_attack(&params.inner, &b)))
}

/// Operator bound on the pretty good measurement.
#[pyfunction]
#[pyo3(signature = (params, budget=None))]
fn pgm_bound(py: Python<'_>, params: PyPgmParams, budget: Option<PyBudget>) -> PyResult<PyReport> {
    let b = self::budget(budget);
    report(py.detach(|| pgm::pgm_bound_check(&params.inner, &b)))
}

/// Success probability of the pretty good measurement.
#[pyfunction]
#[pyo3(signature = (params, budget=None))]
fn pgm_guess(py: Python<'_>, params: PyPgmParams, budget: Option<PyBudget>) -> PyResult<PyReport> {
    let b = self::budget(budget);
    report(py.detach(|| pgm::pgm_guess_prob(&params.inner, &b)))
}

/// `1 + ((1 + 2^{-(n-lam)/2}) / 2)^p`.
#[pyfunction]
fn binding_bound(lam: u32, n: u32, p: usize) -> PyResult<f64> {
    if n < lam {
        return Err(ChsError::new_err("need n >= lam"));
    }
    Ok(commitments::binding_bound(lam, n, p))
}

/// Run the acceptance suite (or the criteria in `only`) and return one dict
/// per criterion.
#[pyfunction]
#[pyo3(signature = (seed=acceptance::DEFAULT_SEED, only=None))]
fn run_acceptance(py: Python<'_>, seed: u64, only: Option<Vec<u8>>) -> PyResult<Py<PyList>> {
    if let Some(ids) = &only {
        if let Some(bad) = ids.iter().find(|&&i| !(1..=11).contains(&i)) {
            return Err(ChsError::new_err(format!("no criterion {bad}")));
        }
    }
    let outcomes = py.detach(|| match &only {
        Some(ids) => ids
            .iter()
            .map(|&id| acceptance::run_criterion(id, seed))
            .collect(),
        None => acceptance::run_all(seed),
    });
    let out = PyList::empty(py);
    for o in outcomes {
        let d = PyDict::new(py);
        d.set_item("id", o.id)?;
        d.set_item("name", o.name)?;
        d.set_item("passed", o.passed)?;
        d.set_item("summary", &o.summary)?;
        d.set_item("line", o.line())?;
        d.set_item("seconds", o.elapsed.as_secs_f64())?;
        out.append(d)?;
    }
    Ok(out.unbind())
}

#[pymodule]
fn chs_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", chs_core::ARTIFACT_VERSION)?;
    m.add("ChsError", m.py().get_type::<ChsError>())?;
    m.add_class::<PyBudget>()?;
    m.add_class::<PyPrsParams>()?;
    m.add_class::<PyPgmParams>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(schema, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(prsg_td, m)?)?;
    m.add_function(wrap_pyfunction!(prsg_td_sampled, m)?)?;
    m.add_function(wrap_pyfunction!(multikey_td, m)?)?;
    m.add_function(wrap_pyfunction!(impossibility, m)?)?;
    m.add_function(wrap_pyfunction!(pgm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pgm_guess, m)?)?;
    m.add_function(wrap_pyfunction!(binding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_acceptance, m)?)?;
    Ok(())
}
