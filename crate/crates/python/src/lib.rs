//! Python bindings: trial datasets, the six estimators, simulation campaigns
//! and the identity checks.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use covadj::data::{Scheme, SubjectRecord, TrialDataset};
use covadj::learners::Family;
use covadj::link::{LinkKind, LinkSpec};
use covadj::methods::{evaluate_methods, MethodOptions, MethodSpec};
use covadj::randomization::{randomize, RandomizationPlan};
use covadj::scenario::{OutcomeType, Scenario};
use covadj::sim::{generate_trial, CampaignSpec, ScenarioSpec};
use covadj::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Schema(_) | Error::Data(_) | Error::InvalidParameter(_) | Error::EmptyArm { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn plan(scheme: Scheme, pi: f64, block_size: usize, seed: u64) -> RandomizationPlan {
    match scheme {
        Scheme::Simple => RandomizationPlan::simple(pi, seed),
        Scheme::StratifiedBlock => RandomizationPlan::stratified(pi, block_size, seed),
    }
}

/// A two-arm trial: outcomes, assignments, strata (1-based) and covariates.
#[pyclass(name = "Trial", module = "covadj_py", from_py_object)]
#[derive(Clone)]
struct PyTrial {
    inner: TrialDataset,
}

#[pymethods]
impl PyTrial {
    #[new]
    #[pyo3(signature = (y, a, strata, covariates=None, pi=0.5, scheme="simple", n_strata=None))]
    fn new(
        y: Vec<f64>,
        a: Vec<u8>,
        strata: Vec<usize>,
        covariates: Option<Vec<Vec<f64>>>,
        pi: f64,
        scheme: &str,
        n_strata: Option<usize>,
    ) -> PyResult<Self> {
        let n = y.len();
        if a.len() != n || strata.len() != n {
            return Err(PyValueError::new_err("y, a and strata must have the same length"));
        }
        let covariates = covariates.unwrap_or_else(|| vec![Vec::new(); n]);
        if covariates.len() != n {
            return Err(PyValueError::new_err("covariates must have one row per subject"));
        }
        let k = n_strata.unwrap_or_else(|| strata.iter().copied().max().unwrap_or(1));
        let subjects = covariates
            .into_iter()
            .zip(y.iter().zip(&a).zip(&strata))
            .map(|(w, ((&yi, &ai), &si))| SubjectRecord::new(w, si, ai, yi))
            .collect();
        let inner = TrialDataset::new(subjects, pi, parse(scheme)?, k).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Draws replicate `replicate` of a simulation scenario.
    #[staticmethod]
    #[pyo3(signature = (scenario, outcome="continuous", n=200, scheme="simple", seed=0, replicate=0, pi=0.5, block_size=4))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        scenario: &str,
        outcome: &str,
        n: usize,
        scheme: &str,
        seed: u64,
        replicate: usize,
        pi: f64,
        block_size: usize,
    ) -> PyResult<Self> {
        let spec = ScenarioSpec {
            scenario: parse(scenario)?,
            outcome: parse(outcome)?,
            n,
            replications: replicate + 1,
            plan: plan(parse(scheme)?, pi, block_size, seed),
            seed,
        };
        Ok(Self { inner: generate_trial(&spec, replicate).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.outcomes()
    }

    #[getter]
    fn a(&self) -> Vec<u8> {
        self.inner.assignments()
    }

    #[getter]
    fn strata(&self) -> Vec<usize> {
        self.inner.strata()
    }

    #[getter]
    fn covariates(&self) -> Vec<Vec<f64>> {
        self.inner.subjects.iter().map(|s| s.covariates.clone()).collect()
    }

    #[getter]
    fn scheme(&self) -> String {
        self.inner.scheme.to_string()
    }

    /// `g(Ybar_1) - g(Ybar_0)`.
    #[pyo3(signature = (link="identity"))]
    fn empirical(&self, link: &str) -> PyResult<f64> {
        let link = LinkSpec { kind: parse(link)? };
        Ok(covadj::estimators::empirical_estimate(&self.inner, &link).map_err(to_py)?.delta_hat)
    }

    /// Runs the requested methods and returns one dict per method with the
    /// estimate, both standard errors and the protocol choice between them.
    #[pyo3(signature = (methods=None, link="identity", binary=false, folds=5, level=0.95, seed=0))]
    fn analyze<'py>(
        &self,
        py: Python<'py>,
        methods: Option<Vec<String>>,
        link: &str,
        binary: bool,
        folds: usize,
        level: f64,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let methods: Vec<MethodSpec> = match methods {
            Some(m) => m.iter().map(|s| parse(s)).collect::<PyResult<_>>()?,
            None => MethodSpec::ALL.to_vec(),
        };
        let kind: LinkKind = parse(link)?;
        let family = if binary && kind == LinkKind::Logit { Family::Binomial } else { Family::Gaussian };
        let mut opts = MethodOptions::new(LinkSpec { kind }, family);
        opts.cross_fit_folds = (folds >= 2).then_some(folds);
        opts.level = level;
        let scheme = self.inner.scheme;
        let mut out = Vec::new();
        for (m, res) in methods.iter().zip(evaluate_methods(&self.inner, &methods, &opts, seed)) {
            let d = PyDict::new(py);
            d.set_item("method", m.name())?;
            match res {
                Ok(o) => {
                    let r = &o.report;
                    d.set_item("estimate", r.estimate.delta_hat)?;
                    d.set_item("se_uncorrected", r.uncorrected.se)?;
                    d.set_item("se_corrected", r.corrected.se)?;
                    d.set_item("se_used", if m.uses_corrected_se(scheme) { "corrected" } else { "uncorrected" })?;
                    d.set_item("ci_uncorrected", r.ci_uncorrected)?;
                    d.set_item("ci_corrected", r.ci_corrected)?;
                    d.set_item("fallback", o.fallback)?;
                    d.set_item("warnings", r.estimate.warnings.clone())?;
                }
                Err(e) => d.set_item("error", e.to_string())?,
            }
            out.push(d);
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        let (n1, n0) = self.inner.arm_counts();
        format!("Trial(n={}, treated={n1}, control={n0}, strata={}, scheme={})", self.inner.n(), self.inner.n_strata, self.inner.scheme)
    }
}

/// Treatment assignments for the given 1-based strata.
#[pyfunction]
#[pyo3(signature = (strata, scheme="stratified", pi=0.5, block_size=4, seed=0))]
fn assign(strata: Vec<usize>, scheme: &str, pi: f64, block_size: usize, seed: u64) -> PyResult<Vec<u8>> {
    randomize(&strata, &plan(parse(scheme)?, pi, block_size, seed)).map_err(to_py)
}

/// True treatment effect of a simulation scenario as `(delta, mc_se)`.
#[pyfunction]
#[pyo3(signature = (scenario, outcome="continuous"))]
fn true_delta(scenario: &str, outcome: &str) -> PyResult<(f64, f64)> {
    let s: Scenario = parse(scenario)?;
    let o: OutcomeType = parse(outcome)?;
    let t = covadj::sim::true_delta(s, o);
    Ok((t.value.delta, t.mc_se))
}

/// Monte Carlo comparison of the estimators; one dict per (method, scheme).
#[pyfunction]
#[pyo3(signature = (scenario, outcome="continuous", n=200, reps=100, seed=0, methods=None, cross_fit=true, workers=None))]
#[allow(clippy::too_many_arguments)]
fn run_campaign<'py>(
    py: Python<'py>,
    scenario: &str,
    outcome: &str,
    n: usize,
    reps: usize,
    seed: u64,
    methods: Option<Vec<String>>,
    cross_fit: bool,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = CampaignSpec::new(parse(scenario)?, parse(outcome)?, n, reps, seed);
    if let Some(m) = methods {
        spec.methods = m.iter().map(|s| parse(s)).collect::<PyResult<_>>()?;
    }
    if !cross_fit {
        spec.options.cross_fit_folds = None;
    }
    spec.workers = workers;
    let rows = py.detach(|| covadj::sim::run_campaign(&spec)).map_err(to_py)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.name())?;
            d.set_item("scheme", r.scheme.to_string())?;
            d.set_item("bias", r.bias)?;
            d.set_item("sd", r.sd)?;
            d.set_item("re", r.re)?;
            d.set_item("se", r.median_se)?;
            d.set_item("cp", r.cp)?;
            d.set_item("cp_uncorrected", r.cp_uncorrected)?;
            d.set_item("cp_corrected", r.cp_corrected)?;
            d.set_item("n_failed", r.n_failed)?;
            d.set_item("n_fallback", r.n_fallback)?;
            Ok(d)
        })
        .collect()
}

/// Numerical checks of the variance identities; one dict per check.
#[pyfunction]
#[pyo3(signature = (n_mc=covadj::theory::DEFAULT_MC_DRAWS, seed=20240601, negative_control=false))]
fn verify<'py>(py: Python<'py>, n_mc: usize, seed: u64, negative_control: bool) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let results = py.detach(|| covadj::theory::default_suite(n_mc, seed, negative_control)).map_err(to_py)?;
    results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("name", &r.name)?;
            d.set_item("lhs", r.lhs)?;
            d.set_item("rhs", r.rhs)?;
            d.set_item("mc_se", r.mc_se)?;
            d.set_item("pass", r.pass)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn covadj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrial>()?;
    m.add_function(wrap_pyfunction!(assign, m)?)?;
    m.add_function(wrap_pyfunction!(true_delta, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
