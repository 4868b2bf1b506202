//! Python bindings for the chaoskit core: closed forms, A/B integrals, bound
//! calculators, seeded simulation and the scenario runner.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chaoskit::cli::{self, Scenario};
use chaoskit::config::ConfigFile;
use chaoskit::gaussian_exact as gx;
use chaoskit::hierarchy_bounds as hb;
use chaoskit::metrics;
use chaoskit::model::{self, DriftSpec, ExperimentConfig, InitCondition, SeriesCoefficients};
use chaoskit::simulate;
use clap::ValueEnum;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Exchangeable OU system dX = −(aX + b·mean)dt + dW.
#[pyclass(frozen, from_py_object, name = "OUParams")]
#[derive(Clone, Copy)]
struct PyOUParams {
    inner: model::GaussianOUParams,
}

#[pymethods]
impl PyOUParams {
    #[new]
    fn new(a: f64, b: f64) -> PyResult<Self> {
        Ok(Self { inner: model::GaussianOUParams::new(a, b).map_err(value_err)? })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    /// (v, c) of the n-particle covariance v(I − cJ) at time t.
    fn covariance(&self, n: usize, t: f64) -> PyResult<(f64, f64)> {
        let c = gx::ou_covariance_flow(self.inner, n, t).map_err(value_err)?;
        Ok((c.v, c.c))
    }

    /// (W₂², KL) between the k-marginal and μ_t^{⊗k}.
    fn marginal_distances(&self, n: usize, k: usize, t: f64) -> PyResult<(f64, f64)> {
        let (m, p) = gx::marginal_and_product(self.inner, n, k, t).map_err(value_err)?;
        Ok((gx::w2_exchangeable(&m, &p).map_err(value_err)?, gx::kl_exchangeable(&m, &p).map_err(value_err)?))
    }

    fn nc_limit(&self, t: f64) -> PyResult<f64> {
        gx::nc_limit(self.inner, t).map_err(value_err)
    }

    fn w2_rate_limit(&self, t: f64) -> PyResult<f64> {
        gx::w2_rate_limit(self.inner, t).map_err(value_err)
    }

    fn kl_rate_limit(&self, t: f64) -> PyResult<f64> {
        gx::kl_rate_limit(self.inner, t).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("OUParams(a={}, b={})", self.inner.a, self.inner.b)
    }
}

/// Rates (a, b) of the iterated exponential integrals A_ℓ and B_ℓ.
#[pyclass(frozen, from_py_object, name = "ABParams")]
#[derive(Clone, Copy)]
struct PyABParams {
    inner: hb::ABParams,
}

#[pymethods]
impl PyABParams {
    #[new]
    fn new(a: f64, b: f64) -> PyResult<Self> {
        Ok(Self { inner: hb::ABParams::new(a, b).map_err(value_err)? })
    }

    fn a_closed(&self, ell: usize, t: f64) -> PyResult<f64> {
        hb::a_closed(self.inner, ell, t).map_err(value_err)
    }

    fn b_closed(&self, ell: usize, t: f64) -> PyResult<f64> {
        hb::b_closed(self.inner, ell, t).map_err(value_err)
    }

    fn a_subgaussian_bound(&self, ell: usize, t: f64) -> f64 {
        hb::a_subgaussian_bound(self.inner, ell, t)
    }

    fn a_quadrature(&self, ell: usize, t: f64) -> PyResult<f64> {
        hb::a_quadrature_oracle(self.inner, ell, t).map_err(value_err)
    }

    /// (estimate, standard error).
    #[pyo3(signature = (ell, t, samples=100_000, seed=0))]
    fn a_montecarlo(&self, py: Python<'_>, ell: usize, t: f64, samples: usize, seed: u64) -> (f64, f64) {
        let p = self.inner;
        let mc = py.detach(|| hb::a_montecarlo_oracle(p, ell, t, samples, seed));
        (mc.estimate, mc.std_error)
    }

    /// (closed, truncated, terms, remainder bound) of the A-sum identity with weight power p.
    fn identity_a(&self, p: u32, t: f64) -> PyResult<(f64, f64, usize, f64)> {
        let c = hb::sum_identity_a(self.inner, p, t, hb::IDENTITY_TERM_CAP).map_err(value_err)?;
        Ok((c.closed_value, c.truncated_value, c.terms, c.remainder_bound))
    }

    fn identity_b(&self, t: f64) -> PyResult<(f64, f64, usize, f64)> {
        let c = hb::sum_identity_b(self.inner, t, hb::IDENTITY_TERM_CAP).map_err(value_err)?.check;
        Ok((c.closed_value, c.truncated_value, c.terms, c.remainder_bound))
    }
}

/// An evaluated bound: total, named terms and intermediate constants.
#[pyclass(frozen, name = "BoundReport")]
struct PyBoundReport {
    #[pyo3(get)]
    total: f64,
    #[pyo3(get)]
    terms: BTreeMap<String, f64>,
    #[pyo3(get)]
    constants: BTreeMap<String, f64>,
}

#[pymethods]
impl PyBoundReport {
    fn __repr__(&self) -> String {
        format!("BoundReport(total={:e}, terms={:?})", self.total, self.terms)
    }
}

impl From<hb::BoundReport> for PyBoundReport {
    fn from(r: hb::BoundReport) -> Self {
        let named = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect();
        Self { total: r.total, terms: named(&r.terms), constants: named(&r.constants) }
    }
}

#[pyfunction]
fn bound_main(c0: f64, gamma: f64, m: f64, horizon: f64, n: usize, k: usize) -> PyResult<PyBoundReport> {
    hb::bound_main(hb::BoundInputs { c0, gamma, m, horizon, n, k }).map(Into::into).map_err(value_err)
}

#[pyfunction]
fn bound_reversed(c0: f64, b_sup: f64, horizon: f64, n: usize, k: usize) -> PyResult<PyBoundReport> {
    hb::bound_reversed(c0, b_sup, horizon, n, k).map(Into::into).map_err(value_err)
}

fn series(family: &str, params: &[f64]) -> PyResult<SeriesCoefficients> {
    match (family, params) {
        ("finite", p) => Ok(SeriesCoefficients::finite(p.to_vec())),
        ("geometric", [rho]) => Ok(SeriesCoefficients::geometric(*rho)),
        ("super_geometric", [c1, c2, q]) => Ok(SeriesCoefficients::super_geometric(*c1, *c2, *q)),
        _ => Err(PyValueError::new_err(format!("bad series `{family}` with {} parameters", params.len()))),
    }
}

/// Infinite-range bound; `family` is "finite", "geometric" (rho) or "super_geometric" (c1, c2, q).
#[pyfunction]
fn bound_infrange(
    c0: f64,
    family: &str,
    params: Vec<f64>,
    horizon: f64,
    n: usize,
    k: usize,
    ell: usize,
) -> PyResult<PyBoundReport> {
    let s = series(family, &params)?;
    hb::bound_infrange(c0, &s, horizon, n, k, ell).map(Into::into).map_err(value_err)
}

/// A simulated trajectory block.
#[pyclass(frozen, name = "Ensemble")]
struct PyEnsemble {
    inner: simulate::Ensemble,
}

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    fn time(&self, step: usize) -> f64 {
        self.inner.time(step)
    }

    /// Flattened n × d positions at a step.
    fn state(&self, step: usize) -> PyResult<Vec<f64>> {
        if step > self.inner.steps {
            return Err(PyValueError::new_err(format!("step {step} beyond {}", self.inner.steps)));
        }
        Ok(self.inner.state(step).to_vec())
    }
}

fn ou_config(p: PyOUParams, n: usize, horizon: f64, dt: f64, seed: u64) -> PyResult<ExperimentConfig> {
    let cfg = ExperimentConfig {
        n,
        k: 1,
        d: 1,
        horizon,
        dt,
        replicas: 1,
        seed,
        drift: DriftSpec::ou(p.inner),
        init: InitCondition::DiracZero,
    };
    model::validate_config(cfg).map_err(|d| value_err(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")))
}

fn sim_err(e: simulate::SimError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Euler–Maruyama run of the OU system from the origin.
#[pyfunction]
#[pyo3(signature = (params, n, horizon, dt, seed, replica=0))]
fn simulate_ou(
    py: Python<'_>,
    params: PyOUParams,
    n: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    replica: u64,
) -> PyResult<PyEnsemble> {
    let cfg = ou_config(params, n, horizon, dt, seed)?;
    let inner = py.detach(|| simulate::simulate_replica(&cfg, replica)).map_err(sim_err)?;
    Ok(PyEnsemble { inner })
}

/// (1/n)Σ|X^i − Y^i|² at the horizon between the OU system and its exact mean-field reference.
#[pyfunction]
#[pyo3(signature = (params, n, horizon, dt, seed, replica=0))]
fn coupling_gap(
    py: Python<'_>,
    params: PyOUParams,
    n: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    replica: u64,
) -> PyResult<f64> {
    let cfg = ou_config(params, n, horizon, dt, seed)?;
    let pair = py.detach(|| simulate::simulate_coupled(&cfg, replica)).map_err(sim_err)?;
    Ok(pair.mean_sq_gap(cfg.steps(), n))
}

/// Squared W₂ between two equal-size uniform point clouds (flattened, dimension d).
#[pyfunction]
#[pyo3(signature = (a, b, d=1))]
fn w2_assignment(a: Vec<f64>, b: Vec<f64>, d: usize) -> PyResult<f64> {
    metrics::w2_assignment(&a, &b, d).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (a, b, d=1))]
fn w1_sorted_1d(a: Vec<f64>, b: Vec<f64>, d: usize) -> PyResult<f64> {
    metrics::w1_sorted_1d(&a, &b, d).map_err(value_err)
}

/// Runs a CLI scenario and returns the files written under `out`.
/// `config` is the text of a config file, not a path.
#[pyfunction]
#[pyo3(signature = (scenario, out, seed=None, config=None))]
fn run_scenario(
    py: Python<'_>,
    scenario: &str,
    out: PathBuf,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<Vec<String>> {
    let scenario = Scenario::from_str(scenario, false).map_err(PyValueError::new_err)?;
    let file = config.map(ConfigFile::parse).transpose().map_err(value_err)?;
    let spec = cli::build_spec(Some(scenario), file.as_ref(), out, seed).map_err(value_err)?;
    py.detach(|| cli::run_scenario(&spec)).map_err(|e| match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    })
}

#[pymodule]
fn chaoskit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOUParams>()?;
    m.add_class::<PyABParams>()?;
    m.add_class::<PyBoundReport>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(bound_main, m)?)?;
    m.add_function(wrap_pyfunction!(bound_reversed, m)?)?;
    m.add_function(wrap_pyfunction!(bound_infrange, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ou, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_gap, m)?)?;
    m.add_function(wrap_pyfunction!(w2_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(w1_sorted_1d, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
