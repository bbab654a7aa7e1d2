//! Python bindings for the active LZ toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ulz_core::bench::{self, TraceRecorder};
use ulz_core::ctree::kt_sequence_codelength;
use ulz_core::{
    run_episode, ActiveLzAgent, AgentConfig, Controller, Environment, Error, PredictionTie, PredictiveLzAgent,
};

fn to_py(e: Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(name = "Environment", module = "pyulz", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEnvironment {
    inner: Environment,
}

#[pymethods]
impl PyEnvironment {
    /// The builtin Rock-Paper-Scissors opponent.
    #[staticmethod]
    fn rps() -> Self {
        Self {
            inner: Environment::rps(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Environment::from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn num_obs(&self) -> usize {
        self.inner.alphabet().num_observations
    }

    #[getter]
    fn num_act(&self) -> usize {
        self.inner.alphabet().num_actions
    }

    fn cost(&self, x: usize, a: usize, x_next: usize) -> f64 {
        self.inner.cost().get(x, a, x_next)
    }

    fn __repr__(&self) -> String {
        let al = self.inner.alphabet();
        format!(
            "Environment(K={}, num_obs={}, num_act={})",
            self.inner.order(),
            al.num_observations,
            al.num_actions
        )
    }
}

/// Exact optimal average cost: returns `(lambda, policy, iterations)`.
#[pyfunction]
#[pyo3(signature = (env, alpha = 0.999))]
fn solve(env: &PyEnvironment, alpha: f64) -> PyResult<(f64, Vec<usize>, usize)> {
    let sol = ulz_core::optimal_average_cost(&env.inner, alpha).map_err(to_py)?;
    Ok((sol.lambda, sol.policy.actions, sol.discounted.iterations))
}

#[pyclass(name = "ActiveLz", module = "pyulz")]
struct PyActiveLz {
    inner: ActiveLzAgent,
}

#[pymethods]
impl PyActiveLz {
    /// `config` is an agent config JSON document; defaults apply when omitted.
    #[new]
    #[pyo3(signature = (env, config = None))]
    fn new(env: &PyEnvironment, config: Option<&str>) -> PyResult<Self> {
        let config: AgentConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => AgentConfig::default(),
        };
        ActiveLzAgent::new(config, env.inner.cost().clone())
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn act(&mut self, observation: usize) -> PyResult<usize> {
        self.inner.act(observation).map(|d| d.action).map_err(to_py)
    }

    #[getter]
    fn phrases(&self) -> u64 {
        self.inner.phrases()
    }

    #[getter]
    fn max_depth(&self) -> usize {
        self.inner.max_depth()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.tree().num_nodes()
    }

    fn tree_json(&self) -> String {
        self.inner.tree().to_json().to_string()
    }
}

#[pyclass(name = "PredictiveLz", module = "pyulz")]
struct PyPredictiveLz {
    inner: PredictiveLzAgent,
}

#[pymethods]
impl PyPredictiveLz {
    #[new]
    #[pyo3(signature = (env, seed = 0))]
    fn new(env: &PyEnvironment, seed: u64) -> PyResult<Self> {
        PredictiveLzAgent::new(env.inner.cost().clone(), PredictionTie::LowestIndex, seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn act(&mut self, observation: usize) -> PyResult<usize> {
        self.inner.act(observation).map(|d| d.action).map_err(to_py)
    }

    fn next_dist(&self) -> Vec<f64> {
        self.inner.next_dist()
    }

    #[getter]
    fn phrases(&self) -> u64 {
        self.inner.phrases()
    }
}

/// Runs one agent for `horizon` steps; returns `(t, avg_cost)` per checkpoint.
#[pyfunction]
#[pyo3(signature = (env, agent, horizon, seed = 0, checkpoints = None))]
fn run(
    py: Python<'_>,
    env: &PyEnvironment,
    agent: &str,
    horizon: u64,
    seed: u64,
    checkpoints: Option<Vec<u64>>,
) -> PyResult<Vec<(u64, f64)>> {
    let checkpoints = checkpoints.unwrap_or_else(|| bench::default_checkpoints(horizon));
    let kind = bench::AgentKind::parse(agent).map_err(to_py)?;
    let env = env.inner.clone();
    let trace = py
        .detach(move || {
            let rec = TraceRecorder::new(kind.name(), &checkpoints);
            match kind {
                bench::AgentKind::ActiveLz => {
                    let config = AgentConfig {
                        seed,
                        ..AgentConfig::default()
                    };
                    let mut a = ActiveLzAgent::new(config, env.cost().clone())?;
                    run_episode(&mut a, &env, seed, horizon, rec)
                }
                bench::AgentKind::PredictiveLz => {
                    let mut a = PredictiveLzAgent::new(env.cost().clone(), PredictionTie::LowestIndex, seed)?;
                    run_episode(&mut a, &env, seed, horizon, rec)
                }
                bench::AgentKind::Optimal => {
                    let mut a = bench::PolicyAgent::optimal(&env, ulz_core::exactdp::DEFAULT_ALPHA)?;
                    run_episode(&mut a, &env, seed, horizon, rec)
                }
                bench::AgentKind::ActiveLzDoubling => {
                    let config = AgentConfig {
                        seed,
                        ..AgentConfig::default()
                    };
                    ulz_core::run_doubling(&env, &Default::default(), &config, horizon, rec)
                }
            }
        })
        .map_err(to_py)?;
    Ok(trace.records.iter().map(|r| (r.t, r.avg_cost)).collect())
}

/// Code length in bits of `sequence` under the sequential add-half estimator.
#[pyfunction]
fn kt_codelength(sequence: Vec<usize>, alphabet_size: usize) -> PyResult<f64> {
    kt_sequence_codelength(&sequence, alphabet_size).map_err(to_py)
}

#[pyfunction]
fn tv_distance(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    bench::tv_distance(&p, &q).map_err(to_py)
}

#[pymodule]
fn pyulz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyActiveLz>()?;
    m.add_class::<PyPredictiveLz>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(kt_codelength, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    Ok(())
}
