//! Python bindings: datasets, simulators, PCMCI, GP regression and the
//! prediction benchmark.

use std::path::PathBuf;

use hsi_causal::discovery::{self, CiTest, DiscoveryConfig};
use hsi_causal::gpr::{self, KernelConfig, KernelParams};
use hsi_causal::pipeline::{self, PipelineConfig};
use hsi_causal::simulator::{self, HumanGoalSimConfig, MovingObstacleSimConfig};
use hsi_causal::timeseries::{self, TimeSeriesDataset};
use hsi_causal::vo::{self, AgentDisc};
use hsi_causal::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for hsi_causal::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Named, aligned series on a uniform time grid.
#[pyclass(name = "Dataset", module = "hsi_causal", frozen)]
struct PyDataset {
    inner: TimeSeriesDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(names: Vec<String>, columns: Vec<Vec<f64>>, dt: f64) -> PyResult<Self> {
        if names.len() != columns.len() {
            return Err(PyValueError::new_err("names and columns differ in length"));
        }
        let inner = timeseries::to_dataset(names.into_iter().zip(columns).collect(), dt).py()?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: TimeSeriesDataset::read_csv(&path).py()?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).py()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let i = self
            .inner
            .index_of(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column `{name}`")))?;
        Ok(self.inner.column(i).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(names={:?}, len={}, dt={})",
            self.inner.names(),
            self.inner.len(),
            self.inner.dt()
        )
    }
}

/// Lagged causal graph; edges are `(source, lag, target, statistic, p_value)`.
#[pyclass(name = "CausalGraph", module = "hsi_causal", frozen)]
struct PyCausalGraph {
    inner: discovery::CausalGraph,
}

#[pymethods]
impl PyCausalGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCausalGraph {
            inner: discovery::CausalGraph::from_json(text).py()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables.clone()
    }

    #[getter]
    fn tau_max(&self) -> usize {
        self.inner.tau_max
    }

    #[getter]
    fn edges(&self) -> Vec<(String, usize, String, f64, f64)> {
        let v = &self.inner.variables;
        self.inner
            .edges
            .iter()
            .map(|e| {
                (
                    v[e.source.var].clone(),
                    e.source.lag,
                    v[e.target].clone(),
                    e.statistic,
                    e.p_value,
                )
            })
            .collect()
    }

    /// `(source, lag, target)` triples, sorted.
    fn edge_set(&self) -> Vec<(String, usize, String)> {
        self.inner.edge_set().into_iter().collect()
    }

    fn contains(&self, source: &str, lag: usize, target: &str) -> bool {
        self.inner.contains(source, lag, target)
    }

    fn __repr__(&self) -> String {
        format!(
            "CausalGraph(variables={:?}, edges={})",
            self.inner.variables,
            self.inner.edges.len()
        )
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged input rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Exact GP regression with a squared-exponential kernel.
#[pyclass(name = "GaussianProcess", module = "hsi_causal", frozen)]
struct PyGaussianProcess {
    model: gpr::GprModel,
}

#[pymethods]
impl PyGaussianProcess {
    /// Fit on rows `x` and targets `y`. With `lengthscales` given the
    /// hyperparameters are fixed, otherwise they maximize the marginal
    /// likelihood.
    #[new]
    #[pyo3(signature = (x, y, lengthscales=None, signal_variance=1.0, noise_variance=1e-2, jitter=1e-8))]
    fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        lengthscales: Option<Vec<f64>>,
        signal_variance: f64,
        noise_variance: f64,
        jitter: f64,
    ) -> PyResult<Self> {
        let mut cfg = match lengthscales {
            Some(l) => KernelConfig::fixed(KernelParams::new(l, signal_variance, noise_variance)),
            None => KernelConfig::default(),
        };
        cfg.jitter = jitter;
        let model = gpr::gpr_fit(&matrix(&x)?, &DVector::from_vec(y), &cfg).py()?;
        Ok(PyGaussianProcess { model })
    }

    /// Posterior mean and latent variance at each query row.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let p = gpr::gpr_predict(&self.model, &matrix(&x)?).py()?;
        Ok((
            p.mean.iter().copied().collect(),
            p.variance.iter().copied().collect(),
        ))
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.model.params().lengthscales.clone()
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.model.params().signal_variance
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.model.params().noise_variance
    }

    #[getter]
    fn log_marginal_likelihood(&self) -> f64 {
        self.model.log_marginal_likelihood()
    }
}

fn sim_result(out: simulator::SimulationOutput) -> PyResult<(PyDataset, PyCausalGraph)> {
    Ok((
        PyDataset {
            inner: out.dataset().py()?,
        },
        PyCausalGraph {
            inner: out.ground_truth,
        },
    ))
}

/// Human-goal simulation; returns `(dataset, ground_truth)`.
#[pyfunction]
#[pyo3(signature = (seed=0, steps=2000))]
fn simulate_human_goal(seed: u64, steps: usize) -> PyResult<(PyDataset, PyCausalGraph)> {
    let cfg = HumanGoalSimConfig {
        seed,
        steps,
        ..Default::default()
    };
    sim_result(simulator::simulate_human_goal(&cfg).py()?)
}

/// Moving-obstacle simulation; returns `(dataset, ground_truth)`.
#[pyfunction]
#[pyo3(signature = (seed=0, steps=2000))]
fn simulate_moving_obstacles(seed: u64, steps: usize) -> PyResult<(PyDataset, PyCausalGraph)> {
    let mut cfg = MovingObstacleSimConfig::default();
    cfg.agent.seed = seed;
    cfg.agent.steps = steps;
    sim_result(simulator::simulate_moving_obstacles(&cfg).py()?)
}

#[pyfunction]
#[pyo3(signature = (dataset, tau_max=1, alpha=0.05, alpha_pc=0.2, test="parcorr", permutations=500, seed=0))]
fn run_pcmci(
    dataset: &PyDataset,
    tau_max: usize,
    alpha: f64,
    alpha_pc: f64,
    test: &str,
    permutations: usize,
    seed: u64,
) -> PyResult<PyCausalGraph> {
    let test = match test {
        "parcorr" => CiTest::ParCorr,
        "gpdc" => CiTest::Gpdc,
        other => return Err(PyValueError::new_err(format!("unknown test `{other}`"))),
    };
    let cfg = DiscoveryConfig {
        tau_max,
        alpha,
        alpha_pc,
        test,
        permutations,
        seed,
        ..Default::default()
    };
    Ok(PyCausalGraph {
        inner: discovery::run_pcmci(&dataset.inner, &cfg).py()?,
    })
}

/// Partial correlation of `x` and `y` given the columns `z`; `(statistic, p_value)`.
#[pyfunction]
#[pyo3(signature = (x, y, z=Vec::new()))]
fn parcorr_test(x: Vec<f64>, y: Vec<f64>, z: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let z: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let r = discovery::parcorr_test(&x, &y, &z).py()?;
    Ok((r.statistic, r.p_value))
}

#[pyfunction]
fn distance_correlation(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    discovery::distance_correlation(&a, &b).py()
}

#[pyfunction]
fn nmae(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    gpr::nmae(&actual, &predicted).py()
}

/// Collision risk of `agent` against the closest of `obstacles`; discs are
/// `(x, y, vx, vy, radius)`.
#[pyfunction]
#[pyo3(signature = (agent, obstacles=Vec::new()))]
fn collision_risk(
    agent: (f64, f64, f64, f64, f64),
    obstacles: Vec<(f64, f64, f64, f64, f64)>,
) -> f64 {
    let disc = |(x, y, vx, vy, r): (f64, f64, f64, f64, f64)| AgentDisc::new([x, y], [vx, vy], r);
    let others: Vec<AgentDisc> = obstacles.into_iter().map(disc).collect();
    vo::risk(&disc(agent), &others).risk
}

/// Causal-vs-full GP benchmark; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (dataset, graph, split=0.8))]
fn benchmark<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    graph: &PyCausalGraph,
    split: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let out = gpr::benchmark(
        &dataset.inner,
        &graph.inner,
        graph.inner.tau_max,
        split,
        &KernelConfig::default(),
    )
    .py()?;
    let r = &out.report;
    let d = PyDict::new(py);
    let per_var = PyDict::new(py);
    for v in &r.variables {
        per_var.set_item(&v.variable, (v.causal_nmae, v.full_nmae))?;
    }
    d.set_item("variables", per_var)?;
    d.set_item("mean_causal_nmae", r.mean_causal_nmae)?;
    d.set_item("mean_full_nmae", r.mean_full_nmae)?;
    d.set_item("train_rows", r.train_rows)?;
    d.set_item("test_rows", r.test_rows)?;
    Ok(d)
}

/// Run the full pipeline from a JSON config file; returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (config, out=None, seed=None))]
fn run_pipeline(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = PipelineConfig::from_file(&config).py()?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    let manifest = pipeline::run_pipeline(&cfg, &cfg.output_dir.clone()).py()?;
    serde_json::to_string_pretty(&manifest).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "hsi_causal")]
fn hsi_causal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCausalGraph>()?;
    m.add_class::<PyGaussianProcess>()?;
    m.add_function(wrap_pyfunction!(simulate_human_goal, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_moving_obstacles, m)?)?;
    m.add_function(wrap_pyfunction!(run_pcmci, m)?)?;
    m.add_function(wrap_pyfunction!(parcorr_test, m)?)?;
    m.add_function(wrap_pyfunction!(distance_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(nmae, m)?)?;
    m.add_function(wrap_pyfunction!(collision_risk, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
