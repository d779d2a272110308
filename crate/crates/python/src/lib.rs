//! Python bindings: channel models, window tables, region sweeps,
//! canonicalization and the queue simulator.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bec_core::channel::empirical_forgetting;
use bec_core::filter::window_table as build_table;
use bec_core::io::{self, IoError};
use bec_core::region::{self, achieving_distribution, weighted_optimum};
use bec_core::sim::{self, decode_verify, read_trace};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: IoError) -> PyErr {
    match e {
        IoError::NotFound { .. } => PyFileNotFoundError::new_err(e.to_string()),
        IoError::Read { .. } => PyRuntimeError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn checked(model: bec_core::ChannelModel) -> PyResult<ChannelModel> {
    let report = model.validate();
    if report.ok() {
        Ok(ChannelModel { inner: model })
    } else {
        Err(PyValueError::new_err(report.violations.join("; ")))
    }
}

/// Hidden Markov erasure channel. Pattern order is (0,0), (0,1), (1,0), (1,1)
/// with 1 meaning erased.
#[pyclass(frozen)]
struct ChannelModel {
    inner: bec_core::ChannelModel,
}

#[pymethods]
impl ChannelModel {
    #[new]
    fn new(transition: Vec<Vec<f64>>, emission: Vec<[f64; 4]>) -> PyResult<Self> {
        bec_core::ChannelModel::checked(transition, emission)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn memoryless(emission: [f64; 4]) -> PyResult<Self> {
        checked(bec_core::ChannelModel::memoryless(emission))
    }

    #[staticmethod]
    fn independent(eps1: f64, eps2: f64) -> PyResult<Self> {
        checked(bec_core::ChannelModel::independent(eps1, eps2))
    }

    #[staticmethod]
    fn gilbert_elliott(p_gb: f64, p_bg: f64, good: (f64, f64), bad: (f64, f64)) -> PyResult<Self> {
        checked(bec_core::ChannelModel::gilbert_elliott(p_gb, p_bg, good, bad))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::parse_model(text).map(|inner| Self { inner }).map_err(io_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::load_model(&path).map(|inner| Self { inner }).map_err(io_err)
    }

    fn to_json(&self) -> String {
        io::model_to_json(&self.inner)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn transition(&self) -> Vec<Vec<f64>> {
        self.inner.transition().to_vec()
    }

    #[getter]
    fn emission(&self) -> Vec<[f64; 4]> {
        self.inner.emission().to_vec()
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        self.inner.stationary_distribution().map(|s| s.pi).map_err(value_err)
    }

    /// σ of the forgetting bound 2(1-σ)^L, or None when it is not defined.
    fn forgetting_rate_bound(&self) -> Option<f64> {
        self.inner.forgetting_rate_bound()
    }

    /// `(states, pattern indices)` of a stationary sample path.
    fn sample_trajectory(&self, n: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
        let (states, zs) = self.inner.sample_trajectory(n, seed).map_err(value_err)?;
        Ok((states, zs.into_iter().map(|z| z.index()).collect()))
    }

    fn __repr__(&self) -> String {
        format!("ChannelModel(states={})", self.inner.num_states())
    }
}

/// Window probabilities and the erasure statistics that follow each window.
#[pyclass(frozen)]
struct WindowTable {
    inner: bec_core::WindowTable,
}

#[pymethods]
impl WindowTable {
    #[getter(L)]
    fn len(&self) -> usize {
        self.inner.len
    }

    fn __len__(&self) -> usize {
        self.inner.num_windows()
    }

    fn keys(&self) -> Vec<String> {
        (0..self.inner.num_windows()).map(|i| self.inner.key(i)).collect()
    }

    fn probs(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.prob).collect()
    }

    /// `(eps1, eps2, eps12, eps_n12, eps1_n2)` per window.
    fn stats(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                let s = &r.stats;
                (s.eps1, s.eps2, s.eps12, s.eps_n12, s.eps1_n2)
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        io::window_table_csv(&self.inner)
    }
}

#[pyfunction]
#[pyo3(name = "window_table")]
fn window_table_py(model: &ChannelModel, window: usize) -> PyResult<WindowTable> {
    build_table(&model.inner, window)
        .map(|inner| WindowTable { inner })
        .map_err(value_err)
}

/// Probabilities of actions 1..5 per feedback window.
#[pyclass(frozen)]
struct ActionDistribution {
    inner: bec_core::ActionDistribution,
}

#[pymethods]
impl ActionDistribution {
    #[new]
    fn new(window: usize, rows: Vec<[f64; 5]>) -> PyResult<Self> {
        if rows.len() != 1 << (2 * window) {
            return Err(value_err(format!("L = {window} needs {} rows, got {}", 1 << (2 * window), rows.len())));
        }
        let inner = bec_core::ActionDistribution { len: window, rows };
        if inner.max_row_error() > io::DIST_TOL {
            return Err(value_err("every row must be a probability vector"));
        }
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::parse_distribution(text).map(|inner| Self { inner }).map_err(io_err)
    }

    fn to_json(&self) -> String {
        io::distribution_to_json(&self.inner)
    }

    #[getter(L)]
    fn len(&self) -> usize {
        self.inner.len
    }

    #[getter]
    fn rows(&self) -> Vec<[f64; 5]> {
        self.inner.rows.clone()
    }
}

/// `(lambda, R1, R2)` along the frontier, sorted by R1.
#[pyfunction]
#[pyo3(signature = (model, window, k = region::DEFAULT_SWEEP_POINTS))]
fn boundary_sweep(model: &ChannelModel, window: usize, k: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let points = region::boundary_sweep(&model.inner, window, k).map_err(value_err)?;
    Ok(points.into_iter().map(|p| (p.lambda, p.r1, p.r2)).collect())
}

/// `(value, R1, R2)` maximizing `w1 R1 + w2 R2`, or None when the slackened
/// program is infeasible.
#[pyfunction]
#[pyo3(signature = (model, window, w1, w2, slack = 0.0))]
fn weighted_rate(
    model: &ChannelModel,
    window: usize,
    w1: f64,
    w2: f64,
    slack: f64,
) -> PyResult<Option<(f64, f64, f64)>> {
    let table = build_table(&model.inner, window).map_err(value_err)?;
    let best = weighted_optimum(&table, w1, w2, slack).map_err(value_err)?;
    Ok(best.map(|(v, w)| (v, w.r1, w.r2)))
}

/// Inner, nominal and outer weighted values with σ and the slack used.
#[pyfunction]
fn sandwich(model: &ChannelModel, window: usize, w1: f64, w2: f64) -> PyResult<BTreeMap<&'static str, Option<f64>>> {
    let s = region::sandwich(&model.inner, window, w1, w2).map_err(value_err)?;
    Ok(BTreeMap::from([
        ("sigma", s.sigma),
        ("slack", s.slack),
        ("inner", s.inner),
        ("nominal", Some(s.nominal)),
        ("outer", s.outer),
    ]))
}

/// Canonical distribution achieving the frontier point at weight `lambda`.
#[pyfunction]
fn derive_distribution(model: &ChannelModel, window: usize, lambda: f64) -> PyResult<ActionDistribution> {
    let table = build_table(&model.inner, window).map_err(value_err)?;
    let (_, w) = weighted_optimum(&table, lambda, 1.0 - lambda, 0.0)
        .map_err(value_err)?
        .ok_or_else(|| PyRuntimeError::new_err("region program infeasible"))?;
    let (canon, _) = achieving_distribution(&table, &w, 0.0)
        .map_err(value_err)?
        .ok_or_else(|| PyRuntimeError::new_err("no canonical distribution supports this point"))?;
    Ok(ActionDistribution { inner: canon.dist })
}

/// `(canonical distribution, case, theta)`.
#[pyfunction]
fn canonicalize(dist: &ActionDistribution, model: &ChannelModel) -> PyResult<(ActionDistribution, String, f64)> {
    let table = build_table(&model.inner, dist.inner.len).map_err(value_err)?;
    let c = region::canonicalize(&dist.inner, &table).map_err(value_err)?;
    Ok((ActionDistribution { inner: c.dist }, format!("{:?}", c.case), c.theta))
}

/// Whether the distribution supports rates `(r1, r2)`.
#[pyfunction]
fn achievable(dist: &ActionDistribution, model: &ChannelModel, r1: f64, r2: f64) -> PyResult<bool> {
    let table = build_table(&model.inner, dist.inner.len).map_err(value_err)?;
    region::achievable_check(&table, &dist.inner, r1, r2).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (model, window, horizon, samples, seed = 0))]
fn forgetting(model: &ChannelModel, window: usize, horizon: usize, samples: usize, seed: u64) -> PyResult<f64> {
    empirical_forgetting(&model.inner, window, horizon, samples, seed).map_err(value_err)
}

/// Result of one simulation run.
#[pyclass(frozen)]
struct SimReport {
    inner: bec_core::SimReport,
}

#[pymethods]
impl SimReport {
    #[getter]
    fn verdict(&self) -> String {
        format!("{:?}", self.inner.verdict)
    }

    #[getter]
    fn arrivals(&self) -> [u64; 2] {
        self.inner.arrivals
    }

    #[getter]
    fn delivered(&self) -> [u64; 2] {
        self.inner.delivered
    }

    #[getter]
    fn throughput(&self) -> [f64; 2] {
        self.inner.throughput
    }

    #[getter]
    fn arrival_rate(&self) -> [f64; 2] {
        self.inner.arrival_rate
    }

    /// `(slope, mean)` of the backlog over the second half.
    #[getter]
    fn backlog(&self) -> (f64, f64) {
        (self.inner.backlog.slope, self.inner.backlog.mean)
    }

    #[getter]
    fn action_histogram(&self) -> BTreeMap<String, u64> {
        self.inner.action_histogram.clone()
    }

    /// None when the decodability check was skipped.
    #[getter]
    fn decoded(&self) -> Option<bool> {
        self.inner.decode.as_ref().map(|d| d.ok())
    }

    fn to_json(&self) -> PyResult<String> {
        io::to_json_string(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("SimReport({}, {:?})", self.inner.scheduler, self.inner.verdict)
    }
}

/// Runs max-weight, or the probabilistic scheduler when `dist` is given.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (model, r1, r2, slots, seed = 0, dist = None, trace_path = None))]
fn simulate(
    py: Python<'_>,
    model: &ChannelModel,
    r1: f64,
    r2: f64,
    slots: u64,
    seed: u64,
    dist: Option<&ActionDistribution>,
    trace_path: Option<PathBuf>,
) -> PyResult<SimReport> {
    let sched = match dist {
        Some(d) => sim::Scheduler::Probabilistic { dist: d.inner.clone() },
        None => sim::Scheduler::MaxWeight,
    };
    let mut config = bec_core::SimConfig::new(r1, r2, slots, seed);
    config.record_trace = trace_path.is_some();
    let model = model.inner.clone();
    let report = py
        .detach(|| sim::simulate(&model, &sched, &config))
        .map_err(value_err)?;
    if let Some(p) = trace_path {
        let file = std::fs::File::create(&p).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        sim::write_trace(std::io::BufWriter::new(file), &report.trace)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    }
    Ok(SimReport { inner: report })
}

/// Replays a trace file; returns `(ok, counterexample ids per receiver)`.
#[pyfunction]
fn verify_trace(path: PathBuf) -> PyResult<(bool, [Option<u64>; 2])> {
    let file = std::fs::File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PyFileNotFoundError::new_err(format!("trace file not found: {}", path.display())),
        _ => PyRuntimeError::new_err(e.to_string()),
    })?;
    let trace = read_trace(std::io::BufReader::new(file)).map_err(value_err)?;
    let r = decode_verify(&trace);
    Ok((r.ok(), [r.rx1.counterexample, r.rx2.counterexample]))
}

#[pymodule]
fn pybec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ChannelModel>()?;
    m.add_class::<WindowTable>()?;
    m.add_class::<ActionDistribution>()?;
    m.add_class::<SimReport>()?;
    m.add_function(wrap_pyfunction!(window_table_py, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sandwich, m)?)?;
    m.add_function(wrap_pyfunction!(derive_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(achievable, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_trace, m)?)?;
    Ok(())
}
