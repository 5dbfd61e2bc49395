//! Python bindings for `solar-shaper-core`.
//!
//! Actions and tasks cross the boundary as plain dicts (or JSON strings)
//! using the same schema as the JSONL files; results come back as small
//! read-only classes with a `to_dict()` escape hatch.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};
use serde_json::Value;

use solar_shaper_core::datasets::{self, LengthBucket};
use solar_shaper_core::grouping;
use solar_shaper_core::reconstruction::{self, ReconstructedTrajectory};
use solar_shaper_core::scoring;
use solar_shaper_core::shaping::{self, ShapedStep};
use solar_shaper_core::synthenv::{self, ExperimentConfig, NoisePolicy, RewardMode};
use solar_shaper_core::{action, Error};

create_exception!(solar_shaper, SolarShaperError, PyValueError);

fn err(e: Error) -> PyErr {
    SolarShaperError::new_err(e.to_string())
}

/// Dict or JSON string -> `serde_json::Value`.
fn to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| SolarShaperError::new_err(format!("invalid JSON: {e}")))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn from_value<T: serde::de::DeserializeOwned>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T>
where
    T: Default,
{
    match obj {
        None => Ok(T::default()),
        Some(o) => serde_json::from_value(to_value(o)?).map_err(|e| SolarShaperError::new_err(e.to_string())),
    }
}

#[pyclass(name = "ScoringConfig", module = "solar_shaper", skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyScoringConfig {
    #[pyo3(get, set)]
    sigma: f64,
    #[pyo3(get, set)]
    eps_pos: f64,
    #[pyo3(get, set)]
    delta_text: f64,
    #[pyo3(get, set)]
    sim_threshold: f64,
}

impl PyScoringConfig {
    fn core(&self) -> PyResult<scoring::ScoringConfig> {
        let c = scoring::ScoringConfig {
            sigma: self.sigma,
            eps_pos: self.eps_pos,
            delta_text: self.delta_text,
            sim_threshold: self.sim_threshold,
        };
        c.validate().map_err(err)?;
        Ok(c)
    }
}

#[pymethods]
impl PyScoringConfig {
    #[new]
    #[pyo3(signature = (sigma = 0.1, eps_pos = 0.14, delta_text = 0.5, sim_threshold = 0.9))]
    fn new(sigma: f64, eps_pos: f64, delta_text: f64, sim_threshold: f64) -> PyResult<Self> {
        let c = Self { sigma, eps_pos, delta_text, sim_threshold };
        c.core()?;
        Ok(c)
    }

    fn __repr__(&self) -> String {
        format!(
            "ScoringConfig(sigma={}, eps_pos={}, delta_text={}, sim_threshold={})",
            self.sigma, self.eps_pos, self.delta_text, self.sim_threshold
        )
    }
}

#[pyclass(name = "ShapingConfig", module = "solar_shaper", skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyShapingConfig {
    #[pyo3(get, set)]
    lam: f64,
    #[pyo3(get, set)]
    epsilon: f64,
    #[pyo3(get, set)]
    gamma: f64,
}

impl PyShapingConfig {
    fn core(&self) -> PyResult<shaping::ShapingConfig> {
        let c = shaping::ShapingConfig {
            lambda: self.lam,
            epsilon: self.epsilon,
            gamma: self.gamma,
        };
        c.validate().map_err(err)?;
        Ok(c)
    }
}

#[pymethods]
impl PyShapingConfig {
    /// `lam` is the error-count penalty weight (`lambda` is reserved in Python).
    #[new]
    #[pyo3(signature = (lam = 0.1, epsilon = 1e-6, gamma = 0.95))]
    fn new(lam: f64, epsilon: f64, gamma: f64) -> PyResult<Self> {
        let c = Self { lam, epsilon, gamma };
        c.core()?;
        Ok(c)
    }

    fn __repr__(&self) -> String {
        format!("ShapingConfig(lam={}, epsilon={}, gamma={})", self.lam, self.epsilon, self.gamma)
    }
}

fn scoring_cfg(c: Option<PyRef<'_, PyScoringConfig>>) -> PyResult<scoring::ScoringConfig> {
    c.map_or_else(|| Ok(scoring::ScoringConfig::default()), |c| c.core())
}

fn shaping_cfg(c: Option<PyRef<'_, PyShapingConfig>>) -> PyResult<shaping::ShapingConfig> {
    c.map_or_else(|| Ok(shaping::ShapingConfig::default()), |c| c.core())
}

#[pyclass(name = "StepScore", module = "solar_shaper", frozen)]
struct PyStepScore {
    #[pyo3(get)]
    s_raw: f64,
    #[pyo3(get)]
    valid: bool,
}

#[pymethods]
impl PyStepScore {
    fn __repr__(&self) -> String {
        format!("StepScore(s_raw={}, valid={})", self.s_raw, if self.valid { "True" } else { "False" })
    }
}

#[pyclass(name = "Trajectory", module = "solar_shaper", frozen)]
struct PyTrajectory {
    inner: ReconstructedTrajectory,
}

impl PyTrajectory {
    fn json(&self) -> Value {
        let t = &self.inner;
        serde_json::json!({
            "task_id": t.task_id,
            "rollout_index": t.rollout_index,
            "breakdown_step": t.breakdown_step,
            "success": t.success,
            "n_ref": t.n_ref,
            "steps": t.steps.iter().map(|s| serde_json::json!({
                "action": s.action.to_json(),
                "s_raw": s.score.s_raw,
                "valid": s.score.valid,
            })).collect::<Vec<_>>(),
        })
    }
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn task_id(&self) -> &str {
        &self.inner.task_id
    }
    /// 1-based rollout index.
    #[getter]
    fn rollout_index(&self) -> usize {
        self.inner.rollout_index
    }
    #[getter]
    fn breakdown_step(&self) -> Option<usize> {
        self.inner.breakdown_step
    }
    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }
    #[getter]
    fn n_ref(&self) -> usize {
        self.inner.n_ref
    }
    fn __len__(&self) -> usize {
        self.inner.len()
    }
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.json())
    }
    fn __repr__(&self) -> String {
        format!(
            "Trajectory(task_id={:?}, rollout_index={}, length={}, breakdown_step={:?}, success={})",
            self.inner.task_id,
            self.inner.rollout_index,
            self.inner.len(),
            self.inner.breakdown_step,
            self.inner.success
        )
    }
}

#[pyclass(name = "ShapedTrajectory", module = "solar_shaper", frozen)]
struct PyShaped {
    inner: shaping::ShapedTrajectory,
}

fn step_field(steps: &[ShapedStep], f: impl Fn(&ShapedStep) -> f64) -> Vec<f64> {
    steps.iter().map(f).collect()
}

#[pymethods]
impl PyShaped {
    #[getter]
    fn task_id(&self) -> &str {
        &self.inner.task_id
    }
    #[getter]
    fn rollout_index(&self) -> usize {
        self.inner.rollout_index
    }
    #[getter]
    fn breakdown_step(&self) -> Option<usize> {
        self.inner.breakdown_step
    }
    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }
    #[getter]
    fn r_target(&self) -> f64 {
        self.inner.r_target
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    /// False when there was no positive step to carry the budget.
    #[getter]
    fn aligned(&self) -> bool {
        self.inner.aligned
    }
    #[getter]
    fn r_base(&self) -> Vec<f64> {
        step_field(&self.inner.steps, |s| s.r_base)
    }
    #[getter]
    fn r_final(&self) -> Vec<f64> {
        step_field(&self.inner.steps, |s| s.r_final)
    }
    #[getter]
    fn s_signed(&self) -> Vec<f64> {
        step_field(&self.inner.steps, |s| s.s_signed)
    }
    #[getter]
    fn advantages(&self) -> Option<Vec<f64>> {
        self.inner.steps.iter().map(|s| s.advantage).collect()
    }
    fn sum_r_final(&self) -> f64 {
        self.inner.sum_r_final()
    }
    fn __len__(&self) -> usize {
        self.inner.len()
    }
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &datasets::shaped_to_json(&self.inner))
    }
    fn __repr__(&self) -> String {
        format!(
            "ShapedTrajectory(task_id={:?}, rollout_index={}, length={}, r_target={}, aligned={})",
            self.inner.task_id,
            self.inner.rollout_index,
            self.inner.len(),
            self.inner.r_target,
            self.inner.aligned
        )
    }
}

/// Validates an action and returns it in canonical dict form.
#[pyfunction]
fn parse_action<'py>(py: Python<'py>, action: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let a = action::parse_action(&to_value(action)?).map_err(err)?;
    to_py(py, &action::serialize_action(&a))
}

#[pyfunction]
#[pyo3(signature = (candidate, gt, config = None))]
fn score_action(
    candidate: &Bound<'_, PyAny>,
    gt: &Bound<'_, PyAny>,
    config: Option<PyRef<'_, PyScoringConfig>>,
) -> PyResult<PyStepScore> {
    let c = action::parse_action(&to_value(candidate)?).map_err(err)?;
    let g = action::parse_action(&to_value(gt)?).map_err(err)?;
    let s = scoring::score_action(&c, &g, &scoring_cfg(config)?);
    Ok(PyStepScore { s_raw: s.s_raw, valid: s.valid })
}

/// Pixel coordinates on a `width` x `height` screen -> normalized `(x, y)`.
#[pyfunction]
fn normalize_point(x: i64, y: i64, width: u32, height: u32) -> PyResult<(f64, f64)> {
    let dims = action::ScreenDims::new(width, height).map_err(err)?;
    let p = action::normalize_point(x, y, dims).map_err(err)?;
    Ok((p.x(), p.y()))
}

fn parse_task(task: &Bound<'_, PyAny>) -> PyResult<reconstruction::TaskRecord> {
    datasets::parse_task(&to_value(task)?).map_err(err)
}

/// Chains and truncates the candidate rollouts of one task.
#[pyfunction]
#[pyo3(signature = (task, config = None))]
fn reconstruct(task: &Bound<'_, PyAny>, config: Option<PyRef<'_, PyScoringConfig>>) -> PyResult<Vec<PyTrajectory>> {
    let t = parse_task(task)?;
    let out = reconstruction::reconstruct(&t, &scoring_cfg(config)?).map_err(err)?;
    Ok(out.into_iter().map(|inner| PyTrajectory { inner }).collect())
}

/// Shapes a batch of reconstructed trajectories (the batch sets the mean length).
#[pyfunction]
#[pyo3(signature = (trajectories, config = None, with_advantages = false, adv_eps = 1e-6))]
fn shape(
    trajectories: Vec<PyRef<'_, PyTrajectory>>,
    config: Option<PyRef<'_, PyShapingConfig>>,
    with_advantages: bool,
    adv_eps: f64,
) -> PyResult<Vec<PyShaped>> {
    let trajs: Vec<ReconstructedTrajectory> = trajectories.iter().map(|t| t.inner.clone()).collect();
    let mut shaped = shaping::shape_batch(&trajs, &shaping_cfg(config)?).map_err(err)?;
    if with_advantages {
        grouping::attach_advantages(&mut shaped, adv_eps);
    }
    Ok(shaped.into_iter().map(|inner| PyShaped { inner }).collect())
}

/// Reconstructs and shapes a list of tasks in one batch.
#[pyfunction]
#[pyo3(signature = (tasks, scoring = None, shaping = None, with_advantages = false))]
fn shape_tasks(
    tasks: Vec<Bound<'_, PyAny>>,
    scoring: Option<PyRef<'_, PyScoringConfig>>,
    shaping: Option<PyRef<'_, PyShapingConfig>>,
    with_advantages: bool,
) -> PyResult<Vec<PyShaped>> {
    let sc = scoring_cfg(scoring)?;
    let mut trajs = Vec::new();
    for t in &tasks {
        trajs.extend(reconstruction::reconstruct(&parse_task(t)?, &sc).map_err(err)?);
    }
    if trajs.is_empty() {
        return Ok(Vec::new());
    }
    let mut shaped = shaping::shape_batch(&trajs, &shaping_cfg(shaping)?).map_err(err)?;
    if with_advantages {
        grouping::attach_advantages(&mut shaped, 1e-6);
    }
    Ok(shaped.into_iter().map(|inner| PyShaped { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (returns, eps = 1e-6))]
fn group_advantages(returns: Vec<f64>, eps: f64) -> Vec<f64> {
    grouping::group_advantages(&returns, eps)
}

#[pyfunction]
fn bucket_of(length: usize) -> PyResult<&'static str> {
    datasets::bucket_of(length).map(|b: LengthBucket| b.as_str()).map_err(err)
}

#[pyfunction]
fn dataset_stats<'py>(py: Python<'py>, lengths: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let s = datasets::length_stats(&lengths).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("count", s.count)?;
    d.set_item("short", s.short)?;
    d.set_item("long", s.long)?;
    d.set_item("super_long", s.super_long)?;
    d.set_item("min", s.min)?;
    d.set_item("q1", s.q1)?;
    d.set_item("median", s.median)?;
    d.set_item("q3", s.q3)?;
    d.set_item("max", s.max)?;
    Ok(d)
}

/// Synthetic task with noisy candidate rollouts, as a task dict.
#[pyfunction]
#[pyo3(signature = (task_id, length, seed = 0, n_rollouts = 8, branching = 4, noise = None))]
fn simulate_task<'py>(
    py: Python<'py>,
    task_id: String,
    length: usize,
    seed: u64,
    n_rollouts: usize,
    branching: usize,
    noise: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let noise: NoisePolicy = from_value(noise)?;
    noise.validate().map_err(err)?;
    let t = synthenv::simulate_task(task_id, length, branching, &noise, n_rollouts, seed).map_err(err)?;
    to_py(py, &datasets::task_to_json(&t))
}

/// Sparse vs shaped training comparison. `config` takes the keys of the
/// `[experiment]` config section; returns `{"rows": [...], "summaries": [...]}`.
#[pyfunction]
#[pyo3(signature = (config = None, seed = 0, scoring = None, shaping = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyAny>>,
    seed: u64,
    scoring: Option<PyRef<'py, PyScoringConfig>>,
    shaping: Option<PyRef<'py, PyShapingConfig>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ExperimentConfig = from_value(config)?;
    let (sc, sh) = (scoring_cfg(scoring)?, shaping_cfg(shaping)?);
    let report = py
        .detach(|| synthenv::run_experiment(&cfg, &sc, &sh, seed))
        .map_err(err)?;
    let v = serde_json::json!({ "rows": report.rows, "summaries": report.summaries });
    to_py(py, &v)
}

/// Returns discounted sparse (success-only) rewards for a trajectory.
#[pyfunction]
fn sparse_rewards(trajectory: PyRef<'_, PyTrajectory>) -> Vec<f64> {
    synthenv::sparse_rewards(&trajectory.inner)
}

#[pymodule]
fn solar_shaper(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolarShaperError", m.py().get_type::<SolarShaperError>())?;
    m.add("REWARD_MODES", [RewardMode::Sparse.as_str(), RewardMode::Shaped.as_str()])?;
    m.add_class::<PyScoringConfig>()?;
    m.add_class::<PyShapingConfig>()?;
    m.add_class::<PyStepScore>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyShaped>()?;
    m.add_function(wrap_pyfunction!(parse_action, m)?)?;
    m.add_function(wrap_pyfunction!(score_action, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_point, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(shape, m)?)?;
    m.add_function(wrap_pyfunction!(shape_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(group_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(bucket_of, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_task, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_rewards, m)?)?;
    Ok(())
}
