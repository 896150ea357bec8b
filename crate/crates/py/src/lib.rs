//! Python bindings for `ddpp-core`.

use std::str::FromStr;

use ddpp_core::exact::partition_lists;
use ddpp_core::qubo::DEFAULT_K;
use ddpp_core::{
    AnnealSchedule, Assignment, AssignmentSource, BuildOptions, ConflictSlackMode,
    CostDistribution, Error, Formulation, OverlapConvention, PenaltyWeights, ProblemInstance,
    QuboModel, SlackBitRule, SolverConfig,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(ddpp, DdppError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Validation(_) | Error::Parse { .. } | Error::InvalidArgument(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => DdppError::new_err(other.to_string()),
    }
}

fn parse<T: FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// A delivery instance: `m` drones with budget `B`, and per-delivery costs
/// and `[start, end]` windows.
#[pyclass(name = "Instance", module = "ddpp", frozen)]
struct PyInstance {
    inner: ProblemInstance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (m, budget, costs, intervals, label = String::new()))]
    fn new(
        m: usize,
        budget: f64,
        costs: Vec<f64>,
        intervals: Vec<[u32; 2]>,
        label: String,
    ) -> PyResult<Self> {
        let inner = ProblemInstance::from_raw(label, m, budget, costs, &intervals).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = ddpp_core::load_instance(path).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, m, n, budget, dist = "gaussian"))]
    fn generate(seed: u64, m: usize, n: usize, budget: f64, dist: &str) -> PyResult<Self> {
        let dist: CostDistribution = parse(dist)?;
        let inner = ddpp_core::generate_instance(seed, m, n, budget, dist).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        ddpp_core::save_instance(&self.inner, path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        ddpp_core::instance::instance_to_json(&self.inner)
    }

    #[getter]
    fn label(&self) -> &str {
        &self.inner.label
    }

    #[getter]
    fn num_drones(&self) -> usize {
        self.inner.num_drones()
    }

    #[getter]
    fn num_deliveries(&self) -> usize {
        self.inner.num_deliveries()
    }

    #[getter]
    fn budget(&self) -> f64 {
        self.inner.battery_budget()
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.inner.costs().to_vec()
    }

    #[getter]
    fn intervals(&self) -> Vec<(u32, u32)> {
        self.inner.intervals().iter().map(|t| (t.start(), t.end())).collect()
    }

    /// Delivery pairs `(j, k)`, `j < k`, whose windows overlap.
    #[pyo3(signature = (convention = "open"))]
    fn conflicts(&self, convention: &str) -> PyResult<Vec<(usize, usize)>> {
        let convention: OverlapConvention = parse(convention)?;
        Ok(self.inner.conflicts(convention).pairs().to_vec())
    }

    fn with_drones(&self, m: usize) -> PyResult<Self> {
        let inner = self.inner.with_drones(m).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(m={}, N={}, B={})",
            self.inner.num_drones(),
            self.inner.num_deliveries(),
            self.inner.battery_budget()
        )
    }
}

#[pyclass(name = "Model", module = "ddpp", frozen)]
struct PyModel {
    inner: QuboModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = QuboModel::load(path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn num_variables(&self) -> usize {
        self.inner.num_variables()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables().iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.inner.offset()
    }

    fn energy(&self, bits: Vec<bool>) -> PyResult<f64> {
        self.inner.energy(&bits).map_err(to_py)
    }

    /// Drone-by-delivery 0/1 rows encoded by a full bit vector.
    fn decode(&self, bits: Vec<bool>) -> PyResult<Vec<Vec<bool>>> {
        let a = ddpp_core::decode(&self.inner, &bits, AssignmentSource::Sa).map_err(to_py)?;
        Ok(a.rows())
    }

    /// Bit vector for `rows` with slacks and usage flags filled in.
    fn encode(&self, instance: &PyInstance, rows: Vec<Vec<bool>>) -> PyResult<Vec<bool>> {
        let a = Assignment::from_rows(rows, AssignmentSource::Exact).map_err(to_py)?;
        let c = ddpp_core::qubo::complete_slacks(&self.inner, &instance.inner, &a).map_err(to_py)?;
        Ok(c.bits)
    }

    fn __repr__(&self) -> String {
        format!("Model(num_variables={})", self.inner.num_variables())
    }
}

#[pyclass(name = "Sample", module = "ddpp", frozen, get_all)]
struct PySample {
    bits: Vec<bool>,
    energy: f64,
    read: usize,
}

#[pymethods]
impl PySample {
    fn __repr__(&self) -> String {
        format!("Sample(read={}, energy={})", self.read, self.energy)
    }
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (
    instance,
    formulation = 2,
    k = DEFAULT_K,
    convention = "open",
    slack_mode = "per-pair",
    slack_bits = "log2",
    cost_scale = 1.0,
))]
fn build(
    instance: &PyInstance,
    formulation: u8,
    k: f64,
    convention: &str,
    slack_mode: &str,
    slack_bits: &str,
    cost_scale: f64,
) -> PyResult<PyModel> {
    let formulation = Formulation::from_number(formulation).map_err(to_py)?;
    let options = BuildOptions {
        convention: parse(convention)?,
        conflict_slack: parse::<ConflictSlackMode>(slack_mode)?,
        slack_bits: parse::<SlackBitRule>(slack_bits)?,
        cost_scale,
    };
    let weights = PenaltyWeights::for_instance(formulation, &instance.inner, k);
    let inner =
        ddpp_core::build_qubo(formulation, &instance.inner, &weights, &options).map_err(to_py)?;
    Ok(PyModel { inner })
}

/// Runs the annealer and returns samples sorted by energy, then read index.
#[pyfunction]
#[pyo3(signature = (model, reads = 1000, sweeps = 1000, seed = 0))]
fn anneal(
    py: Python<'_>,
    model: &PyModel,
    reads: usize,
    sweeps: usize,
    seed: u64,
) -> PyResult<Vec<PySample>> {
    let set = py
        .detach(|| {
            let schedule = AnnealSchedule::for_model(&model.inner, sweeps)?;
            ddpp_core::anneal(&model.inner, &schedule, reads, seed)
        })
        .map_err(to_py)?;
    Ok(set
        .samples()
        .iter()
        .map(|s| PySample {
            bits: s.bits.clone(),
            energy: s.energy,
            read: s.read,
        })
        .collect())
}

#[pyfunction]
fn brute_force(py: Python<'_>, model: &PyModel) -> PyResult<(Vec<bool>, f64)> {
    py.detach(|| ddpp_core::brute_force_qubo(&model.inner))
        .map_err(to_py)
}

/// Exact optimum; partitions are lists of delivery indices per used drone.
#[pyfunction]
#[pyo3(signature = (instance, m = None, convention = "open"))]
fn solve_exact<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    m: Option<usize>,
    convention: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let convention: OverlapConvention = parse(convention)?;
    let conflicts = instance.inner.conflicts(convention);
    let m = m.unwrap_or(instance.inner.num_drones());
    let sol = py
        .detach(|| ddpp_core::solve_exact(&instance.inner, &conflicts, m))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("min_drones", sol.min_drones)?;
    d.set_item("min_drones_partition", partition_lists(&sol.min_drones_partition))?;
    d.set_item("min_h0", sol.min_h0)?;
    d.set_item("min_h0_partition", partition_lists(&sol.min_h0_partition))?;
    d.set_item("min_h0_drones", sol.min_h0_drones)?;
    d.set_item("convention", convention.to_string())?;
    Ok(d)
}

/// `(battery, time, all_once)` satisfaction flags of a drone-by-delivery matrix.
#[pyfunction]
#[pyo3(signature = (instance, rows, convention = "open"))]
fn feasibility(
    instance: &PyInstance,
    rows: Vec<Vec<bool>>,
    convention: &str,
) -> PyResult<(bool, bool, bool)> {
    let convention: OverlapConvention = parse(convention)?;
    let a = Assignment::from_rows(rows, AssignmentSource::Exact).map_err(to_py)?;
    if a.num_deliveries() != instance.inner.num_deliveries() {
        return Err(PyValueError::new_err("row length must equal the number of deliveries"));
    }
    let t = ddpp_core::feasibility(&instance.inner, &instance.inner.conflicts(convention), &a);
    Ok((t.battery, t.time, t.all_once))
}

#[pyfunction]
fn evaluate_h0(instance: &PyInstance, rows: Vec<Vec<bool>>) -> PyResult<f64> {
    let a = Assignment::from_rows(rows, AssignmentSource::Exact).map_err(to_py)?;
    if a.num_deliveries() != instance.inner.num_deliveries() {
        return Err(PyValueError::new_err("row length must equal the number of deliveries"));
    }
    Ok(ddpp_core::evaluate_h0(&instance.inner, &a))
}

/// Repeated annealing runs summarised as a dict.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (instance, formulation = 2, reads = 1000, sweeps = 1000, runs = 10, seed = 0, k = DEFAULT_K))]
fn benchmark<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    formulation: u8,
    reads: usize,
    sweeps: usize,
    runs: usize,
    seed: u64,
    k: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = SolverConfig {
        formulation: Formulation::from_number(formulation).map_err(to_py)?,
        k,
        reads,
        sweeps,
        runs,
        seed,
        ..SolverConfig::default()
    };
    let report = py
        .detach(|| ddpp_core::evaluation::benchmark_instance(&instance.inner, &config))
        .map_err(to_py)?;
    let text = serde_json::to_string(&report).map_err(|e| DdppError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pymodule]
fn ddpp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DdppError", m.py().get_type::<DdppError>())?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySample>()?;
    m.add_function(wrap_pyfunction!(build, m)?)?;
    m.add_function(wrap_pyfunction!(anneal, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(solve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_h0, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    Ok(())
}
