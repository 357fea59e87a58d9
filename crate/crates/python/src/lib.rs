//! Python bindings: meshes, adaptive runs, Dörfler marking and the
//! parameter-admissibility helper.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use pyo3::IntoPyObjectExt;

use ailfem_core::adaptive::{self, IterateRecord, RunLedger};
use ailfem_core::cli::{weighted_cost, RunConfig};
use ailfem_core::estimator::Indicators;
use ailfem_core::problems::{initial_mesh, PROBLEM_NAMES};
use ailfem_core::report::{self, summary_json};
use ailfem_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_bound_py_any(py)
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_bound_py_any(py)
        }
    }
}

/// Conforming triangulation refined by newest-vertex bisection.
#[pyclass(name = "Mesh", module = "ailfem", frozen, from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: Arc<ailfem_core::mesh::Mesh>,
}

#[pymethods]
impl PyMesh {
    /// `vertices`: list of `(x, y)`; `triangles`: counter-clockwise vertex
    /// triples whose longest edge becomes the refinement edge.
    #[new]
    fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> PyResult<Self> {
        let m = ailfem_core::mesh::Mesh::new(vertices, triangles).map_err(py_err)?;
        Ok(PyMesh { inner: Arc::new(m) })
    }

    /// `"unit-square"` or `"l-shape"`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(PyMesh { inner: Arc::new(ailfem_core::mesh::Mesh::builtin(name).map_err(py_err)?) })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyMesh { inner: Arc::new(ailfem_core::mesh::Mesh::from_text(text).map_err(py_err)?) })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Bisects the marked triangles and closes hanging nodes.
    fn refine(&self, marked: Vec<usize>) -> PyResult<Self> {
        Ok(PyMesh { inner: Arc::new(self.inner.refine(&marked).map_err(py_err)?) })
    }

    fn uniform_refine(&self, n: usize) -> PyResult<Self> {
        Ok(PyMesh { inner: Arc::new(self.inner.uniform_refine(n).map_err(py_err)?) })
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.inner.n_triangles()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 2]> {
        self.inner.vertices().to_vec()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles().to_vec()
    }

    /// Index of the coarse triangle each triangle was bisected from.
    #[getter]
    fn parent(&self) -> Vec<usize> {
        self.inner.parent().to_vec()
    }

    fn area(&self) -> f64 {
        self.inner.total_area()
    }

    /// Smallest interior angle in radians.
    fn min_angle(&self) -> f64 {
        self.inner.min_angle()
    }

    fn check_conformity(&self) -> PyResult<()> {
        self.inner.check_conformity().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Mesh(n_vertices={}, n_triangles={})", self.inner.n_vertices(), self.inner.n_triangles())
    }
}

/// Outcome of an adaptive run.
#[pyclass(name = "RunResult", module = "ailfem", frozen)]
struct PyRunResult {
    ledger: RunLedger,
}

fn record_dict<'py>(py: Python<'py>, r: &IterateRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("level", r.level)?;
    d.set_item("k", r.k)?;
    d.set_item("i", r.i)?;
    d.set_item("is_final_i", r.is_final_i)?;
    d.set_item("is_final_k", r.is_final_k)?;
    d.set_item("dofs", r.dofs)?;
    d.set_item("n_triangles", r.n_triangles)?;
    d.set_item("eta", r.eta)?;
    d.set_item("energy", r.energy)?;
    d.set_item("norm", r.norm)?;
    d.set_item("norm_update", r.norm_update)?;
    d.set_item("distance_from_start", r.distance_from_start)?;
    d.set_item("start_energy", r.start_energy)?;
    d.set_item("cost", r.cost)?;
    d.set_item("seconds", r.seconds)?;
    d.set_item("exact_error", r.exact_error)?;
    Ok(d)
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn termination(&self) -> String {
        self.ledger.termination.label()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.ledger.termination == adaptive::TerminationReason::Converged
    }

    /// One dict per computed iterate `(ℓ, k, i)`.
    #[getter]
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let items = self.ledger.records.iter().map(|r| record_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
        PyList::new(py, items)
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &summary_json(&self.ledger))
    }

    #[getter]
    fn final_eta(&self) -> Option<f64> {
        self.ledger.final_record().map(|r| r.eta)
    }

    /// `η · cost^{p/2}` at termination; `None` unless converged.
    #[getter]
    fn weighted_cost(&self) -> Option<f64> {
        weighted_cost(&self.ledger)
    }

    /// Final mesh of the run.
    #[getter]
    fn mesh(&self) -> PyMesh {
        PyMesh { inner: self.ledger.final_solution.space().mesh().clone() }
    }

    /// Coefficients of the final iterate, one per DOF.
    #[getter]
    fn solution(&self) -> Vec<f64> {
        self.ledger.final_solution.coefficients().to_vec()
    }

    /// Coordinates of the DOFs of the final iterate.
    #[getter]
    fn dof_coords(&self) -> Vec<[f64; 2]> {
        self.ledger.final_solution.space().dof_coords().to_vec()
    }

    /// Writes the ledger in the CSV format of the command-line tool.
    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| py_err(e.into()))?;
        report::write_ledger_csv(f, &self.ledger.records).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("RunResult(termination={:?}, records={})", self.ledger.termination.label(), self.ledger.records.len())
    }
}

/// Runs the adaptive algorithm on a registered problem. Keyword options use
/// the keys of the configuration file (`p`, `theta`, `lambda_lin`, `tol`,
/// `max_levels`, `solver`, `custom.eps`, ...). `mesh` replaces the
/// problem's initial mesh.
#[pyfunction]
#[pyo3(signature = (problem, mesh = None, **options))]
fn run(py: Python<'_>, problem: &str, mesh: Option<PyMesh>, options: Option<&Bound<'_, PyDict>>) -> PyResult<PyRunResult> {
    let mut cfg = RunConfig::for_problem(problem);
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            let value = if v.is_instance_of::<PyBool>() {
                v.extract::<bool>()?.to_string()
            } else {
                v.str()?.to_string()
            };
            cfg.set(&key, &value).map_err(py_err)?;
        }
    }
    cfg.params.validate().map_err(py_err)?;
    let prob = cfg.problem_spec().map_err(py_err)?;
    let initial = match mesh {
        Some(m) => (*m.inner).clone(),
        None => initial_mesh(&prob).map_err(py_err)?,
    };
    let params = cfg.params;
    let ledger = py.detach(move || adaptive::run_adaptive(&prob, &params, initial)).map_err(py_err)?;
    Ok(PyRunResult { ledger })
}

/// Indices of a minimal-cardinality set `M` with `θ Σ values ≤ Σ_M values`;
/// `values` are the squared indicators.
#[pyfunction]
fn dorfler_mark(values: Vec<f64>, theta: f64) -> PyResult<Vec<usize>> {
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(PyValueError::new_err("indicators must be finite and nonnegative"));
    }
    Ok(adaptive::dorfler_mark(&Indicators::from_squared(values), theta))
}

/// Sufficient parameter condition: returns a dict with `theta_mark`,
/// `theta_star`, `i_min` and `ok`.
#[pyfunction]
fn admissible_params<'py>(
    py: Python<'py>,
    theta: f64,
    ratio: f64,
    q_alg: f64,
    c_stab: f64,
    c_rel: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let a = adaptive::admissible_params(theta, ratio, q_alg, c_stab, c_rel).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("theta_mark", a.theta_mark)?;
    d.set_item("theta_star", a.theta_star)?;
    d.set_item("i_min", a.i_min)?;
    d.set_item("ok", a.ok)?;
    Ok(d)
}

/// Least-squares slope of `log y` against `log x` over the last decade of `x`.
#[pyfunction]
fn fit_rate(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(PyValueError::new_err("xs and ys differ in length"));
    }
    Ok(report::fit_rate(&xs, &ys))
}

#[pymodule]
#[pyo3(name = "ailfem")]
fn ailfem_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(dorfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_params, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add("PROBLEMS", PROBLEM_NAMES.to_vec())?;
    Ok(())
}
