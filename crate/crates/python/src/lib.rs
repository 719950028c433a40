//! Python bindings: meshes, the flow, spectra and the bound checks.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use ricci_lab::bounds::{self, BarrierParams};
use ricci_lab::error::Error;
use ricci_lab::flow::{self, FlowConfig, FlowTrace};
use ricci_lab::geometry::{curvature_field, MetricState};
use ricci_lab::mesh::IntrinsicMesh;
use ricci_lab::spectrum;
use ricci_lab::{generate, io};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e @ (Error::DtUnderflow { .. } | Error::SolverNonConvergence { .. } | Error::NotConverged) => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// Closed intrinsic triangle mesh.
#[pyclass(name = "Mesh", frozen, module = "ricci_lab", skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: IntrinsicMesh,
}

#[pymethods]
impl PyMesh {
    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn face_count(&self) -> usize {
        self.inner.face_count()
    }

    #[getter]
    fn euler_characteristic(&self) -> i64 {
        self.inner.euler_characteristic()
    }

    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces().to_vec()
    }

    fn edges(&self) -> Vec<[usize; 2]> {
        self.inner.edges().to_vec()
    }

    fn lengths(&self) -> Vec<f64> {
        self.inner.lengths().to_vec()
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.scaled(factor).map_err(py_err)? })
    }

    /// Validation flags, Euler characteristic and worst triangle slack.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.validate();
        let d = PyDict::new(py);
        d.set_item("manifold_ok", r.manifold_ok)?;
        d.set_item("orientation_ok", r.orientation_ok)?;
        d.set_item("triangle_inequality_ok", r.triangle_inequality_ok)?;
        d.set_item("connected", r.connected)?;
        d.set_item("euler_characteristic", r.euler_characteristic)?;
        d.set_item("worst_triangle_slack", r.worst_triangle_slack)?;
        Ok(d)
    }

    /// OFF text with intrinsic edge records.
    fn to_off(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        io::write_off(&self.inner, &[], &mut buf).map_err(py_err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(V={}, E={}, F={}, chi={})",
            self.inner.vertex_count(),
            self.inner.edge_count(),
            self.inner.face_count(),
            self.inner.euler_characteristic()
        )
    }
}

/// Flow integration parameters.
#[pyclass(name = "FlowConfig", module = "ricci_lab", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyFlowConfig {
    dt_init: f64,
    dt_min: f64,
    safety_shrink: f64,
    convergence_tol: f64,
    max_steps: usize,
    snapshot_stride: usize,
    eigen_count: usize,
    stability_factor: f64,
    eigen_max_iter: usize,
}

impl From<FlowConfig> for PyFlowConfig {
    fn from(c: FlowConfig) -> Self {
        Self {
            dt_init: c.dt_init,
            dt_min: c.dt_min,
            safety_shrink: c.safety_shrink,
            convergence_tol: c.convergence_tol,
            max_steps: c.max_steps,
            snapshot_stride: c.snapshot_stride,
            eigen_count: c.eigen_count,
            stability_factor: c.stability_factor,
            eigen_max_iter: c.eigen_max_iter,
        }
    }
}

impl From<&PyFlowConfig> for FlowConfig {
    fn from(c: &PyFlowConfig) -> Self {
        Self {
            dt_init: c.dt_init,
            dt_min: c.dt_min,
            safety_shrink: c.safety_shrink,
            convergence_tol: c.convergence_tol,
            max_steps: c.max_steps,
            snapshot_stride: c.snapshot_stride,
            eigen_count: c.eigen_count,
            stability_factor: c.stability_factor,
            eigen_max_iter: c.eigen_max_iter,
        }
    }
}

#[pymethods]
impl PyFlowConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut config = Self::from(FlowConfig::default());
        if let Some(kwargs) = kwargs {
            let this = Py::new(kwargs.py(), config.clone())?;
            let bound = this.bind(kwargs.py());
            for (k, v) in kwargs.iter() {
                let name: String = k.extract()?;
                if !bound.hasattr(name.as_str())? {
                    return Err(PyValueError::new_err(format!("unknown flow config field {name:?}")));
                }
                bound.setattr(name.as_str(), v)?;
            }
            config = bound.borrow().clone();
        }
        Ok(config)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let c: FlowConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(c.into())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&FlowConfig::from(self)).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> PyResult<String> {
        Ok(format!("FlowConfig({})", self.to_json()?))
    }
}

/// Result of a flow run.
#[pyclass(name = "FlowTrace", frozen, module = "ricci_lab")]
struct PyTrace {
    inner: FlowTrace,
    mesh: IntrinsicMesh,
    eigen_count: usize,
    solver: spectrum::SolverOptions,
}

impl PyTrace {
    fn column(&self, f: impl Fn(&flow::FlowSnapshot) -> f64) -> Vec<f64> {
        self.inner.snapshots.iter().map(f).collect()
    }

    fn tracks(&self, overlap_floor: f64) -> Vec<spectrum::EigenTrack> {
        self.inner.tracks(self.eigen_count, overlap_floor)
    }
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn step_count(&self) -> usize {
        self.inner.step_count
    }

    #[getter]
    fn rejected_steps(&self) -> usize {
        self.inner.rejected_steps
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume
    }

    fn __len__(&self) -> usize {
        self.inner.snapshots.len()
    }

    fn times(&self) -> Vec<f64> {
        self.column(|s| s.t())
    }

    fn volumes(&self) -> Vec<f64> {
        self.column(|s| s.curvature.volume)
    }

    fn min_scalar(&self) -> Vec<f64> {
        self.column(|s| s.curvature.min_scalar())
    }

    fn max_scalar(&self) -> Vec<f64> {
        self.column(|s| s.curvature.max_scalar())
    }

    /// `lambda_1..lambda_k` per snapshot, sorted within each snapshot.
    fn eigenvalues(&self) -> Vec<Vec<f64>> {
        self.inner
            .snapshots
            .iter()
            .filter_map(|s| s.spectrum.as_ref())
            .map(|s| s.eigenvalues.iter().skip(1).take(self.eigen_count).copied().collect())
            .collect()
    }

    /// Eigenvalues followed through crossings: one list per index.
    #[pyo3(signature = (overlap_floor = spectrum::DEFAULT_OVERLAP_FLOOR))]
    fn tracked_eigenvalues(&self, overlap_floor: f64) -> Vec<Vec<f64>> {
        self.tracks(overlap_floor).iter().map(|t| t.samples.iter().map(|s| s.lambda).collect()).collect()
    }

    fn final_u(&self) -> Vec<f64> {
        self.inner.last().state.u.clone()
    }

    /// Theorem report as nested dicts; raises if the run did not converge.
    #[pyo3(signature = (sigma = None, overlap_floor = spectrum::DEFAULT_OVERLAP_FLOOR))]
    fn verify<'py>(&self, py: Python<'py>, sigma: Option<f64>, overlap_floor: f64) -> PyResult<Bound<'py, PyAny>> {
        let report = bounds::check_theorems(&self.inner, &self.tracks(overlap_floor), sigma).map_err(py_err)?;
        to_py(py, &report)
    }

    /// Quadrature versus finite-difference eigenvalue slopes at interior snapshots.
    #[pyo3(signature = (overlap_floor = spectrum::DEFAULT_OVERLAP_FLOOR))]
    fn check_derivative<'py>(&self, py: Python<'py>, overlap_floor: f64) -> PyResult<Bound<'py, PyAny>> {
        let tracks = self.tracks(overlap_floor);
        let report = py
            .detach(|| bounds::check_derivative_formula(&self.mesh, &self.inner, &tracks, &self.solver))
            .map_err(py_err)?;
        to_py(py, &report)
    }
}

#[pyfunction]
#[pyo3(signature = (rounds, perturbation = 0.0, seed = 0, genus = 2))]
fn generate_surface(rounds: usize, perturbation: f64, seed: u64, genus: usize) -> PyResult<PyMesh> {
    Ok(PyMesh { inner: generate::generate_surface(genus, rounds, perturbation, seed).map_err(py_err)? })
}

#[pyfunction]
fn load_mesh(path: std::path::PathBuf) -> PyResult<PyMesh> {
    Ok(PyMesh { inner: io::load_mesh_file(&path).map_err(py_err)? })
}

#[pyfunction]
fn read_off(text: &str) -> PyResult<PyMesh> {
    Ok(PyMesh { inner: io::read_off(text).map_err(py_err)? })
}

#[pyfunction]
fn read_obj(text: &str) -> PyResult<PyMesh> {
    Ok(PyMesh { inner: io::read_obj(text).map_err(py_err)? })
}

fn state_of(mesh: &IntrinsicMesh, u: Option<Vec<f64>>) -> PyResult<MetricState> {
    match u {
        None => Ok(MetricState::initial(mesh)),
        Some(u) if u.len() == mesh.vertex_count() => Ok(MetricState { u, t: 0.0 }),
        Some(u) => Err(PyValueError::new_err(format!("expected {} conformal factors, got {}", mesh.vertex_count(), u.len()))),
    }
}

/// Deficits, areas, Gauss and scalar curvature, volume and `r` under factors `u`.
#[pyfunction]
#[pyo3(signature = (mesh, u = None))]
fn curvature<'py>(py: Python<'py>, mesh: &PyMesh, u: Option<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let state = state_of(&mesh.inner, u)?;
    to_py(py, &curvature_field(&mesh.inner, &state).map_err(py_err)?)
}

/// `k + 1` smallest eigenvalues (kernel first) and mass-orthonormal eigenvectors.
#[pyfunction]
#[pyo3(signature = (mesh, k, u = None))]
fn eigenpairs(py: Python<'_>, mesh: &PyMesh, k: usize, u: Option<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let state = state_of(&mesh.inner, u)?;
    let slice = py
        .detach(|| spectrum::assemble_operators(&mesh.inner, &state).and_then(|ops| spectrum::smallest_eigenpairs(&ops, k)))
        .map_err(py_err)?;
    Ok((slice.eigenvalues, slice.eigenvectors))
}

#[pyfunction]
#[pyo3(signature = (mesh, config = None))]
fn run_flow(py: Python<'_>, mesh: &PyMesh, config: Option<PyFlowConfig>) -> PyResult<PyTrace> {
    let config = config.map(|c| FlowConfig::from(&c)).unwrap_or_default();
    let inner = py.detach(|| flow::run_flow(&mesh.inner, &config)).map_err(py_err)?;
    Ok(PyTrace { inner, mesh: mesh.inner.clone(), eigen_count: config.eigen_count, solver: config.solver_options() })
}

#[pyfunction]
fn barrier_s(t: f64, r: f64, sigma: f64) -> PyResult<f64> {
    Ok(bounds::barrier_s(t, &BarrierParams::new(r, sigma, 1.0).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (t, r, sigma, steps = 10000))]
fn barrier_s_oracle(t: f64, r: f64, sigma: f64, steps: usize) -> PyResult<f64> {
    bounds::barrier_s_oracle(t, &BarrierParams::new(r, sigma, 1.0).map_err(py_err)?, steps).map_err(py_err)
}

#[pyfunction]
fn lower_bound_b(t: f64, r: f64, sigma: f64, lambda0: f64) -> PyResult<f64> {
    Ok(bounds::lower_bound_b(t, &BarrierParams::new(r, sigma, lambda0).map_err(py_err)?))
}

#[pymodule]
#[pyo3(name = "ricci_lab")]
fn ricci_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyFlowConfig>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(generate_surface, m)?)?;
    m.add_function(wrap_pyfunction!(load_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(read_off, m)?)?;
    m.add_function(wrap_pyfunction!(read_obj, m)?)?;
    m.add_function(wrap_pyfunction!(curvature, m)?)?;
    m.add_function(wrap_pyfunction!(eigenpairs, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_s, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_s_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_b, m)?)?;
    Ok(())
}
