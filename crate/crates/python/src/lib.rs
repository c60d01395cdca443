use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::nhstokes::error::Error;
use ::nhstokes::galerkin::DomainKind;
use ::nhstokes::kernels::{self, Mat3, Vec3};
use ::nhstokes::mesh::{load_mesh, make_icosphere, save_mesh, MeshFormat, SurfaceMesh};
use ::nhstokes::verify::{
    appendix_check_2d, appendix_check_3d, run_gradient_test, run_homogeneous_test, run_nonhomogeneous_test,
    AppendixSettings, DriverSettings, ErrorTable, GradientProblem, GridSpec,
};

type Row = (String, String, f64, Option<f64>, Option<f64>);

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rows(table: ErrorTable) -> Vec<Row> {
    table
        .rows
        .into_iter()
        .map(|r| (r.field, r.component, r.error, r.reference, r.ratio))
        .collect()
}

fn matrix(m: Mat3) -> Vec<Vec<f64>> {
    (0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect()).collect()
}

fn format_of(path: &Path) -> PyResult<MeshFormat> {
    MeshFormat::from_path(path).ok_or_else(|| PyValueError::new_err("mesh files must end in .off or .obj"))
}

/// Closed triangulated surface.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    inner: SurfaceMesh,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    #[pyo3(signature = (subdivisions, radius = 1.0))]
    fn icosphere(subdivisions: u32, radius: f64) -> PyResult<Self> {
        make_icosphere(subdivisions, radius)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let format = format_of(&path)?;
        load_mesh(&path, format)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let format = format_of(&path)?;
        save_mesh(&self.inner, &path, format).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn element_count(&self) -> usize {
        self.inner.element_count()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices().iter().map(|v| [v[0], v[1], v[2]]).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles().to_vec()
    }

    fn total_area(&self) -> f64 {
        self.inner.total_area()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(nodes={}, elements={})", self.inner.node_count(), self.inner.element_count())
    }
}

/// Stokeslet U(Q, P) as a 3×3 nested list.
#[pyfunction]
#[pyo3(signature = (q, p, mu = 1.0))]
fn stokeslet(q: [f64; 3], p: [f64; 3], mu: f64) -> PyResult<Vec<Vec<f64>>> {
    kernels::stokeslet(&Vec3::from(q), &Vec3::from(p), mu)
        .map(matrix)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// H(Q, P) with μ∇²H = U.
#[pyfunction]
#[pyo3(signature = (q, p, mu = 1.0))]
fn hfun(q: [f64; 3], p: [f64; 3], mu: f64) -> PyResult<Vec<Vec<f64>>> {
    kernels::hfun(&Vec3::from(q), &Vec3::from(p), mu)
        .map(matrix)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs the 3D and 2D identity checks; returns `(name, residual, tolerance, passed)` rows.
#[pyfunction]
#[pyo3(signature = (samples = 100, seed = 2024))]
fn verify(py: Python<'_>, samples: usize, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let settings = AppendixSettings {
        samples,
        seed,
        ..AppendixSettings::default()
    };
    let report = py
        .detach(|| {
            let mut r = appendix_check_3d(&settings)?;
            r.merge("2d", appendix_check_2d(&settings)?);
            Ok::<_, Error>(r)
        })
        .map_err(to_py)?;
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.name, c.residual, c.tolerance, c.passed))
        .collect())
}

/// Homogeneous point-force test; rows are `(field, component, error, reference, ratio)`.
#[pyfunction]
#[pyo3(signature = (mesh, source, case = "interior", mu = 1.0))]
fn homogeneous_test(py: Python<'_>, mesh: &PyMesh, source: [f64; 3], case: &str, mu: f64) -> PyResult<Vec<Row>> {
    let domain: DomainKind = case.parse().map_err(PyValueError::new_err)?;
    let m = mesh.inner.clone();
    py.detach(|| run_homogeneous_test(&m, &Vec3::from(source), domain, mu, &DriverSettings::default()))
        .map(rows)
        .map_err(to_py)
}

/// Nonhomogeneous test with a `grid`³ volume grid on `[−box, box]³`.
#[pyfunction]
#[pyo3(signature = (mesh, source, grid = 40, half_width = 1.1, mu = 1.0))]
fn nonhomogeneous_test(
    py: Python<'_>,
    mesh: &PyMesh,
    source: [f64; 3],
    grid: usize,
    half_width: f64,
    mu: f64,
) -> PyResult<Vec<Row>> {
    let m = mesh.inner.clone();
    let spec = GridSpec {
        half_width,
        cells: grid,
    };
    py.detach(|| run_nonhomogeneous_test(&m, &spec, &Vec3::from(source), mu, &DriverSettings::default()))
        .map(rows)
        .map_err(to_py)
}

/// Gradient test for problem "a", "b" or "c"; rows are `(field, component, ...)`
/// with field `grad_u{k}` and component the derivative direction.
#[pyfunction]
#[pyo3(signature = (problem, mesh, mu = 1.0))]
fn gradient_test(py: Python<'_>, problem: &str, mesh: &PyMesh, mu: f64) -> PyResult<(Vec<Row>, f64)> {
    let problem: GradientProblem = problem.parse().map_err(PyValueError::new_err)?;
    let m = mesh.inner.clone();
    let report = py
        .detach(|| run_gradient_test(problem, &m, mu, &GridSpec::default(), &DriverSettings::default()))
        .map_err(to_py)?;
    Ok((rows(report.table), report.divergence))
}

#[pymodule]
#[pyo3(name = "nhstokes")]
fn nhstokes_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(stokeslet, m)?)?;
    m.add_function(wrap_pyfunction!(hfun, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneous_test, m)?)?;
    m.add_function(wrap_pyfunction!(nonhomogeneous_test, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_test, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
