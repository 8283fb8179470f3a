//! Python bindings: meshes, SDF volumes, reconstruction, morphometry and metrics.
//!
//! Points and triangles cross the boundary as plain lists; volumes carry
//! their values in x-fastest order together with dims, spacing and origin.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cortexforge::mesh::{self, io, shapes, RefineParams};
use cortexforge::metrics::{self, DistanceMode};
use cortexforge::synth::Phantom;
use cortexforge::{cli, morpho, sdf, Error, Geometry, VoxelGrid};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Topology(_) | Error::Geometry(_) | Error::EmptySurface | Error::CorrectionFailed { .. } | Error::Undefined(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn distance_mode(name: &str) -> PyResult<DistanceMode> {
    match name {
        "point-to-surface" => Ok(DistanceMode::PointToSurface),
        "vertex-to-vertex" => Ok(DistanceMode::VertexToVertex),
        _ => Err(PyValueError::new_err(format!("unknown distance mode {name:?}"))),
    }
}

/// Closed triangle mesh in millimetres.
#[pyclass(name = "Mesh", module = "cortexforge")]
struct Mesh {
    inner: mesh::TriangleMesh,
}

#[pymethods]
impl Mesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> PyResult<Self> {
        let vertices = vertices.into_iter().map(|v| v.into()).collect();
        mesh::TriangleMesh::new(vertices, triangles).map(|inner| Mesh { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn read_off(path: &str) -> PyResult<Self> {
        io::read_off(path).map(|inner| Mesh { inner }).map_err(to_py)
    }

    fn write_off(&self, path: &str) -> PyResult<()> {
        io::write_off(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.vertex_count()
    }

    fn area(&self) -> f64 {
        morpho::surface_area(&self.inner)
    }

    fn volume(&self) -> PyResult<f64> {
        morpho::enclosed_volume(&self.inner).map_err(to_py)
    }

    /// Euler characteristic, genus, component and self-intersection counts.
    fn topology<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = mesh::topology_report(&self.inner);
        let d = PyDict::new(py);
        d.set_item("vertices", t.vertices)?;
        d.set_item("edges", t.edges)?;
        d.set_item("faces", t.faces)?;
        d.set_item("euler", t.euler)?;
        d.set_item("genus", t.genus)?;
        d.set_item("components", t.components)?;
        d.set_item("self_intersections", t.self_intersections)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Mesh({} vertices, {} triangles)", self.inner.vertex_count(), self.inner.triangle_count())
    }
}

/// Clipped signed distance volume, negative inside.
#[pyclass(name = "Sdf", module = "cortexforge")]
struct Sdf {
    inner: sdf::SdfVolume,
}

#[pymethods]
impl Sdf {
    #[new]
    #[pyo3(signature = (values, dims, spacing = [1.0; 3], origin = [0.0; 3], clip_mm = sdf::DEFAULT_CLIP_MM))]
    fn new(values: Vec<f32>, dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], clip_mm: f64) -> PyResult<Self> {
        let g = Geometry::axis_aligned(dims, spacing, origin).map_err(to_py)?;
        let grid = VoxelGrid::new(g, values).map_err(to_py)?;
        sdf::SdfVolume::from_grid(grid, clip_mm).map(|inner| Sdf { inner }).map_err(to_py)
    }

    /// Samples the distance to `mesh` on an axis-aligned lattice.
    #[staticmethod]
    #[pyo3(signature = (mesh, dims, spacing = [1.0; 3], origin = [0.0; 3], clip_mm = sdf::DEFAULT_CLIP_MM))]
    fn from_mesh(py: Python<'_>, mesh: &Mesh, dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], clip_mm: f64) -> PyResult<Self> {
        let g = Geometry::axis_aligned(dims, spacing, origin).map_err(to_py)?;
        let m = &mesh.inner;
        py.detach(|| sdf::mesh_to_sdf(m, &g, clip_mm)).map(|inner| Sdf { inner }).map_err(to_py)
    }

    #[getter]
    fn values(&self) -> Vec<f32> {
        self.inner.grid().data().to_vec()
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.geometry().dims()
    }

    #[getter]
    fn clip_mm(&self) -> f64 {
        self.inner.clip_mm()
    }

    #[pyo3(signature = (iso = 0.0))]
    fn marching_cubes(&self, iso: f64) -> PyResult<Mesh> {
        mesh::marching_cubes(&self.inner, iso).map(|inner| Mesh { inner }).map_err(to_py)
    }

    /// Topology-corrected copy and the number of handles removed.
    fn topology_correct(&self) -> PyResult<(Sdf, i64)> {
        let (inner, report) = mesh::topology_correct_report(&self.inner).map_err(to_py)?;
        Ok((Sdf { inner }, report.handles_removed))
    }
}

#[pyfunction]
fn icosphere(radius: f64, level: u32) -> Mesh {
    Mesh { inner: shapes::icosphere(radius, level) }
}

#[pyfunction]
fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> Mesh {
    Mesh { inner: shapes::torus(major, minor, segments, sides) }
}

/// White and pial surfaces of the default phantom.
#[pyfunction]
#[pyo3(signature = (level = 5))]
fn phantom_surfaces(level: u32) -> (Mesh, Mesh) {
    let p = Phantom::default();
    (Mesh { inner: p.white_mesh(level) }, Mesh { inner: p.pial_mesh(level) })
}

/// Topology correction, iso-surface extraction, refinement and pial expansion.
#[pyfunction]
fn reconstruct(py: Python<'_>, white_sdf: &Sdf, pial_sdf: &Sdf) -> PyResult<(Mesh, Mesh)> {
    let (w, p) = (&white_sdf.inner, &pial_sdf.inner);
    let r = py.detach(|| cli::reconstruct(w, p, &RefineParams::default())).map_err(to_py)?;
    Ok((Mesh { inner: r.white }, Mesh { inner: r.pial }))
}

#[pyfunction]
fn cortical_thickness(white: &Mesh, pial: &Mesh) -> PyResult<Vec<f64>> {
    morpho::cortical_thickness(&white.inner, &pial.inner).map_err(to_py)
}

#[pyfunction]
fn gray_matter_volume(white: &Mesh, pial: &Mesh) -> PyResult<f64> {
    morpho::gray_matter_volume(&white.inner, &pial.inner).map_err(to_py)
}

/// `asd_mm`, `hd90_mm` and `hd100_mm` between two surfaces.
#[pyfunction]
#[pyo3(signature = (a, b, mode = "point-to-surface"))]
fn surface_distances(a: &Mesh, b: &Mesh, mode: &str) -> PyResult<BTreeMap<&'static str, f64>> {
    let d = metrics::surface_distances(&a.inner, &b.inner, distance_mode(mode)?).map_err(to_py)?;
    Ok(BTreeMap::from([("asd_mm", d.asd_mm), ("hd90_mm", d.hd90_mm), ("hd100_mm", d.hd100_mm)]))
}

#[pyfunction]
fn dice(a: Vec<i32>, b: Vec<i32>) -> PyResult<BTreeMap<i32, f64>> {
    metrics::dice_all(&a, &b).map_err(to_py)
}

/// Pearson r, its 95% confidence interval and significance.
#[pyfunction]
fn pearson<'py>(py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let p = metrics::pearson(&x, &y).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("r", p.r)?;
    d.set_item("ci95", p.ci95)?;
    d.set_item("significant", p.significant)?;
    Ok(d)
}

#[pyfunction]
fn fisher_ci(r: f64, n: usize) -> Option<(f64, f64)> {
    metrics::fisher_ci(r, n)
}

/// Runs the command-line tool in-process and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("cortexforge".to_string()).chain(args).collect();
    py.detach(|| cli::run(argv))
}

#[pymodule]
#[pyo3(name = "cortexforge")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Mesh>()?;
    m.add_class::<Sdf>()?;
    m.add_function(wrap_pyfunction!(icosphere, m)?)?;
    m.add_function(wrap_pyfunction!(torus, m)?)?;
    m.add_function(wrap_pyfunction!(phantom_surfaces, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(cortical_thickness, m)?)?;
    m.add_function(wrap_pyfunction!(gray_matter_volume, m)?)?;
    m.add_function(wrap_pyfunction!(surface_distances, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_ci, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
