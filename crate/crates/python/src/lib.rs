//! Python bindings: grids, data, evolution, diagnostics series, fits and the
//! run/check harness. Fields cross the boundary as nested lists indexed
//! `[component][x2][x1]`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kgz_core::energy::{energy, ghost_energy, TimeSeries};
use kgz_core::fit::{fit_envelope_seeded, DEFAULT_FIT_SEED};
use kgz_core::grid::{Field, Grid};
use kgz_core::harness::{self, checks, light_cone_series, sup_series, RunConfig, SHELL_BAND};
use kgz_core::kgz::{
    evolve_direct_n, evolve_with, DataProfile, EvolveOptions, FieldSelector, InitialData, ProfileKind, Trajectory,
};
use kgz_core::scattering::{build_scatter_data_at, default_t_max};
use kgz_core::KgzError;

fn py_err(e: KgzError) -> PyErr {
    match e {
        KgzError::Config(_) | KgzError::InvalidArgument(_) | KgzError::InvalidGrid(_) | KgzError::Fit(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn selector(name: &str) -> PyResult<FieldSelector> {
    match name {
        "E" => Ok(FieldSelector::E),
        "n" => Ok(FieldSelector::N),
        "n_delta" => Ok(FieldSelector::NDelta),
        _ => Err(PyValueError::new_err(format!("field must be E, n or n_delta, got {name}"))),
    }
}

fn to_lists(f: &Field) -> Vec<Vec<Vec<f64>>> {
    (0..f.components())
        .map(|c| f.component(c).outer_iter().map(|row| row.to_vec()).collect())
        .collect()
}

fn pair(s: &TimeSeries) -> (Vec<f64>, Vec<f64>) {
    (s.times.clone(), s.values.clone())
}

/// Periodic square grid on `[-L, L)^2`.
#[pyclass(name = "Grid", frozen)]
struct PyGrid(Arc<Grid>);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(points_per_axis: usize, half_width: f64) -> PyResult<Self> {
        Grid::new(points_per_axis, half_width).map(PyGrid).map_err(py_err)
    }

    #[getter]
    fn points_per_axis(&self) -> usize {
        self.0.points_per_axis()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.0.half_width()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn coords(&self) -> Vec<f64> {
        self.0.coords().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Grid({}, {})", self.0.points_per_axis(), self.0.half_width())
    }
}

/// Initial data `(E0, E1, n0, n1)` with `n = Laplacian n_delta`.
#[pyclass(name = "InitialData", frozen)]
struct PyData(InitialData);

#[pymethods]
impl PyData {
    /// Gaussian (or ring, when `ring_radius` is given) profile of the given amplitude.
    #[staticmethod]
    #[pyo3(signature = (grid, amplitude, width = 1.0, center = (0.0, 0.0), ring_radius = None))]
    fn profile(grid: &PyGrid, amplitude: f64, width: f64, center: (f64, f64), ring_radius: Option<f64>) -> PyResult<Self> {
        let kind = match ring_radius {
            Some(radius) => ProfileKind::Ring { radius },
            None => ProfileKind::Gaussian,
        };
        let p = DataProfile { kind, amplitude, width, center };
        InitialData::from_profile(&grid.0, &p).map(PyData).map_err(py_err)
    }

    fn support_radius(&self) -> f64 {
        self.0.support_radius()
    }
}

/// Snapshots of one evolution.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory(Trajectory);

#[pymethods]
impl PyTrajectory {
    fn times(&self) -> Vec<f64> {
        self.0.times()
    }

    fn __len__(&self) -> usize {
        self.0.states.len()
    }

    /// `u` of the chosen field at snapshot `i` as `[component][x2][x1]`.
    #[pyo3(signature = (i, field = "E"))]
    fn field(&self, i: usize, field: &str) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let sel = selector(field)?;
        if i >= self.0.states.len() {
            return Err(PyValueError::new_err(format!("snapshot {i} out of range")));
        }
        Ok(to_lists(&self.0.pair(sel, i).u))
    }

    #[pyo3(signature = (field = "E"))]
    fn sup_norm(&self, field: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        Ok(pair(&sup_series(&self.0, selector(field)?)))
    }

    /// `sup |n|` over the light-cone shell `|r - t| <= 2`.
    fn shell_sup_n(&self) -> (Vec<f64>, Vec<f64>) {
        pair(&light_cone_series(&self.0, FieldSelector::N, SHELL_BAND))
    }

    /// Natural energies `E_1(E)` and `E_0(n)` at every snapshot.
    fn energies(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let e = self.0.states.iter().map(|s| energy(&s.e, 1)).collect::<Result<_, _>>().map_err(py_err)?;
        let n = self.0.states.iter().map(|s| energy(&s.n, 0)).collect::<Result<_, _>>().map_err(py_err)?;
        Ok((e, n))
    }

    #[pyo3(signature = (field = "E", delta = 0.1))]
    fn ghost_energy(&self, field: &str, delta: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let sel = selector(field)?;
        ghost_energy(&self.0, sel, sel.mass(), delta).map(|s| pair(&s)).map_err(py_err)
    }

    /// `(T_max, tail)` of the scattering data built from this run (needs
    /// `track_duhamel` or midpoints). `t_max` defaults to `0.8 (L - R)`
    /// clipped to the run.
    #[pyo3(signature = (s = 1.0, t_max = None))]
    fn scatter_data(&self, s: f64, t_max: Option<f64>) -> PyResult<(f64, f64)> {
        let t = t_max.unwrap_or_else(|| default_t_max(&self.0).min(self.0.horizon()));
        build_scatter_data_at(&self.0, s, t).map(|p| (p.t_max, p.tail)).map_err(py_err)
    }
}

/// Divergence-form evolution of the coupled system.
#[pyfunction]
#[pyo3(signature = (data, horizon, dt, snap_every = 1, track_duhamel = false))]
fn evolve(data: &PyData, horizon: f64, dt: f64, snap_every: usize, track_duhamel: bool) -> PyResult<PyTrajectory> {
    let opts = EvolveOptions { snap_every, track_duhamel, ..EvolveOptions::default() };
    evolve_with(&data.0, horizon, dt, &opts).map(PyTrajectory).map_err(py_err)
}

/// Evolution with the wave equation for `n` stepped directly.
#[pyfunction]
fn evolve_direct(data: &PyData, horizon: f64, dt: f64) -> PyResult<PyTrajectory> {
    evolve_direct_n(&data.0, horizon, dt).map(PyTrajectory).map_err(py_err)
}

/// Log-log envelope fit on `[t1, t2]`: `(exponent, (lo, hi), rms)`.
#[pyfunction]
#[pyo3(signature = (times, values, t1, t2, seed = DEFAULT_FIT_SEED))]
fn fit_envelope(times: Vec<f64>, values: Vec<f64>, t1: f64, t2: f64, seed: u64) -> PyResult<(f64, (f64, f64), f64)> {
    if times.len() != values.len() {
        return Err(PyValueError::new_err("times and values differ in length"));
    }
    let f = fit_envelope_seeded(&TimeSeries::new(times, values), t1, t2, seed).map_err(py_err)?;
    Ok((f.exponent, f.interval, f.residual))
}

/// Runs a config given as text; writes the bundle to `out` when given.
/// Returns `(passed, summary)`.
#[pyfunction]
#[pyo3(signature = (config_text, out = None))]
fn run(py: Python<'_>, config_text: &str, out: Option<PathBuf>) -> PyResult<(bool, String)> {
    let cfg = RunConfig::parse(config_text).map_err(py_err)?;
    let result = py.detach(|| harness::run(&cfg)).map_err(py_err)?;
    if let Some(dir) = out {
        result.write(&dir).map_err(py_err)?;
    }
    Ok((result.passed(), result.summary()))
}

/// Built-in invariant suite: `[(name, value, bound, passed)]`.
#[pyfunction]
#[pyo3(signature = (seed = 0, threads = 1))]
fn check(py: Python<'_>, seed: u64, threads: usize) -> PyResult<Vec<(String, f64, String, bool)>> {
    let entries = py.detach(|| checks::check_suite(seed, threads)).map_err(py_err)?;
    Ok(entries.into_iter().map(|e| (e.name, e.value, e.bound, e.pass)).collect())
}

#[pymodule]
fn kgz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyData>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_direct, m)?)?;
    m.add_function(wrap_pyfunction!(fit_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
