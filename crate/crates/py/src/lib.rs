//! Python module `cfl_py`: the nonlinearity, the planar profile, front
//! geometry, the smoothed surface, barrier validation, the Cauchy solver
//! and CFLB1 snapshots. Reports cross the boundary as plain dicts.

use cfl_core::barriers::{auto_schedule, BarrierKind, SampleSpec, ScheduleOptions};
use cfl_core::geometry::FrontSpec;
use cfl_core::solver::{solve_cauchy, Boundary, BoundaryPolicy, Stepper};
use cfl_core::{
    snapshot, BarrierParams, Barriers as CoreBarriers, CombustionNonlinearity, Field, FrontConfiguration, Grid,
    ScaledSurface, Scheme, SolverConfig, WaveProfile,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializes `value` and hands it to `json.loads`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

#[pyclass(name = "Nonlinearity", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNonlinearity(CombustionNonlinearity);

#[pymethods]
impl PyNonlinearity {
    #[new]
    #[pyo3(signature = (theta, amplitude = 1.0, exponent = 2.0, sigma = 0.1))]
    fn new(theta: f64, amplitude: f64, exponent: f64, sigma: f64) -> PyResult<Self> {
        CombustionNonlinearity::new(theta, amplitude, exponent, sigma).map(Self).map_err(err)
    }
    fn f(&self, u: f64) -> f64 {
        self.0.f(u)
    }
    fn fprime(&self, u: f64) -> f64 {
        self.0.fprime(u)
    }
    #[getter]
    fn gamma_star(&self) -> f64 {
        self.0.gamma_star()
    }
    #[getter]
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz()
    }
    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.0.scaled(factor).map(Self).map_err(err)
    }
    fn __repr__(&self) -> String {
        let p = self.0.params();
        format!("Nonlinearity(theta={}, amplitude={}, exponent={}, sigma={})", p.theta, p.amplitude, p.exponent, p.sigma)
    }
}

#[pyclass(name = "Profile", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProfile(WaveProfile);

#[pymethods]
impl PyProfile {
    /// Shoots for the speed and tabulates the profile.
    #[new]
    fn new(nl: &PyNonlinearity) -> PyResult<Self> {
        WaveProfile::compute(&nl.0).map(Self).map_err(err)
    }
    #[getter]
    fn speed(&self) -> f64 {
        self.0.speed()
    }
    #[getter]
    fn beta0(&self) -> f64 {
        self.0.beta0()
    }
    fn eval(&self, d: f64) -> f64 {
        self.0.eval(d)
    }
    fn inverse(&self, u: f64) -> PyResult<f64> {
        self.0.inverse(u).map_err(err)
    }
    fn grid(&self) -> Vec<f64> {
        self.0.grid()
    }
    fn values(&self) -> Vec<f64> {
        self.0.values()
    }
    fn ode_residual_sup(&self) -> f64 {
        self.0.ode_residual_sup()
    }
    fn tails<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.tail_rates())
    }
}

#[pyclass(name = "Fronts", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFronts(FrontConfiguration);

#[pymethods]
impl PyFronts {
    /// `fronts` is a list of `(nu, theta, tau)` with `nu` a list of length `dim - 1`.
    #[new]
    fn new(dim: usize, speed: f64, fronts: Vec<(Vec<f64>, f64, f64)>) -> PyResult<Self> {
        let specs: Vec<FrontSpec> = fronts.into_iter().map(|(nu, theta, tau)| FrontSpec { nu, theta, tau }).collect();
        FrontConfiguration::new(dim, speed, &specs).map(Self).map_err(err)
    }
    #[staticmethod]
    fn symmetric_v(speed: f64, theta: f64) -> PyResult<Self> {
        FrontConfiguration::symmetric_v(speed, theta).map(Self).map_err(err)
    }
    fn __len__(&self) -> usize {
        self.0.len()
    }
    fn min_q(&self, t: f64, z: Vec<f64>) -> (f64, usize) {
        self.0.min_q(t, &z)
    }
    fn lower(&self, profile: &PyProfile, t: f64, z: Vec<f64>) -> f64 {
        self.0.subsolution_lower(&profile.0, t, &z)
    }
    fn interface_distance(&self, t: f64, z: Vec<f64>) -> f64 {
        self.0.interface_distance(t, &z)
    }
    fn ridge_distance(&self, t: f64, z: Vec<f64>) -> PyResult<f64> {
        self.0.ridge_distance(t, &z).map_err(err)
    }
}

#[pyclass(name = "Surface", frozen)]
struct PySurface(ScaledSurface);

#[pymethods]
impl PySurface {
    #[new]
    fn new(fronts: &PyFronts, alpha: f64) -> PyResult<Self> {
        ScaledSurface::new(fronts.0.clone(), alpha).map(Self).map_err(err)
    }
    fn phi(&self, t: f64, x: Vec<f64>) -> PyResult<f64> {
        self.0.solve_phi(t, &x).map_err(err)
    }
    fn psi(&self, t: f64, x: Vec<f64>) -> f64 {
        self.0.psi(t, &x)
    }
    fn derivatives<'py>(&self, py: Python<'py>, t: f64, x: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.phi_derivatives(t, &x).map_err(err)?)
    }
}

#[pyclass(name = "Barriers", frozen)]
struct PyBarriers(CoreBarriers);

#[pymethods]
impl PyBarriers {
    /// `params` is a dict with keys epsilon, alpha, beta, delta, lambda, varrho.
    #[new]
    fn new(py: Python<'_>, fronts: &PyFronts, profile: &PyProfile, params: &Bound<'_, PyAny>) -> PyResult<Self> {
        let p: BarrierParams = from_py(py, params)?;
        CoreBarriers::new(&fronts.0, &profile.0, p).map(Self).map_err(err)
    }
    fn upper(&self, t: f64, z: Vec<f64>) -> PyResult<f64> {
        self.0.supersolution_upper(t, &z).map_err(err)
    }
    fn time_shifted(&self, t: f64, z: Vec<f64>) -> PyResult<f64> {
        self.0.time_supersolution(t, &z).map_err(err)
    }
    /// `kind` is "upper" or "time-shifted".
    #[pyo3(signature = (kind, samples = 100_000, seed = 7))]
    fn validate<'py>(&self, py: Python<'py>, kind: &str, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let k = match kind {
            "upper" => BarrierKind::Upper,
            "time-shifted" => BarrierKind::TimeShifted,
            other => return Err(PyValueError::new_err(format!("unknown barrier kind {other:?}"))),
        };
        let spec = SampleSpec { count: samples, seed, ..SampleSpec::default() };
        to_py(py, &self.0.validate(k, &spec).map_err(err)?)
    }
}

/// Runs the automatic barrier schedule and returns the full record.
#[pyfunction]
#[pyo3(signature = (fronts, profile, samples = 100_000, seed = 7))]
fn schedule<'py>(
    py: Python<'py>,
    fronts: &PyFronts,
    profile: &PyProfile,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = ScheduleOptions { sample: SampleSpec { count: samples, seed, ..SampleSpec::default() }, ..ScheduleOptions::default() };
    to_py(py, &auto_schedule(&fronts.0, &profile.0, &opts).map_err(err)?)
}

#[pyclass(name = "Snapshot", frozen, get_all)]
struct PySnapshot {
    counts: Vec<usize>,
    dx: f64,
    origin: Vec<f64>,
    time: f64,
    values: Vec<f64>,
}

impl PySnapshot {
    fn from_field(f: &Field) -> Self {
        Self {
            counts: f.grid.counts().to_vec(),
            dx: f.grid.dx(),
            origin: f.grid.origin().to_vec(),
            time: f.time,
            values: f.values.clone(),
        }
    }
    fn to_field(&self) -> PyResult<Field> {
        let g = Grid::new(self.counts.clone(), self.dx, self.origin.clone()).map_err(err)?;
        Field::new(g, self.values.clone(), self.time).map_err(err)
    }
}

#[pymethods]
impl PySnapshot {
    #[new]
    fn new(counts: Vec<usize>, dx: f64, origin: Vec<f64>, time: f64, values: Vec<f64>) -> PyResult<Self> {
        let s = Self { counts, dx, origin, time, values };
        s.to_field()?;
        Ok(s)
    }
    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        snapshot::save(&self.to_field()?, &path).map_err(err)
    }
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        snapshot::load(&path).map(|f| Self::from_field(&f)).map_err(err)
    }
    fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cauchy problem from `V̲(t_start, ·)` with Dirichlet data from `V̲`,
/// on a box of `cells` centred at `center`; returns the snapshots.
#[pyfunction]
#[pyo3(signature = (nl, fronts, profile, cells, dx, center, t_start, t_end, interval, scheme = "explicit-euler"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    nl: &PyNonlinearity,
    fronts: &PyFronts,
    profile: &PyProfile,
    cells: Vec<usize>,
    dx: f64,
    center: Vec<f64>,
    t_start: f64,
    t_end: f64,
    interval: f64,
    scheme: &str,
) -> PyResult<Vec<PySnapshot>> {
    let scheme = match scheme {
        "explicit-euler" => Scheme::ExplicitEuler,
        "rk2" => Scheme::Rk2,
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    let (cfg, prof) = (&fronts.0, &profile.0);
    let grid = Grid::centered(cells, dx, &center).map_err(err)?;
    let config = SolverConfig::cfl(&grid, 0.4, interval, scheme, BoundaryPolicy::DirichletLower).map_err(err)?;
    let mut st =
        Stepper::new(&nl.0, &grid, config, Boundary::Lower { cfg, profile: prof }, Some((cfg, prof))).map_err(err)?;
    let mut u0 = st.lower_field(t_start).map_err(err)?;
    st.impose(&mut u0).map_err(err)?;
    let snaps = solve_cauchy(&mut st, u0, t_end, interval).map_err(err)?;
    Ok(snaps.iter().map(PySnapshot::from_field).collect())
}

#[pymodule]
fn cfl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNonlinearity>()?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PyFronts>()?;
    m.add_class::<PySurface>()?;
    m.add_class::<PyBarriers>()?;
    m.add_class::<PySnapshot>()?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
