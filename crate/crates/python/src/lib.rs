use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ddmv_core::analysis;
use ddmv_core::config::Config;
use ddmv_core::fokker_planck::{fp_solve as solve, FPConfig};
use ddmv_core::measures::{wasserstein_p, EmpiricalMeasure};
use ddmv_core::scheme::simulate_unchecked;
use ddmv_core::Error;

fn to_py(err: Error) -> PyErr {
    if err.is_numerical() {
        PyRuntimeError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

fn load(config: &str, overrides: Option<Vec<String>>, seed: Option<u64>) -> PyResult<Config> {
    let mut cfg = Config::parse(config, &overrides.unwrap_or_default()).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Heat kernel `(4πt)^{-d/2} exp(-|x|²/4t)`.
#[pyfunction]
fn heat_kernel(t: f64, x: Vec<f64>) -> PyResult<f64> {
    ddmv_core::heat_kernel::heat_kernel(t, &x).map_err(to_py)
}

/// Exact W_p between two uniform 1D samples.
#[pyfunction]
fn wasserstein(p: f64, xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    let a = EmpiricalMeasure::uniform(1, xs).map_err(to_py)?;
    let b = EmpiricalMeasure::uniform(1, ys).map_err(to_py)?;
    wasserstein_p(p, &a, &b).map_err(to_py)
}

/// Log-log least squares; returns a dict with slope, intercept, residual and half_width.
#[pyfunction]
fn rate_fit<'py>(py: Python<'py>, xs: Vec<f64>, errors: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let f = analysis::rate_fit(&xs, &errors).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("slope", f.slope)?;
    d.set_item("intercept", f.intercept)?;
    d.set_item("residual", f.residual)?;
    d.set_item("half_width", f.half_width)?;
    Ok(d)
}

/// Runs the particle scheme from a TOML config string (no assumption check).
///
/// Returns `times`, `means` (first coordinate) and the flat `final_positions`.
#[pyfunction]
#[pyo3(signature = (config = "", overrides = None, seed = None))]
fn simulate<'py>(
    py: Python<'py>,
    config: &str,
    overrides: Option<Vec<String>>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, overrides, seed)?;
    let drift = cfg.drift.build().map_err(to_py)?;
    let ic = cfg.initial.build().map_err(to_py)?;
    let sc = cfg.scheme_config(cfg.scheme.n, cfg.seed).map_err(to_py)?;
    let rec = py.detach(|| simulate_unchecked(&sc, &drift, &ic)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("dim", rec.config.dim)?;
    d.set_item("times", rec.times())?;
    d.set_item("means", rec.snapshots.iter().map(|s| s.measure().mean()[0]).collect::<Vec<_>>())?;
    d.set_item("final_positions", rec.last().cloud.positions().to_vec())?;
    Ok(d)
}

/// 1D Fokker-Planck reference solve at the dyadic times `T j / 8`.
#[pyfunction]
#[pyo3(signature = (config = "", overrides = None))]
fn fp_solve<'py>(py: Python<'py>, config: &str, overrides: Option<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config, overrides, None)?;
    let drift = cfg.drift.build().map_err(to_py)?;
    let ic = cfg.initial.build().map_err(to_py)?;
    let t = cfg.scheme.horizon;
    let fc = FPConfig::auto(drift, ic, t, cfg.fp.mesh, cfg.fp.cfl).map_err(to_py)?;
    let times: Vec<f64> = (1..=8).map(|j| t * j as f64 / 8.0).collect();
    let traj = py.detach(|| solve(&fc, t, &times)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("centers", traj.centers)?;
    d.set_item("times", traj.times)?;
    d.set_item("densities", traj.densities)?;
    d.set_item("max_mass_error", traj.max_mass_error)?;
    Ok(d)
}

/// Runs the command-line front end with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let mut full = vec!["ddmv".to_string()];
    full.extend(args);
    py.detach(|| ddmv_core::cli::main_with_args(full))
}

#[pymodule]
fn ddmv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(rate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fp_solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
