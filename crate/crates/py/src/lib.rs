//! Python face of the toolkit. The heavyweight operations all take the
//! same JSON experiment document the command line uses, so a config can be
//! shared verbatim between shell runs and notebook work; the small helpers
//! (ranking, concavity, tree prices) take plain scalars and lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use rbsde_core::bsde::estimate_u as core_estimate_u;
use rbsde_core::harness::{load_experiment_config, solve_config_pde};
use rbsde_core::model::{
    check_concavity as core_check_concavity, load_problem_config, rank_state as core_rank_state,
    validate_spec_with_horizon,
};
use rbsde_core::pricing::{
    binomial_price as core_binomial_price, price_american as core_price_american, ExerciseStyle,
    OptionSide,
};
use rbsde_core::sde::{simulate_with_options, TimeGrid};
use rbsde_core::Error;

fn to_py_err(e: Error) -> PyErr {
    match &e {
        Error::File { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Ranks a named state vector. Returns a dict with the sorted values, the
/// permutations in both directions, the adjacent gaps, and a tie flag.
#[pyfunction]
fn rank_state<'py>(py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let view = core_rank_state(&x).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("ranked", &view.ranked)?;
    out.set_item("to_rank", &view.to_rank)?;
    out.set_item("from_rank", &view.from_rank)?;
    out.set_item("gaps", &view.gaps)?;
    out.set_item("has_tie", view.has_tie())?;
    Ok(out)
}

/// True when the sequence of squared volatilities is concave in the rank
/// index, the standing condition that rules out triple collisions.
#[pyfunction]
fn check_concavity(sigma_sq: Vec<f64>) -> bool {
    core_check_concavity(&sigma_sq)
}

/// Reorders a named sensitivity vector into rank order for the state `x`.
#[pyfunction]
fn named_to_ranked_z(z: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let view = core_rank_state(&x).map_err(to_py_err)?;
    rbsde_core::model::named_to_ranked_z(&z, &view).map_err(to_py_err)
}

/// Runs the standing-hypothesis checks on a problem document (the same
/// JSON that sits under the `problem` key of an experiment config).
#[pyfunction]
#[pyo3(signature = (problem_json, samples = 2000, seed = 1, horizon = 1.0))]
fn validate_problem<'py>(
    py: Python<'py>,
    problem_json: &str,
    samples: usize,
    seed: u64,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = load_problem_config(problem_json).map_err(to_py_err)?;
    let (profile, spec) = config.build().map_err(to_py_err)?;
    let report = validate_spec_with_horizon(&spec, &profile, samples, seed, horizon)
        .map_err(to_py_err)?;
    let checks = PyList::empty(py);
    for c in &report.checks {
        let row = PyDict::new(py);
        row.set_item("name", &c.name)?;
        row.set_item("passed", c.passed)?;
        row.set_item("worst", c.worst)?;
        row.set_item("bound", c.bound)?;
        row.set_item("note", c.note.as_deref())?;
        checks.append(row)?;
    }
    let out = PyDict::new(py);
    out.set_item("passed", report.passed)?;
    out.set_item("checks", checks)?;
    Ok(out)
}

/// Simulates the ranked system described by an experiment config and
/// returns summary statistics of the path bundle.
#[pyfunction]
fn simulate_summary<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let config = load_experiment_config(config_json).map_err(to_py_err)?;
    let resolved = config.resolve().map_err(to_py_err)?;
    let cfg = config.numerics.estimate_config().map_err(to_py_err)?;
    let grid = TimeGrid::new(0.0, resolved.horizon, cfg.steps).map_err(to_py_err)?;
    let bundle = simulate_with_options(
        &resolved.profile,
        resolved.start().map_err(to_py_err)?,
        &grid,
        cfg.paths,
        cfg.seed,
        cfg.allow_nonconcave,
    )
    .map_err(to_py_err)?;
    let steps = bundle.grid.steps();
    let mut mean_terminal = vec![0.0f64; bundle.n];
    for path in 0..bundle.paths {
        for (j, v) in bundle.ranked_state(path, steps).iter().enumerate() {
            mean_terminal[j] += v / bundle.paths as f64;
        }
    }
    let out = PyDict::new(py);
    out.set_item("n", bundle.n)?;
    out.set_item("paths", bundle.paths)?;
    out.set_item("steps", steps)?;
    out.set_item("seed", bundle.seed)?;
    out.set_item("tie_fraction", bundle.tie_fraction())?;
    out.set_item("mean_terminal", mean_terminal)?;
    Ok(out)
}

/// Pathwise value estimate at the start state of an experiment config.
/// Returns `(u0, stderr, z0)` where `z0` is the ranked gradient proxy.
#[pyfunction]
fn estimate_u(config_json: &str) -> PyResult<(f64, f64, Vec<f64>)> {
    let config = load_experiment_config(config_json).map_err(to_py_err)?;
    let resolved = config.resolve().map_err(to_py_err)?;
    let cfg = config.numerics.estimate_config().map_err(to_py_err)?;
    let sol = core_estimate_u(
        &resolved.profile,
        &resolved.spec,
        resolved.start().map_err(to_py_err)?,
        0.0,
        resolved.horizon,
        &cfg,
    )
    .map_err(to_py_err)?;
    Ok((sol.u0, sol.stderr, sol.z0))
}

/// Solves the obstacle problem on the grid declared in the config and
/// evaluates it at the config's probes. Returns one value per probe.
#[pyfunction]
fn solve_pde_probes(config_json: &str) -> PyResult<Vec<f64>> {
    let config = load_experiment_config(config_json).map_err(to_py_err)?;
    let resolved = config.resolve().map_err(to_py_err)?;
    if config.probes.is_empty() {
        return Err(PyValueError::new_err("config declares no probes"));
    }
    let sol = solve_config_pde(&config, true).map_err(to_py_err)?;
    let mut values = Vec::with_capacity(config.probes.len());
    for probe in &config.probes {
        let point = resolved.state_point(&probe.x).map_err(to_py_err)?;
        let v = sol.probe(probe.t, point.coords()).map_err(to_py_err)?;
        values.push(v);
    }
    Ok(values)
}

/// Prices the American-style claim of a market config by the pathwise
/// reflected solve. Returns a dict with the price, its standard error,
/// the ranked hedge positions, and the mean superhedge consumption.
#[pyfunction]
fn price_american<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let config = load_experiment_config(config_json).map_err(to_py_err)?;
    let resolved = config.resolve().map_err(to_py_err)?;
    let market = resolved
        .market
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("pricing needs a market config"))?;
    let cfg = config.numerics.estimate_config().map_err(to_py_err)?;
    let result = core_price_american(market, resolved.horizon, &cfg).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("price", result.price)?;
    out.set_item("stderr", result.stderr)?;
    out.set_item("hedge", result.hedge)?;
    out.set_item("consumption", result.consumption)?;
    Ok(out)
}

/// Cox-Ross-Rubinstein tree price for one stock under flat coefficients.
/// `side` is "put" or "call", `style` is "european" or "american".
#[pyfunction]
#[pyo3(signature = (spot, strike, rate, sigma, horizon, steps = 2000, side = "put", style = "american"))]
#[allow(clippy::too_many_arguments)]
fn binomial_price(
    spot: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    horizon: f64,
    steps: usize,
    side: &str,
    style: &str,
) -> PyResult<f64> {
    let side = match side {
        "put" => OptionSide::Put,
        "call" => OptionSide::Call,
        other => return Err(PyValueError::new_err(format!("unknown side {other:?}"))),
    };
    let style = match style {
        "european" => ExerciseStyle::European,
        "american" => ExerciseStyle::American,
        other => return Err(PyValueError::new_err(format!("unknown style {other:?}"))),
    };
    core_binomial_price(spot, strike, rate, sigma, horizon, steps, side, style).map_err(to_py_err)
}

#[pymodule]
fn rbsde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rank_state, m)?)?;
    m.add_function(wrap_pyfunction!(check_concavity, m)?)?;
    m.add_function(wrap_pyfunction!(named_to_ranked_z, m)?)?;
    m.add_function(wrap_pyfunction!(validate_problem, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_summary, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_u, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pde_probes, m)?)?;
    m.add_function(wrap_pyfunction!(price_american, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_price, m)?)?;
    Ok(())
}
