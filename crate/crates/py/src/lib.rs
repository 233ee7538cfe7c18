//! Python bindings.
//!
//! Structured results come back as plain dicts and lists.

#![allow(clippy::useless_conversion)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use rationing_core::domain::{build_time_grid, LoadSpec};
use rationing_core::ingest::{reference_profiles_for_days, synthesize_traces, SyntheticConfig};
use rationing_core::milp::{brute_force, solve, toy_instance};
use rationing_core::policies::{fixed_plan, PolicyKind, DEFAULT_BETA, DEFAULT_HORIZON_DAYS};
use rationing_core::rollout::{
    run_experiment as run_core, sweep as sweep_core, ExperimentConfig, TraceSource,
};
use rationing_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Validation(_)
        | Error::Config(_)
        | Error::OracleCap { .. }
        | Error::Ingest { .. }
        | Error::Coverage { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn policy(name: &str, beta: f64, horizon_days: usize) -> PyResult<PolicyKind> {
    let p = match PolicyKind::from_name(name).map_err(py_err)? {
        PolicyKind::Fixed { .. } => PolicyKind::Fixed { beta },
        PolicyKind::Optimal { .. } => PolicyKind::Optimal { horizon_days },
        p => p,
    };
    p.validate().map_err(py_err)?;
    Ok(p)
}

fn trace_source(trace: Option<PathBuf>, priorities: Option<BTreeMap<String, u32>>) -> PyResult<TraceSource> {
    Ok(match (trace, priorities) {
        (None, None) => TraceSource::Reference,
        (Some(path), Some(priorities)) => TraceSource::Csv { path, priorities },
        (Some(path), None) => TraceSource::Profiles { path },
        (None, Some(_)) => return Err(PyValueError::new_err("priorities need a CSV trace")),
    })
}

/// Normalized priority weights from ranks.
#[pyfunction]
fn priority_factors(ranks: BTreeMap<String, u32>) -> PyResult<BTreeMap<String, f64>> {
    Ok(rationing_core::priority_factors(&ranks).map_err(py_err)?.gamma)
}

/// Fraction of demanded steps served.
#[pyfunction]
fn service_factor(actuation: Vec<bool>, demand: Vec<bool>) -> PyResult<f64> {
    rationing_core::metrics::service_factor(&actuation, &demand).map_err(py_err)
}

/// Daily real and virtual top-ups as two lists.
#[pyfunction]
#[pyo3(signature = (fraction, frequency, days, total_cost))]
fn recharge_schedule(
    fraction: f64,
    frequency: u32,
    days: usize,
    total_cost: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let rs = rationing_core::rollout::build_recharge_schedule(fraction, frequency, days, total_cost)
        .map_err(py_err)?;
    Ok((rs.real, rs.virtual_))
}

/// Constant per-load thresholds of the fixed policy.
#[pyfunction]
#[pyo3(signature = (ranks, total_recharge, beta = DEFAULT_BETA))]
fn fixed_thresholds(
    ranks: BTreeMap<String, u32>,
    total_recharge: f64,
    beta: f64,
) -> PyResult<BTreeMap<String, f64>> {
    let loads: Vec<LoadSpec> = ranks
        .iter()
        .map(|(id, &r)| LoadSpec::new(id.clone(), id.clone(), r))
        .collect();
    let grid = build_time_grid(60, 1).map_err(py_err)?;
    let plan = fixed_plan(&loads, total_recharge, beta, &grid).map_err(py_err)?;
    Ok(plan
        .load_ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.clone(), plan.get(k, 0)))
        .collect())
}

/// Runs one experiment and returns its report.
///
/// `trace` is a CSV trace (with `priorities`) or a synthetic profile TOML; the
/// reference household is used when both are omitted.
#[pyfunction]
#[pyo3(signature = (
    policy_name = "optimal", amount = 0.7, frequency = 5, days = 30, step_minutes = 15, seed = 0,
    rate = 0.15, beta = DEFAULT_BETA, horizon_days = DEFAULT_HORIZON_DAYS, trace = None, priorities = None
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    policy_name: &str,
    amount: f64,
    frequency: u32,
    days: usize,
    step_minutes: u32,
    seed: u64,
    rate: f64,
    beta: f64,
    horizon_days: usize,
    trace: Option<PathBuf>,
    priorities: Option<BTreeMap<String, u32>>,
) -> PyResult<PyObject> {
    let cfg = ExperimentConfig {
        num_days: days,
        step_minutes,
        seed,
        rate_per_kwh: rate,
        traces: trace_source(trace, priorities)?,
        ..ExperimentConfig::new(policy(policy_name, beta, horizon_days)?, amount, frequency)
    };
    let outcome = py.allow_threads(|| run_core(&cfg)).map_err(py_err)?;
    to_py(py, &outcome)
}

/// Runs an experiment described by a TOML document.
#[pyfunction]
fn run_config(py: Python<'_>, toml_text: &str) -> PyResult<PyObject> {
    let cfg = ExperimentConfig::from_toml(toml_text).map_err(py_err)?;
    let outcome = py.allow_threads(|| run_core(&cfg)).map_err(py_err)?;
    to_py(py, &outcome)
}

/// Every policy x amount x frequency combination on the reference household.
#[pyfunction]
#[pyo3(signature = (policies, amounts, frequencies, days = 30, seed = 0))]
fn sweep(
    py: Python<'_>,
    policies: Vec<String>,
    amounts: Vec<f64>,
    frequencies: Vec<u32>,
    days: usize,
    seed: u64,
) -> PyResult<PyObject> {
    let mut configs = Vec::new();
    for name in &policies {
        let p = policy(name, DEFAULT_BETA, DEFAULT_HORIZON_DAYS)?;
        for &f in &amounts {
            for &q in &frequencies {
                configs.push(ExperimentConfig {
                    num_days: days,
                    seed,
                    ..ExperimentConfig::new(p, f, q)
                });
            }
        }
    }
    let rows = py.allow_threads(|| sweep_core(&configs)).map_err(py_err)?;
    to_py(py, &rows)
}

/// Solver vs exhaustive enumeration on `n` random toy windows; returns the match count.
#[pyfunction]
#[pyo3(signature = (n = 200, loads = 2, steps = 8, days = 2, seed = 1))]
fn oracle_check(
    py: Python<'_>,
    n: usize,
    loads: usize,
    steps: usize,
    days: usize,
    seed: u64,
) -> PyResult<usize> {
    py.allow_threads(|| {
        let mut matches = 0;
        for i in 0..n {
            let inst = toy_instance(seed.wrapping_add(i as u64), loads, steps, days)?;
            if brute_force(&inst)?.objective == solve(&inst)?.objective {
                matches += 1;
            }
        }
        Ok(matches)
    })
    .map_err(py_err)
}

/// Synthetic power traces (watts per step) keyed by load id.
#[pyfunction]
#[pyo3(signature = (days = 30, step_minutes = 15, seed = 0, profiles_toml = None))]
fn synthesize(
    days: usize,
    step_minutes: u32,
    seed: u64,
    profiles_toml: Option<&str>,
) -> PyResult<BTreeMap<String, Vec<f64>>> {
    let cfg = match profiles_toml {
        Some(text) => SyntheticConfig::from_toml(text).map_err(py_err)?,
        None => reference_profiles_for_days(days),
    }
    .with_seed_offset(seed);
    let grid = build_time_grid(step_minutes, days).map_err(py_err)?;
    let traces = synthesize_traces(&cfg.load, &grid).map_err(py_err)?;
    Ok(traces.into_iter().map(|t| (t.load_id, t.power)).collect())
}

/// The reference household as a profile TOML document.
#[pyfunction]
#[pyo3(signature = (days = 30))]
fn reference_profiles_toml(days: usize) -> PyResult<String> {
    reference_profiles_for_days(days).to_toml().map_err(py_err)
}

#[pymodule]
fn rationing(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(priority_factors, m)?)?;
    m.add_function(wrap_pyfunction!(service_factor, m)?)?;
    m.add_function(wrap_pyfunction!(recharge_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(reference_profiles_toml, m)?)?;
    Ok(())
}
