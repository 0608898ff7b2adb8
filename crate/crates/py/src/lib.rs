//! Python bindings. Reports cross the boundary as JSON text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gridmaint::caseio::{parse_case, schedule_from_csv, synth_demand, DemandShape, RunConfig};
use gridmaint::decomp::{plan, Instance, PlanOptions};
use gridmaint::degrade::{DegradationPriors, InverseGaussian};
use gridmaint::pboracle;
use gridmaint::saa::{evaluate_schedule, model_sampler};
use gridmaint::solver::HighsBackend;
use gridmaint::synth::{synth_failure_model, CASE9};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Distribution of the number of successes among independent trials.
#[pyfunction]
fn pb_pmf(probs: Vec<f64>) -> PyResult<Vec<f64>> {
    pboracle::pb_pmf(&probs).map_err(value_err)
}

/// Probability of at most `k` successes.
#[pyfunction]
fn pb_cdf(probs: Vec<f64>, k: usize) -> PyResult<f64> {
    pboracle::pb_cdf(&probs, k).map_err(value_err)
}

#[pyfunction]
fn inverse_gaussian_cdf(mean: f64, shape: f64, x: f64) -> PyResult<f64> {
    if !(mean > 0.0 && shape > 0.0) {
        return Err(value_err("mean and shape must be positive"));
    }
    Ok(InverseGaussian { mean, shape }.cdf(x))
}

/// Builds an instance with synthetic demand and residual lives drawn from
/// the configured seed.
fn instance(case: &str, config: Option<&str>, seed: Option<u64>) -> PyResult<Instance> {
    let mut cfg = match config {
        Some(text) => RunConfig::from_toml(text).map_err(value_err)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut net = parse_case(case).map_err(value_err)?;
    net.fill_default_maintenance_costs(cfg.horizon.hours);
    let demand = synth_demand(
        &net,
        &DemandShape::weekly(cfg.horizon.days, cfg.horizon.hours),
        cfg.demand_noise,
        cfg.seed,
    );
    let failure = synth_failure_model(
        &net,
        &DegradationPriors::generator_default(),
        &DegradationPriors::line_default(),
        cfg.seed,
    )
    .map_err(runtime_err)?;
    Instance::new(net, demand, cfg, failure).map_err(value_err)
}

/// Solves one sampled problem and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (case, config=None, seed=None, scenarios=None))]
fn plan_case(py: Python<'_>, case: &str, config: Option<&str>, seed: Option<u64>, scenarios: Option<usize>) -> PyResult<String> {
    let inst = instance(case, config, seed)?;
    py.detach(|| {
        let n = scenarios.unwrap_or(inst.config.saa.scenarios);
        let set = model_sampler(&inst)(&inst.partition().selected, n, inst.config.seed).map_err(runtime_err)?;
        let report = plan(&inst, &set, &PlanOptions::from_config(&inst.config), &HighsBackend).map_err(runtime_err)?;
        Ok(report.to_json())
    })
}

/// Out-of-sample cost of a `component,period` schedule, as JSON.
#[pyfunction]
#[pyo3(signature = (case, schedule_csv, config=None, seed=None, test_scenarios=None))]
fn evaluate_case(
    py: Python<'_>,
    case: &str,
    schedule_csv: &str,
    config: Option<&str>,
    seed: Option<u64>,
    test_scenarios: Option<usize>,
) -> PyResult<String> {
    let inst = instance(case, config, seed)?;
    let schedule = schedule_from_csv(schedule_csv).map_err(value_err)?;
    py.detach(|| {
        let n = test_scenarios.unwrap_or(inst.config.saa.test_scenarios);
        let test = model_sampler(&inst)(&inst.net.components(), n, inst.config.seed).map_err(runtime_err)?;
        let opts = PlanOptions::from_config(&inst.config);
        let eval = evaluate_schedule(&inst, &schedule, &test, &opts, &HighsBackend).map_err(runtime_err)?;
        serde_json::to_string(&eval).map_err(runtime_err)
    })
}

#[pymodule]
#[pyo3(name = "gridmaint")]
fn gridmaint_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pb_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(pb_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_gaussian_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(plan_case, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_case, m)?)?;
    m.add("CASE9", CASE9)?;
    Ok(())
}
