//! Python bindings. Bundles go in and results come out as JSON text, so the
//! Python side needs nothing beyond the `json` module.

use std::time::Duration;

use evmrepair::bundle::ContractBundle;
use evmrepair::evm::gas::GasTable;
use evmrepair::patch::{apply_patches, plan_fixes};
use evmrepair::pipeline::{analyze_bundle, AnalysisConfig};
use evmrepair::replay::replay;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::json;

fn config(timeout: Option<u64>, loop_cap: Option<u64>) -> AnalysisConfig {
    let defaults = AnalysisConfig::default();
    AnalysisConfig {
        timeout: timeout.map(Duration::from_secs),
        loop_cap: loop_cap.unwrap_or(defaults.loop_cap),
        ..defaults
    }
}

pub fn analyze_json(bundle: &str, timeout: Option<u64>, loop_cap: Option<u64>) -> evmrepair::Result<String> {
    let bundle = ContractBundle::from_json(bundle)?;
    let a = analyze_bundle(&bundle, &config(timeout, loop_cap))?;
    let detection = a.detection.with_sources(&bundle);
    Ok(json!({
        "contract": bundle.name,
        "vulnerable": detection.is_vulnerable(),
        "timeout": a.traces.timed_out,
        "truncated": a.traces.truncated,
        "traces": a.traces.traces.len(),
        "reports": detection.reports,
        "mitigated": detection.mitigated,
    })
    .to_string())
}

/// Returns the patched source and the plan as JSON.
pub fn fix_json(bundle: &str, timeout: Option<u64>, loop_cap: Option<u64>) -> evmrepair::Result<(String, String)> {
    let bundle = ContractBundle::from_json(bundle)?;
    let a = analyze_bundle(&bundle, &config(timeout, loop_cap))?;
    let plan = plan_fixes(&a.detection, &bundle)?;
    let source = apply_patches(&bundle.source, &plan)?;
    let plan = serde_json::to_string(&plan).expect("plans serialize");
    Ok((source, plan))
}

pub fn replay_json(original: &str, fixed: &str) -> evmrepair::Result<String> {
    let original = ContractBundle::from_json(original)?;
    let fixed = ContractBundle::from_json(fixed)?;
    let a = analyze_bundle(&original, &AnalysisConfig::default())?;
    let stats = replay(&original, &fixed, &a.detection, &GasTable::default())?;
    Ok(serde_json::to_string(&stats).expect("stats serialize"))
}

fn py_err(e: evmrepair::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Analyzes a bundle given as JSON text and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (bundle, timeout=None, loop_cap=None))]
fn analyze(py: Python<'_>, bundle: &str, timeout: Option<u64>, loop_cap: Option<u64>) -> PyResult<String> {
    py.detach(|| analyze_json(bundle, timeout, loop_cap)).map_err(py_err)
}

/// Returns `(patched_source, plan_json)`.
#[pyfunction]
#[pyo3(signature = (bundle, timeout=None, loop_cap=None))]
fn fix(py: Python<'_>, bundle: &str, timeout: Option<u64>, loop_cap: Option<u64>) -> PyResult<(String, String)> {
    py.detach(|| fix_json(bundle, timeout, loop_cap)).map_err(py_err)
}

/// Replays the original bundle's transactions against the fixed bundle and
/// returns overhead statistics as JSON.
#[pyfunction]
fn replay_bundles(py: Python<'_>, original: &str, fixed: &str) -> PyResult<String> {
    py.detach(|| replay_json(original, fixed)).map_err(py_err)
}

#[pymodule]
fn pyevmrepair(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(fix, m)?)?;
    m.add_function(wrap_pyfunction!(replay_bundles, m)?)?;
    Ok(())
}
