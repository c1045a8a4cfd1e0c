//! Python bindings. Everything crosses the boundary as JSON text.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spbe::io::{parse_game, EquilibriumDocument};
use spbe::pubgoods::{emit_region_map, reproduce_example, MapMode, PubGoodsParams};
use spbe::{check_sequential_rationality, forward_construct, EquilibriumGenerator, FixedPointConfig, SpbeError};

fn to_py(err: SpbeError) -> PyErr {
    match err {
        SpbeError::NoFixedPointFound { .. } | SpbeError::RejectedPrescription { .. } => {
            PyRuntimeError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// Solves a game given as JSON and returns the equilibrium document as JSON.
#[pyfunction]
#[pyo3(signature = (game_json, damping = 0.5, max_iter = 10_000, seed = 0))]
fn solve(game_json: &str, damping: f64, max_iter: usize, seed: u64) -> PyResult<String> {
    let game = Arc::new(parse_game(game_json).map_err(to_py)?);
    let config = FixedPointConfig {
        damping,
        max_iterations: max_iter,
        rng_seed: seed,
        ..FixedPointConfig::default()
    };
    let generator = EquilibriumGenerator::new(game, config.clone()).map_err(to_py)?;
    let eq = forward_construct(&generator);
    if let Some((history, err)) = eq.first_error() {
        return Err(PyRuntimeError::new_err(format!("stage solve failed at {history:?}: {err}")));
    }
    let config = serde_json::to_value(&config).expect("config serializes");
    Ok(EquilibriumDocument::from_equilibrium(&eq, config, None).to_json())
}

/// Verifies an equilibrium document; returns `(passed, max_gap)`.
#[pyfunction]
#[pyo3(signature = (document_json, tolerance = 1e-8))]
fn verify(document_json: &str, tolerance: f64) -> PyResult<(bool, f64)> {
    let doc = EquilibriumDocument::parse(document_json).map_err(to_py)?;
    let game = doc.validated_game().map_err(to_py)?;
    let (profile, beliefs, _) = doc.to_parts(&game).map_err(to_py)?;
    let report = check_sequential_rationality(&game, &profile, &beliefs, tolerance).map_err(to_py)?;
    Ok((report.pass, report.max_gap))
}

/// Runs the public goods reproduction and returns its report as JSON.
#[pyfunction]
#[pyo3(signature = (q = 0.1, xl = 0.2, xh = 1.2))]
fn example(q: f64, xl: f64, xh: f64) -> PyResult<String> {
    let params = PubGoodsParams::new(q, xl, xh).map_err(to_py)?;
    let report = reproduce_example(&params, &FixedPointConfig::default()).map_err(to_py)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

/// Last-stage region map of the public goods example as CSV text.
#[pyfunction]
#[pyo3(signature = (resolution = 0.01, all_solutions = false))]
fn region_map(resolution: f64, all_solutions: bool) -> PyResult<String> {
    let mode = if all_solutions { MapMode::AllSolutions } else { MapMode::Canonical };
    emit_region_map(resolution, &PubGoodsParams::reference(), mode).map_err(to_py)
}

#[pymodule]
fn pyspbe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(example, m)?)?;
    m.add_function(wrap_pyfunction!(region_map, m)?)?;
    Ok(())
}
