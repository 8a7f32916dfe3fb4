//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Pulses cross the boundary as flat `[u1x, u1y, u2x, u2y]`-per-step arrays
//! on the default time grid (`T = 1`, `K = 100`).

use qgate_core::synthesis::{
    simulate_populations as simulate, synthesize, validate_grid, InitialPulse, SynthesisError,
};
use qgate_core::{ControlSignal, Error, Gate, SynthesisConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn gate(name: &str) -> Result<Gate, Error> {
    match name {
        "cnot" => Ok(Gate::Cnot),
        "swap" => Ok(Gate::Swap),
        other => Err(Error::InvalidArgument(format!("unknown gate `{other}`"))),
    }
}

fn config(name: &str) -> Result<SynthesisConfig, Error> {
    Ok(SynthesisConfig::standard(gate(name)?))
}

fn signal(config: &SynthesisConfig, pulse: &[f64]) -> Result<ControlSignal, Error> {
    let u = ControlSignal::from_vector(&pulse.to_vec().into(), config.dt())?;
    if u.steps() != config.steps {
        return Err(Error::InvalidArgument(format!(
            "expected {} steps, got {}",
            config.steps,
            u.steps()
        )));
    }
    Ok(u)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthesisResult {
    pub pulse: Vec<f64>,
    pub dt: f64,
    pub accepted_errors: Vec<f64>,
    pub final_error: f64,
    pub iterations: usize,
    pub stagnated: bool,
}

pub fn run_synthesis(
    gate: &str,
    max_iterations: usize,
    seed: u64,
) -> Result<SynthesisResult, Error> {
    let mut c = config(gate)?;
    c.max_iterations = max_iterations;
    c.initial_pulse = InitialPulse::UniformRandom {
        amplitude: 1.0,
        seed,
    };
    let (pulse, report, stagnated) = match synthesize(&c) {
        Ok((pulse, report)) => (pulse, report, false),
        Err(SynthesisError::Stagnation { pulse, report, .. }) => (pulse, *report, true),
        Err(SynthesisError::Invalid(e)) => return Err(e),
    };
    Ok(SynthesisResult {
        pulse: pulse.to_vector().as_slice().to_vec(),
        dt: pulse.dt(),
        accepted_errors: report.accepted_errors(),
        final_error: report.final_error,
        iterations: report.iterations_used,
        stagnated,
    })
}

/// Rows of `[t, p00, p01, p10, p11]`, flattened.
pub fn population_rows(
    gate: &str,
    pulse: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>, Error> {
    let c = config(gate)?;
    let u = signal(&c, pulse)?;
    Ok(simulate(&u, &c, alpha, beta)?
        .iter()
        .flat_map(|s| std::iter::once(s.t).chain(s.populations))
        .collect())
}

/// `n × n` terminal errors over the uncertainty box, α-major.
pub fn grid_errors(gate: &str, pulse: &[f64], n: usize) -> Result<Vec<f64>, Error> {
    let c = config(gate)?;
    let u = signal(&c, pulse)?;
    let grid = validate_grid(&u, &c, n, n)?;
    Ok(grid.rows().map(|(_, _, e)| e).collect())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Returns the synthesis result as a JSON string.
#[wasm_bindgen]
pub fn synthesize_gate(gate: &str, max_iterations: u32, seed: u32) -> Result<String, JsError> {
    let result = run_synthesis(gate, max_iterations as usize, u64::from(seed)).map_err(js)?;
    serde_json::to_string(&result).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate_populations(
    gate: &str,
    pulse: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>, JsError> {
    population_rows(gate, pulse, alpha, beta).map_err(js)
}

#[wasm_bindgen]
pub fn error_grid(gate: &str, pulse: &[f64], n: u32) -> Result<Vec<f64>, JsError> {
    grid_errors(gate, pulse, n as usize).map_err(js)
}
