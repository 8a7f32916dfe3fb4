//! JSON run configuration.
//!
//! Every key is optional and falls back to the defaults of
//! [`SynthesisConfig::standard`], so `{"gate": "swap"}` is a complete file.
//! Infinite amplitude or rate bounds are written as `null`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::expansion::UncertainInterval;
use crate::model::{CMatrix, DensityMatrix, C64, HILBERT_DIM};
use crate::qp::SignalConstraints;
use crate::synthesis::{
    default_pairs, process_pairs, Gate, InitialPulse, Objective, StatePair, SynthesisConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateSpec {
    #[default]
    Cnot,
    Swap,
    Custom,
}

/// `single` uses one state pair per gate, `process` the four basis states
/// plus the uniform superposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    #[default]
    Single,
    Process,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ConstraintsFile {
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
}

impl Default for ConstraintsFile {
    fn default() -> Self {
        ConstraintsFile {
            u_min: Some(-10.0),
            u_max: Some(10.0),
            rate_min: None,
            rate_max: None,
        }
    }
}

impl From<&ConstraintsFile> for SignalConstraints {
    fn from(c: &ConstraintsFile) -> Self {
        SignalConstraints {
            u_min: c.u_min.unwrap_or(f64::NEG_INFINITY),
            u_max: c.u_max.unwrap_or(f64::INFINITY),
            rate_min: c.rate_min,
            rate_max: c.rate_max,
        }
    }
}

/// 4×4 complex matrix as rows of `[re, im]` pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StatePairFile {
    pub initial: ComplexRows,
    pub target: ComplexRows,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub gate: GateSpec,
    pub coupling_j: f64,
    pub decoherence_gamma: f64,
    pub horizon: f64,
    pub steps: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub alpha_interval: UncertainInterval,
    pub beta_interval: UncertainInterval,
    pub constraints: ConstraintsFile,
    pub objective: Objective,
    pub lambda0: f64,
    pub max_iterations: usize,
    pub max_doublings: usize,
    pub tolerance: f64,
    pub initial_pulse: InitialPulse,
    pub pairs: PairMode,
    pub state_pairs: Option<Vec<StatePairFile>>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let p = SynthesisConfig::standard(Gate::Cnot);
        RunConfigFile {
            gate: GateSpec::Cnot,
            coupling_j: p.coupling_j,
            decoherence_gamma: p.decoherence_gamma,
            horizon: p.horizon,
            steps: p.steps,
            n_alpha: p.n_alpha,
            n_beta: p.n_beta,
            alpha_interval: p.alpha_interval,
            beta_interval: p.beta_interval,
            constraints: ConstraintsFile::default(),
            objective: p.objective,
            lambda0: p.lambda0,
            max_iterations: p.max_iterations,
            max_doublings: p.max_doublings,
            tolerance: p.tolerance,
            initial_pulse: p.initial_pulse,
            pairs: PairMode::Single,
            state_pairs: None,
        }
    }
}

fn complex_matrix(rows: &ComplexRows, what: &str) -> Result<CMatrix> {
    if rows.len() != HILBERT_DIM || rows.iter().any(|r| r.len() != HILBERT_DIM) {
        return Err(invalid(format!(
            "{what} must be a 4x4 matrix of [re, im] pairs"
        )));
    }
    Ok(CMatrix::from_fn(HILBERT_DIM, HILBERT_DIM, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::InvalidArgument(format!(
                "config key `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_synthesis(&self) -> Result<SynthesisConfig> {
        let state_pairs = match (self.gate, &self.state_pairs) {
            (GateSpec::Custom, Some(pairs)) => pairs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    Ok(StatePair {
                        initial: DensityMatrix::physical(complex_matrix(
                            &p.initial,
                            &format!("statePairs[{i}].initial"),
                        )?)?,
                        target: DensityMatrix::physical(complex_matrix(
                            &p.target,
                            &format!("statePairs[{i}].target"),
                        )?)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            (GateSpec::Custom, None) => {
                return Err(invalid("gate \"custom\" requires statePairs"));
            }
            (_, Some(_)) => {
                return Err(invalid("statePairs is only accepted with gate \"custom\""));
            }
            (gate, None) => {
                let gate = if gate == GateSpec::Swap {
                    Gate::Swap
                } else {
                    Gate::Cnot
                };
                match self.pairs {
                    PairMode::Single => default_pairs(gate),
                    PairMode::Process => process_pairs(gate),
                }
            }
        };
        let config = SynthesisConfig {
            coupling_j: self.coupling_j,
            decoherence_gamma: self.decoherence_gamma,
            horizon: self.horizon,
            steps: self.steps,
            n_alpha: self.n_alpha,
            n_beta: self.n_beta,
            alpha_interval: self.alpha_interval,
            beta_interval: self.beta_interval,
            constraints: (&self.constraints).into(),
            objective: self.objective,
            lambda0: self.lambda0,
            max_iterations: self.max_iterations,
            max_doublings: self.max_doublings,
            tolerance: self.tolerance,
            initial_pulse: self.initial_pulse,
            state_pairs,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Reads and validates a run configuration.
pub fn load_config(path: &Path) -> Result<SynthesisConfig> {
    RunConfigFile::from_path(path)?.to_synthesis()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_standard_defaults() {
        let c = RunConfigFile::from_json(r#"{"gate": "cnot"}"#)
            .unwrap()
            .to_synthesis()
            .unwrap();
        assert_eq!(c.steps, 100);
        assert_eq!(c.n_alpha, 1);
        assert_eq!(c.n_beta, 2);
        assert_eq!(c.constraints, SignalConstraints::amplitude(-10.0, 10.0));
        assert_eq!(c.state_pairs[0].initial, DensityMatrix::basis(2));
        assert_eq!(c.state_pairs[0].target, DensityMatrix::basis(3));
    }

    #[test]
    fn null_bounds_are_infinite() {
        let f =
            RunConfigFile::from_json(r#"{"constraints": {"uMin": null, "uMax": null}}"#).unwrap();
        let c = f.to_synthesis().unwrap();
        assert_eq!(c.constraints, SignalConstraints::unbounded());
    }

    #[test]
    fn unknown_key_is_named() {
        let err =
            RunConfigFile::from_json("{\n  \"gate\": \"swap\",\n  \"stpes\": 10\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stpes"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn nested_type_error_reports_path() {
        let err = RunConfigFile::from_json(r#"{"constraints": {"uMax": "big"}}"#).unwrap_err();
        assert!(err.to_string().contains("constraints.uMax"), "{err}");
        let err = RunConfigFile::from_json(r#"{"alphaInterval": [2, 0]}"#).unwrap_err();
        assert!(err.to_string().contains("alphaInterval"), "{err}");
    }

    #[test]
    fn custom_pairs() {
        let one = "[[[0,0],[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]]]";
        let text = format!(
            r#"{{"gate": "custom", "statePairs": [{{"initial": {one}, "target": {one}}}],
                "initialPulse": {{"uniformRandom": {{"amplitude": 0.5, "seed": 3}}}}}}"#
        );
        let c = RunConfigFile::from_json(&text)
            .unwrap()
            .to_synthesis()
            .unwrap();
        assert_eq!(c.state_pairs[0].initial, DensityMatrix::basis(1));
        assert_eq!(
            c.initial_pulse,
            InitialPulse::UniformRandom {
                amplitude: 0.5,
                seed: 3
            }
        );
        assert!(RunConfigFile::from_json(r#"{"gate": "custom"}"#)
            .unwrap()
            .to_synthesis()
            .is_err());
    }

    #[test]
    fn process_mode_and_objective() {
        let c = RunConfigFile::from_json(r#"{"gate": "swap", "pairs": "process", "objective": "innerProduct", "initialPulse": "zeros"}"#)
            .unwrap()
            .to_synthesis()
            .unwrap();
        assert_eq!(c.state_pairs.len(), 5);
        assert_eq!(c.objective, Objective::InnerProduct);
        assert_eq!(c.initial_pulse, InitialPulse::Zeros);
    }
}
