//! Outer synthesis loop, gate targets and grid validation.
//!
//! Each iteration propagates the lifted system, linearizes the terminal
//! state, solves one regularized QP for `δu`, and keeps the trial only if
//! the true (re-propagated) objective improves. Rejected trials double the
//! regularization scale; accepted ones halve it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{invalid, Error, Result};
use crate::expansion::{
    embed_initial, lift_system, map_parameter, reconstruct, CoefficientState, RobustModel,
    UncertainInterval,
};
use crate::model::{
    build_system, densify, propagate_exact, vectorize, CMatrix, DensityMatrix, Physicality,
    SystemMatrices, VectorizedState, C64, HILBERT_DIM,
};
use crate::propagation::{jacobian, propagate_batch, ControlSignal, Jacobian};
use crate::qp::{build_feasible_region, solve_error_qp, solve_inner_product_qp, SignalConstraints};

// std::time::Instant panics on wasm32-unknown-unknown
#[cfg(not(target_arch = "wasm32"))]
struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(target_arch = "wasm32")]
struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }

    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Lower limit on the regularization scale `λ₀` and on the effective `λ`.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Cnot,
    Swap,
}

impl Gate {
    pub fn unitary(self) -> CMatrix {
        let one = C64::new(1.0, 0.0);
        let mut g = CMatrix::zeros(HILBERT_DIM, HILBERT_DIM);
        let perm = match self {
            Gate::Cnot => [0, 1, 3, 2],
            Gate::Swap => [0, 2, 1, 3],
        };
        for (col, row) in perm.iter().enumerate() {
            g[(*row, col)] = one;
        }
        g
    }
}

/// Returns `(initial, G initial G†)`.
pub fn gate_target(gate: Gate, initial: &DensityMatrix) -> (DensityMatrix, DensityMatrix) {
    let g = gate.unitary();
    let target = &g * initial.matrix() * g.adjoint();
    (
        initial.clone(),
        DensityMatrix::from_matrix(target).expect("unitary conjugation keeps the shape"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub initial: DensityMatrix,
    pub target: DensityMatrix,
}

impl StatePair {
    pub fn for_gate(gate: Gate, initial: DensityMatrix) -> Self {
        let (initial, target) = gate_target(gate, &initial);
        StatePair { initial, target }
    }
}

/// One pair per gate: |10⟩ → |11⟩ for CNOT, |01⟩ → |10⟩ for SWAP.
pub fn default_pairs(gate: Gate) -> Vec<StatePair> {
    let start = match gate {
        Gate::Cnot => 2,
        Gate::Swap => 1,
    };
    vec![StatePair::for_gate(gate, DensityMatrix::basis(start))]
}

/// The four basis states plus the uniform superposition, which together pin
/// down the gate up to a global phase.
pub fn process_pairs(gate: Gate) -> Vec<StatePair> {
    let mut pairs: Vec<StatePair> = (0..HILBERT_DIM)
        .map(|i| StatePair::for_gate(gate, DensityMatrix::basis(i)))
        .collect();
    let plus = [C64::new(0.5, 0.0); HILBERT_DIM];
    pairs.push(StatePair::for_gate(
        gate,
        DensityMatrix::pure(&plus).expect("normalized superposition"),
    ));
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Objective {
    InnerProduct,
    ErrorNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InitialPulse {
    Zeros,
    #[serde(rename_all = "camelCase")]
    UniformRandom {
        amplitude: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub coupling_j: f64,
    pub decoherence_gamma: f64,
    pub horizon: f64,
    pub steps: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub alpha_interval: UncertainInterval,
    pub beta_interval: UncertainInterval,
    pub constraints: SignalConstraints,
    pub objective: Objective,
    pub lambda0: f64,
    pub max_iterations: usize,
    pub max_doublings: usize,
    pub tolerance: f64,
    pub initial_pulse: InitialPulse,
    pub state_pairs: Vec<StatePair>,
}

impl SynthesisConfig {
    /// J = 0.1, T = 1, K = 100, N_α = 1, N_β = 2, α ∈ [0, 2], β ∈ [0.8, 1.2],
    /// amplitudes in [-10, 10], 50 iterations.
    pub fn standard(gate: Gate) -> Self {
        SynthesisConfig {
            coupling_j: 0.1,
            decoherence_gamma: 0.0,
            horizon: 1.0,
            steps: 100,
            n_alpha: 1,
            n_beta: 2,
            alpha_interval: UncertainInterval::new(0.0, 2.0).unwrap(),
            beta_interval: UncertainInterval::new(0.8, 1.2).unwrap(),
            constraints: SignalConstraints::amplitude(-10.0, 10.0),
            objective: Objective::ErrorNorm,
            lambda0: 1e-3,
            max_iterations: 50,
            max_doublings: 30,
            tolerance: 1e-10,
            initial_pulse: InitialPulse::UniformRandom {
                amplitude: 1.0,
                seed: 0,
            },
            state_pairs: default_pairs(gate),
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.decoherence_gamma.is_nan() || self.decoherence_gamma < 0.0 {
            return Err(invalid(format!(
                "decoherence rate must be >= 0, got {}",
                self.decoherence_gamma
            )));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(invalid(format!(
                "lambda0 must be positive, got {}",
                self.lambda0
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.state_pairs.is_empty() {
            return Err(invalid("at least one state pair is required"));
        }
        if let InitialPulse::UniformRandom { amplitude, .. } = self.initial_pulse {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(invalid(format!(
                    "initial amplitude must be >= 0, got {amplitude}"
                )));
            }
        }
        self.constraints.validate()
    }

    pub fn system(&self) -> Result<SystemMatrices> {
        build_system(self.coupling_j, self.decoherence_gamma)
    }

    pub fn model(&self) -> Result<RobustModel> {
        Ok(lift_system(
            &self.system()?,
            self.alpha_interval,
            self.n_alpha,
            self.beta_interval,
            self.n_beta,
        ))
    }

    /// Starting pulse, clamped into the amplitude box.
    pub fn initial_signal(&self) -> Result<ControlSignal> {
        let signal = match self.initial_pulse {
            InitialPulse::Zeros => ControlSignal::zeros(self.steps, self.dt())?,
            InitialPulse::UniformRandom { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let samples = (0..self.steps)
                    .map(|_| {
                        std::array::from_fn(|_| {
                            if amplitude > 0.0 {
                                rng.random_range(-amplitude..=amplitude)
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect();
                ControlSignal::new(samples, self.dt())?
            }
        };
        Ok(self.constraints.clamp(&signal))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StopReason {
    StepBelowTolerance,
    ObjectiveStalled,
    MaxIterations,
    Stagnation,
}

/// Per-trial history of a synthesis run. Every QP solve is one trial; a
/// rejected trial is followed by a retry with a doubled `λ₀` inside the same
/// iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthesisReport {
    pub objective: Objective,
    pub trial_iteration: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub error_trace: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub accepted: Vec<bool>,
    pub initial_error: f64,
    pub final_objective: f64,
    pub final_error: f64,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    pub wall_clock: f64,
}

impl SynthesisReport {
    /// Expansion-space terminal errors of the accepted trials, preceded by the
    /// initial error.
    pub fn accepted_errors(&self) -> Vec<f64> {
        std::iter::once(self.initial_error)
            .chain(
                self.error_trace
                    .iter()
                    .zip(&self.accepted)
                    .filter(|(_, a)| **a)
                    .map(|(e, _)| *e),
            )
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Invalid(#[from] Error),

    #[error(
        "no improving step after {doublings} regularization doublings in iteration {iteration}"
    )]
    Stagnation {
        iteration: usize,
        doublings: usize,
        pulse: ControlSignal,
        report: Box<SynthesisReport>,
    },
}

struct Evaluation {
    terminal: DVector<f64>,
    jacobian: Jacobian,
    objective: f64,
    error: f64,
}

struct Problem {
    model: RobustModel,
    initial: Vec<CoefficientState>,
    target: DVector<f64>,
    objective: Objective,
}

impl Problem {
    fn new(config: &SynthesisConfig) -> Result<Self> {
        let model = config.model()?;
        let initial = config
            .state_pairs
            .iter()
            .map(|p| embed_initial(&vectorize(&p.initial), config.n_alpha, config.n_beta))
            .collect();
        let targets: Vec<DVector<f64>> = config
            .state_pairs
            .iter()
            .map(|p| {
                embed_initial(&vectorize(&p.target), config.n_alpha, config.n_beta).into_values()
            })
            .collect();
        Ok(Problem {
            model,
            initial,
            target: concat(&targets),
            objective: config.objective,
        })
    }

    fn evaluate(&self, u: &ControlSignal, with_jacobian: bool) -> Result<Evaluation> {
        let trajs = propagate_batch(&self.model, u, &self.initial)?;
        let terminals: Vec<DVector<f64>> = trajs
            .iter()
            .map(|t| t.terminal().values().clone())
            .collect();
        let terminal = concat(&terminals);
        let jacobian = if with_jacobian {
            let parts: Vec<Jacobian> = trajs
                .iter()
                .map(|t| jacobian(&self.model, t, u.dt()))
                .collect();
            Jacobian::stack(&parts)
        } else {
            Jacobian {
                entries: DMatrix::zeros(0, 0),
            }
        };
        let error = (&terminal - &self.target).norm();
        let objective = match self.objective {
            Objective::ErrorNorm => error * error,
            Objective::InnerProduct => self.target.dot(&terminal),
        };
        Ok(Evaluation {
            terminal,
            jacobian,
            objective,
            error,
        })
    }

    fn improves(&self, candidate: f64, incumbent: f64) -> bool {
        match self.objective {
            Objective::ErrorNorm => candidate < incumbent,
            Objective::InnerProduct => candidate > incumbent,
        }
    }
}

fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

/// Runs the iterative QP synthesis and returns the best pulse found.
pub fn synthesize(
    config: &SynthesisConfig,
) -> std::result::Result<(ControlSignal, SynthesisReport), SynthesisError> {
    let started = Stopwatch::start();
    config.validate()?;
    let problem = Problem::new(config)?;
    let mut u = config.initial_signal()?;
    let mut current = problem.evaluate(&u, true)?;
    let mut lambda0 = config.lambda0;

    let mut report = SynthesisReport {
        objective: config.objective,
        trial_iteration: Vec::new(),
        objective_trace: Vec::new(),
        error_trace: Vec::new(),
        lambda_trace: Vec::new(),
        accepted: Vec::new(),
        initial_error: current.error,
        final_objective: current.objective,
        final_error: current.error,
        iterations_used: 0,
        stop_reason: StopReason::MaxIterations,
        wall_clock: 0.0,
    };

    'outer: for iteration in 1..=config.max_iterations {
        report.iterations_used = iteration;
        let region = build_feasible_region(&u, &config.constraints)?;
        let mut doublings = 0;
        loop {
            let lambda = match config.objective {
                Objective::ErrorNorm => (lambda0 * current.error * current.error).max(LAMBDA_FLOOR),
                Objective::InnerProduct => lambda0.max(LAMBDA_FLOOR),
            };
            let solution = match config.objective {
                Objective::ErrorNorm => solve_error_qp(
                    &current.jacobian,
                    &current.terminal,
                    &problem.target,
                    lambda,
                    &region,
                ),
                Objective::InnerProduct => {
                    solve_inner_product_qp(&current.jacobian, &problem.target, lambda, &region)
                }
            };

            let trial = match solution {
                Ok(sol) => {
                    if sol.delta_u.amax() < config.tolerance {
                        report.stop_reason = StopReason::StepBelowTolerance;
                        break 'outer;
                    }
                    let candidate = config.constraints.clamp(&u.perturbed(&sol.delta_u)?);
                    let eval = problem.evaluate(&candidate, true)?;
                    Some((candidate, eval))
                }
                // an unsolved QP counts as a rejected trial
                Err(Error::QpNotConverged { .. }) | Err(Error::Singular) => None,
                Err(e) => return Err(e.into()),
            };

            let accepted = trial
                .as_ref()
                .is_some_and(|(_, eval)| problem.improves(eval.objective, current.objective));
            report.trial_iteration.push(iteration);
            report.lambda_trace.push(lambda);
            report.accepted.push(accepted);
            report
                .objective_trace
                .push(trial.as_ref().map_or(f64::NAN, |(_, e)| e.objective));
            report
                .error_trace
                .push(trial.as_ref().map_or(f64::NAN, |(_, e)| e.error));

            if accepted {
                let (candidate, eval) = trial.expect("accepted trial exists");
                let change = (eval.objective - current.objective).abs();
                u = candidate;
                current = eval;
                lambda0 = (lambda0 / 2.0).max(LAMBDA_FLOOR);
                if change < config.tolerance {
                    report.stop_reason = StopReason::ObjectiveStalled;
                    break 'outer;
                }
                break;
            }

            if doublings >= config.max_doublings {
                report.stop_reason = StopReason::Stagnation;
                report.final_objective = current.objective;
                report.final_error = current.error;
                report.wall_clock = started.seconds();
                return Err(SynthesisError::Stagnation {
                    iteration,
                    doublings,
                    pulse: u,
                    report: Box::new(report),
                });
            }
            lambda0 *= 2.0;
            doublings += 1;
        }
    }

    report.final_objective = current.objective;
    report.final_error = current.error;
    report.wall_clock = started.seconds();
    Ok((u, report))
}

/// Terminal errors of the unexpanded dynamics over a uniform `(α, β)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGrid {
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    /// `errors[(i, j)]` belongs to `(alpha_values[i], beta_values[j])`.
    pub errors: DMatrix<f64>,
}

impl ErrorGrid {
    pub fn max_error(&self) -> f64 {
        self.errors.max()
    }

    /// `(α, β, error)` rows, α-major.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.alpha_values
            .iter()
            .enumerate()
            .flat_map(move |(i, a)| {
                self.beta_values
                    .iter()
                    .enumerate()
                    .map(move |(j, b)| (*a, *b, self.errors[(i, j)]))
            })
    }
}

/// Exact terminal states of every configured pair at one parameter point.
pub fn terminal_states(
    sys: &SystemMatrices,
    pulse: &ControlSignal,
    pairs: &[StatePair],
    alpha: f64,
    beta: f64,
) -> Vec<VectorizedState> {
    pairs
        .iter()
        .map(|p| {
            propagate_exact(sys, pulse, &vectorize(&p.initial), alpha, beta)
                .pop()
                .expect("non-empty trajectory")
        })
        .collect()
}

fn grid_nodes(
    config: &SynthesisConfig,
    grid_alpha: usize,
    grid_beta: usize,
) -> Vec<(usize, usize, f64, f64)> {
    let alphas = config.alpha_interval.linspace(grid_alpha);
    let betas = config.beta_interval.linspace(grid_beta);
    let mut nodes = Vec::with_capacity(grid_alpha * grid_beta);
    for (i, a) in alphas.iter().enumerate() {
        for (j, b) in betas.iter().enumerate() {
            nodes.push((i, j, *a, *b));
        }
    }
    nodes
}

#[cfg(feature = "parallel")]
fn map_nodes<T: Send>(
    nodes: &[(usize, usize, f64, f64)],
    f: impl Fn(&(usize, usize, f64, f64)) -> T + Sync + Send,
) -> Vec<T> {
    use rayon::prelude::*;
    nodes.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_nodes<T: Send>(
    nodes: &[(usize, usize, f64, f64)],
    f: impl Fn(&(usize, usize, f64, f64)) -> T + Sync + Send,
) -> Vec<T> {
    nodes.iter().map(f).collect()
}

/// Re-simulates the unexpanded system at every grid node and records
/// `max over pairs ‖X(T; α, β) − X_T‖`.
pub fn validate_grid(
    pulse: &ControlSignal,
    config: &SynthesisConfig,
    grid_alpha: usize,
    grid_beta: usize,
) -> Result<ErrorGrid> {
    if grid_alpha < 2 || grid_beta < 2 {
        return Err(invalid(format!(
            "validation grid must be at least 2x2, got {grid_alpha}x{grid_beta}"
        )));
    }
    let sys = config.system()?;
    let targets: Vec<VectorizedState> = config
        .state_pairs
        .iter()
        .map(|p| vectorize(&p.target))
        .collect();
    let nodes = grid_nodes(config, grid_alpha, grid_beta);
    let errors = map_nodes(&nodes, |&(_, _, a, b)| {
        terminal_states(&sys, pulse, &config.state_pairs, a, b)
            .iter()
            .zip(&targets)
            .map(|(x, t)| (x.values() - t.values()).norm())
            .fold(0.0, f64::max)
    });
    Ok(ErrorGrid {
        alpha_values: config.alpha_interval.linspace(grid_alpha),
        beta_values: config.beta_interval.linspace(grid_beta),
        errors: DMatrix::from_row_iterator(grid_alpha, grid_beta, errors),
    })
}

/// Worst physicality deviation over every sample of every pair's trajectory
/// at every grid node.
pub fn grid_physicality(
    pulse: &ControlSignal,
    config: &SynthesisConfig,
    grid_alpha: usize,
    grid_beta: usize,
) -> Result<Physicality> {
    let sys = config.system()?;
    let nodes = grid_nodes(config, grid_alpha, grid_beta);
    let parts = map_nodes(&nodes, |&(_, _, a, b)| {
        config
            .state_pairs
            .iter()
            .map(|p| Physicality::of(&propagate_exact(&sys, pulse, &vectorize(&p.initial), a, b)))
            .reduce(Physicality::merge)
            .expect("at least one pair")
    });
    parts
        .into_iter()
        .reduce(Physicality::merge)
        .ok_or_else(|| invalid("empty grid"))
}

/// One sample of a simulated population trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSample {
    pub t: f64,
    pub populations: [f64; HILBERT_DIM],
    pub trace: f64,
    pub purity: f64,
}

/// Populations, trace and purity of the first configured pair at every step.
pub fn simulate_populations(
    pulse: &ControlSignal,
    config: &SynthesisConfig,
    alpha: f64,
    beta: f64,
) -> Result<Vec<PopulationSample>> {
    if !config.alpha_interval.contains(alpha) || !config.beta_interval.contains(beta) {
        return Err(invalid(format!(
            "(alpha, beta) = ({alpha}, {beta}) lies outside the configured intervals"
        )));
    }
    let pair = config
        .state_pairs
        .first()
        .ok_or_else(|| invalid("at least one state pair is required"))?;
    let sys = config.system()?;
    let traj = propagate_exact(&sys, pulse, &vectorize(&pair.initial), alpha, beta);
    Ok(traj
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let rho = densify(x);
            PopulationSample {
                t: k as f64 * pulse.dt(),
                populations: rho.populations(),
                trace: rho.trace().re,
                purity: rho.purity(),
            }
        })
        .collect())
}

/// Largest deviation between the reconstructed lifted terminal state and
/// direct integration over a `grid × grid` set of parameter points.
#[allow(clippy::too_many_arguments)]
pub fn lift_consistency(
    sys: &SystemMatrices,
    pulse: &ControlSignal,
    x0: &VectorizedState,
    alpha_interval: UncertainInterval,
    beta_interval: UncertainInterval,
    n_alpha: usize,
    n_beta: usize,
    grid: usize,
) -> Result<f64> {
    let model = lift_system(sys, alpha_interval, n_alpha, beta_interval, n_beta);
    let traj = crate::propagation::propagate(&model, pulse, &embed_initial(x0, n_alpha, n_beta))?;
    let points: Vec<f64> = UncertainInterval::new(-1.0, 1.0)?.linspace(grid);
    let mut worst: f64 = 0.0;
    for &a in &points {
        for &b in &points {
            let lifted = reconstruct(traj.terminal(), a, b)?;
            let exact = propagate_exact(
                sys,
                pulse,
                x0,
                map_parameter(&alpha_interval, a),
                map_parameter(&beta_interval, b),
            );
            let err = (lifted.values() - exact.last().unwrap().values()).amax();
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
