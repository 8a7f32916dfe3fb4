//! Piecewise-constant propagation of the lifted system and the approximate
//! terminal-state Jacobian.
//!
//! Sample `u_k` is held on `[t_k, t_{k+1})`. Internally the lifted system is
//! propagated in the modal basis of [`crate::expansion::ModalBasis`], where
//! each step is a set of independent 32×32 exponentials; dense lifted
//! propagators are available through [`step_propagator`] and
//! [`StepPropagator::to_dense`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expansion::{CoefficientState, ModalBasis, RobustModel};
use crate::expm::expm;
use crate::model::{N_CONTROLS, STATE_LEN};

/// Piecewise-constant amplitudes `(u1x, u1y, u2x, u2y)` per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    samples: Vec<[f64; N_CONTROLS]>,
    dt: f64,
}

impl ControlSignal {
    pub fn new(samples: Vec<[f64; N_CONTROLS]>, dt: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("control signal needs at least one step"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if let Some(k) = samples
            .iter()
            .position(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid(format!("non-finite amplitude at step {k}")));
        }
        Ok(ControlSignal { samples, dt })
    }

    pub fn zeros(steps: usize, dt: f64) -> Result<Self> {
        Self::new(vec![[0.0; N_CONTROLS]; steps], dt)
    }

    /// Builds from the stacked `4K` vector `[u_0; u_1; …]`.
    pub fn from_vector(v: &DVector<f64>, dt: f64) -> Result<Self> {
        if !v.len().is_multiple_of(N_CONTROLS) {
            return Err(invalid(format!(
                "control vector length {} is not a multiple of 4",
                v.len()
            )));
        }
        let samples = v
            .as_slice()
            .chunks_exact(N_CONTROLS)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        Self::new(samples, dt)
    }

    pub fn steps(&self) -> usize {
        self.samples.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn sample(&self, k: usize) -> [f64; N_CONTROLS] {
        self.samples[k]
    }

    pub fn samples(&self) -> &[[f64; N_CONTROLS]] {
        &self.samples
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.samples.len() * N_CONTROLS,
            self.samples.iter().flat_map(|s| s.iter().copied()),
        )
    }

    pub fn perturbed(&self, delta: &DVector<f64>) -> Result<Self> {
        if delta.len() != self.samples.len() * N_CONTROLS {
            return Err(Error::DimensionMismatch {
                expected: self.samples.len() * N_CONTROLS,
                actual: delta.len(),
            });
        }
        Self::from_vector(&(self.to_vector() + delta), self.dt)
    }
}

/// One step of the lifted dynamics, held as its modal blocks.
#[derive(Debug, Clone)]
pub struct StepPropagator {
    blocks: Vec<DMatrix<f64>>,
}

impl StepPropagator {
    pub fn new(model: &RobustModel, u_k: &[f64; N_CONTROLS], dt: f64) -> Self {
        let blocks = (0..model.modal.blocks())
            .map(|idx| {
                let (a, b) = model.modal.block_parameters(idx);
                expm(&(model.base.generator(u_k, a, b) * dt))
            })
            .collect();
        StepPropagator { blocks }
    }

    /// Applies the step to a state in modal coordinates.
    pub fn apply_modal(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(y.len());
        for (idx, e) in self.blocks.iter().enumerate() {
            let r = idx * STATE_LEN;
            out.rows_mut(r, STATE_LEN)
                .gemv(1.0, e, &y.rows(r, STATE_LEN), 0.0);
        }
        out
    }

    pub fn modal_blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Dense lifted matrix `U_k` in coefficient coordinates.
    pub fn to_dense(&self, modal: &ModalBasis) -> DMatrix<f64> {
        let na = modal.alpha_values.len();
        let nb = modal.beta_values.len();
        let nblk = na * nb;
        let mut out = DMatrix::zeros(nblk * STATE_LEN, nblk * STATE_LEN);
        for row in 0..nblk {
            let (p, q) = (row / nb, row % nb);
            for col in 0..nblk {
                let (pp, qq) = (col / nb, col % nb);
                let mut view =
                    out.view_mut((row * STATE_LEN, col * STATE_LEN), (STATE_LEN, STATE_LEN));
                for (idx, e) in self.blocks.iter().enumerate() {
                    let (i, j) = (idx / nb, idx % nb);
                    let w = modal.alpha_vectors[(p, i)]
                        * modal.beta_vectors[(q, j)]
                        * modal.alpha_vectors[(pp, i)]
                        * modal.beta_vectors[(qq, j)];
                    if w != 0.0 {
                        view += e * w;
                    }
                }
            }
        }
        out
    }
}

/// `exp(dt (A + Σ u_c B_c))` for the lifted system.
pub fn step_propagator(model: &RobustModel, u_k: &[f64; N_CONTROLS], dt: f64) -> DMatrix<f64> {
    StepPropagator::new(model, u_k, dt).to_dense(&model.modal)
}

/// Reference path: exponential of the dense lifted generator.
pub fn step_propagator_direct(
    model: &RobustModel,
    u_k: &[f64; N_CONTROLS],
    dt: f64,
) -> DMatrix<f64> {
    let mut m = model.drift_lifted.clone();
    for (b, amp) in model.controls_lifted.iter().zip(u_k) {
        m += b * *amp;
    }
    expm(&(m * dt))
}

/// States `x_0 … x_K` with the step propagators that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<CoefficientState>,
    pub propagators: Arc<[StepPropagator]>,
    modal_states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &CoefficientState {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    pub fn steps(&self) -> usize {
        self.propagators.len()
    }
}

fn check_state(model: &RobustModel, x0: &CoefficientState) -> Result<()> {
    if x0.len() != model.dim() || x0.n_alpha() != model.n_alpha || x0.n_beta() != model.n_beta {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x0.len(),
        });
    }
    Ok(())
}

fn run(model: &RobustModel, props: Arc<[StepPropagator]>, x0: &CoefficientState) -> Trajectory {
    let mut modal_states = Vec::with_capacity(props.len() + 1);
    let mut states = Vec::with_capacity(props.len() + 1);
    let mut y = model.modal.to_modal(x0.values());
    states.push(x0.clone());
    modal_states.push(y.clone());
    for step in props.iter() {
        y = step.apply_modal(&y);
        states.push(x0.with_values(model.modal.from_modal(&y)));
        modal_states.push(y.clone());
    }
    Trajectory {
        states,
        propagators: props,
        modal_states,
    }
}

fn step_propagators(model: &RobustModel, u: &ControlSignal) -> Arc<[StepPropagator]> {
    u.samples()
        .iter()
        .map(|s| StepPropagator::new(model, s, u.dt()))
        .collect()
}

/// `x_K = U_{K-1} ⋯ U_0 x_0`, keeping every intermediate state.
pub fn propagate(
    model: &RobustModel,
    u: &ControlSignal,
    x0: &CoefficientState,
) -> Result<Trajectory> {
    check_state(model, x0)?;
    Ok(run(model, step_propagators(model, u), x0))
}

/// Propagates several initial states under one pulse, sharing the step
/// propagators.
pub fn propagate_batch(
    model: &RobustModel,
    u: &ControlSignal,
    x0s: &[CoefficientState],
) -> Result<Vec<Trajectory>> {
    for x0 in x0s {
        check_state(model, x0)?;
    }
    let props = step_propagators(model, u);
    Ok(x0s.iter().map(|x0| run(model, props.clone(), x0)).collect())
}

/// Terminal-state sensitivities, one column per `(step, channel)` at index
/// `4k + channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub entries: DMatrix<f64>,
}

impl Jacobian {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Vertical concatenation, for several state pairs driven by one pulse.
    pub fn stack(parts: &[Jacobian]) -> Jacobian {
        let rows: usize = parts.iter().map(|j| j.nrows()).sum();
        let cols = parts.first().map_or(0, |j| j.ncols());
        let mut entries = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for part in parts {
            entries
                .view_mut((r, 0), (part.nrows(), cols))
                .copy_from(&part.entries);
            r += part.nrows();
        }
        Jacobian { entries }
    }
}

/// Approximate Jacobian with `∂U_k/∂u ≈ dt B U_k`, so column `(k, c)` is
/// `U_{K-1} ⋯ U_{k+1} dt B_c x_{k+1}`.
///
/// The left products are accumulated backward per modal block and never
/// stored, so memory stays `O(K n)`.
pub fn jacobian(model: &RobustModel, traj: &Trajectory, dt: f64) -> Jacobian {
    let steps = traj.steps();
    let dim = model.dim();
    let mut modal_cols = DMatrix::zeros(dim, N_CONTROLS * steps);
    for idx in 0..model.modal.blocks() {
        let (_, beta) = model.modal.block_parameters(idx);
        let r = idx * STATE_LEN;
        let mut left = DMatrix::<f64>::identity(STATE_LEN, STATE_LEN);
        for k in (0..steps).rev() {
            let y_next = traj.modal_states[k + 1].rows(r, STATE_LEN);
            for (c, b) in model.base.controls.iter().enumerate() {
                let v = b * y_next * (dt * beta);
                let col = &left * v;
                modal_cols
                    .view_mut((r, N_CONTROLS * k + c), (STATE_LEN, 1))
                    .copy_from(&col);
            }
            left = &left * &traj.propagators[k].blocks[idx];
        }
    }
    let mut entries = DMatrix::zeros(dim, N_CONTROLS * steps);
    for (j, col) in modal_cols.column_iter().enumerate() {
        entries.set_column(j, &model.modal.from_modal(&col.clone_owned()));
    }
    Jacobian { entries }
}
