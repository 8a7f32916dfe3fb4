//! Robust open-loop pulse synthesis for two-qubit gates under Lindblad
//! dynamics with uncertain coupling and drive strength.
//!
//! The pipeline: build the real vectorized Lindblad generators
//! ([`model`]), lift them over a Legendre expansion of the uncertainty box
//! ([`expansion`]), propagate and linearize the lifted system
//! ([`propagation`]), and iterate regularized quadratic programs over the
//! pulse ([`qp`], [`synthesis`]). [`config`] and [`io`] back the `qgate`
//! command-line tool.

pub mod config;
pub mod error;
pub mod expansion;
pub mod expm;
pub mod io;
pub mod model;
pub mod propagation;
pub mod qp;
pub mod synthesis;

pub use error::{Error, Result};
pub use expansion::{CoefficientState, RobustModel, UncertainInterval};
pub use model::{DensityMatrix, SystemMatrices, VectorizedState};
pub use propagation::{ControlSignal, Jacobian, Trajectory};
pub use qp::{QpSolution, SignalConstraints};

pub use synthesis::{ErrorGrid, Gate, SynthesisConfig, SynthesisReport};
