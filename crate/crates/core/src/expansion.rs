//! Legendre lift of the parameter-dependent system.
//!
//! The state `X(t; α(a), β(b))` over the uncertainty box is expanded in
//! orthonormal Legendre polynomials `L_p(a) L_q(b)`. Multiplication by `a`
//! in that basis is the symmetric tridiagonal matrix built by [`build_c`],
//! so the coefficient dynamics are again bilinear with Kronecker-structured
//! generators.
//!
//! Coefficient blocks are stored p-major: block `(p, q)` starts at
//! `(p (N_β + 1) + q) · 32`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{SystemMatrices, VectorizedState, N_CONTROLS, STATE_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct UncertainInterval {
    lo: f64,
    hi: f64,
}

impl UncertainInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(invalid(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(UncertainInterval { lo, hi })
    }

    /// Degenerate interval `[v, v]`.
    pub fn point(v: f64) -> Self {
        UncertainInterval { lo: v, hi: v }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.hi + self.lo)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// `n` equally spaced points spanning the interval, endpoints included.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        match n {
            0 => vec![],
            1 => vec![self.center()],
            _ => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

impl TryFrom<[f64; 2]> for UncertainInterval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        UncertainInterval::new(v[0], v[1])
    }
}

impl From<UncertainInterval> for [f64; 2] {
    fn from(iv: UncertainInterval) -> Self {
        [iv.lo, iv.hi]
    }
}

/// `ξ̲ s + ξ̄`: maps `s ∈ [-1, 1]` onto the interval.
pub fn map_parameter(interval: &UncertainInterval, s: f64) -> f64 {
    interval.half_width() * s + interval.center()
}

/// `c_p = (p + 1) / sqrt((2p + 3)(2p + 1))`.
pub fn recurrence_coeff(p: usize) -> f64 {
    let p = p as f64;
    (p + 1.0) / ((2.0 * p + 3.0) * (2.0 * p + 1.0)).sqrt()
}

/// Orthonormal Legendre polynomial `L_p(x)` on `[-1, 1]`.
pub fn legendre_eval(p: usize, x: f64) -> Result<f64> {
    if x.is_nan() || x.abs() > 1.0 {
        return Err(invalid(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(p, x))
}

fn legendre_unchecked(p: usize, x: f64) -> f64 {
    let l0 = std::f64::consts::FRAC_1_SQRT_2;
    if p == 0 {
        return l0;
    }
    let mut prev = l0;
    let mut cur = x * l0 / recurrence_coeff(0);
    for k in 1..p {
        let next = (x * cur - recurrence_coeff(k - 1) * prev) / recurrence_coeff(k);
        prev = cur;
        cur = next;
    }
    cur
}

/// Tridiagonal multiplication operator of the uncertain parameter in the
/// normalized Legendre basis of degree `n`.
pub fn build_c(interval: &UncertainInterval, n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::from_diagonal_element(n + 1, n + 1, interval.center());
    for p in 0..n {
        let v = recurrence_coeff(p) * interval.half_width();
        c[(p, p + 1)] = v;
        c[(p + 1, p)] = v;
    }
    c
}

/// Eigen-decomposition of the two tridiagonal factors. Because every lifted
/// generator is `V (block-diagonal) V'` with `V = V_α ⊗ V_β ⊗ I`, the
/// coefficient dynamics split into independent copies of the base system,
/// one per pair of eigenvalues.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub alpha_values: DVector<f64>,
    pub alpha_vectors: DMatrix<f64>,
    pub beta_values: DVector<f64>,
    pub beta_vectors: DMatrix<f64>,
}

impl ModalBasis {
    fn new(c_alpha: &DMatrix<f64>, c_beta: &DMatrix<f64>) -> Self {
        let ea = SymmetricEigen::new(c_alpha.clone());
        let eb = SymmetricEigen::new(c_beta.clone());
        ModalBasis {
            alpha_values: ea.eigenvalues,
            alpha_vectors: ea.eigenvectors,
            beta_values: eb.eigenvalues,
            beta_vectors: eb.eigenvectors,
        }
    }

    pub fn blocks(&self) -> usize {
        self.alpha_values.len() * self.beta_values.len()
    }

    /// `(α, β)` effective parameter values of modal block `idx`.
    pub fn block_parameters(&self, idx: usize) -> (f64, f64) {
        let nb = self.beta_values.len();
        (self.alpha_values[idx / nb], self.beta_values[idx % nb])
    }

    fn mix(&self, x: &DVector<f64>, transpose: bool) -> DVector<f64> {
        let na = self.alpha_values.len();
        let nb = self.beta_values.len();
        let mut out = DVector::zeros(x.len());
        for i in 0..na {
            for j in 0..nb {
                let dst = (i * nb + j) * STATE_LEN;
                for p in 0..na {
                    for q in 0..nb {
                        let w = if transpose {
                            self.alpha_vectors[(p, i)] * self.beta_vectors[(q, j)]
                        } else {
                            self.alpha_vectors[(i, p)] * self.beta_vectors[(j, q)]
                        };
                        if w == 0.0 {
                            continue;
                        }
                        let src = (p * nb + q) * STATE_LEN;
                        out.rows_mut(dst, STATE_LEN)
                            .axpy(w, &x.rows(src, STATE_LEN), 1.0);
                    }
                }
            }
        }
        out
    }

    /// Coefficient coordinates to modal coordinates, `V' x`.
    pub fn to_modal(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mix(x, true)
    }

    /// Modal coordinates back to coefficient coordinates, `V y`.
    pub fn from_modal(&self, y: &DVector<f64>) -> DVector<f64> {
        self.mix(y, false)
    }
}

/// The lifted bilinear system for an uncertainty box.
#[derive(Debug, Clone)]
pub struct RobustModel {
    pub drift_lifted: DMatrix<f64>,
    pub controls_lifted: [DMatrix<f64>; N_CONTROLS],
    pub n_alpha: usize,
    pub n_beta: usize,
    pub alpha_interval: UncertainInterval,
    pub beta_interval: UncertainInterval,
    pub base: SystemMatrices,
    pub modal: ModalBasis,
}

impl RobustModel {
    pub fn blocks(&self) -> usize {
        (self.n_alpha + 1) * (self.n_beta + 1)
    }

    /// Side of the lifted matrices, `32 (N_α + 1)(N_β + 1)`.
    pub fn dim(&self) -> usize {
        STATE_LEN * self.blocks()
    }
}

pub fn lift_system(
    sys: &SystemMatrices,
    alpha_interval: UncertainInterval,
    n_alpha: usize,
    beta_interval: UncertainInterval,
    n_beta: usize,
) -> RobustModel {
    let c_alpha = build_c(&alpha_interval, n_alpha);
    let c_beta = build_c(&beta_interval, n_beta);
    let id_alpha = DMatrix::<f64>::identity(n_alpha + 1, n_alpha + 1);
    let id_beta = DMatrix::<f64>::identity(n_beta + 1, n_beta + 1);
    let drift_lifted = c_alpha.kronecker(&id_beta).kronecker(&sys.drift);
    let outer = id_alpha.kronecker(&c_beta);
    let controls_lifted = std::array::from_fn(|c| outer.kronecker(&sys.controls[c]));
    RobustModel {
        drift_lifted,
        controls_lifted,
        n_alpha,
        n_beta,
        alpha_interval,
        beta_interval,
        base: sys.clone(),
        modal: ModalBasis::new(&c_alpha, &c_beta),
    }
}

/// Stacked Legendre coefficients of a vectorized state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState {
    values: DVector<f64>,
    n_alpha: usize,
    n_beta: usize,
}

impl CoefficientState {
    pub fn new(values: DVector<f64>, n_alpha: usize, n_beta: usize) -> Result<Self> {
        let expected = STATE_LEN * (n_alpha + 1) * (n_beta + 1);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(CoefficientState {
            values,
            n_alpha,
            n_beta,
        })
    }

    pub fn zeros(n_alpha: usize, n_beta: usize) -> Self {
        CoefficientState {
            values: DVector::zeros(STATE_LEN * (n_alpha + 1) * (n_beta + 1)),
            n_alpha,
            n_beta,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn n_beta(&self) -> usize {
        self.n_beta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, p: usize, q: usize) -> DVector<f64> {
        let start = (p * (self.n_beta + 1) + q) * STATE_LEN;
        self.values.rows(start, STATE_LEN).clone_owned()
    }

    pub(crate) fn with_values(&self, values: DVector<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        CoefficientState {
            values,
            n_alpha: self.n_alpha,
            n_beta: self.n_beta,
        }
    }
}

/// Projects a parameter-independent state: block `(0, 0)` is `2 x0`.
pub fn embed_initial(x0: &VectorizedState, n_alpha: usize, n_beta: usize) -> CoefficientState {
    let mut out = CoefficientState::zeros(n_alpha, n_beta);
    out.values
        .rows_mut(0, STATE_LEN)
        .copy_from(&(x0.values() * 2.0));
    out
}

/// Truncated series `Σ x_pq L_p(a) L_q(b)` at normalized parameters `(a, b)`.
pub fn reconstruct(x: &CoefficientState, a: f64, b: f64) -> Result<VectorizedState> {
    if !(a.abs() <= 1.0 && b.abs() <= 1.0) {
        return Err(invalid(format!(
            "reconstruction point ({a}, {b}) outside [-1, 1]^2"
        )));
    }
    let la: Vec<f64> = (0..=x.n_alpha).map(|p| legendre_unchecked(p, a)).collect();
    let lb: Vec<f64> = (0..=x.n_beta).map(|q| legendre_unchecked(q, b)).collect();
    let mut out = DVector::zeros(STATE_LEN);
    for (p, lp) in la.iter().enumerate() {
        for (q, lq) in lb.iter().enumerate() {
            let start = (p * (x.n_beta + 1) + q) * STATE_LEN;
            out.axpy(lp * lq, &x.values.rows(start, STATE_LEN), 1.0);
        }
    }
    VectorizedState::new(out)
}
