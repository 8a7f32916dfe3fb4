//! Per-iteration quadratic programs over the pulse perturbation `δu`.
//!
//! Both programs are strictly convex for `λ > 0` and share one solver:
//! minimize `½ δᵀHδ + gᵀδ` subject to box bounds and sparse two-sided rows.
//! The solver is a primal active-set method started from `δ = 0`, which is
//! always feasible. Box-only problems are first warm-started with a few
//! primal-dual active-set sweeps, which usually identify the final active
//! set in a handful of linear solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::N_CONTROLS;
use crate::propagation::{ControlSignal, Jacobian};

pub const KKT_TOLERANCE: f64 = 1e-8;
pub const MAX_QP_ITERATIONS: usize = 10_000;
const FEASIBILITY_SLACK: f64 = 1e-9;
const WARM_START_SWEEPS: usize = 50;

/// Amplitude and optional rate limits on every control channel. Rates are
/// in amplitude per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignalConstraints {
    pub u_min: f64,
    pub u_max: f64,
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
}

impl SignalConstraints {
    pub fn amplitude(u_min: f64, u_max: f64) -> Self {
        SignalConstraints {
            u_min,
            u_max,
            rate_min: None,
            rate_max: None,
        }
    }

    pub fn unbounded() -> Self {
        Self::amplitude(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn with_rates(mut self, rate_min: f64, rate_max: f64) -> Self {
        self.rate_min = Some(rate_min);
        self.rate_max = Some(rate_max);
        self
    }

    pub fn has_rates(&self) -> bool {
        self.rate_min.is_some() || self.rate_max.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_min.is_nan() || self.u_max.is_nan() || self.u_min > self.u_max {
            return Err(invalid(format!(
                "amplitude bounds [{}, {}] are empty",
                self.u_min, self.u_max
            )));
        }
        let lo = self.rate_min.unwrap_or(f64::NEG_INFINITY);
        let hi = self.rate_max.unwrap_or(f64::INFINITY);
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid(format!("rate bounds [{lo}, {hi}] are empty")));
        }
        Ok(())
    }

    /// Clamps amplitudes into the box. Rate limits are not touched.
    pub fn clamp(&self, u: &ControlSignal) -> ControlSignal {
        let samples = u
            .samples()
            .iter()
            .map(|s| s.map(|v| v.clamp(self.u_min, self.u_max)))
            .collect();
        ControlSignal::new(samples, u.dt()).expect("clamping keeps a valid signal")
    }
}

/// Two-sided sparse inequality `lo ≤ Σ coef·δ[idx] ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl LinearRow {
    fn dot(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|(i, c)| c * x[*i]).sum()
    }
}

/// Feasible set for `δu`: a box plus rate-difference rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub rows: Vec<LinearRow>,
}

impl FeasibleRegion {
    pub fn unbounded(n: usize) -> Self {
        FeasibleRegion {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Largest constraint violation of `x`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..x.len() {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        for row in &self.rows {
            let ax = row.dot(x);
            v = v.max(row.lo - ax).max(ax - row.hi);
        }
        v
    }
}

/// Box and rate constraints on `δu` such that `u + δu` meets `c`.
pub fn build_feasible_region(u: &ControlSignal, c: &SignalConstraints) -> Result<FeasibleRegion> {
    c.validate()?;
    let steps = u.steps();
    let n = steps * N_CONTROLS;
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for (k, s) in u.samples().iter().enumerate() {
        for (ch, &v) in s.iter().enumerate() {
            if v < c.u_min - FEASIBILITY_SLACK {
                return Err(Error::InfeasiblePulse {
                    constraint: "lower amplitude bound",
                    step: k,
                    channel: ch,
                    value: v,
                });
            }
            if v > c.u_max + FEASIBILITY_SLACK {
                return Err(Error::InfeasiblePulse {
                    constraint: "upper amplitude bound",
                    step: k,
                    channel: ch,
                    value: v,
                });
            }
            let i = k * N_CONTROLS + ch;
            lower[i] = (c.u_min - v).min(0.0);
            upper[i] = (c.u_max - v).max(0.0);
        }
    }

    let mut rows = Vec::new();
    if c.has_rates() {
        let dt = u.dt();
        let lo_rate = c.rate_min.unwrap_or(f64::NEG_INFINITY) * dt;
        let hi_rate = c.rate_max.unwrap_or(f64::INFINITY) * dt;
        for ch in 0..N_CONTROLS {
            for k in 0..steps.saturating_sub(1) {
                let diff = u.sample(k + 1)[ch] - u.sample(k)[ch];
                if diff < lo_rate - FEASIBILITY_SLACK {
                    return Err(Error::InfeasiblePulse {
                        constraint: "lower rate bound",
                        step: k,
                        channel: ch,
                        value: diff / dt,
                    });
                }
                if diff > hi_rate + FEASIBILITY_SLACK {
                    return Err(Error::InfeasiblePulse {
                        constraint: "upper rate bound",
                        step: k,
                        channel: ch,
                        value: diff / dt,
                    });
                }
                rows.push(LinearRow {
                    terms: vec![
                        ((k + 1) * N_CONTROLS + ch, 1.0),
                        (k * N_CONTROLS + ch, -1.0),
                    ],
                    lo: (lo_rate - diff).min(0.0),
                    hi: (hi_rate - diff).max(0.0),
                });
            }
        }
    }
    Ok(FeasibleRegion { lower, upper, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub delta_u: DVector<f64>,
    pub kkt_residual: f64,
    pub active_set_size: usize,
    pub iterations: usize,
}

/// `max ⟨x_T | Q δu⟩ - (λ/2)‖δu‖²` over the region.
pub fn solve_inner_product_qp(
    q: &Jacobian,
    x_target: &DVector<f64>,
    lambda: f64,
    region: &FeasibleRegion,
) -> Result<QpSolution> {
    check_lambda(lambda)?;
    check_dims(q, x_target, region)?;
    let n = q.ncols();
    let h = DMatrix::from_diagonal_element(n, n, lambda);
    let g = -(q.entries.tr_mul(x_target));
    solve_convex_qp(&h, &g, region)
}

/// `min ½‖Q δu + x_K - x_T‖² + (λ/2)‖δu‖²` over the region.
pub fn solve_error_qp(
    q: &Jacobian,
    x_terminal: &DVector<f64>,
    x_target: &DVector<f64>,
    lambda: f64,
    region: &FeasibleRegion,
) -> Result<QpSolution> {
    check_lambda(lambda)?;
    check_dims(q, x_target, region)?;
    check_dims(q, x_terminal, region)?;
    let n = q.ncols();
    let mut h = q.entries.tr_mul(&q.entries);
    for i in 0..n {
        h[(i, i)] += lambda;
    }
    let g = q.entries.tr_mul(&(x_terminal - x_target));
    solve_convex_qp(&h, &g, region)
}

/// Unconstrained inner-product step `(1/λ) Qᵀ x_T`.
pub fn closed_form_gradient(q: &Jacobian, x_target: &DVector<f64>, lambda: f64) -> DVector<f64> {
    q.entries.tr_mul(x_target) / lambda
}

/// Unconstrained error step `-(QᵀQ + λI)⁻¹ Qᵀ (x_K - x_T)`, solved in the
/// smaller of the control and state dimensions.
pub fn closed_form_levenberg(
    q: &Jacobian,
    x_terminal: &DVector<f64>,
    x_target: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let r = x_terminal - x_target;
    let qm = &q.entries;
    if qm.nrows() < qm.ncols() {
        // δ = -Qᵀ (QQᵀ + λI)⁻¹ r
        let mut m = qm * qm.transpose();
        for i in 0..m.nrows() {
            m[(i, i)] += lambda;
        }
        let z = spd_solve(m, &r);
        -(qm.tr_mul(&z))
    } else {
        let mut m = qm.tr_mul(qm);
        for i in 0..m.nrows() {
            m[(i, i)] += lambda;
        }
        -spd_solve(m, &qm.tr_mul(&r))
    }
}

fn spd_solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    match m.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => m
            .lu()
            .solve(rhs)
            .expect("regularized normal matrix is nonsingular"),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!(
            "regularization must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn check_dims(q: &Jacobian, x: &DVector<f64>, region: &FeasibleRegion) -> Result<()> {
    if q.nrows() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: q.nrows(),
            actual: x.len(),
        });
    }
    if q.ncols() != region.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.ncols(),
            actual: region.dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// Working set of the active-set iteration.
struct WorkingSet {
    bounds: Vec<Option<Side>>,
    pinned: Vec<bool>,
    rows: Vec<(usize, Side)>,
}

impl WorkingSet {
    fn size(&self) -> usize {
        self.bounds.iter().filter(|b| b.is_some()).count() + self.rows.len()
    }
}

/// Minimizes `½ xᵀHx + gᵀx` over `region` for symmetric positive definite `H`.
pub fn solve_convex_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    region: &FeasibleRegion,
) -> Result<QpSolution> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || region.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: h.nrows(),
        });
    }
    for i in 0..n {
        if !(region.lower[i] <= 0.0 && region.upper[i] >= 0.0) {
            return Err(invalid(format!("zero is not feasible for variable {i}")));
        }
    }
    if region.rows.iter().any(|r| !(r.lo <= 0.0 && r.hi >= 0.0)) {
        return Err(invalid("zero is not feasible for a linear row"));
    }

    let pinned: Vec<bool> = (0..n).map(|i| region.lower[i] == region.upper[i]).collect();
    let (mut x, mut ws) = if region.rows.is_empty() {
        warm_start(h, g, region, &pinned)
    } else {
        let bounds = (0..n)
            .map(|i| {
                if pinned[i] || region.upper[i] == 0.0 {
                    Some(Side::Upper)
                } else if region.lower[i] == 0.0 {
                    Some(Side::Lower)
                } else {
                    None
                }
            })
            .collect();
        (
            DVector::zeros(n),
            WorkingSet {
                bounds,
                pinned,
                rows: Vec::new(),
            },
        )
    };

    let scale = g.amax().max(1.0);
    let mut iterations = 0;
    let mut nu = DVector::zeros(0);
    loop {
        iterations += 1;
        if iterations > MAX_QP_ITERATIONS {
            let residual = kkt_residual(h, g, region, &x, &ws, &nu);
            return Err(Error::QpNotConverged {
                iterations: MAX_QP_ITERATIONS,
                residual,
                best: x.iter().copied().collect(),
            });
        }
        let (p, new_nu) = solve_subspace(h, g, region, &x, &ws)?;
        nu = new_nu;

        // ratio test against constraints outside the working set
        let mut step = 1.0;
        let mut blocking: Option<Blocking> = None;
        for i in 0..n {
            if ws.bounds[i].is_some() || p[i] == 0.0 {
                continue;
            }
            let (limit, side) = if p[i] > 0.0 {
                (region.upper[i], Side::Upper)
            } else {
                (region.lower[i], Side::Lower)
            };
            if !limit.is_finite() {
                continue;
            }
            let ratio = ((limit - x[i]) / p[i]).max(0.0);
            if ratio < step {
                step = ratio;
                blocking = Some(Blocking::Bound(i, side));
            }
        }
        for (r, row) in region.rows.iter().enumerate() {
            if ws.rows.iter().any(|(idx, _)| *idx == r) {
                continue;
            }
            let ap = row.dot(&p);
            let ax = row.dot(&x);
            let candidate = if ap > 0.0 && row.hi.is_finite() {
                Some(((row.hi - ax) / ap, Side::Upper))
            } else if ap < 0.0 && row.lo.is_finite() {
                Some(((row.lo - ax) / ap, Side::Lower))
            } else {
                None
            };
            if let Some((ratio, side)) = candidate {
                let ratio = ratio.max(0.0);
                if ratio < step {
                    step = ratio;
                    blocking = Some(Blocking::Row(r, side));
                }
            }
        }

        x.axpy(step, &p, 1.0);
        match blocking {
            Some(Blocking::Bound(i, side)) => {
                x[i] = match side {
                    Side::Upper => region.upper[i],
                    Side::Lower => region.lower[i],
                };
                ws.bounds[i] = Some(side);
                continue;
            }
            Some(Blocking::Row(r, side)) => {
                ws.rows.push((r, side));
                continue;
            }
            None => {}
        }

        // at the subspace minimizer: check multiplier signs
        let grad = full_gradient(h, g, region, &x, &ws, &nu);
        let mut worst: Option<(Release, f64)> = None;
        for i in 0..n {
            if ws.pinned[i] {
                continue;
            }
            if let Some(side) = ws.bounds[i] {
                let mu = bound_multiplier(side, grad[i]);
                if worst.as_ref().is_none_or(|(_, m)| mu < *m) {
                    worst = Some((Release::Bound(i), mu));
                }
            }
        }
        for (slot, (_, side)) in ws.rows.iter().enumerate() {
            let mu = row_multiplier(*side, nu[slot]);
            if worst.as_ref().is_none_or(|(_, m)| mu < *m) {
                worst = Some((Release::Row(slot), mu));
            }
        }
        match worst {
            Some((release, mu)) if mu < -1e-12 * scale => match release {
                Release::Bound(i) => ws.bounds[i] = None,
                Release::Row(slot) => {
                    ws.rows.remove(slot);
                }
            },
            _ => break,
        }
    }

    let kkt = kkt_residual(h, g, region, &x, &ws, &nu);
    if kkt > KKT_TOLERANCE {
        return Err(Error::QpNotConverged {
            iterations,
            residual: kkt,
            best: x.iter().copied().collect(),
        });
    }
    Ok(QpSolution {
        delta_u: x,
        kkt_residual: kkt,
        active_set_size: ws.size(),
        iterations,
    })
}

enum Blocking {
    Bound(usize, Side),
    Row(usize, Side),
}

enum Release {
    Bound(usize),
    Row(usize),
}

fn bound_multiplier(side: Side, grad: f64) -> f64 {
    match side {
        Side::Upper => -grad,
        Side::Lower => grad,
    }
}

fn row_multiplier(side: Side, nu: f64) -> f64 {
    match side {
        Side::Upper => nu,
        Side::Lower => -nu,
    }
}

/// `Hx + g + Σ ν_r a_r` over all variables.
fn full_gradient(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    region: &FeasibleRegion,
    x: &DVector<f64>,
    ws: &WorkingSet,
    nu: &DVector<f64>,
) -> DVector<f64> {
    let mut grad = h * x + g;
    for (slot, (r, _)) in ws.rows.iter().enumerate() {
        for (i, c) in &region.rows[*r].terms {
            grad[*i] += c * nu[slot];
        }
    }
    grad
}

fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    region: &FeasibleRegion,
    x: &DVector<f64>,
    ws: &WorkingSet,
    nu: &DVector<f64>,
) -> f64 {
    if nu.len() != ws.rows.len() {
        return f64::INFINITY;
    }
    let grad = full_gradient(h, g, region, x, ws, nu);
    let mut res: f64 = region.violation(x).max(0.0);
    for i in 0..x.len() {
        match ws.bounds[i] {
            None => res = res.max(grad[i].abs()),
            Some(side) if !ws.pinned[i] => {
                let mu = bound_multiplier(side, grad[i]);
                let slack = match side {
                    Side::Upper => region.upper[i] - x[i],
                    Side::Lower => x[i] - region.lower[i],
                };
                res = res.max((-mu).max(0.0)).max((mu * slack).abs());
            }
            Some(_) => {}
        }
    }
    for (slot, (r, side)) in ws.rows.iter().enumerate() {
        let mu = row_multiplier(*side, nu[slot]);
        let ax = region.rows[*r].dot(x);
        let slack = match side {
            Side::Upper => region.rows[*r].hi - ax,
            Side::Lower => ax - region.rows[*r].lo,
        };
        res = res.max((-mu).max(0.0)).max((mu * slack).abs());
    }
    res
}

/// Newton step on the free variables with working rows held at equality.
fn solve_subspace(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    region: &FeasibleRegion,
    x: &DVector<f64>,
    ws: &WorkingSet,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = x.len();
    let free: Vec<usize> = (0..n).filter(|&i| ws.bounds[i].is_none()).collect();
    let nf = free.len();
    let m = ws.rows.len();
    let grad = h * x + g;
    let mut p = DVector::zeros(n);
    if nf == 0 {
        // every variable fixed; rows are then redundant
        let nu = DVector::zeros(m);
        return Ok((p, nu));
    }
    let h_ff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
    let rhs = DVector::from_fn(nf, |a, _| -grad[free[a]]);
    if m == 0 {
        let sol = match h_ff.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => h_ff.lu().solve(&rhs).ok_or(Error::Singular)?,
        };
        for (a, &i) in free.iter().enumerate() {
            p[i] = sol[a];
        }
        return Ok((p, DVector::zeros(0)));
    }

    let mut position = vec![usize::MAX; n];
    for (a, &i) in free.iter().enumerate() {
        position[i] = a;
    }
    let mut kkt = DMatrix::zeros(nf + m, nf + m);
    kkt.view_mut((0, 0), (nf, nf)).copy_from(&h_ff);
    for (slot, (r, _)) in ws.rows.iter().enumerate() {
        for (i, c) in &region.rows[*r].terms {
            if position[*i] != usize::MAX {
                kkt[(nf + slot, position[*i])] = *c;
                kkt[(position[*i], nf + slot)] = *c;
            }
        }
    }
    let mut full_rhs = DVector::zeros(nf + m);
    full_rhs.rows_mut(0, nf).copy_from(&rhs);
    let sol = kkt.lu().solve(&full_rhs).ok_or(Error::Singular)?;
    for (a, &i) in free.iter().enumerate() {
        p[i] = sol[a];
    }
    Ok((p, sol.rows(nf, m).clone_owned()))
}

/// Primal-dual active-set sweeps for box-only problems. Returns a feasible
/// point and a working set of bounds active there.
fn warm_start(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    region: &FeasibleRegion,
    pinned: &[bool],
) -> (DVector<f64>, WorkingSet) {
    let n = g.len();
    let c = (0..n).map(|i| h[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let mut active: Vec<Option<Side>> = pinned
        .iter()
        .map(|&p| if p { Some(Side::Upper) } else { None })
        .collect();
    let mut x = DVector::zeros(n);
    let mut mu = DVector::zeros(n);

    for _ in 0..WARM_START_SWEEPS {
        let ws = WorkingSet {
            bounds: active.clone(),
            pinned: pinned.to_vec(),
            rows: Vec::new(),
        };
        let mut trial = DVector::zeros(n);
        for i in 0..n {
            match active[i] {
                Some(Side::Upper) => trial[i] = region.upper[i],
                Some(Side::Lower) => trial[i] = region.lower[i],
                None => {}
            }
        }
        let Ok((p, _)) = solve_subspace(h, g, region, &trial, &ws) else {
            break;
        };
        trial += p;
        let grad = h * &trial + g;
        x = trial;
        for i in 0..n {
            mu[i] = if active[i].is_some() { -grad[i] } else { 0.0 };
        }
        let next: Vec<Option<Side>> = (0..n)
            .map(|i| {
                if pinned[i]
                    || (region.upper[i].is_finite() && mu[i] + c * (x[i] - region.upper[i]) > 0.0)
                {
                    Some(Side::Upper)
                } else if region.lower[i].is_finite() && mu[i] + c * (x[i] - region.lower[i]) < 0.0
                {
                    Some(Side::Lower)
                } else {
                    None
                }
            })
            .collect();
        if next == active {
            break;
        }
        active = next;
    }

    // project and keep only bounds that are active at the projected point
    let mut bounds = vec![None; n];
    for i in 0..n {
        x[i] = x[i].clamp(region.lower[i], region.upper[i]);
        if pinned[i] || (x[i] == region.upper[i] && active[i] == Some(Side::Upper)) {
            bounds[i] = Some(Side::Upper);
        } else if x[i] == region.lower[i] && active[i] == Some(Side::Lower) {
            bounds[i] = Some(Side::Lower);
        }
    }
    (
        x,
        WorkingSet {
            bounds,
            pinned: pinned.to_vec(),
            rows: Vec::new(),
        },
    )
}
