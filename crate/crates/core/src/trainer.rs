//! ADMM training loop for the low-rank support quaternion matrix machine.
//!
//! Each iteration solves the hinge-loss dual QP for `(W, b)`, shrinks the
//! singular values of `W - U / rho` to get `Z`, then takes a multiplier step
//! `U <- U - tau rho (W - Z)`. Iteration stops once
//! `|W - Z| / max(|W|, |Z|)` drops below `tol` or `max_iter` is reached.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dual_qp::{self, build_dual, gram_matrix, DualSolution, GramMatrix};
use crate::error::{Error, Result};
use crate::qsvd::prox_nuclear_with_norm;
use crate::{Label, QMatrix};

/// Largest admissible multiplier step.
pub const MAX_TAU: f64 = 1.618;

/// Hyperparameters of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Soft-margin penalty.
    pub c: f64,
    /// Nuclear-norm weight.
    pub lambda: f64,
    /// Augmented-Lagrangian penalty (fixed across iterations).
    pub rho: f64,
    /// Multiplier step, in `(0, 1.618]`.
    pub tau: f64,
    /// Relative `W - Z` residual that stops the outer loop.
    pub tol: f64,
    pub max_iter: usize,
    /// Margin defining support matrices `qp_tol < alpha_i < C - qp_tol`;
    /// `None` means `1e-8 * C`.
    pub qp_tol: Option<f64>,
    /// KKT tolerance of each dual QP solve.
    pub solver_tol: f64,
    /// Inner update budget per QP solve; `None` means `10 N^2`.
    pub solver_max_iter: Option<usize>,
    /// Record wall-clock time per iteration. Disable for byte-identical output.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            lambda: 1e-3,
            rho: 1.0,
            tau: 1.0,
            tol: 1e-3,
            max_iter: 1000,
            qp_tol: None,
            solver_tol: dual_qp::DEFAULT_QP_TOL,
            solver_max_iter: None,
            record_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.tau > 0.0 && self.tau <= MAX_TAU) {
            return bad(format!("tau must lie in (0, {MAX_TAU}], got {}", self.tau));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if let Some(m) = self.qp_tol {
            if !(m > 0.0) {
                return bad(format!("qp_tol must be positive, got {m}"));
            }
        }
        if !(self.solver_tol > 0.0) {
            return bad(format!("solver_tol must be positive, got {}", self.solver_tol));
        }
        Ok(())
    }

    pub fn support_margin(&self) -> f64 {
        self.qp_tol.unwrap_or(1e-8 * self.c)
    }
}

/// Iterates of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: QMatrix,
    pub z: QMatrix,
    pub u: QMatrix,
    pub b: f64,
    /// Last dual solution, used to warm-start the next QP.
    pub alpha: Vec<f64>,
    pub k: usize,
}

impl AdmmState {
    /// All-zero start for `n_samples` samples of shape `rows x cols`.
    pub fn zeros(rows: usize, cols: usize, n_samples: usize) -> Self {
        AdmmState {
            w: QMatrix::zeros(rows, cols),
            z: QMatrix::zeros(rows, cols),
            u: QMatrix::zeros(rows, cols),
            b: 0.0,
            alpha: vec![0.0; n_samples],
            k: 0,
        }
    }
}

/// Output of [`update_wb`].
#[derive(Debug, Clone)]
pub struct WbUpdate {
    pub w: QMatrix,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub support: Vec<usize>,
    pub qp: DualSolution,
}

fn support_set(alpha: &[f64], c: f64, margin: f64) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a > margin && a < c - margin)
        .map(|(i, _)| i)
        .collect()
}

/// Bias from the KKT bounds when no multiplier is strictly inside the box.
///
/// Each sample at a bound pins `b` from one side at `y_i - f_i`; the
/// midpoint of the feasible interval is used. With only one side present
/// the finite endpoint is used, and an empty interval keeps `previous`.
pub(crate) fn bias_from_bounds(alpha: &[f64], y: &[f64], margins: &[f64], c: f64, margin: f64, previous: f64) -> f64 {
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for ((&a, &yi), &fi) in alpha.iter().zip(y).zip(margins) {
        let at_zero = a <= margin;
        let at_c = a >= c - margin;
        let bound = yi - fi;
        // y (f + b) >= 1 at zero, <= 1 at C
        let is_lower = (at_zero && yi > 0.0) || (at_c && yi < 0.0);
        let is_upper = (at_zero && yi < 0.0) || (at_c && yi > 0.0);
        if is_lower {
            lower = lower.max(bound);
        }
        if is_upper {
            upper = upper.min(bound);
        }
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) if lower <= upper => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        _ => previous,
    }
}

/// `(W, b)` step: solve the dual QP (warm-started from `state.alpha`) and
/// recover `W = (rho Z + U + sum a_i y_i X_i) / (1 + rho)` and the bias.
pub fn update_wb(
    state: &AdmmState,
    samples: &[QMatrix],
    y: &[f64],
    cfg: &TrainConfig,
    gram: &GramMatrix,
) -> Result<WbUpdate> {
    let problem = build_dual(samples, y, &state.u, &state.z, cfg.rho, cfg.c, gram)?;
    let budget = cfg
        .solver_max_iter
        .unwrap_or_else(|| dual_qp::default_max_iter(samples.len()));
    let warm = if state.alpha.len() == samples.len() {
        state.alpha.clone()
    } else {
        vec![0.0; samples.len()]
    };
    let qp = dual_qp::solve_dual_qp_from(&problem, warm, cfg.solver_tol, budget)?;
    let alpha = qp.alpha.clone();

    let mut w = state.z.scale(cfg.rho);
    w.axpy(1.0, &state.u)?;
    for ((x, &a), &yi) in samples.iter().zip(&alpha).zip(y) {
        if a != 0.0 {
            w.axpy(a * yi, x)?;
        }
    }
    let w = w.scale(1.0 / (1.0 + cfg.rho));

    let margin = cfg.support_margin();
    let support = support_set(&alpha, cfg.c, margin);
    let b = if support.is_empty() {
        let margins = samples
            .iter()
            .map(|x| w.real_inner(x))
            .collect::<Result<Vec<_>>>()?;
        bias_from_bounds(&alpha, y, &margins, cfg.c, margin, state.b)
    } else {
        let mut acc = 0.0;
        for &i in &support {
            acc += y[i] - w.real_inner(&samples[i])?;
        }
        acc / support.len() as f64
    };
    Ok(WbUpdate {
        w,
        b,
        alpha,
        support,
        qp,
    })
}

/// `Z = prox_{(lambda / rho) |.|_*}(W - U / rho)` and `lambda |Z|_*`.
pub fn update_z_with_penalty(w: &QMatrix, u: &QMatrix, cfg: &TrainConfig) -> Result<(QMatrix, f64)> {
    let mut target = w.clone();
    target.axpy(-1.0 / cfg.rho, u)?;
    if cfg.lambda == 0.0 {
        return Ok((target, 0.0));
    }
    let (z, norm) = prox_nuclear_with_norm(&target, cfg.lambda / cfg.rho)?;
    Ok((z, cfg.lambda * norm))
}

/// `Z` step.
pub fn update_z(w: &QMatrix, u: &QMatrix, cfg: &TrainConfig) -> Result<QMatrix> {
    update_z_with_penalty(w, u, cfg).map(|(z, _)| z)
}

/// `U <- U - tau rho (W - Z)`.
pub fn update_u(u: &QMatrix, w: &QMatrix, z: &QMatrix, cfg: &TrainConfig) -> Result<QMatrix> {
    let step = cfg.tau * cfg.rho;
    let mut next = u.clone();
    next.axpy(-step, w)?;
    next.axpy(step, z)?;
    Ok(next)
}

/// `|W - Z| / max(|W|, |Z|, 1e-12)`.
pub fn relative_residual(w: &QMatrix, z: &QMatrix) -> Result<f64> {
    let diff = w.sub(z)?.fro_norm();
    Ok(diff / w.fro_norm().max(z.fro_norm()).max(1e-12))
}

fn hinge_sum(w: &QMatrix, b: f64, samples: &[QMatrix], y: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &yi) in samples.iter().zip(y) {
        total += (1.0 - yi * (w.real_inner(x)? + b)).max(0.0);
    }
    Ok(total)
}

/// Split objective `1/2 |W|^2 + lambda |Z|_* + C sum_i h(1 - y_i (f_i + b))`.
pub fn objective(
    w: &QMatrix,
    b: f64,
    z: &QMatrix,
    samples: &[QMatrix],
    y: &[f64],
    cfg: &TrainConfig,
) -> Result<f64> {
    let nuclear = if cfg.lambda == 0.0 {
        0.0
    } else {
        cfg.lambda * crate::qsvd::nuclear_norm(z)?
    };
    Ok(0.5 * w.fro_norm_sqr() + nuclear + cfg.c * hinge_sum(w, b, samples, y)?)
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based iteration number.
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
    /// Wall time since training started (zero when timing is disabled).
    pub seconds: f64,
}

/// Result of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub w: QMatrix,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub trace: Vec<TraceRecord>,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn shape(&self) -> (usize, usize) {
        self.w.shape()
    }

    /// `f(X) = real_inner(W, X) + b`.
    pub fn decision_value(&self, x: &QMatrix) -> Result<f64> {
        Ok(self.w.real_inner(x)? + self.b)
    }

    /// `+1` when the decision value is `>= 0`, else `-1`.
    pub fn predict(&self, x: &QMatrix) -> Result<Label> {
        self.decision_value(x).map(sign_label)
    }
}

/// Sign rule shared by all classifiers; ties go to `+1`.
pub fn sign_label(f: f64) -> Label {
    if f >= 0.0 {
        1
    } else {
        -1
    }
}

pub(crate) fn labels_to_f64(y: &[Label]) -> Result<Vec<f64>> {
    y.iter()
        .enumerate()
        .map(|(i, &l)| match l {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => Err(Error::Validation(format!("label {i} is {other}, expected -1 or 1"))),
        })
        .collect()
}

pub(crate) fn check_samples(samples: &[QMatrix], y_len: usize) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Validation("training needs at least one sample".into()))?;
    if samples.len() != y_len {
        return Err(Error::Dimension(format!("{} samples but {y_len} labels", samples.len())));
    }
    let shape = first.shape();
    for (i, s) in samples.iter().enumerate() {
        if s.shape() != shape {
            return Err(Error::Dimension(format!(
                "sample {i} is {}x{}, expected {}x{}",
                s.rows(),
                s.cols(),
                shape.0,
                shape.1
            )));
        }
        if !s.is_finite() {
            return Err(Error::Numeric(format!("sample {i} has non-finite entries")));
        }
    }
    Ok(shape)
}

/// Runs the ADMM loop from `W = Z = U = 0`, `b = 0`.
pub fn train(samples: &[QMatrix], y: &[Label], cfg: &TrainConfig) -> Result<TrainedModel> {
    train_observed(samples, y, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after every iteration.
pub fn train_observed(
    samples: &[QMatrix],
    y: &[Label],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&AdmmState, &TraceRecord),
) -> Result<TrainedModel> {
    cfg.validate()?;
    let (rows, cols) = check_samples(samples, y.len())?;
    let yf = labels_to_f64(y)?;
    let gram = gram_matrix(samples)?;
    let started = Instant::now();

    let mut state = AdmmState::zeros(rows, cols, samples.len());
    let mut support = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    while state.k < cfg.max_iter {
        let wb = update_wb(&state, samples, &yf, cfg, &gram)?;
        let (z, penalty) = update_z_with_penalty(&wb.w, &state.u, cfg)?;
        let u = update_u(&state.u, &wb.w, &z, cfg)?;
        residual = relative_residual(&wb.w, &z)?;
        let obj = 0.5 * wb.w.fro_norm_sqr() + penalty + cfg.c * hinge_sum(&wb.w, wb.b, samples, &yf)?;
        if !obj.is_finite() || !residual.is_finite() {
            return Err(Error::Numeric(format!("iteration {} diverged", state.k + 1)));
        }
        state = AdmmState {
            w: wb.w,
            z,
            u,
            b: wb.b,
            alpha: wb.alpha,
            k: state.k + 1,
        };
        support = wb.support;
        let record = TraceRecord {
            iter: state.k,
            objective: obj,
            residual,
            seconds: if cfg.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        trace.push(record);
        observe(&state, &record);
        if residual < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(TrainedModel {
        w: state.w,
        b: state.b,
        alpha: state.alpha,
        support_indices: support,
        converged,
        iterations: state.k,
        final_residual: residual,
        trace,
        config: cfg.clone(),
    })
}
