//! The per-iteration dual QP of the (W, b) subproblem.
//!
//! Maximize `q'a - 1/(2(1+rho)) * sum_ij a_i a_j y_i y_j K_ij`
//! subject to `sum_i a_i y_i = 0` and `0 <= a_i <= C`.
//!
//! Solved by pairwise coordinate ascent: each step picks the maximal
//! violating pair, moves along the direction that keeps the equality
//! constraint, and clips to the box. Ties go to the lowest index.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::QMatrix;

/// Default KKT tolerance of [`solve_dual_qp`].
pub const DEFAULT_QP_TOL: f64 = 1e-6;
/// Pair curvature below this is treated as a flat direction.
const FLAT_CURVATURE: f64 = 1e-12;

/// Symmetric matrix of pairwise real inner products of the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wraps a precomputed kernel; it must be square and symmetric.
    pub fn from_matrix(k: DMatrix<f64>) -> Result<Self> {
        if !k.is_square() || k.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "gram matrix must be square and non-empty, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        let scale = k.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for i in 0..k.nrows() {
            for j in 0..i {
                if (k[(i, j)] - k[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Validation(format!("gram matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(GramMatrix(k))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// `K[i][j] = real_inner(X_i, X_j)`.
pub fn gram_matrix(samples: &[QMatrix]) -> Result<GramMatrix> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Validation("gram matrix needs at least one sample".into()))?;
    if let Some(bad) = samples.iter().position(|s| s.shape() != first.shape()) {
        return Err(Error::Dimension(format!(
            "sample {bad} is {:?}, expected {:?}",
            samples[bad].shape(),
            first.shape()
        )));
    }
    let n = samples.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = samples[i].real_inner(&samples[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix(k))
}

/// One instance of the dual QP.
#[derive(Debug, Clone)]
pub struct DualQpProblem<'a> {
    gram: &'a GramMatrix,
    y: Vec<f64>,
    q: Vec<f64>,
    c: f64,
    rho: f64,
}

impl<'a> DualQpProblem<'a> {
    /// `rho = 0` gives the plain soft-margin SVM dual.
    pub fn new(gram: &'a GramMatrix, y: Vec<f64>, q: Vec<f64>, c: f64, rho: f64) -> Result<Self> {
        let n = gram.len();
        if y.len() != n || q.len() != n {
            return Err(Error::Dimension(format!(
                "dual QP of size {n} got {} labels and {} coefficients",
                y.len(),
                q.len()
            )));
        }
        if let Some(bad) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Validation(format!("label {bad} is {}, expected -1 or 1", y[bad])));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("box bound C must be positive, got {c}")));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("rho must be non-negative, got {rho}")));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite linear coefficient".into()));
        }
        Ok(DualQpProblem { gram, y, q, c, rho })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn gram(&self) -> &GramMatrix {
        self.gram
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn linear(&self) -> &[f64] {
        &self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn quad_scale(&self) -> f64 {
        1.0 / (1.0 + self.rho)
    }

    /// Gradient of the (maximized) objective.
    pub fn gradient(&self, alpha: &[f64]) -> Vec<f64> {
        let s = self.quad_scale();
        (0..self.len())
            .map(|i| {
                let kq: f64 = (0..self.len())
                    .map(|j| self.y[j] * alpha[j] * self.gram.get(i, j))
                    .sum();
                self.q[i] - s * self.y[i] * kq
            })
            .collect()
    }

    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let n = self.len();
        let lin: f64 = self.q.iter().zip(alpha).map(|(q, a)| q * a).sum();
        let mut quad = 0.0;
        for i in 0..n {
            let yi = alpha[i] * self.y[i];
            if yi == 0.0 {
                continue;
            }
            for j in 0..n {
                quad += yi * alpha[j] * self.y[j] * self.gram.get(i, j);
            }
        }
        lin - 0.5 * self.quad_scale() * quad
    }
}

/// `q[i] = 1 - y_i real_inner(U + rho Z, X_i) / (rho + 1)`.
pub fn build_dual<'a>(
    samples: &[QMatrix],
    y: &[f64],
    u: &QMatrix,
    z: &QMatrix,
    rho: f64,
    c: f64,
    gram: &'a GramMatrix,
) -> Result<DualQpProblem<'a>> {
    if samples.len() != gram.len() {
        return Err(Error::Dimension(format!(
            "{} samples for a gram matrix of size {}",
            samples.len(),
            gram.len()
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
    }
    let mut shift = u.clone();
    shift.axpy(rho, z)?;
    let q = samples
        .iter()
        .zip(y)
        .map(|(x, &yi)| Ok(1.0 - yi * shift.real_inner(x)? / (rho + 1.0)))
        .collect::<Result<Vec<_>>>()?;
    DualQpProblem::new(gram, y.to_vec(), q, c, rho)
}

/// Result of [`solve_dual_qp`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Stationarity residual of the box-projected gradient step, minimized
/// over the equality multiplier, plus the equality violation. Zero exactly
/// at optima.
pub fn kkt_residual(p: &DualQpProblem<'_>, alpha: &[f64]) -> f64 {
    let (_, comps) = kkt_components(p, alpha);
    let eq: f64 = alpha.iter().zip(&p.y).map(|(a, y)| a * y).sum();
    comps.iter().fold(0.0_f64, |m, r| m.max(r.abs())) + eq.abs()
}

/// Per-coordinate stationarity residuals at the best equality multiplier.
///
/// `r_i = a_i - clip(a_i + g_i - beta y_i, 0, C)` where `g` is the gradient.
pub fn kkt_components(p: &DualQpProblem<'_>, alpha: &[f64]) -> (f64, Vec<f64>) {
    let g = p.gradient(alpha);
    let c = p.c;
    let comps = |beta: f64| -> Vec<f64> {
        alpha
            .iter()
            .zip(&g)
            .zip(&p.y)
            .map(|((&a, &gi), &yi)| a - (a + gi - beta * yi).clamp(0.0, c))
            .collect()
    };
    // with y_i = +1 the residual is nondecreasing in beta, with y_i = -1
    // nonincreasing; the max of |r_i| is minimized where the two sides meet
    let split = |beta: f64| -> (f64, f64) {
        let mut rising = 0.0_f64;
        let mut falling = 0.0_f64;
        for (r, &yi) in comps(beta).iter().zip(&p.y) {
            let (up, down) = if yi > 0.0 { (*r, -*r) } else { (-*r, *r) };
            rising = rising.max(up);
            falling = falling.max(down);
        }
        (rising, falling)
    };
    let bound = g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (rising, falling) = split(mid);
        if rising < falling {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * bound {
            break;
        }
    }
    let score = |b: f64| {
        let (r, f) = split(b);
        r.max(f)
    };
    let beta = if score(lo) <= score(hi) { lo } else { hi };
    (beta, comps(beta))
}

/// Stateful pairwise coordinate-ascent solver.
pub struct PairwiseSolver<'p, 'a> {
    p: &'p DualQpProblem<'a>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    iterations: usize,
}

impl<'p, 'a> PairwiseSolver<'p, 'a> {
    /// Starts from `alpha0`, which must be feasible.
    pub fn new(p: &'p DualQpProblem<'a>, alpha0: Vec<f64>) -> Result<Self> {
        if alpha0.len() != p.len() {
            return Err(Error::Dimension(format!(
                "warm start has {} entries, problem has {}",
                alpha0.len(),
                p.len()
            )));
        }
        let tol = 1e-8 * p.c.max(1.0);
        if alpha0.iter().any(|&a| !(a >= -tol && a <= p.c + tol)) {
            return Err(Error::Validation("warm start violates the box".into()));
        }
        let sum: f64 = alpha0.iter().zip(&p.y).map(|(a, y)| a * y).sum();
        let total: f64 = alpha0.iter().sum();
        if sum.abs() > 1e-8 * total.max(1.0) {
            return Err(Error::Validation("warm start violates the equality constraint".into()));
        }
        let alpha: Vec<f64> = alpha0.into_iter().map(|a| a.clamp(0.0, p.c)).collect();
        let grad = p.gradient(&alpha);
        Ok(PairwiseSolver {
            p,
            alpha,
            grad,
            iterations: 0,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn objective(&self) -> f64 {
        self.p.objective(&self.alpha)
    }

    /// Maximal violating pair and its gap.
    fn select(&self) -> Option<(usize, usize, f64)> {
        let c = self.p.c;
        let mut up: Option<(usize, f64)> = None;
        let mut low: Option<(usize, f64)> = None;
        for t in 0..self.alpha.len() {
            let (a, y) = (self.alpha[t], self.p.y[t]);
            let s = y * self.grad[t];
            let can_up = if y > 0.0 { a < c } else { a > 0.0 };
            let can_down = if y > 0.0 { a > 0.0 } else { a < c };
            if can_up && up.is_none_or(|(_, best)| s > best) {
                up = Some((t, s));
            }
            if can_down && low.is_none_or(|(_, best)| s < best) {
                low = Some((t, s));
            }
        }
        let ((i, si), (j, sj)) = (up?, low?);
        Some((i, j, si - sj))
    }

    /// Current maximal KKT gap (`0` when no violating pair exists).
    pub fn gap(&self) -> f64 {
        self.select().map_or(0.0, |(_, _, g)| g.max(0.0))
    }

    /// Performs one pair update unless the gap is already within `tol`.
    /// Returns whether an update happened.
    pub fn step(&mut self, tol: f64) -> bool {
        let Some((i, j, gap)) = self.select() else {
            return false;
        };
        if gap <= tol || i == j {
            return false;
        }
        let p = self.p;
        let c = p.c;
        let (yi, yj) = (p.y[i], p.y[j]);
        let scale = p.quad_scale();
        let curvature = (p.gram.get(i, i) + p.gram.get(j, j) - 2.0 * p.gram.get(i, j)) * scale;
        // alpha_i += y_i t, alpha_j -= y_j t
        let room_i = if yi > 0.0 { c - self.alpha[i] } else { self.alpha[i] };
        let room_j = if yj > 0.0 { self.alpha[j] } else { c - self.alpha[j] };
        let room = room_i.min(room_j);
        let t = if curvature < FLAT_CURVATURE {
            room
        } else {
            (gap / curvature).min(room)
        };
        let (hit_i, hit_j) = (t >= room_i, t >= room_j);
        let old_i = self.alpha[i];
        let old_j = self.alpha[j];
        self.alpha[i] = if hit_i {
            if yi > 0.0 { c } else { 0.0 }
        } else {
            (old_i + yi * t).clamp(0.0, c)
        };
        self.alpha[j] = if hit_j {
            if yj > 0.0 { 0.0 } else { c }
        } else {
            (old_j - yj * t).clamp(0.0, c)
        };
        let di = self.alpha[i] - old_i;
        let dj = self.alpha[j] - old_j;
        for k in 0..self.grad.len() {
            let yk = p.y[k];
            self.grad[k] -= scale * yk * (yi * di * p.gram.get(k, i) + yj * dj * p.gram.get(k, j));
        }
        self.iterations += 1;
        true
    }

    pub fn into_alpha(self) -> Vec<f64> {
        self.alpha
    }
}

/// Default inner-update budget: `10 N^2`.
pub fn default_max_iter(n: usize) -> usize {
    (10 * n * n).max(10)
}

/// Solves from `alpha = 0`.
pub fn solve_dual_qp(p: &DualQpProblem<'_>, tol: f64, max_iter: usize) -> Result<DualSolution> {
    solve_dual_qp_from(p, vec![0.0; p.len()], tol, max_iter)
}

/// Solves from a feasible warm start.
pub fn solve_dual_qp_from(
    p: &DualQpProblem<'_>,
    alpha0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("QP tolerance must be positive, got {tol}")));
    }
    let mut solver = PairwiseSolver::new(p, alpha0)?;
    // a pair gap of `tol` bounds the residual by `tol / 2`
    while solver.iterations < max_iter && solver.step(tol) {}
    let iterations = solver.iterations;
    let alpha = solver.into_alpha();
    let kkt = kkt_residual(p, &alpha);
    Ok(DualSolution {
        converged: kkt <= tol,
        kkt_residual: kkt,
        iterations,
        alpha,
    })
}
