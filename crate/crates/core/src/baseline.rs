//! Linear soft-margin SVM on vectorized pixels, used as a comparison anchor.
//!
//! Samples are flattened to `3mn` reals (the i, j and k planes back to
//! back) and the standard SVM dual is solved with the same pairwise solver
//! the quaternion trainer uses.

use nalgebra::{DMatrix, DVector};

use crate::dual_qp::{self, DualQpProblem, GramMatrix};
use crate::error::{Error, Result};
use crate::trainer::{self, check_samples, labels_to_f64, sign_label};
use crate::{Label, QMatrix};

/// Trained vectorized SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub weights: DVector<f64>,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub support_indices: Vec<usize>,
    shape: (usize, usize),
}

/// Concatenated i, j, k planes (column-major within each plane).
pub fn vectorize(x: &QMatrix) -> DVector<f64> {
    let len = x.rows() * x.cols();
    let mut out = DVector::zeros(3 * len);
    for k in 1..4 {
        out.rows_mut((k - 1) * len, len)
            .copy_from_slice(x.plane(k).as_slice());
    }
    out
}

impl LinearSvmModel {
    pub fn decision_value(&self, x: &QMatrix) -> Result<f64> {
        if x.shape() != self.shape {
            return Err(Error::Dimension(format!(
                "model expects {:?}, got {:?}",
                self.shape,
                x.shape()
            )));
        }
        Ok(self.weights.dot(&vectorize(x)) + self.b)
    }

    pub fn predict(&self, x: &QMatrix) -> Result<Label> {
        self.decision_value(x).map(sign_label)
    }
}

/// Trains the vectorized baseline with box bound `c`.
pub fn baseline_vector_svm(samples: &[QMatrix], y: &[Label], c: f64, solver_tol: f64) -> Result<LinearSvmModel> {
    let shape = check_samples(samples, y.len())?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!("C must be positive, got {c}")));
    }
    let yf = labels_to_f64(y)?;
    let features: Vec<DVector<f64>> = samples.iter().map(vectorize).collect();
    let n = features.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = features[i].dot(&features[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let gram = GramMatrix::from_matrix(k)?;
    let problem = DualQpProblem::new(&gram, yf.clone(), vec![1.0; n], c, 0.0)?;
    let sol = dual_qp::solve_dual_qp(&problem, solver_tol, dual_qp::default_max_iter(n))?;

    let mut weights = DVector::zeros(features[0].len());
    for ((f, &a), &yi) in features.iter().zip(&sol.alpha).zip(&yf) {
        if a != 0.0 {
            weights.axpy(a * yi, f, 1.0);
        }
    }
    let margin = 1e-8 * c;
    let support: Vec<usize> = (0..n)
        .filter(|&i| sol.alpha[i] > margin && sol.alpha[i] < c - margin)
        .collect();
    let margins: Vec<f64> = features.iter().map(|f| weights.dot(f)).collect();
    let b = if support.is_empty() {
        trainer::bias_from_bounds(&sol.alpha, &yf, &margins, c, margin, 0.0)
    } else {
        support.iter().map(|&i| yf[i] - margins[i]).sum::<f64>() / support.len() as f64
    };
    Ok(LinearSvmModel {
        weights,
        b,
        alpha: sol.alpha,
        support_indices: support,
        shape,
    })
}
