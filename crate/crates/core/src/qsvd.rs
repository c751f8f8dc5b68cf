//! Quaternion SVD, nuclear norm and singular value thresholding.
//!
//! Everything goes through one real SVD of the `4m x 4n` real
//! representation. Its singular values come in groups of four; each group
//! is one quaternion singular value. Singular vectors are read back as
//! quaternion vectors and re-orthonormalized with quaternion Gram-Schmidt,
//! because a real SVD routine is free to rotate inside the four-fold
//! degenerate subspaces.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quaternion::{QMat, Quat};
use crate::scalar::Real;

/// Reconstruction and unitarity tolerance for [`qsvd`] (relative).
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Allowed spread inside one group of four real singular values, relative
/// to `1 + sigma_max`.
pub const GROUP_SPREAD_TOL: f64 = 1e-9;

/// `A = U diag(sigma) V*` with unitary `U` (m x m), `V` (n x n).
#[derive(Debug, Clone)]
pub struct Qsvd<T: Real> {
    pub u: QMat<T>,
    pub sigma: Vec<T>,
    pub v: QMat<T>,
}

impl<T: Real> Qsvd<T> {
    /// Rebuilds `U diag(sigma) V*`.
    pub fn reconstruct(&self) -> QMat<T> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut s = QMat::zeros(m, n);
        for (g, &sv) in self.sigma.iter().enumerate() {
            s.set(g, g, Quat::new(sv, T::zero(), T::zero(), T::zero()));
        }
        self.u
            .mat_mul(&s)
            .and_then(|us| us.mat_mul(&self.v.conj_transpose()))
            .expect("factor shapes are consistent by construction")
    }
}

/// Real SVD with singular values sorted descending (thin factors).
pub(crate) struct SortedSvd<T: Real> {
    pub u: DMatrix<T>,
    pub s: Vec<T>,
    pub v: DMatrix<T>,
}

fn check_finite<T: Real>(a: &QMat<T>) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric("matrix has non-finite entries".into()))
    }
}

fn max_sweeps(m: &DMatrix<impl Real>) -> usize {
    1000 * (m.nrows() + m.ncols()).max(1)
}

pub(crate) fn sorted_svd<T: Real>(m: &DMatrix<T>, vectors: bool) -> Result<SortedSvd<T>> {
    // nalgebra can report success on a wrong decomposition, so every result
    // is checked, with the transpose as a second attempt
    if let Some(svd) = checked_svd(m, vectors) {
        return Ok(svd);
    }
    checked_svd(&m.transpose(), vectors)
        .map(|t| SortedSvd { u: t.v, s: t.s, v: t.u })
        .ok_or_else(|| Error::Numeric("real SVD did not converge".into()))
}

fn checked_svd<T: Real>(m: &DMatrix<T>, vectors: bool) -> Option<SortedSvd<T>> {
    let eps = T::default_epsilon() * T::lit(5.0);
    let svd = m.clone().try_svd(vectors, vectors, eps, max_sweeps(m))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
            .then(a.cmp(&b))
    });
    let s: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let norm = m.norm();
    let tol = T::default_epsilon().sqrt() * (T::one() + norm);
    let energy = s.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    if (energy - norm).abs() > tol {
        return None;
    }
    let (u, v) = if vectors {
        let u_raw = svd.u.expect("requested");
        let vt_raw = svd.v_t.expect("requested");
        if (&u_raw * DMatrix::from_diagonal(&svd.singular_values) * &vt_raw - m).norm() > tol {
            return None;
        }
        let u = DMatrix::from_fn(u_raw.nrows(), order.len(), |r, c| u_raw[(r, order[c])]);
        let v = DMatrix::from_fn(vt_raw.ncols(), order.len(), |r, c| vt_raw[(order[c], r)]);
        (u, v)
    } else {
        (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
    };
    Some(SortedSvd { u, s, v })
}

/// One quaternion singular value per group of four real ones.
fn group_values<T: Real>(s: &[T]) -> Vec<T> {
    s.chunks(4)
        .map(|g| g.iter().fold(T::zero(), |a, &b| a + b) * T::lit(0.25))
        .collect()
}

/// Quaternion column vector as four real planes.
#[derive(Clone)]
struct QVec<T: Real>([DVector<T>; 4]);

impl<T: Real> QVec<T> {
    /// Reads a stacked real vector `(v0; v1; v2; v3)`.
    fn from_stacked(col: nalgebra::DVectorView<'_, T>, len: usize) -> Self {
        QVec(std::array::from_fn(|k| col.rows(k * len, len).into_owned()))
    }

    fn unit(len: usize, idx: usize) -> Self {
        let mut v = QVec(std::array::from_fn(|_| DVector::zeros(len)));
        v.0[0][idx] = T::one();
        v
    }

    fn from_column(a: &QMat<T>) -> Self {
        QVec(std::array::from_fn(|k| a.plane(k).column(0).into_owned()))
    }

    /// `sum_r conj(a_r) b_r`.
    fn inner(&self, b: &Self) -> Quat<T> {
        let mut acc = Quat::zero();
        for r in 0..self.0[0].len() {
            let ar = Quat::new(self.0[0][r], self.0[1][r], self.0[2][r], self.0[3][r]);
            let br = Quat::new(b.0[0][r], b.0[1][r], b.0[2][r], b.0[3][r]);
            acc = acc + ar.conj() * br;
        }
        acc
    }

    fn norm(&self) -> T {
        self.0
            .iter()
            .fold(T::zero(), |acc, p| acc + p.norm_squared())
            .sqrt()
    }

    /// `self -= u q` (right multiplication by a quaternion scalar).
    fn sub_right_scaled(&mut self, u: &Self, q: Quat<T>) {
        for r in 0..self.0[0].len() {
            let ur = Quat::new(u.0[0][r], u.0[1][r], u.0[2][r], u.0[3][r]) * q;
            for (k, v) in ur.to_array().into_iter().enumerate() {
                self.0[k][r] -= v;
            }
        }
    }

    fn scale(&mut self, s: T) {
        for p in &mut self.0 {
            *p *= s;
        }
    }

    /// Orthogonalizes against `basis` (two passes) and normalizes. Returns
    /// `None` when less than `keep` of the original norm survives.
    fn orthonormalize(mut self, basis: &[QVec<T>], keep: T) -> Option<Self> {
        let start = self.norm();
        if start == T::zero() {
            return None;
        }
        for _ in 0..2 {
            for b in basis {
                let q = b.inner(&self);
                self.sub_right_scaled(b, q);
            }
        }
        let rest = self.norm();
        if rest <= keep * start {
            return None;
        }
        self.scale(T::one() / rest);
        Some(self)
    }
}

fn assemble<T: Real>(cols: &[QVec<T>]) -> QMat<T> {
    let len = cols.first().map_or(0, |c| c.0[0].len());
    let planes = std::array::from_fn(|k| DMatrix::from_fn(len, cols.len(), |r, c| cols[c].0[k][r]));
    QMat::from_planes(planes).expect("columns share one length")
}

/// Fills `basis` up to `len` vectors with candidates, then canonical units.
fn complete_basis<T: Real>(basis: &mut Vec<QVec<T>>, len: usize, candidates: impl Iterator<Item = QVec<T>>) {
    let keep = T::lit(0.5);
    for cand in candidates {
        if basis.len() == len {
            return;
        }
        if let Some(v) = cand.orthonormalize(basis, keep) {
            basis.push(v);
        }
    }
    let mut idx = 0;
    let mut threshold = keep;
    while basis.len() < len {
        if idx == len {
            // every unit was tried; relax and sweep again
            idx = 0;
            threshold *= T::lit(0.1);
        }
        if let Some(v) = QVec::unit(len, idx).orthonormalize(basis, threshold) {
            basis.push(v);
        }
        idx += 1;
    }
}

/// Quaternion singular value decomposition.
pub fn qsvd<T: Real>(a: &QMat<T>) -> Result<Qsvd<T>> {
    check_finite(a)?;
    let (m, n) = a.shape();
    let p = m.min(n);
    let real = sorted_svd(a.to_real_rep().matrix(), true)?;
    let sigma = group_values(&real.s);

    let mut v_cols = Vec::with_capacity(n);
    complete_basis(
        &mut v_cols,
        n,
        (0..real.v.ncols()).map(|c| QVec::from_stacked(real.v.column(c), n)),
    );
    debug_assert!(v_cols.len() == n);
    let v = assemble(&v_cols);

    let sigma_max = sigma.first().copied().unwrap_or(T::zero());
    let floor = T::lit(1e-12) * (T::one() + sigma_max);
    // the right factor drives the left one so that A v = sigma u pairs up
    let mut u_cols: Vec<QVec<T>> = Vec::with_capacity(m);
    for (g, &sv) in sigma.iter().enumerate().take(p) {
        if sv <= floor {
            break;
        }
        let av = a.mat_mul(&assemble(std::slice::from_ref(&v_cols[g])))?;
        let mut u = QVec::from_column(&av);
        u.scale(T::one() / sv);
        match u.orthonormalize(&u_cols, T::lit(0.5)) {
            Some(u) => u_cols.push(u),
            None => break,
        }
    }
    complete_basis(
        &mut u_cols,
        m,
        (0..real.u.ncols()).map(|c| QVec::from_stacked(real.u.column(c), m)),
    );
    let u = assemble(&u_cols);
    Ok(Qsvd { u, sigma, v })
}

/// Quaternion singular values, descending, without the factors.
pub fn singular_values<T: Real>(a: &QMat<T>) -> Result<Vec<T>> {
    check_finite(a)?;
    let real = sorted_svd(a.to_real_rep().matrix(), false)?;
    Ok(group_values(&real.s))
}

/// Sorted singular values of the real representation (all `4 min(m, n)`).
pub fn real_rep_singular_values<T: Real>(a: &QMat<T>) -> Result<Vec<T>> {
    check_finite(a)?;
    Ok(sorted_svd(a.to_real_rep().matrix(), false)?.s)
}

/// Sum of the quaternion singular values.
pub fn nuclear_norm<T: Real>(a: &QMat<T>) -> Result<T> {
    Ok(singular_values(a)?.into_iter().fold(T::zero(), |x, y| x + y))
}

/// Proximal operator of `tau * nuclear_norm`: soft-thresholds the singular
/// values by `tau`.
pub fn prox_nuclear<T: Real>(a: &QMat<T>, tau: T) -> Result<QMat<T>> {
    prox_nuclear_with_norm(a, tau).map(|(z, _)| z)
}

/// Like [`prox_nuclear`], also returning the nuclear norm of the result.
pub fn prox_nuclear_with_norm<T: Real>(a: &QMat<T>, tau: T) -> Result<(QMat<T>, T)> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::Parameter(format!("prox threshold must be positive, got {tau:?}")));
    }
    check_finite(a)?;
    let (m, n) = a.shape();
    let real = sorted_svd(a.to_real_rep().matrix(), true)?;
    let kept: Vec<(usize, T)> = real
        .s
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > tau)
        .map(|(i, &s)| (i, s - tau))
        .collect();
    let mut out = DMatrix::zeros(4 * m, 4 * n);
    let mut norm = T::zero();
    for &(i, s) in &kept {
        out.ger(s, &real.u.column(i), &real.v.column(i), T::one());
        norm += s;
    }
    Ok((QMat::from_real_rep(&out)?, norm * T::lit(0.25)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_values() {
        let s = singular_values(&QMat::<f64>::identity(3)).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|&v| close(v, 1.0, 1e-12)));
        assert!(close(nuclear_norm(&QMat::<f64>::identity(4)).unwrap(), 4.0, 1e-12));
    }

    #[test]
    fn scalar_modulus() {
        let a = QMat::from_fn(1, 1, |_, _| Quat::new(1.0, 1.0, 1.0, 1.0));
        let d = qsvd(&a).unwrap();
        assert!(close(d.sigma[0], 2.0, 1e-12));
        assert!((d.reconstruct().sub(&a).unwrap()).fro_norm() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let z = QMat::<f64>::zeros(3, 2);
        assert!(singular_values(&z).unwrap().iter().all(|&v| v == 0.0));
        let d = qsvd(&z).unwrap();
        let utu = d.u.conj_transpose().mat_mul(&d.u).unwrap();
        assert!(utu.sub(&QMat::identity(3)).unwrap().fro_norm() < 1e-12);
    }

    #[test]
    fn scalar_shrinkage() {
        let a = QMat::from_fn(1, 1, |_, _| Quat::new(0.0, 2.0, 0.0, 0.0));
        let z = prox_nuclear(&a, 0.5).unwrap();
        let q = z.get(0, 0);
        assert!(close(q.x, 1.5, 1e-12) && q.w.abs() < 1e-15 && q.y.abs() < 1e-15);
        assert_eq!(prox_nuclear(&a, 3.0).unwrap().fro_norm(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = QMat::<f64>::identity(2);
        assert!(matches!(prox_nuclear(&a, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(prox_nuclear(&a, -1.0), Err(Error::Parameter(_))));
        let mut bad = a.clone();
        bad.set(0, 1, Quat::new(f64::NAN, 0.0, 0.0, 0.0));
        assert!(matches!(qsvd(&bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn rank_one_outer_product() {
        // u v* with unit quaternion vectors u (3x1), v (2x1)
        let u = QMat::from_fn(3, 1, |r, _| Quat::new(0.0, [1.0, 2.0, 0.0][r], 0.0, [0.0, 1.0, 3.0][r]));
        let u = u.scale(1.0 / u.fro_norm());
        let v = QMat::from_fn(2, 1, |r, _| Quat::new([0.5, 1.0][r], 0.0, [2.0, -1.0][r], 0.0));
        let v = v.scale(1.0 / v.fro_norm());
        let a = u.mat_mul(&v.conj_transpose()).unwrap();
        let s = singular_values(&a).unwrap();
        assert!(close(s[0], 1.0, 1e-12));
        assert!(s[1].abs() < 1e-12);
        let d = qsvd(&a).unwrap();
        assert!(close(d.sigma[0], s[0], 1e-12));
    }
}
