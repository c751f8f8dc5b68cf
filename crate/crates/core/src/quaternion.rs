//! Quaternion scalars and quaternion matrices stored as four real planes.
//!
//! A quaternion matrix `A = A0 + A1 i + A2 j + A3 k` keeps each component
//! plane as a separate dense real matrix. Everything heavy in the trainer
//! (inner products, the real representation, weighted sums of samples) is
//! plane-wise, so this layout keeps the inner loops contiguous.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A quaternion `w + x i + y j + z k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Quat { w, x, y, z }
    }

    pub fn zero() -> Self {
        Quat::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn one() -> Self {
        Quat::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn i() -> Self {
        Quat::new(T::zero(), T::one(), T::zero(), T::zero())
    }

    pub fn j() -> Self {
        Quat::new(T::zero(), T::zero(), T::one(), T::zero())
    }

    pub fn k() -> Self {
        Quat::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    pub fn conj(self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sqr(self) -> T {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn modulus(self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Components in plane order (real, i, j, k).
    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(c: [T; 4]) -> Self {
        Quat::new(c[0], c[1], c[2], c[3])
    }
}

impl<T: Real> Add for Quat<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Quat<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Quat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product.
impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, c: Self) -> Self {
        let a = self;
        Quat::new(
            a.w * c.w - a.x * c.x - a.y * c.y - a.z * c.z,
            a.w * c.x + a.x * c.w + a.y * c.z - a.z * c.y,
            a.w * c.y - a.x * c.z + a.y * c.w + a.z * c.x,
            a.w * c.z + a.x * c.y - a.y * c.x + a.z * c.w,
        )
    }
}

/// Block layout of the real representation: entry `[r][c]` names the plane
/// placed in block `(r, c)` and its sign.
pub(crate) const REAL_REP_BLOCKS: [[(usize, bool); 4]; 4] = [
    [(0, false), (1, true), (2, true), (3, true)],
    [(1, false), (0, false), (3, true), (2, false)],
    [(2, false), (3, false), (0, false), (1, true)],
    [(3, false), (2, true), (1, false), (0, false)],
];

/// An `m x n` quaternion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QMat<T: Real> {
    planes: [DMatrix<T>; 4],
}

/// The `4m x 4n` real matrix of a quaternion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealRep<T: Real>(pub DMatrix<T>);

impl<T: Real> RealRep<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }
}

fn check_same_shape<T: Real>(a: &QMat<T>, b: &QMat<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

impl<T: Real> QMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat {
            planes: std::array::from_fn(|_| DMatrix::zeros(rows, cols)),
        }
    }

    /// The real identity, viewed as a quaternion matrix.
    pub fn identity(n: usize) -> Self {
        let mut q = Self::zeros(n, n);
        q.planes[0] = DMatrix::identity(n, n);
        q
    }

    pub fn from_planes(planes: [DMatrix<T>; 4]) -> Result<Self> {
        let shape = planes[0].shape();
        if planes.iter().any(|p| p.shape() != shape) {
            return Err(Error::Dimension(
                "quaternion planes must share one shape".into(),
            ));
        }
        Ok(QMat { planes })
    }

    /// Pure quaternion matrix from its i, j, k planes.
    pub fn pure(i: DMatrix<T>, j: DMatrix<T>, k: DMatrix<T>) -> Result<Self> {
        let real = DMatrix::zeros(i.nrows(), i.ncols());
        Self::from_planes([real, i, j, k])
    }

    /// Embeds a real matrix (zero imaginary planes).
    pub fn from_real(a: DMatrix<T>) -> Self {
        let (m, n) = a.shape();
        let mut q = Self::zeros(m, n);
        q.planes[0] = a;
        q
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Quat<T>) -> Self {
        let mut q = Self::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                q.set(r, c, f(r, c));
            }
        }
        q
    }

    pub fn rows(&self) -> usize {
        self.planes[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.planes[0].ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.planes[0].shape()
    }

    pub fn plane(&self, k: usize) -> &DMatrix<T> {
        &self.planes[k]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut DMatrix<T> {
        &mut self.planes[k]
    }

    pub fn planes(&self) -> &[DMatrix<T>; 4] {
        &self.planes
    }

    pub fn into_planes(self) -> [DMatrix<T>; 4] {
        self.planes
    }

    pub fn get(&self, r: usize, c: usize) -> Quat<T> {
        Quat::from_array(std::array::from_fn(|k| self.planes[k][(r, c)]))
    }

    pub fn set(&mut self, r: usize, c: usize, q: Quat<T>) {
        for (k, v) in q.to_array().into_iter().enumerate() {
            self.planes[k][(r, c)] = v;
        }
    }

    /// True when the real plane is identically zero.
    pub fn is_pure(&self) -> bool {
        self.planes[0].iter().all(|v| *v == T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_shape(self, other, "add")?;
        Ok(QMat {
            planes: std::array::from_fn(|k| &self.planes[k] + &other.planes[k]),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_shape(self, other, "sub")?;
        Ok(QMat {
            planes: std::array::from_fn(|k| &self.planes[k] - &other.planes[k]),
        })
    }

    /// Multiplication by a real scalar.
    pub fn scale(&self, s: T) -> Self {
        QMat {
            planes: std::array::from_fn(|k| &self.planes[k] * s),
        }
    }

    /// `self += s * other`, plane-wise.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<()> {
        check_same_shape(self, other, "axpy")?;
        for k in 0..4 {
            self.planes[k].zip_apply(&other.planes[k], |a, b| *a += s * b);
        }
        Ok(())
    }

    /// Quaternion matrix product.
    pub fn mat_mul(&self, c: &Self) -> Result<Self> {
        if self.cols() != c.rows() {
            return Err(Error::Dimension(format!(
                "mat_mul: {}x{} times {}x{}",
                self.rows(),
                self.cols(),
                c.rows(),
                c.cols()
            )));
        }
        let [a0, a1, a2, a3] = &self.planes;
        let [c0, c1, c2, c3] = &c.planes;
        let p0 = a0 * c0 - a1 * c1 - a2 * c2 - a3 * c3;
        let p1 = a0 * c1 + a1 * c0 + a2 * c3 - a3 * c2;
        let p2 = a0 * c2 - a1 * c3 + a2 * c0 + a3 * c1;
        let p3 = a0 * c3 + a1 * c2 - a2 * c1 + a3 * c0;
        Ok(QMat {
            planes: [p0, p1, p2, p3],
        })
    }

    pub fn conj_transpose(&self) -> Self {
        QMat {
            planes: std::array::from_fn(|k| {
                let t = self.planes[k].transpose();
                if k == 0 {
                    t
                } else {
                    -t
                }
            }),
        }
    }

    /// Real part of `Tr(X* Y)`: the plane-wise Euclidean dot product.
    pub fn real_inner(&self, other: &Self) -> Result<T> {
        check_same_shape(self, other, "real_inner")?;
        Ok(self
            .planes
            .iter()
            .zip(&other.planes)
            .fold(T::zero(), |acc, (a, b)| acc + a.dot(b)))
    }

    pub fn fro_norm_sqr(&self) -> T {
        self.planes
            .iter()
            .fold(T::zero(), |acc, p| acc + p.norm_squared())
    }

    pub fn fro_norm(&self) -> T {
        self.fro_norm_sqr().sqrt()
    }

    /// Real representation of size `4m x 4n`.
    pub fn to_real_rep(&self) -> RealRep<T> {
        let (m, n) = self.shape();
        let mut out = DMatrix::zeros(4 * m, 4 * n);
        for (br, row) in REAL_REP_BLOCKS.iter().enumerate() {
            for (bc, &(plane, negate)) in row.iter().enumerate() {
                let src = &self.planes[plane];
                let mut dst = out.view_mut((br * m, bc * n), (m, n));
                if negate {
                    dst.copy_from(&(-src));
                } else {
                    dst.copy_from(src);
                }
            }
        }
        RealRep(out)
    }

    /// Structure projection back from a `4m x 4n` real matrix.
    ///
    /// Each plane is the signed average of its four block occurrences, which
    /// is the orthogonal projection onto the image of the real representation
    /// and an exact left inverse of [`QMat::to_real_rep`].
    pub fn from_real_rep(real: &DMatrix<T>) -> Result<Self> {
        let (rr, rc) = real.shape();
        if rr % 4 != 0 || rc % 4 != 0 || rr == 0 || rc == 0 {
            return Err(Error::Dimension(format!(
                "real representation must be 4m x 4n, got {rr}x{rc}"
            )));
        }
        let (m, n) = (rr / 4, rc / 4);
        let mut planes: [DMatrix<T>; 4] = std::array::from_fn(|_| DMatrix::zeros(m, n));
        for (br, row) in REAL_REP_BLOCKS.iter().enumerate() {
            for (bc, &(plane, negate)) in row.iter().enumerate() {
                let block = real.view((br * m, bc * n), (m, n));
                let s = if negate { -T::one() } else { T::one() };
                planes[plane].zip_apply(&block, |acc, v| *acc += s * v);
            }
        }
        let quarter = T::lit(0.25);
        for p in &mut planes {
            *p *= quarter;
        }
        Ok(QMat { planes })
    }
}

impl<T: Real> Add for &QMat<T> {
    type Output = QMat<T>;
    /// Panics on shape mismatch; use [`QMat::add`] for a checked sum.
    fn add(self, o: Self) -> QMat<T> {
        QMat::add(self, o).expect("shape mismatch in quaternion addition")
    }
}

impl<T: Real> Sub for &QMat<T> {
    type Output = QMat<T>;
    fn sub(self, o: Self) -> QMat<T> {
        QMat::sub(self, o).expect("shape mismatch in quaternion subtraction")
    }
}
