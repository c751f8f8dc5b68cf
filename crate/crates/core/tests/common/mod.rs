#![allow(dead_code)]

use lsqmm::{QMatrix, Quaternion};
use proptest::prelude::*;

pub fn quat() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(Quaternion::from_array)
}

pub fn qmat_of(rows: usize, cols: usize) -> impl Strategy<Value = QMatrix> {
    prop::collection::vec(quat(), rows * cols)
        .prop_map(move |v| QMatrix::from_fn(rows, cols, |r, c| v[r * cols + c]))
}

pub fn qmat(max: usize) -> impl Strategy<Value = QMatrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| qmat_of(r, c))
}

pub fn pure_qmat(max: usize) -> impl Strategy<Value = QMatrix> {
    qmat(max).prop_map(|mut a| {
        a.plane_mut(0).fill(0.0);
        a
    })
}

pub fn max_abs_diff(a: &QMatrix, b: &QMatrix) -> f64 {
    a.sub(b).unwrap().planes().iter().flat_map(|p| p.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
}
