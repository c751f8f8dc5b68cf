//! Low-rank support quaternion matrix machine.
//!
//! Color images are encoded as pure quaternion matrices (R, G, B on the
//! i, j, k planes) and classified by a linear decision function whose
//! weight matrix is regularized by the quaternion nuclear norm. Training
//! alternates a hinge-loss dual QP, a singular value thresholding step and
//! a multiplier update.

pub mod baseline;
pub mod data;
pub mod dual_qp;
pub mod error;
pub mod metrics;
pub mod model_io;
pub mod qsvd;
pub mod quaternion;
pub mod report;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision quaternion.
pub type Quaternion = quaternion::Quat<f64>;
/// Double-precision quaternion matrix.
pub type QMatrix = quaternion::QMat<f64>;
/// Class label, `-1` or `+1`.
pub type Label = i8;
