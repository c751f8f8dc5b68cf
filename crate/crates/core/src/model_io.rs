//! Versioned little-endian binary model files.
//!
//! Layout (all integers `u64` unless noted, all reals `f64`):
//!
//! ```text
//! magic "LSQMMDL\0" | version u32 | rows | cols
//! 4 planes of W, row-major, real plane first
//! b | n_alpha | alpha[n_alpha] | n_support | support[n_support]
//! c | lambda | rho | tau | tol | max_iter
//! qp_tol flag u8, value | solver_tol | solver_max_iter flag u8, value | record_time u8
//! converged u8 | iterations | final_residual
//! n_trace | (iter, objective, residual, seconds)[n_trace]
//! ```
//!
//! Optional values store a zero flag and a zero payload when absent.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::trainer::{TraceRecord, TrainConfig, TrainedModel};
use crate::QMatrix;

pub const MAGIC: &[u8; 8] = b"LSQMMDL\0";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Validation(format!("model file truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Validation(format!("invalid flag byte {v}"))),
        }
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Validation("length does not fit in usize".into()))
    }
    /// Length prefix, checked against the bytes left so corrupt files cannot
    /// trigger huge allocations.
    fn len(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        let left = self.buf.len() - self.pos;
        if n.checked_mul(item_bytes).is_none_or(|b| b > left) {
            return Err(Error::Validation(format!("length {n} exceeds file size")));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Serializes a model to bytes.
pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    let (rows, cols) = model.shape();
    w.usize(rows);
    w.usize(cols);
    for plane in model.w.planes() {
        for r in 0..rows {
            for c in 0..cols {
                w.f64(plane[(r, c)]);
            }
        }
    }
    w.f64(model.b);
    w.usize(model.alpha.len());
    model.alpha.iter().for_each(|&a| w.f64(a));
    w.usize(model.support_indices.len());
    model.support_indices.iter().for_each(|&i| w.usize(i));

    let cfg = &model.config;
    for v in [cfg.c, cfg.lambda, cfg.rho, cfg.tau, cfg.tol] {
        w.f64(v);
    }
    w.usize(cfg.max_iter);
    w.u8(cfg.qp_tol.is_some() as u8);
    w.f64(cfg.qp_tol.unwrap_or(0.0));
    w.f64(cfg.solver_tol);
    w.u8(cfg.solver_max_iter.is_some() as u8);
    w.usize(cfg.solver_max_iter.unwrap_or(0));
    w.u8(cfg.record_time as u8);

    w.u8(model.converged as u8);
    w.usize(model.iterations);
    w.f64(model.final_residual);
    w.usize(model.trace.len());
    for t in &model.trace {
        w.usize(t.iter);
        w.f64(t.objective);
        w.f64(t.residual);
        w.f64(t.seconds);
    }
    w.0
}

/// Parses bytes produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8).ok() != Some(&MAGIC[..]) {
        return Err(Error::Validation("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Validation(format!("unsupported model format version {version}")));
    }
    let rows = r.usize()?;
    let cols = r.usize()?;
    let cells = rows
        .checked_mul(cols)
        .filter(|&n| n.checked_mul(32).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| Error::Validation(format!("implausible shape {rows}x{cols}")))?;
    let mut planes = Vec::with_capacity(4);
    for _ in 0..4 {
        let mut values = Vec::with_capacity(cells);
        for _ in 0..cells {
            values.push(r.f64()?);
        }
        planes.push(DMatrix::from_row_slice(rows, cols, &values));
    }
    let planes: [DMatrix<f64>; 4] = planes.try_into().unwrap();
    let w = QMatrix::from_planes(planes)?;
    let b = r.f64()?;
    let n_alpha = r.len(8)?;
    let alpha = (0..n_alpha).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let n_support = r.len(8)?;
    let support_indices = (0..n_support).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    if support_indices.iter().any(|&i| i >= n_alpha) {
        return Err(Error::Validation("support index out of range".into()));
    }

    let (c, lambda, rho, tau, tol) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let max_iter = r.usize()?;
    let has_qp_tol = r.flag()?;
    let qp_tol = r.f64()?;
    let solver_tol = r.f64()?;
    let has_budget = r.flag()?;
    let budget = r.usize()?;
    let record_time = r.flag()?;
    let config = TrainConfig {
        c,
        lambda,
        rho,
        tau,
        tol,
        max_iter,
        qp_tol: has_qp_tol.then_some(qp_tol),
        solver_tol,
        solver_max_iter: has_budget.then_some(budget),
        record_time,
    };

    let converged = r.flag()?;
    let iterations = r.usize()?;
    let final_residual = r.f64()?;
    let n_trace = r.len(32)?;
    let mut trace = Vec::with_capacity(n_trace);
    for _ in 0..n_trace {
        trace.push(TraceRecord {
            iter: r.usize()?,
            objective: r.f64()?,
            residual: r.f64()?,
            seconds: r.f64()?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Validation(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TrainedModel {
        w,
        b,
        alpha,
        support_indices,
        converged,
        iterations,
        final_residual,
        trace,
        config,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Validation(message) => Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Quaternion;

    fn sample_model() -> TrainedModel {
        TrainedModel {
            w: QMatrix::from_fn(2, 3, |r, c| Quaternion::new(10.0 * r as f64 + c as f64, -0.1, 1e-300, f64::MIN_POSITIVE)),
            b: -0.25,
            alpha: vec![0.0, 1.5, 3.0],
            support_indices: vec![1],
            converged: true,
            iterations: 7,
            final_residual: 3.3e-4,
            trace: vec![TraceRecord {
                iter: 1,
                objective: 0.1 + 0.2,
                residual: 1.0 / 3.0,
                seconds: 0.0,
            }],
            config: TrainConfig {
                qp_tol: Some(1e-9),
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample_model();
        let back = decode(&encode(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode(&back), encode(&m));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample_model());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 3);
        // real plane row-major: 0, 1, 2, 10, ...
        let at = |k: usize| f64::from_le_bytes(bytes[28 + 8 * k..36 + 8 * k].try_into().unwrap());
        assert_eq!([at(0), at(1), at(2), at(3)], [0.0, 1.0, 2.0, 10.0]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&sample_model());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
