//! Binary checkpoints.
//!
//! Layout, all little-endian: magic, `u32` version, `u64` space fingerprint,
//! `u8` scheme id, `u64` step, `f64` t, `f64` dt, `u32` state count, each
//! state as `u64` length plus `f64` values (newest first), then `u32`
//! extension count and extensions as 4-byte tag, `u64` byte length, payload.
//!
//! Extensions: `FACT` holds the step type and state at which the current
//! quasi-Newton factorization was built, `NORM` the recent velocity norms
//! used by the blow-up check.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use super::{FlowOperator, Scheme, SchemeConfig, StepError, TimeStepper};
use crate::nonlinear::NewtonConfig;
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 13] = b"EMACFLOW-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint belongs to a different discretization (fingerprint {found:016x}, expected {expected:016x})")]
    Fingerprint { expected: u64, found: u64 },
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("rebuilding solver state: {0}")]
    Rebuild(#[from] StepError),
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn vec<T: Real>(&mut self, v: &[T]) -> io::Result<()> {
        self.u64(v.len() as u64)?;
        for x in v {
            self.f64(x.as_f64())?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => CheckpointError::Corrupt("truncated file".into()),
            _ => CheckpointError::Io(e),
        })?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn vec<T: Real>(&mut self, max: usize) -> Result<Vec<T>, CheckpointError> {
        let n = self.u64()? as usize;
        if n > max {
            return Err(CheckpointError::Corrupt(format!("vector length {n} exceeds {max}")));
        }
        (0..n).map(|_| Ok(T::lit(self.f64()?))).collect()
    }
}

impl<T: Real> TimeStepper<T> {
    /// Writes a checkpoint atomically (temporary file plus rename).
    pub fn write_checkpoint(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.encode(&mut buf)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &buf)?;
        std::fs::rename(&tmp, path)?;
        log::info!("checkpoint written at step {} to {}", self.step, path.display());
        Ok(())
    }

    pub fn encode<W: Write>(&self, out: W) -> Result<(), CheckpointError> {
        let mut w = Writer(out);
        w.0.write_all(CHECKPOINT_MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.u64(self.op.space().fingerprint())?;
        w.u8(self.config.scheme.id())?;
        w.u64(self.step as u64)?;
        w.f64(self.time())?;
        w.f64(self.config.dt)?;
        w.u32(self.history.len() as u32)?;
        for s in &self.history {
            w.vec(s)?;
        }
        let mut ext: Vec<([u8; 4], Vec<u8>)> = Vec::new();
        if let Some((kind, at)) = &self.factor_point {
            let mut p = Writer(Vec::new());
            p.u8(kind.id())?;
            p.vec(at)?;
            ext.push((*b"FACT", p.0));
        }
        let mut p = Writer(Vec::new());
        p.u32(self.norms.len() as u32)?;
        for &x in &self.norms {
            p.f64(x)?;
        }
        ext.push((*b"NORM", p.0));
        w.u32(ext.len() as u32)?;
        for (tag, payload) in ext {
            w.0.write_all(&tag)?;
            w.u64(payload.len() as u64)?;
            w.0.write_all(&payload)?;
        }
        Ok(())
    }

    /// Resumes a run from a checkpoint written for the same discretization
    /// and scheme configuration.
    pub fn restore(
        op: Arc<FlowOperator<T>>,
        config: SchemeConfig,
        newton: NewtonConfig,
        path: &Path,
    ) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::decode(op, config, newton, bytes.as_slice())
    }

    pub fn decode<R: Read>(
        op: Arc<FlowOperator<T>>,
        config: SchemeConfig,
        newton: NewtonConfig,
        input: R,
    ) -> Result<Self, CheckpointError> {
        let mut r = Reader(input);
        if &r.bytes::<13>()? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let expected = op.space().fingerprint();
        let found = r.u64()?;
        if found != expected {
            return Err(CheckpointError::Fingerprint { expected, found });
        }
        let scheme = Scheme::from_id(r.u8()?)
            .ok_or_else(|| CheckpointError::Corrupt("unknown scheme id".into()))?;
        if scheme != config.scheme {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint scheme {scheme}, configured {}",
                config.scheme
            )));
        }
        let step = r.u64()? as usize;
        let _t = r.f64()?;
        let dt = r.f64()?;
        if dt != config.dt {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint dt {dt}, configured {}",
                config.dt
            )));
        }
        let size = op.space().size();
        let n_states = r.u32()? as usize;
        if n_states == 0 || n_states > 4 {
            return Err(CheckpointError::Corrupt(format!("{n_states} states")));
        }
        let mut history = VecDeque::new();
        for _ in 0..n_states {
            let v: Vec<T> = r.vec(size)?;
            if v.len() != size {
                return Err(CheckpointError::Corrupt("state length".into()));
            }
            history.push_back(v);
        }
        let mut factor_point = None;
        let mut norms = VecDeque::new();
        for _ in 0..r.u32()? {
            let tag = r.bytes::<4>()?;
            let len = r.u64()? as usize;
            let mut payload = vec![0u8; len];
            r.0.read_exact(&mut payload)?;
            let mut p = Reader(payload.as_slice());
            match &tag {
                b"FACT" => {
                    let kind = Scheme::from_id(p.u8()?)
                        .ok_or_else(|| CheckpointError::Corrupt("unknown step type".into()))?;
                    factor_point = Some((kind, p.vec::<T>(size)?));
                }
                b"NORM" => {
                    for _ in 0..p.u32()? {
                        norms.push_back(p.f64()?);
                    }
                }
                // Unknown extensions are skipped.
                _ => log::debug!("skipping checkpoint extension {:?}", String::from_utf8_lossy(&tag)),
            }
        }
        let u0 = history[0].clone();
        let mut s = TimeStepper::new(op, config, newton, u0);
        s.step = step;
        s.history = history;
        s.log = (1..=step).map(|n| config.scheme.kind_for_step(n)).collect();
        if !norms.is_empty() {
            s.norms = norms;
        }
        if let Some((kind, at)) = factor_point {
            s.rebuild_factor(kind, at)?;
        }
        Ok(s)
    }
}
