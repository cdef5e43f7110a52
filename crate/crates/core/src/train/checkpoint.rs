//! Binary checkpoint container.
//!
//! ```text
//! magic   8 bytes  "APN2CKPT"
//! version u32 LE
//! length  u64 LE   payload byte count
//! payload          see `write_payload`
//! sha256  32 bytes over every preceding byte
//! ```
//!
//! All integers and floats are little-endian; parameter values and
//! optimizer moments are stored as `f64`, which is exact for `f32` models.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AdamWState, TrainState};
use crate::autodiff::{ParamStore, Tensor};
use crate::config::RunConfig;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::float::Float;
use crate::generator::Generator;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"APN2CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }

    fn values<T: Float>(&mut self, t: &Tensor<T>) {
        for v in t.data() {
            self.0.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }

    fn store<T: Float>(&mut self, s: &ParamStore<T>) {
        self.u32(s.len() as u32);
        for (_, p) in s.iter() {
            self.bytes(p.name().as_bytes());
            self.u32(p.value().rank() as u32);
            for &d in p.value().shape() {
                self.u64(d as u64);
            }
            self.values(p.value());
        }
    }

    fn adam<T: Float>(&mut self, a: &AdamWState<T>) {
        self.u64(a.step);
        for (m, v) in a.m.iter().zip(&a.v) {
            self.values(m);
            self.values(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("payload ends early".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }

    fn values<T: Float>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Tensor::new(shape, data)
    }

    /// Read a store section into `store`, which must have the same names and shapes.
    fn store_into<T: Float>(&mut self, store: &mut ParamStore<T>, what: &str) -> Result<()> {
        let count = self.u32()? as usize;
        if count != store.len() {
            return Err(Error::Checkpoint(format!(
                "{what}: {count} parameters in file, model has {}",
                store.len()
            )));
        }
        for i in 0..count {
            let name = String::from_utf8(self.bytes()?.to_vec())
                .map_err(|_| Error::Checkpoint(format!("{what}: parameter name is not UTF-8")))?;
            let rank = self.u32()? as usize;
            let shape = (0..rank).map(|_| Ok(self.u64()? as usize)).collect::<Result<Vec<_>>>()?;
            let id = crate::autodiff::ParamId(i);
            let expected = store.get(id);
            if expected.name() != name || expected.value().shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{what}: parameter {i} is `{name}` {shape:?}, model expects `{}` {:?}",
                    expected.name(),
                    expected.value().shape()
                )));
            }
            let value = self.values(&shape)?;
            store.set_value(id, value)?;
        }
        Ok(())
    }

    fn adam_into<T: Float>(&mut self, state: &mut AdamWState<T>) -> Result<()> {
        state.step = self.u64()?;
        for (m, v) in state.m.iter_mut().zip(state.v.iter_mut()) {
            *m = self.values(&m.shape().to_vec())?;
            *v = self.values(&v.shape().to_vec())?;
        }
        Ok(())
    }
}

fn write_payload<T: Float>(state: &TrainState<T>) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.u64(state.step);
    w.u64(state.epoch);
    w.u64(state.cursor);
    w.bytes(state.config.to_toml_string()?.as_bytes());
    w.store(state.generator.params());
    w.store(state.discriminator.params());
    w.adam(&state.g_opt);
    w.adam(&state.d_opt);
    Ok(w.0)
}

/// Serialize the full training state.
pub fn checkpoint_bytes<T: Float>(state: &TrainState<T>) -> Result<Vec<u8>> {
    let payload = write_payload(state)?;
    let mut out = Vec::with_capacity(HEADER + payload.len() + DIGEST);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parse a checkpoint produced by [`checkpoint_bytes`].
pub fn checkpoint_from_bytes<T: Float>(bytes: &[u8]) -> Result<TrainState<T>> {
    if bytes.len() >= 8 && &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    if bytes.len() < HEADER + DIGEST {
        return Err(Error::CheckpointChecksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if (bytes.len() - HEADER - DIGEST) as u64 != len {
        return Err(Error::CheckpointChecksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CheckpointChecksum);
    }
    let mut r = Reader {
        buf: &body[HEADER..],
        pos: 0,
    };
    let (step, epoch, cursor) = (r.u64()?, r.u64()?, r.u64()?);
    let text = std::str::from_utf8(r.bytes()?).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
    let config = RunConfig::from_toml_str(text)?;
    let mut generator = Generator::new(config.generator_config(), config.train.seed)?;
    let mut discriminator = Discriminator::new(config.discriminator_config(), config.train.seed.wrapping_add(1))?;
    r.store_into(generator.params_mut(), "generator")?;
    r.store_into(discriminator.params_mut(), "discriminator")?;
    let mut g_opt = AdamWState::new(generator.params());
    let mut d_opt = AdamWState::new(discriminator.params());
    r.adam_into(&mut g_opt)?;
    r.adam_into(&mut d_opt)?;
    if r.pos != r.buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing payload bytes", r.buf.len() - r.pos)));
    }
    Ok(TrainState {
        config,
        generator,
        discriminator,
        g_opt,
        d_opt,
        step,
        epoch,
        cursor,
    })
}

pub fn save_checkpoint<T: Float>(state: &TrainState<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(state)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Float>(path: impl AsRef<Path>) -> Result<TrainState<T>> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
