//! Binary checkpoints.
//!
//! ```text
//! "XGFT" | u32 version | u32 count | count x parameter record
//! then tagged blocks: [4-byte tag | u64 length | payload]
//!   MSTR  f64 master copies of every parameter, in record order
//!   OPTM  u64 steps | u64 skipped | f64 square averages | f64 momenta
//!   STAT  JSON trainer state (config, curriculum, rng positions, sessions)
//! ```
//! A parameter record is `u32 name length | UTF-8 name | u32 ndims |
//! u32 dims... | f32 values`, all little-endian. The f32 copy is the
//! portable one; the f64 block makes resumption exact.

use crate::a2c::{OptimizerState, Trainer, TrainerState};
use crate::error::{Error, Result};
use crate::teacher::Teacher;
use crate::tensor::{ParameterSet, Tensor};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"XGFT";
pub const FORMAT_VERSION: u32 = 1;

const MASTER: &[u8; 4] = b"MSTR";
const OPTIM: &[u8; 4] = b"OPTM";
const STATE: &[u8; 4] = b"STAT";

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainerState,
    pub params: ParameterSet,
    pub optimizer: OptimizerState,
    /// Parameter values as stored in the f32 records.
    pub stored_f32: Vec<Tensor>,
}

impl Checkpoint {
    pub fn into_trainer(self, teacher: Teacher) -> Result<Trainer> {
        Trainer::restore(&self.state, teacher, self.params, self.optimizer)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, ts: &[Tensor]) {
    for t in ts {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn block(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

pub fn encode_checkpoint(trainer: &Trainer) -> Result<Vec<u8>> {
    let params = &trainer.params;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.names().iter().zip(params.values()) {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for d in t.shape() {
            put_u32(&mut out, *d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut master = Vec::new();
    put_f64s(&mut master, params.values());
    block(&mut out, MASTER, &master);

    let opt = &trainer.optimizer;
    let mut o = Vec::new();
    o.extend_from_slice(&opt.steps.to_le_bytes());
    o.extend_from_slice(&opt.skipped.to_le_bytes());
    put_f64s(&mut o, &opt.square_avg);
    put_f64s(&mut o, &opt.momentum);
    block(&mut out, OPTIM, &o);

    block(&mut out, STATE, &serde_json::to_vec(&trainer.state())?);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn like(shapes: &[Vec<usize>], r: &mut Reader) -> Result<Vec<Tensor>> {
    shapes
        .iter()
        .map(|s| Tensor::new(s.clone(), r.f64s(s.iter().product())?))
        .collect()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| Error::Checkpoint("file too short for a header".into()))?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {:?}, expected \"XGFT\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("format version {version}, this build reads {FORMAT_VERSION}")));
    }
    let count = r.u32()? as usize;
    let mut names = Vec::with_capacity(count);
    let mut shapes = Vec::with_capacity(count);
    let mut stored = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let nd = r.u32()? as usize;
        let shape: Vec<usize> = (0..nd).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let vals = r.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        stored.push(Tensor::new(shape.clone(), vals)?);
        names.push(name);
        shapes.push(shape);
    }

    let (mut master, mut optim, mut state) = (None, None, None);
    while !r.done() {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()? as usize;
        let payload = r.take(len)?;
        let mut b = Reader { bytes: payload, pos: 0 };
        match &tag {
            MASTER => master = Some(like(&shapes, &mut b)?),
            OPTIM => {
                let steps = b.u64()?;
                let skipped = b.u64()?;
                let square_avg = like(&shapes, &mut b)?;
                let momentum = like(&shapes, &mut b)?;
                optim = Some(OptimizerState {
                    square_avg,
                    momentum,
                    steps,
                    skipped,
                });
            }
            STATE => state = Some(serde_json::from_slice::<TrainerState>(payload)?),
            other => {
                return Err(Error::Checkpoint(format!("unknown block {:?}", String::from_utf8_lossy(other))));
            }
        }
        if tag != *STATE && !b.done() {
            return Err(Error::Checkpoint(format!("block {:?} has trailing bytes", String::from_utf8_lossy(&tag))));
        }
    }
    let missing = |what: &str| Error::Checkpoint(format!("missing {what} block"));
    let values = master.ok_or_else(|| missing("MSTR"))?;
    let mut params = ParameterSet::new(state.as_ref().map_or(0, |s: &TrainerState| s.seed));
    for (name, v) in names.iter().zip(values) {
        params.insert(name, v)?;
    }
    Ok(Checkpoint {
        state: state.ok_or_else(|| missing("STAT"))?,
        params,
        optimizer: optim.ok_or_else(|| missing("OPTM"))?,
        stored_f32: stored,
    })
}

pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(trainer)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    // write-then-rename so a crash never leaves a torn file behind
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
