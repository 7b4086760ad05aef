//! Offline sample dump: magic, JSON header, then fixed-size little-endian records.
//!
//! Each record is the occupancy bitmask bytes, gear and steer as f32, the policy
//! as f32 values and the value target as f32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::evaluator::{StateTensor, TrainingSample};

pub const SAMPLE_MAGIC: &[u8; 5] = b"PKDS1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    count: usize,
    grid: usize,
    actions: usize,
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Serializes samples sharing one grid size and action count.
pub fn encode_samples(samples: &[TrainingSample]) -> Result<Vec<u8>, DataError> {
    let (grid, actions) = samples.first().map_or((0, 0), |s| (s.input.size, s.policy.len()));
    if samples
        .iter()
        .any(|s| s.input.size != grid || s.policy.len() != actions)
    {
        return Err(DataError::Format("samples differ in grid size or action count".into()));
    }
    let header = serde_json::to_vec(&DumpHeader {
        count: samples.len(),
        grid,
        actions,
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(SAMPLE_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for s in samples {
        out.extend_from_slice(&s.input.occupancy);
        put_f32(&mut out, s.input.gear);
        put_f32(&mut out, s.input.steer);
        for &p in &s.policy {
            put_f32(&mut out, p);
        }
        put_f32(&mut out, s.value);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| DataError::Format("sample file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn f32(&mut self) -> Result<f64, DataError> {
        let b = self.take(4)?;
        Ok(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
    }
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<TrainingSample>, DataError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(5).ok() != Some(&SAMPLE_MAGIC[..]) {
        return Err(DataError::Format("not a sample file (bad magic)".into()));
    }
    let len = r.take(4)?;
    let len = u32::from_le_bytes([len[0], len[1], len[2], len[3]]) as usize;
    let header: DumpHeader =
        serde_json::from_slice(r.take(len)?).map_err(|e| DataError::Format(format!("bad header: {e}")))?;
    let mut out = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let occupancy = r.take(header.grid * header.grid)?.to_vec();
        let gear = r.f32()?;
        let steer = r.f32()?;
        let policy = (0..header.actions).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        let value = r.f32()?;
        out.push(TrainingSample {
            input: StateTensor {
                size: header.grid,
                occupancy,
                gear,
                steer,
            },
            policy,
            value,
        });
    }
    if r.pos != bytes.len() {
        return Err(DataError::Format("trailing bytes after the last sample".into()));
    }
    Ok(out)
}

pub fn write_samples(samples: &[TrainingSample], path: &Path) -> Result<(), DataError> {
    fs::write(path, encode_samples(samples)?)?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<TrainingSample>, DataError> {
    decode_samples(&fs::read(path)?)
}
