//! Versioned binary checkpoints.
//!
//! Layout: `b"EVNAVCKP"`, `u32` version, `u32` segment count, then per
//! segment `u32` name length, UTF-8 name, `u32` rank, `u64` dims; after the
//! table, every segment's values as little-endian `f64` in table order.

use std::io::{Read, Write};

use super::{NnError, ParamVector, Tensor};

pub const MAGIC: &[u8; 8] = b"EVNAVCKP";
pub const VERSION: u32 = 1;

/// Writes the values of every `(prefix, params)` pair; segment names are
/// stored as `prefix/name`.
pub fn save_checkpoint<W: Write>(mut out: W, nets: &[(&str, &ParamVector)]) -> Result<(), NnError> {
    let entries: Vec<(String, &Tensor)> = nets
        .iter()
        .flat_map(|(prefix, p)| {
            p.segments()
                .iter()
                .map(move |s| (format!("{prefix}/{}", s.name), &s.value))
        })
        .collect();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in &entries {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    for (_, t) in &entries {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads every `(name, tensor)` entry.
pub fn load_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>, NnError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let rank = read_u32(&mut input)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut input).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        table.push((name, shape));
    }
    let mut out = Vec::with_capacity(count);
    for (name, shape) in table {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(out)
}

/// Fills `params` from the entries stored under `prefix`, checking names and shapes.
pub fn restore(params: &mut ParamVector, prefix: &str, entries: &[(String, Tensor)]) -> Result<(), NnError> {
    for seg in params.segments_mut() {
        let key = format!("{prefix}/{}", seg.name);
        let (_, t) = entries
            .iter()
            .find(|(n, _)| *n == key)
            .ok_or_else(|| NnError::Checkpoint(format!("missing segment {key}")))?;
        if t.shape() != seg.value.shape() {
            return Err(NnError::ShapeMismatch {
                expected: seg.value.shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
        seg.value.data_mut().copy_from_slice(t.data());
    }
    Ok(())
}
