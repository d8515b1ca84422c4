//! Binary checkpoint format.
//!
//! ```text
//! magic    "IRCKPT1\n"
//! count    u32
//! table    count x (u32 name_len, name bytes, u8 dtype, u32 rank, rank x u32 dims)
//! data     each tensor's values, little-endian, in table order
//! ```
//!
//! dtype 1 is f32 and 2 is f64. The table lists every network parameter and
//! BN buffer in visit order, optionally followed by `adam.step`, `adam.lr`
//! and the first/second moment of each trainable tensor.

use std::path::Path;

use crate::error::{Error, Result};

use super::adam::Adam;
use super::real::Real;
use super::unet::ResUNet;

pub const MAGIC: &[u8; 8] = b"IRCKPT1\n";

struct Entry {
    name: String,
    dtype: u8,
    dims: Vec<usize>,
    raw: Vec<u8>,
}

pub fn checkpoint_bytes<T: Real>(model: &ResUNet<T>, adam: Option<&Adam<T>>) -> Vec<u8> {
    let mut table: Vec<(String, u8, Vec<usize>)> = Vec::new();
    let mut data = Vec::new();
    let mut trainable = Vec::new();
    model.visit(&mut |name, p| {
        if p.trainable {
            trainable.push((name.clone(), p.shape.clone()));
        }
        table.push((name, T::DTYPE, p.shape.clone()));
        p.value.iter().for_each(|v| v.write_le(&mut data));
    });
    if let Some(adam) = adam {
        table.push(("adam.step".into(), f64::DTYPE, vec![1]));
        (adam.step as f64).write_le(&mut data);
        table.push(("adam.lr".into(), f64::DTYPE, vec![1]));
        adam.lr.write_le(&mut data);
        if !adam.m.is_empty() {
            for (i, (name, shape)) in trainable.iter().enumerate() {
                for (kind, moments) in [("m", &adam.m), ("v", &adam.v)] {
                    table.push((format!("adam.{kind}.{name}"), T::DTYPE, shape.clone()));
                    moments[i].iter().for_each(|v| v.write_le(&mut data));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(data.len() + 64 * table.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, dtype, dims) in &table {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(*dtype);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    out.extend_from_slice(&data);
    out
}

pub fn save_checkpoint<T: Real>(
    model: &ResUNet<T>,
    adam: Option<&Adam<T>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model, adam)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(ResUNet<T>, Option<Adam<T>>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a checkpoint fully before building anything, so a corrupt file
/// never yields a partially loaded model.
pub fn parse_checkpoint<T: Real>(bytes: &[u8]) -> Result<(ResUNet<T>, Option<Adam<T>>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Format("bad magic; not a checkpoint".into()));
    }
    let count = r.u32()?;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = r.take(1)?[0];
        if dtype != 1 && dtype != 2 {
            return Err(Error::Format(format!("{name}: unknown dtype {dtype}")));
        }
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        entries.push(Entry {
            name,
            dtype,
            dims,
            raw: Vec::new(),
        });
    }
    for e in &mut entries {
        let n: usize = e.dims.iter().product();
        let width = if e.dtype == 1 { f32::BYTES } else { f64::BYTES };
        e.raw = r.take(n * width)?.to_vec();
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor data",
            bytes.len() - r.pos
        )));
    }

    let head = entries
        .iter()
        .find(|e| e.name == "head.weight")
        .ok_or_else(|| Error::Format("missing head.weight".into()))?;
    let width = match head.dims[..] {
        [3, w, 1, 1] if w >= 4 => w,
        _ => return Err(Error::Format(format!("head.weight has shape {:?}", head.dims))),
    };
    let mut model = ResUNet::<T>::new(width, 0)?;
    let mut idx = 0;
    let mut err = None;
    let mut trainable = Vec::new();
    model.visit_mut(&mut |name, p| {
        if err.is_some() {
            return;
        }
        match entries.get(idx) {
            Some(e) if e.name == name && e.dims == p.shape => {
                p.value = decode::<T>(e);
                if p.trainable {
                    trainable.push((name, p.shape.clone()));
                }
            }
            Some(e) => {
                err = Some(format!(
                    "shape table mismatch at {}: expected {name} {:?}",
                    e.name, p.shape
                ))
            }
            None => err = Some(format!("missing tensor {name}")),
        }
        idx += 1;
    });
    if let Some(msg) = err {
        return Err(Error::Format(msg));
    }

    let rest = &entries[idx..];
    if rest.is_empty() {
        return Ok((model, None));
    }
    let scalar = |e: Option<&Entry>, name: &str| -> Result<f64> {
        match e {
            Some(e) if e.name == name && e.dims == [1] => Ok(decode::<f64>(e)[0]),
            _ => Err(Error::Format(format!("malformed optimizer entry, expected {name}"))),
        }
    };
    let step = scalar(rest.first(), "adam.step")?;
    let lr = scalar(rest.get(1), "adam.lr")?;
    let mut adam = Adam::new(lr);
    adam.step = step as u64;
    let moments = &rest[2..];
    if !moments.is_empty() {
        if moments.len() != 2 * trainable.len() {
            return Err(Error::Format(format!(
                "{} optimizer moments for {} trainable tensors",
                moments.len(),
                trainable.len()
            )));
        }
        for ((name, shape), pair) in trainable.iter().zip(moments.chunks_exact(2)) {
            for (kind, e) in ["m", "v"].iter().zip(pair) {
                if e.name != format!("adam.{kind}.{name}") || &e.dims != shape {
                    return Err(Error::Format(format!(
                        "shape table mismatch at {}: expected adam.{kind}.{name}",
                        e.name
                    )));
                }
            }
            adam.m.push(decode::<T>(&pair[0]));
            adam.v.push(decode::<T>(&pair[1]));
        }
    }
    Ok((model, Some(adam)))
}

fn decode<T: Real>(e: &Entry) -> Vec<T> {
    if e.dtype == T::DTYPE {
        e.raw.chunks_exact(T::BYTES).map(T::read_le).collect()
    } else if e.dtype == f32::DTYPE {
        e.raw.chunks_exact(4).map(|b| T::from_f64(f32::read_le(b).as_f64())).collect()
    } else {
        e.raw.chunks_exact(8).map(|b| T::from_f64(f64::read_le(b))).collect()
    }
}
