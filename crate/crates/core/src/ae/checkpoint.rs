//! Binary model checkpoints.
//!
//! Layout (little-endian): `SMAE`, version `u16`, block count `u16`, then per
//! block a `u16` name length, UTF-8 name and `u32` width; activation tag `u8`;
//! tensor count `u32`; per tensor `u8` rank, `u32` dims and binary32 data.
//! Tensors are the encoder's `w1 b1 w2 b2` followed by each decoder's.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::mlp::{Activation, Mlp};
use super::model::AeModel;
use crate::error::{Error, Result};
use crate::schema::{Block, LatentSchema};

pub const MAGIC: &[u8; 4] = b"SMAE";
pub const VERSION: u16 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(model: &AeModel, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let blocks = model.schema.blocks();
    w.write_all(&(blocks.len() as u16).to_le_bytes())?;
    for b in blocks {
        let name = b.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| bad("block name too long"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(b.width as u32).to_le_bytes())?;
    }
    w.write_all(&[model.encoder.activation.tag()])?;
    let mlps: Vec<&Mlp> = std::iter::once(&model.encoder).chain(&model.decoders).collect();
    w.write_all(&(4 * mlps.len() as u32).to_le_bytes())?;
    for m in mlps {
        for (data, dims) in m.tensors() {
            w.write_all(&[dims.len() as u8])?;
            for d in &dims {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn tensor(&mut self) -> Result<(Vec<usize>, Vec<f64>)> {
        let rank = self.u8()? as usize;
        let dims = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        if len > 1 << 28 {
            return Err(bad("tensor too large"));
        }
        let data = (0..len)
            .map(|_| Ok(f32::from_le_bytes(self.bytes()?) as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok((dims, data))
    }
}

fn read_mlp<R: Read>(r: &mut Reader<R>, activation: Activation) -> Result<Mlp> {
    let (d_w1, w1) = r.tensor()?;
    let (d_b1, b1) = r.tensor()?;
    let (d_w2, w2) = r.tensor()?;
    let (d_b2, b2) = r.tensor()?;
    match (&d_w1[..], &d_b1[..], &d_w2[..], &d_b2[..]) {
        ([h, i], [h1], [o, h2], [o1]) if h == h1 && h == h2 && o == o1 => Ok(Mlp {
            input: *i,
            hidden: *h,
            output: *o,
            activation,
            w1,
            b1,
            w2,
            b2,
        }),
        _ => Err(bad("inconsistent tensor dimensions")),
    }
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<AeModel> {
    let mut r = Reader { inner: reader };
    if &r.bytes::<4>()? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u16()? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let mut name = vec![0u8; len];
        r.inner
            .read_exact(&mut name)
            .map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| bad("block name is not UTF-8"))?;
        blocks.push(Block {
            name,
            width: r.u32()? as usize,
        });
    }
    let schema = Arc::new(LatentSchema::new(blocks)?);
    let activation = Activation::from_tag(r.u8()?).ok_or_else(|| bad("unknown activation"))?;
    let tensors = r.u32()? as usize;
    if tensors < 8 || tensors % 4 != 0 {
        return Err(bad(format!("expected encoder and decoder tensors, found {tensors}")));
    }
    let encoder = read_mlp(&mut r, activation)?;
    let decoders = (1..tensors / 4)
        .map(|_| read_mlp(&mut r, activation))
        .collect::<Result<Vec<_>>>()?;
    AeModel::from_parts(schema, encoder, decoders)
}

pub fn save(model: &AeModel, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<AeModel> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
