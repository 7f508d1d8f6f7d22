//! Flat binary parameter blobs.
//!
//! ```text
//! "SLNN" | version u16 | input rank u8 | input dims u32.. | layer count u32 |
//!   per layer: kind u8 | hyper count u8 | hyper u32.. |
//!              param count u8 | per param: rank u8 | dims u32.. | f32 data
//! ```
//!
//! All integers and floats are little-endian. Hyper-parameters are the
//! stride and padding of a convolution and the target shape of a reshape.

use super::{Layer, LayerKind, Model, Tensor};
use crate::{Error, Result};

pub const BLOB_MAGIC: &[u8; 4] = b"SLNN";
pub const BLOB_VERSION: u16 = 1;

/// Cursor over a byte slice with bounds-checked little-endian reads.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn put_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

fn read_dims(r: &mut ByteReader<'_>) -> Result<Vec<usize>> {
    let rank = r.u8()? as usize;
    (0..rank).map(|_| r.u32().map(|d| d as usize)).collect()
}

fn put_param(out: &mut Vec<u8>, t: &Tensor) {
    put_dims(out, t.shape());
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_param(r: &mut ByteReader<'_>) -> Result<Tensor> {
    let dims = read_dims(r)?;
    let n: usize = dims.iter().product();
    if n.saturating_mul(4) > r.remaining() {
        return Err(Error::format("parameter data truncated"));
    }
    let data = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    Tensor::new(dims, data)
}

fn hyper(layer: &Layer) -> Vec<usize> {
    match layer {
        Layer::Conv2d {
            stride, padding, ..
        } => vec![*stride, *padding],
        Layer::Reshape { shape } => shape.clone(),
        _ => Vec::new(),
    }
}

/// Serializes a model (architecture and parameters as `f32`).
pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    put_dims(&mut out, model.input_shape());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        out.push(layer.kind() as u8);
        put_dims(&mut out, &hyper(layer));
        let params = layer.params();
        out.push(params.len() as u8);
        for p in params {
            put_param(&mut out, p);
        }
    }
    out
}

/// Parses a blob produced by [`encode_model`].
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != BLOB_MAGIC {
        return Err(Error::format("bad parameter blob magic"));
    }
    let version = r.u16()?;
    if version != BLOB_VERSION {
        return Err(Error::format(format!("unsupported blob version {version}")));
    }
    let input_shape = read_dims(&mut r)?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let tag = r.u8()?;
        let kind = LayerKind::from_tag(tag)
            .ok_or_else(|| Error::format(format!("layer {i}: unknown kind tag {tag}")))?;
        let hyper = read_dims(&mut r)?;
        let n_params = r.u8()? as usize;
        let mut params = (0..n_params)
            .map(|_| read_param(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let bad = |what: &str| Error::format(format!("layer {i} ({kind:?}): {what}"));
        let layer = match kind {
            LayerKind::Dense => {
                if params.len() != 2 {
                    return Err(bad("expected weight and bias"));
                }
                let bias = params.pop().unwrap();
                let weight = params.pop().unwrap();
                Layer::dense_from(weight, bias).map_err(|_| bad("inconsistent shapes"))?
            }
            LayerKind::Conv2d => {
                if params.len() != 2 || hyper.len() != 2 {
                    return Err(bad("expected kernel, bias, stride, padding"));
                }
                let bias = params.pop().unwrap();
                let kernel = params.pop().unwrap();
                let ks = kernel.shape();
                if ks.len() != 4 || ks[2] != ks[3] || bias.shape() != [ks[0]] || hyper[0] == 0 {
                    return Err(bad("inconsistent shapes"));
                }
                Layer::Conv2d {
                    kernel,
                    bias,
                    stride: hyper[0],
                    padding: hyper[1],
                }
            }
            other => {
                if !params.is_empty() {
                    return Err(bad("unexpected parameters"));
                }
                match other {
                    LayerKind::Flatten => Layer::Flatten,
                    LayerKind::Reshape => Layer::Reshape { shape: hyper },
                    LayerKind::Relu => Layer::Relu,
                    LayerKind::Sigmoid => Layer::Sigmoid,
                    LayerKind::Tanh => Layer::Tanh,
                    LayerKind::PowerNorm => Layer::PowerNorm,
                    LayerKind::Dense | LayerKind::Conv2d => unreachable!(),
                }
            }
        };
        layers.push(layer);
    }
    r.finish()?;
    Model::new(input_shape, layers).map_err(|e| Error::format(format!("blob describes invalid model: {e}")))
}
