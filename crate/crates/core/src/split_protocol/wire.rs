//! Frame codec.
//!
//! ```text
//! "SLPC" | version u16 | kind u8 | flags u8 | payload_len u32 | payload | crc32 u32
//! ```
//!
//! The CRC covers every byte before it, header included, so a flipped
//! kind or flag bit is caught as surely as a damaged payload.
//!
//! Integers are little-endian. Tensors inside payloads are
//! `rank u8 | dims u32.. | data`, with `f32` data unless the frame carries
//! [`FLAG_F64`].

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use crate::tensor_nn::{ByteReader, Tensor};
use crate::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"SLPC";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 12;
pub const FRAME_TRAILER_LEN: usize = 4;
/// Tensor data is `f64` instead of `f32`.
pub const FLAG_F64: u8 = 0b01;
/// The frame belongs to an evaluation pass (no feedback expected).
pub const FLAG_EVAL: u8 = 0b10;
const KNOWN_FLAGS: u8 = FLAG_F64 | FLAG_EVAL;
/// Upper bound on accepted payloads.
pub const MAX_PAYLOAD: usize = 1 << 30;

/// Floating-point width of tensor data on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WirePrecision {
    #[default]
    F32,
    F64,
}

impl WirePrecision {
    pub fn flag(self) -> u8 {
        match self {
            WirePrecision::F32 => 0,
            WirePrecision::F64 => FLAG_F64,
        }
    }

    pub fn from_flags(flags: u8) -> Self {
        if flags & FLAG_F64 != 0 {
            WirePrecision::F64
        } else {
            WirePrecision::F32
        }
    }

    pub fn bytes_per_value(self) -> usize {
        match self {
            WirePrecision::F32 => 4,
            WirePrecision::F64 => 8,
        }
    }

    /// What a tensor looks like after a trip through this precision.
    pub fn quantize(self, t: &Tensor) -> Tensor {
        match self {
            WirePrecision::F32 => t.round_f32(),
            WirePrecision::F64 => t.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: u8,
    pub flags: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len() + FRAME_TRAILER_LEN
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        out.push(self.kind);
        out.push(self.flags);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(Error::format("frame shorter than its header"));
        }
        let (kind, flags, len) = parse_header(bytes[..FRAME_HEADER_LEN].try_into().unwrap())?;
        if bytes.len() != FRAME_HEADER_LEN + len + FRAME_TRAILER_LEN {
            return Err(Error::format(format!(
                "frame length {} does not match declared payload {len}",
                bytes.len()
            )));
        }
        let body = &bytes[..FRAME_HEADER_LEN + len];
        let crc = u32::from_le_bytes(bytes[FRAME_HEADER_LEN + len..].try_into().unwrap());
        check_crc(&[body], crc)?;
        let payload = &body[FRAME_HEADER_LEN..];
        Ok(Frame {
            kind,
            flags,
            payload: payload.to_vec(),
        })
    }
}

fn parse_header(h: &[u8; FRAME_HEADER_LEN]) -> Result<(u8, u8, usize)> {
    if &h[..4] != FRAME_MAGIC {
        return Err(Error::format("bad frame magic"));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != FRAME_VERSION {
        return Err(Error::format(format!("unsupported frame version {version}")));
    }
    let flags = h[7];
    if flags & !KNOWN_FLAGS != 0 {
        return Err(Error::format(format!("unknown frame flags {flags:#04x}")));
    }
    let len = u32::from_le_bytes([h[8], h[9], h[10], h[11]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::format(format!("payload of {len} bytes exceeds limit")));
    }
    Ok((h[6], flags, len))
}

fn check_crc(parts: &[&[u8]], crc: u32) -> Result<()> {
    let mut h = crc32fast::Hasher::new();
    parts.iter().for_each(|p| h.update(p));
    let actual = h.finalize();
    if actual != crc {
        return Err(Error::format(format!("crc mismatch: frame says {crc:#010x}, contents hash to {actual:#010x}")));
    }
    Ok(())
}

/// Writes one frame and flushes.
pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean end of stream before the first byte yields
/// `Ok(None)`.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    let mut got = 0;
    while got < FRAME_HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::format("stream ended inside a frame header")),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (kind, flags, len) = parse_header(&header)?;
    let mut rest = vec![0u8; len + FRAME_TRAILER_LEN];
    r.read_exact(&mut rest).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::format("stream ended inside a frame")
        } else {
            e.into()
        }
    })?;
    let crc = u32::from_le_bytes(rest[len..].try_into().unwrap());
    rest.truncate(len);
    check_crc(&[&header, &rest], crc)?;
    Ok(Some(Frame {
        kind,
        flags,
        payload: rest,
    }))
}

pub(crate) fn put_tensor(out: &mut Vec<u8>, t: &Tensor, precision: WirePrecision) {
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match precision {
        WirePrecision::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        WirePrecision::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
}

pub(crate) fn get_tensor(r: &mut ByteReader<'_>, precision: WirePrecision) -> Result<Tensor> {
    let rank = r.u8()? as usize;
    if rank == 0 {
        return Err(Error::format("tensor of rank 0"));
    }
    let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let n = match n {
        Some(n) if n.saturating_mul(precision.bytes_per_value()) <= r.remaining() => n,
        _ => return Err(Error::format(format!("tensor {shape:?} exceeds the payload"))),
    };
    let data = match precision {
        WirePrecision::F32 => (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?,
        WirePrecision::F64 => (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?,
    };
    Tensor::new(shape, data)
}

/// Bytes taken by a tensor of `shape` inside a payload.
pub fn tensor_wire_len(shape: &[usize], precision: WirePrecision) -> usize {
    1 + 4 * shape.len() + shape.iter().product::<usize>() * precision.bytes_per_value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_layout() {
        let f = Frame {
            kind: 3,
            flags: FLAG_EVAL,
            payload: vec![1, 2, 3],
        };
        let bytes = f.encode();
        assert_eq!(&bytes[..4], b"SLPC");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 3);
        assert_eq!(bytes[7], FLAG_EVAL);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[15..], &crc32fast::hash(&bytes[..15]).to_le_bytes());
        assert_eq!(Frame::decode(&bytes).unwrap(), f);
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(f));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);
    }

    #[test]
    fn corrupted_payload_rejected() {
        let mut bytes = Frame {
            kind: 1,
            flags: 0,
            payload: vec![9; 16],
        }
        .encode();
        bytes[14] ^= 0x40;
        assert!(matches!(Frame::decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let bytes = Frame {
            kind: 1,
            flags: 0,
            payload: vec![9; 16],
        }
        .encode();
        let mut cursor = std::io::Cursor::new(&bytes[..20]);
        assert!(read_frame(&mut cursor).is_err());
    }

    #[test]
    fn tensor_payload_len() {
        let t = Tensor::zeros(&[3, 5]);
        let mut out = Vec::new();
        put_tensor(&mut out, &t, WirePrecision::F32);
        assert_eq!(out.len(), tensor_wire_len(&[3, 5], WirePrecision::F32));
        assert_eq!(out.len(), 1 + 8 + 60);
    }
}
