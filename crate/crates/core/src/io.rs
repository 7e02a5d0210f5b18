//! The MSRD tensor container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 0..4         | magic `4D 53 52 44` (`"MSRD"`)            |
//! | 4            | version, `1`                              |
//! | 5            | dtype code, `1` = f32 little-endian       |
//! | 6            | rank, `2` or `3`                          |
//! | 7..7+4·rank  | dims as `u32`, outermost first (K, H, W)  |
//! | rest         | payload, row-major, W fastest             |
//!
//! There is no padding and no trailing data, so the encoding of a tensor is
//! unique.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MSRD";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
const PREAMBLE: usize = 7;

/// Shape information from a container header, without the payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub shape: Vec<usize>,
    pub payload_offset: usize,
}

impl Header {
    pub fn payload_len(&self) -> usize {
        self.shape.iter().product::<usize>() * 4
    }
}

pub fn encode_tensor(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREAMBLE + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < PREAMBLE {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("file ends inside the {PREAMBLE}-byte preamble"),
        });
    }
    if let Some(i) = (0..4).find(|&i| bytes[i] != MAGIC[i]) {
        return Err(Error::Format {
            offset: i,
            message: "bad magic, expected \"MSRD\"".into(),
        });
    }
    if bytes[4] != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {}", bytes[4]),
        });
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::Format {
            offset: 5,
            message: format!("unsupported dtype code {}", bytes[5]),
        });
    }
    let rank = bytes[6] as usize;
    if rank != 2 && rank != 3 {
        return Err(Error::Format {
            offset: 6,
            message: format!("rank must be 2 or 3, got {rank}"),
        });
    }
    let payload_offset = PREAMBLE + 4 * rank;
    if bytes.len() < payload_offset {
        return Err(Error::Format {
            offset: bytes.len(),
            message: "file ends inside the dims block".into(),
        });
    }
    let mut shape = Vec::with_capacity(rank);
    let mut elements: usize = 1;
    for r in 0..rank {
        let at = PREAMBLE + 4 * r;
        let d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        if d == 0 {
            return Err(Error::Format {
                offset: at,
                message: "zero dimension".into(),
            });
        }
        elements = elements
            .checked_mul(d)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or(Error::Format {
                offset: at,
                message: "shape overflows".into(),
            })?;
        shape.push(d);
    }
    Ok(Header {
        shape,
        payload_offset,
    })
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor<f32>> {
    let header = decode_header(bytes)?;
    let payload = &bytes[header.payload_offset..];
    let expected = header.payload_len();
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    // Tensor::new reports the first non-finite element.
    Tensor::new(header.shape, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

/// Reads only the preamble and dims of a container.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    use std::io::Read;
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(PREAMBLE + 12);
    f.by_ref()
        .take((PREAMBLE + 12) as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let rank = buf.get(6).copied().unwrap_or(0) as usize;
    if buf.len() >= PREAMBLE && (rank == 2 || rank == 3) {
        buf.truncate(PREAMBLE + 4 * rank);
    }
    decode_header(&buf)
}

pub fn write_tensor(t: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}
