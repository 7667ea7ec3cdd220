//! Chunk file encoding: a 28-byte header followed by a raw or DEFLATE payload.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::sync::Arc;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::model::{value_compare, CmpOp, Value};

pub const MAGIC: &[u8; 4] = b"GARL";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Raw,
    Deflate,
}

impl Codec {
    fn byte(self) -> u8 {
        match self {
            Codec::Raw => 0,
            Codec::Deflate => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkType {
    Bool,
    I64,
    F64,
    Str,
    U64,
}

impl ChunkType {
    fn byte(self) -> u8 {
        match self {
            ChunkType::Bool => 0,
            ChunkType::I64 => 1,
            ChunkType::F64 => 2,
            ChunkType::Str => 3,
            ChunkType::U64 => 4,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => ChunkType::Bool,
            1 => ChunkType::I64,
            2 => ChunkType::F64,
            3 => ChunkType::Str,
            4 => ChunkType::U64,
            _ => return None,
        })
    }
}

/// Decoded chunk payload.
#[derive(Clone, Debug, PartialEq)]
pub enum ChunkData {
    Bool(Vec<bool>),
    I64(Vec<i64>),
    F64(Vec<f64>),
    Str(Vec<Arc<str>>),
    U64(Vec<u64>),
}

impl ChunkData {
    pub fn chunk_type(&self) -> ChunkType {
        match self {
            ChunkData::Bool(_) => ChunkType::Bool,
            ChunkData::I64(_) => ChunkType::I64,
            ChunkData::F64(_) => ChunkType::F64,
            ChunkData::Str(_) => ChunkType::Str,
            ChunkData::U64(_) => ChunkType::U64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ChunkData::Bool(v) => v.len(),
            ChunkData::I64(v) => v.len(),
            ChunkData::F64(v) => v.len(),
            ChunkData::Str(v) => v.len(),
            ChunkData::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> Value {
        match self {
            ChunkData::Bool(v) => Value::Bool(v[i]),
            ChunkData::I64(v) => Value::Int64(v[i]),
            ChunkData::F64(v) => Value::Float64(v[i]),
            ChunkData::Str(v) => Value::String(v[i].clone()),
            ChunkData::U64(v) => Value::Int64(v[i] as i64),
        }
    }

    pub fn as_u64(&self) -> Option<&[u64]> {
        match self {
            ChunkData::U64(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkHeader {
    pub version: u16,
    pub codec: u8,
    pub dtype: ChunkType,
    pub row_count: u32,
    pub zone_min: [u8; 8],
    pub zone_max: [u8; 8],
}

fn string_prefix(s: &str) -> [u8; 8] {
    let mut out = [0u8; 8];
    let n = s.len().min(8);
    out[..n].copy_from_slice(&s.as_bytes()[..n]);
    out
}

/// Zone bytes of the minimum and maximum valid values.
fn zone(data: &ChunkData, valid: Option<&[bool]>) -> ([u8; 8], [u8; 8]) {
    if let ChunkData::U64(x) = data {
        let lo = x.iter().min().copied().unwrap_or(0);
        let hi = x.iter().max().copied().unwrap_or(0);
        return (lo.to_le_bytes(), hi.to_le_bytes());
    }
    let mut lo: Option<Value> = None;
    let mut hi: Option<Value> = None;
    for i in (0..data.len()).filter(|&i| valid.is_none_or(|m| m[i])) {
        let v = data.value(i);
        if lo.as_ref().is_none_or(|l| value_compare(&v, l) == Ordering::Less) {
            lo = Some(v.clone());
        }
        if hi.as_ref().is_none_or(|h| value_compare(&v, h) == Ordering::Greater) {
            hi = Some(v);
        }
    }
    let bytes = |v: Option<Value>| match v {
        Some(Value::Bool(b)) => (b as u64).to_le_bytes(),
        Some(Value::Int64(i)) => i.to_le_bytes(),
        Some(Value::Float64(f)) => f.to_le_bytes(),
        Some(Value::String(s)) => string_prefix(&s),
        _ => [0u8; 8],
    };
    (bytes(lo), bytes(hi))
}

fn payload(data: &ChunkData) -> Vec<u8> {
    let mut out = Vec::new();
    match data {
        ChunkData::Bool(v) => out.extend(v.iter().map(|&b| b as u8)),
        ChunkData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ChunkData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ChunkData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ChunkData::Str(v) => {
            let mut offset = 0u32;
            out.extend_from_slice(&offset.to_le_bytes());
            for s in v {
                offset += s.len() as u32;
                out.extend_from_slice(&offset.to_le_bytes());
            }
            for s in v {
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    out
}

/// Serializes a chunk; `valid` restricts the zone map to non-null rows.
pub fn encode(data: &ChunkData, valid: Option<&[bool]>, codec: Codec) -> Vec<u8> {
    let (zmin, zmax) = zone(data, valid);
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(codec.byte());
    out.push(data.chunk_type().byte());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&zmin);
    out.extend_from_slice(&zmax);
    let raw = payload(data);
    match codec {
        Codec::Raw => out.extend_from_slice(&raw),
        Codec::Deflate => {
            let mut enc = DeflateEncoder::new(out, Compression::new(6));
            enc.write_all(&raw).expect("writing to a Vec cannot fail");
            out = enc.finish().expect("writing to a Vec cannot fail");
        }
    }
    out
}

#[derive(Debug, PartialEq, Eq)]
pub enum ChunkError {
    BadMagic,
    UnsupportedVersion(u16),
    Corrupt(String),
}

pub fn parse_header(bytes: &[u8]) -> Result<ChunkHeader, ChunkError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(if bytes.len() < 4 { ChunkError::Corrupt("truncated header".into()) } else { ChunkError::BadMagic });
    }
    if bytes.len() < HEADER_LEN {
        return Err(ChunkError::Corrupt("truncated header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(ChunkError::UnsupportedVersion(version));
    }
    let codec = bytes[6];
    if codec > 1 {
        return Err(ChunkError::Corrupt(format!("unknown codec {codec}")));
    }
    let dtype = ChunkType::from_byte(bytes[7]).ok_or_else(|| ChunkError::Corrupt(format!("unknown dtype {}", bytes[7])))?;
    let row_count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    Ok(ChunkHeader {
        version,
        codec,
        dtype,
        row_count,
        zone_min: bytes[12..20].try_into().expect("8 bytes"),
        zone_max: bytes[20..28].try_into().expect("8 bytes"),
    })
}

pub fn decode(bytes: &[u8]) -> Result<(ChunkHeader, ChunkData), ChunkError> {
    let header = parse_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    let raw: Vec<u8>;
    let raw = if header.codec == 1 {
        let mut buf = Vec::new();
        DeflateDecoder::new(body)
            .read_to_end(&mut buf)
            .map_err(|e| ChunkError::Corrupt(format!("deflate: {e}")))?;
        raw = buf;
        &raw[..]
    } else {
        body
    };
    let n = header.row_count as usize;
    let need = |width: usize| {
        if raw.len() != n * width {
            Err(ChunkError::Corrupt(format!("payload has {} bytes, expected {}", raw.len(), n * width)))
        } else {
            Ok(())
        }
    };
    let words = |raw: &[u8]| raw.chunks_exact(8).map(|c| c.try_into().expect("8 bytes")).collect::<Vec<[u8; 8]>>();
    let data = match header.dtype {
        ChunkType::Bool => {
            need(1)?;
            ChunkData::Bool(raw.iter().map(|&b| b != 0).collect())
        }
        ChunkType::I64 => {
            need(8)?;
            ChunkData::I64(words(raw).into_iter().map(i64::from_le_bytes).collect())
        }
        ChunkType::F64 => {
            need(8)?;
            ChunkData::F64(words(raw).into_iter().map(f64::from_le_bytes).collect())
        }
        ChunkType::U64 => {
            need(8)?;
            ChunkData::U64(words(raw).into_iter().map(u64::from_le_bytes).collect())
        }
        ChunkType::Str => {
            let table = (n + 1) * 4;
            if raw.len() < table {
                return Err(ChunkError::Corrupt("string offsets truncated".into()));
            }
            let offsets: Vec<usize> = raw[..table]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
                .collect();
            let blob = &raw[table..];
            if offsets[n] != blob.len() || offsets.windows(2).any(|w| w[0] > w[1]) {
                return Err(ChunkError::Corrupt("string offsets inconsistent".into()));
            }
            let mut out = Vec::with_capacity(n);
            for w in offsets.windows(2) {
                let s = std::str::from_utf8(&blob[w[0]..w[1]]).map_err(|_| ChunkError::Corrupt("invalid UTF-8".into()))?;
                out.push(Arc::from(s));
            }
            ChunkData::Str(out)
        }
    };
    Ok((header, data))
}

/// True when no valid row of a chunk with this header can satisfy
/// `value <op> constant`. Conservative: `false` means "must decode".
pub fn zone_refutes(header: &ChunkHeader, op: CmpOp, constant: &Value) -> bool {
    if header.row_count == 0 {
        return true;
    }
    let (lo, hi) = match (header.dtype, constant) {
        (ChunkType::I64, Value::Int64(_) | Value::Float64(_)) => (
            Value::Int64(i64::from_le_bytes(header.zone_min)),
            Value::Int64(i64::from_le_bytes(header.zone_max)),
        ),
        (ChunkType::F64, Value::Int64(_) | Value::Float64(_)) => (
            Value::Float64(f64::from_le_bytes(header.zone_min)),
            Value::Float64(f64::from_le_bytes(header.zone_max)),
        ),
        (ChunkType::Bool, Value::Bool(_)) => (
            Value::Bool(header.zone_min[0] != 0),
            Value::Bool(header.zone_max[0] != 0),
        ),
        (ChunkType::Str, Value::String(s)) => {
            // Prefix zones: compare the constant's prefix strictly.
            let p = string_prefix(s);
            return match op {
                CmpOp::Eq => p < header.zone_min || p > header.zone_max,
                CmpOp::Lt | CmpOp::Le => p < header.zone_min,
                CmpOp::Gt | CmpOp::Ge => p > header.zone_max,
                CmpOp::Ne => false,
            };
        }
        _ => return false,
    };
    let c_lo = value_compare(constant, &lo);
    let c_hi = value_compare(constant, &hi);
    match op {
        CmpOp::Eq => c_lo == Ordering::Less || c_hi == Ordering::Greater,
        CmpOp::Ne => c_lo == Ordering::Equal && c_hi == Ordering::Equal,
        CmpOp::Lt => c_lo != Ordering::Greater,
        CmpOp::Le => c_lo == Ordering::Less,
        CmpOp::Gt => c_hi != Ordering::Less,
        CmpOp::Ge => c_hi == Ordering::Greater,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_header_bytes() {
        let bytes = encode(&ChunkData::I64(vec![7, -2, 5]), None, Codec::Raw);
        assert_eq!(
            &bytes[..HEADER_LEN],
            &[
                b'G', b'A', b'R', b'L', 1, 0, 0, 1, 3, 0, 0, 0, //
                0xfe, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, //
                7, 0, 0, 0, 0, 0, 0, 0,
            ]
        );
        assert_eq!(bytes.len(), HEADER_LEN + 24);
        let s = encode(&ChunkData::Str(vec![Arc::from("hi"), Arc::from("")]), None, Codec::Raw);
        assert_eq!(&s[HEADER_LEN..], &[0, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, b'h', b'i']);
        assert_eq!(&s[12..20], b"\0\0\0\0\0\0\0\0");
        assert_eq!(&s[20..28], b"hi\0\0\0\0\0\0");
    }

    #[test]
    fn roundtrip_all_types_and_codecs() {
        let cases = vec![
            ChunkData::Bool(vec![true, false, true]),
            ChunkData::I64(vec![i64::MIN, 0, i64::MAX]),
            ChunkData::F64(vec![1.5, -0.0, f64::INFINITY]),
            ChunkData::Str(vec![Arc::from("héllo"), Arc::from(""), Arc::from("a much longer string")]),
            ChunkData::U64(vec![0, 9, u64::MAX]),
            ChunkData::I64(vec![]),
        ];
        for data in cases {
            for codec in [Codec::Raw, Codec::Deflate] {
                let bytes = encode(&data, None, codec);
                let (h, back) = decode(&bytes).unwrap();
                assert_eq!(back, data);
                assert_eq!(h.row_count as usize, data.len());
            }
        }
    }

    #[test]
    fn corrupt_inputs() {
        let mut bytes = encode(&ChunkData::I64(vec![1, 2, 3]), None, Codec::Raw);
        assert!(matches!(decode(&bytes[..HEADER_LEN + 5]), Err(ChunkError::Corrupt(_))));
        assert!(matches!(decode(&bytes[..10]), Err(ChunkError::Corrupt(_))));
        bytes[4] = 9;
        assert_eq!(decode(&bytes), Err(ChunkError::UnsupportedVersion(9)));
        bytes[0] = b'X';
        assert_eq!(decode(&bytes), Err(ChunkError::BadMagic));
    }

    #[test]
    fn zone_refutation_is_sound() {
        let data = ChunkData::F64(vec![100.0, 50.0]);
        let h = parse_header(&encode(&data, None, Codec::Raw)).unwrap();
        assert_eq!(f64::from_le_bytes(h.zone_min), 50.0);
        assert_eq!(f64::from_le_bytes(h.zone_max), 100.0);
        for c in [-1.0, 49.0, 50.0, 75.0, 100.0, 101.0, 200.0] {
            for op in [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge] {
                let any = (0..data.len()).any(|i| op.apply(&data.value(i), &Value::Float64(c)) == Some(true));
                if zone_refutes(&h, op, &Value::Float64(c)) {
                    assert!(!any, "{op:?} {c}");
                }
            }
        }
        assert!(zone_refutes(&h, CmpOp::Gt, &Value::Float64(200.0)));
        assert!(!zone_refutes(&h, CmpOp::Gt, &Value::Int64(60)));
    }

    #[test]
    fn string_zones_are_conservative() {
        let vals = ["apple", "applesauce", "banana"];
        let data = ChunkData::Str(vals.iter().map(|s| Arc::from(*s)).collect());
        let h = parse_header(&encode(&data, None, Codec::Raw)).unwrap();
        for c in ["a", "apple", "applesau", "applesaucez", "b", "banana", "bananas", "c", ""] {
            for op in [CmpOp::Eq, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge] {
                let any = vals.iter().any(|v| op.apply(&Value::str(v), &Value::str(c)) == Some(true));
                if zone_refutes(&h, op, &Value::str(c)) {
                    assert!(!any, "{op:?} {c}");
                }
            }
        }
        assert!(zone_refutes(&h, CmpOp::Eq, &Value::str("cherry")));
    }
}
