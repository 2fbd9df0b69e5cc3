//! Minimal `.npy` reader and writer.
//!
//! Supports little-endian (or byte-order-free) scalar dtypes in C order.
//! Files are written as format version 1.0 with the header padded to a
//! multiple of 64 bytes, as numpy does.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Bool,
    U8,
    U16,
    U32,
    I8,
    I16,
    I32,
    I64,
    F32,
    F64,
}

impl DType {
    pub fn from_descr(descr: &str) -> Option<DType> {
        let (order, code) = descr.split_at(descr.len().min(1));
        if !matches!(order, "<" | "|" | "=") {
            return None;
        }
        Some(match code {
            "b1" => DType::Bool,
            "u1" => DType::U8,
            "i1" => DType::I8,
            "u2" => DType::U16,
            "u4" => DType::U32,
            "i2" => DType::I16,
            "i4" => DType::I32,
            "i8" => DType::I64,
            "f4" => DType::F32,
            "f8" => DType::F64,
            _ => return None,
        })
    }

    pub fn descr(self) -> &'static str {
        match self {
            DType::Bool => "|b1",
            DType::U8 => "|u1",
            DType::I8 => "|i1",
            DType::U16 => "<u2",
            DType::U32 => "<u4",
            DType::I16 => "<i2",
            DType::I32 => "<i4",
            DType::I64 => "<i8",
            DType::F32 => "<f4",
            DType::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::Bool | DType::U8 | DType::I8 => 1,
            DType::U16 | DType::I16 => 2,
            DType::U32 | DType::I32 | DType::F32 => 4,
            DType::I64 | DType::F64 => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DType::F32 | DType::F64)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.descr())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NpyError {
    UnsupportedDtype(String),
    Malformed(String),
}

impl fmt::Display for NpyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NpyError::UnsupportedDtype(d) => write!(f, "unsupported dtype {d}"),
            NpyError::Malformed(m) => write!(f, "malformed npy: {m}"),
        }
    }
}

impl std::error::Error for NpyError {}

fn malformed(msg: impl Into<String>) -> NpyError {
    NpyError::Malformed(msg.into())
}

/// Array payload kept as little-endian bytes in C order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyArray {
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<u8>,
}

fn header_regexes() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r#"['"]descr['"]\s*:\s*['"]([^'"]*)['"]"#).unwrap(),
            Regex::new(r#"['"]fortran_order['"]\s*:\s*(True|False)"#).unwrap(),
            Regex::new(r#"['"]shape['"]\s*:\s*\(([^)]*)\)"#).unwrap(),
        )
    })
}

impl NpyArray {
    pub fn new(dtype: DType, shape: Vec<usize>, data: Vec<u8>) -> Result<Self, NpyError> {
        let expected = shape.iter().product::<usize>() * dtype.size();
        if data.len() != expected {
            return Err(malformed(format!(
                "payload is {} bytes, shape {:?} of {} needs {}",
                data.len(),
                shape,
                dtype,
                expected
            )));
        }
        Ok(NpyArray { dtype, shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Result<Self, NpyError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        NpyArray::new(DType::F32, shape, data)
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self, NpyError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        NpyArray::new(DType::F64, shape, data)
    }

    pub fn from_u8(shape: Vec<usize>, values: &[u8]) -> Result<Self, NpyError> {
        NpyArray::new(DType::U8, shape, values.to_vec())
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape with every length-1 axis removed, padded back to at least 2 axes
    /// with leading ones.
    pub fn squeezed_2d(&self) -> Option<(usize, usize)> {
        let mut dims: Vec<usize> = self.shape.iter().copied().filter(|&d| d != 1).collect();
        if dims.len() > 2 {
            return None;
        }
        while dims.len() < 2 {
            dims.insert(0, 1);
        }
        Some((dims[0], dims[1]))
    }

    /// Element values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        let d = &self.data;
        match self.dtype {
            DType::Bool => d.iter().map(|&b| (b != 0) as u8 as f64).collect(),
            DType::U8 => d.iter().map(|&b| b as f64).collect(),
            DType::I8 => d.iter().map(|&b| b as i8 as f64).collect(),
            DType::U16 => d
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
                .collect(),
            DType::I16 => d
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
                .collect(),
            DType::U32 => d
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::I32 => d
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::I64 => d
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::F32 => d
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => d
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, NpyError> {
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(malformed("missing \\x93NUMPY magic"));
        }
        let (major, minor) = (bytes[6], bytes[7]);
        let (header_len, start) = match major {
            1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
            2 | 3 => {
                if bytes.len() < 12 {
                    return Err(malformed("truncated header length"));
                }
                (
                    u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
                    12,
                )
            }
            _ => return Err(malformed(format!("unknown format version {major}.{minor}"))),
        };
        let end = start + header_len;
        if bytes.len() < end {
            return Err(malformed("truncated header"));
        }
        let header = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| malformed("header is not valid text"))?;

        let (descr_re, fortran_re, shape_re) = header_regexes();
        let descr = descr_re
            .captures(header)
            .map(|c| c[1].to_string())
            .ok_or_else(|| malformed("header has no 'descr'"))?;
        let fortran = fortran_re
            .captures(header)
            .map(|c| &c[1] == "True")
            .ok_or_else(|| malformed("header has no 'fortran_order'"))?;
        let shape_src = shape_re
            .captures(header)
            .map(|c| c[1].to_string())
            .ok_or_else(|| malformed("header has no 'shape'"))?;

        let dtype =
            DType::from_descr(&descr).ok_or_else(|| NpyError::UnsupportedDtype(descr.clone()))?;
        let shape = shape_src
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.trim_end_matches('L').parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| malformed(format!("bad shape ({shape_src})")))?;

        let n: usize = shape.iter().product();
        if fortran && shape.iter().filter(|&&d| d > 1).count() > 1 {
            return Err(malformed("fortran_order arrays are not supported"));
        }
        let payload = &bytes[end..];
        let need = n * dtype.size();
        if payload.len() != need {
            return Err(malformed(format!(
                "payload is {} bytes, expected {need}",
                payload.len()
            )));
        }
        NpyArray::new(dtype, shape, payload.to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = match self.shape.as_slice() {
            [] => "()".to_string(),
            [n] => format!("({n},)"),
            dims => format!(
                "({})",
                dims.iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let dict = format!(
            "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
            self.dtype.descr(),
            shape
        );
        let hlen = dict.len() + 1;
        let pad = ALIGN - (MAGIC.len() + 4 + hlen) % ALIGN;
        let total_header = hlen + pad;

        let mut out = Vec::with_capacity(10 + total_header + self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(total_header as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend(std::iter::repeat_n(b' ', pad));
        out.push(b'\n');
        out.extend_from_slice(&self.data);
        out
    }
}
