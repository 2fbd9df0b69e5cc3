//! NIfTI-1 volume reader, scoped to what atlas loading needs.
//!
//! Handles single-file (`n+1`) and header/image pair (`ni1`) layouts, gzip
//! compression of either part and big-endian files. Orientation fields are
//! parsed and exposed but never applied.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magic {
    /// `n+1`: header and voxels in one file.
    Single,
    /// `ni1`: voxels in a separate `.img` file.
    Pair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: Magic,
    pub big_endian: bool,
}

struct Fields<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Fields<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a: [u8; N] = self.bytes[off..off + N].try_into().unwrap();
        if self.big_endian {
            a.reverse();
        }
        a
    }

    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.arr(off))
    }

    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.arr(off))
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.arr(off))
    }

    fn f32s<const N: usize>(&self, off: usize) -> [f32; N] {
        std::array::from_fn(|i| self.f32(off + 4 * i))
    }
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_SIZE {
            return Err(format!(
                "file too small for a NIfTI-1 header ({} bytes)",
                bytes.len()
            ));
        }
        let magic = match &bytes[344..348] {
            b"n+1\0" => Magic::Single,
            b"ni1\0" => Magic::Pair,
            other => {
                return Err(format!(
                    "bad magic {:?}, expected \"n+1\" or \"ni1\"",
                    String::from_utf8_lossy(other)
                ))
            }
        };

        // dim[0] must be 1..=7; if it is not, the file is byte-swapped.
        let le = i16::from_le_bytes([bytes[40], bytes[41]]);
        let big_endian = !(1..=7).contains(&le);
        let f = Fields { bytes, big_endian };
        if !(1..=7).contains(&f.i16(40)) {
            return Err(format!("dim[0] = {le} is not valid in either byte order"));
        }
        if f.i32(0) != HEADER_SIZE as i32 {
            return Err(format!("sizeof_hdr is {}, expected 348", f.i32(0)));
        }

        Ok(NiftiHeader {
            dim: std::array::from_fn(|i| f.i16(40 + 2 * i)),
            datatype: f.i16(70),
            bitpix: f.i16(72),
            pixdim: f.f32s(76),
            vox_offset: f.f32(108),
            scl_slope: f.f32(112),
            scl_inter: f.f32(116),
            qform_code: f.i16(252),
            sform_code: f.i16(254),
            srow_x: f.f32s(280),
            srow_y: f.f32s(296),
            srow_z: f.f32s(312),
            magic,
            big_endian,
        })
    }

    /// Element size in bytes for the supported datatype codes.
    pub fn element_size(&self) -> Option<usize> {
        Some(match self.datatype {
            2 | 256 => 1,
            4 | 512 => 2,
            8 | 16 | 768 => 4,
            64 | 1024 | 1280 => 8,
            _ => return None,
        })
    }

    /// `(X, Y, Z)` for 3D volumes.
    pub fn dims3(&self) -> std::result::Result<(usize, usize, usize), String> {
        if self.dim[0] != 3 {
            return Err(format!("expected a 3D volume, dim[0] = {}", self.dim[0]));
        }
        let d: Vec<usize> = self.dim[1..4]
            .iter()
            .map(|&d| usize::try_from(d).ok().filter(|&d| d > 0))
            .collect::<Option<_>>()
            .ok_or_else(|| format!("non-positive dimension in {:?}", &self.dim[1..4]))?;
        Ok((d[0], d[1], d[2]))
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let slope = self.scl_slope as f64;
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        Some((slope, self.scl_inter as f64))
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.starts_with(&[0x1f, 0x8b])
}

/// Reads a file, transparently gunzipping when it starts with the gzip magic.
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !is_gzip(&raw) {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(raw.as_slice())
        .read_to_end(&mut out)
        .map_err(|e| Error::format(path, format!("gzip: {e}")))?;
    Ok(out)
}

fn image_path_for(header_path: &Path) -> Option<PathBuf> {
    let name = header_path.file_name()?.to_str()?;
    let stem = name
        .strip_suffix(".hdr.gz")
        .or_else(|| name.strip_suffix(".hdr"))?;
    [".img", ".img.gz"]
        .iter()
        .map(|ext| header_path.with_file_name(format!("{stem}{ext}")))
        .find(|p| p.exists())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiVolume {
    pub header: NiftiHeader,
    pub dims: (usize, usize, usize),
    /// Scaled voxel values, first axis fastest.
    pub data: Vec<f64>,
}

fn decode(header: &NiftiHeader, payload: &[u8], n: usize) -> std::result::Result<Vec<f64>, String> {
    let size = header
        .element_size()
        .ok_or_else(|| format!("unsupported datatype code {}", header.datatype))?;
    if payload.len() < n * size {
        return Err(format!(
            "voxel data is {} bytes, expected at least {}",
            payload.len(),
            n * size
        ));
    }
    let be = header.big_endian;
    let chunk = |i: usize| -> [u8; 8] {
        let mut b = [0u8; 8];
        b[..size].copy_from_slice(&payload[i * size..(i + 1) * size]);
        if be {
            b[..size].reverse();
        }
        b
    };
    let values = (0..n)
        .map(|i| {
            let b = chunk(i);
            match header.datatype {
                2 => b[0] as f64,
                256 => b[0] as i8 as f64,
                4 => i16::from_le_bytes([b[0], b[1]]) as f64,
                512 => u16::from_le_bytes([b[0], b[1]]) as f64,
                8 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
                768 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
                16 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
                64 => f64::from_le_bytes(b),
                1024 => i64::from_le_bytes(b) as f64,
                1280 => u64::from_le_bytes(b) as f64,
                _ => unreachable!("element_size accepted the code"),
            }
        })
        .collect();
    Ok(values)
}

/// Reads a 3D NIfTI-1 volume with `scl_slope`/`scl_inter` applied.
pub fn read_volume(path: &Path) -> Result<NiftiVolume> {
    let bytes = read_maybe_gz(path)?;
    let header = NiftiHeader::parse(&bytes).map_err(|m| Error::format(path, m))?;
    let dims = header.dims3().map_err(|m| Error::format(path, m))?;
    let n = dims.0 * dims.1 * dims.2;

    let image_bytes;
    let payload: &[u8] = match (header.magic, image_path_for(path)) {
        (Magic::Pair, Some(img)) => {
            image_bytes = read_maybe_gz(&img)?;
            let off = header.vox_offset.max(0.0) as usize;
            image_bytes
                .get(off..)
                .ok_or_else(|| Error::format(&img, "vox_offset past end of image file"))?
        }
        _ => {
            let off = (header.vox_offset as usize).max(HEADER_SIZE);
            bytes
                .get(off..)
                .ok_or_else(|| Error::format(path, "vox_offset past end of file"))?
        }
    };

    let mut data = decode(&header, payload, n).map_err(|m| Error::format(path, m))?;
    if let Some((slope, inter)) = header.scaling() {
        data.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    Ok(NiftiVolume { header, dims, data })
}

/// Test and fixture helper: serializes a little-endian `n+1` (or `ni1`)
/// header followed by the given payload.
#[doc(hidden)]
pub fn encode_header(dims: (usize, usize, usize), datatype: i16, bitpix: i16, magic: Magic) -> Vec<u8> {
    let mut h = vec![0u8; 352];
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    let dim: [i16; 8] = [3, dims.0 as i16, dims.1 as i16, dims.2 as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&datatype.to_le_bytes());
    h[72..74].copy_from_slice(&bitpix.to_le_bytes());
    for i in 0..8 {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&1f32.to_le_bytes());
    }
    let off: f32 = if magic == Magic::Single { 352.0 } else { 0.0 };
    h[108..112].copy_from_slice(&off.to_le_bytes());
    h[344..348].copy_from_slice(match magic {
        Magic::Single => b"n+1\0",
        Magic::Pair => b"ni1\0",
    });
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume_bytes(values: &[i16], dims: (usize, usize, usize)) -> Vec<u8> {
        let mut b = encode_header(dims, 4, 16, Magic::Single);
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn parses_little_endian_header() {
        let b = volume_bytes(&[0; 8], (2, 2, 2));
        let h = NiftiHeader::parse(&b).unwrap();
        assert_eq!(h.dims3().unwrap(), (2, 2, 2));
        assert_eq!(h.datatype, 4);
        assert!(!h.big_endian);
        assert_eq!(h.magic, Magic::Single);
    }

    #[test]
    fn detects_byte_swapped_header() {
        let mut b = volume_bytes(&[0; 8], (2, 2, 2));
        // Swap every multi-byte header field used by the parser.
        let swap = |b: &mut Vec<u8>, off: usize, n: usize| b[off..off + n].reverse();
        swap(&mut b, 0, 4);
        for i in 0..8 {
            swap(&mut b, 40 + 2 * i, 2);
            swap(&mut b, 76 + 4 * i, 4);
        }
        swap(&mut b, 70, 2);
        swap(&mut b, 72, 2);
        swap(&mut b, 108, 4);
        let h = NiftiHeader::parse(&b).unwrap();
        assert!(h.big_endian);
        assert_eq!(h.dims3().unwrap(), (2, 2, 2));
        assert_eq!(h.vox_offset, 352.0);
    }

    #[test]
    fn rejects_bad_magic_and_dims() {
        let mut b = volume_bytes(&[0; 8], (2, 2, 2));
        b[344..348].copy_from_slice(b"xxxx");
        assert!(NiftiHeader::parse(&b).unwrap_err().contains("magic"));

        let mut b = volume_bytes(&[0; 8], (2, 2, 2));
        b[40..42].copy_from_slice(&4i16.to_le_bytes());
        let h = NiftiHeader::parse(&b).unwrap();
        assert!(h.dims3().is_err());

        assert!(NiftiHeader::parse(&[0u8; 100]).is_err());
    }

    #[test]
    fn decodes_with_scaling() {
        let mut b = volume_bytes(&[1, 2, 3, 4, 5, 6, 7, 8], (2, 2, 2));
        b[112..116].copy_from_slice(&2f32.to_le_bytes());
        b[116..120].copy_from_slice(&1f32.to_le_bytes());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        fs::write(&p, &b).unwrap();
        let v = read_volume(&p).unwrap();
        assert_eq!(v.data, vec![3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0, 17.0]);
    }

    #[test]
    fn unsupported_datatype() {
        let mut b = volume_bytes(&[0; 8], (2, 2, 2));
        b[70..72].copy_from_slice(&32i16.to_le_bytes());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        fs::write(&p, &b).unwrap();
        let err = read_volume(&p).unwrap_err().to_string();
        assert!(err.contains("datatype"), "{err}");
    }
}
