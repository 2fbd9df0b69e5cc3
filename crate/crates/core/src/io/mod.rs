//! Readers and writers for pipeline artifacts.
//!
//! Heatmaps and masks may be NPY or grayscale PNG; the format is detected
//! from the file's magic bytes. Atlases are NIfTI-1 volumes paired with a
//! label-name table.

pub mod labels;
pub mod nifti;
pub mod npy;
pub mod prediction;

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::model::{Atlas, BinaryMask, Heatmap};
use npy::{NpyArray, NpyError};

pub use labels::read_label_table;
pub use prediction::{read_prediction, Prediction};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Boundary colour used by [`write_overlay`].
pub const OVERLAY_ACCENT: [u8; 3] = [255, 48, 0];

/// Values of an 8- or 16-bit grayscale PNG scaled to `[0, 1]`, plus the raw
/// 8-bit values when the image is 8-bit.
struct GrayImage {
    width: usize,
    height: usize,
    unit: Vec<f64>,
    raw8: Option<Vec<u8>>,
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("png: {e}")))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    Ok(match img {
        DynamicImage::ImageLuma16(buf) => GrayImage {
            width,
            height,
            unit: buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
            raw8: None,
        },
        other => {
            if !matches!(other, DynamicImage::ImageLuma8(_)) {
                log::warn!("{}: converting {:?} PNG to grayscale", path.display(), other.color());
            }
            let raw = other.into_luma8().into_raw();
            GrayImage {
                width,
                height,
                unit: raw.iter().map(|&v| v as f64 / 255.0).collect(),
                raw8: Some(raw),
            }
        }
    })
}

fn npy_error(path: &Path, e: NpyError) -> Error {
    match e {
        NpyError::UnsupportedDtype(d) => Error::UnsupportedDtype(d),
        NpyError::Malformed(m) => Error::format(path, m),
    }
}

fn read_npy_2d(bytes: &[u8], path: &Path) -> Result<(NpyArray, usize, usize)> {
    let arr = NpyArray::parse(bytes).map_err(|e| npy_error(path, e))?;
    let (rows, cols) = arr.squeezed_2d().ok_or_else(|| {
        Error::format(
            path,
            format!("array of shape {:?} is not 2D after squeezing", arr.shape()),
        )
    })?;
    if rows * cols == 0 {
        return Err(Error::EmptyGrid);
    }
    Ok((arr, rows, cols))
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    NpyArray::parse(&bytes).map_err(|e| npy_error(path, e))
}

pub fn write_npy(path: &Path, array: &NpyArray) -> Result<()> {
    fs::write(path, array.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads a heatmap from float NPY (singleton axes squeezed) or grayscale PNG
/// (scaled by the bit depth's maximum).
pub fn read_heatmap(path: &Path) -> Result<Heatmap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(npy::MAGIC) {
        let (arr, rows, cols) = read_npy_2d(&bytes, path)?;
        if !arr.dtype().is_float() {
            return Err(Error::UnsupportedDtype(format!(
                "{} (heatmaps must be float32 or float64)",
                arr.dtype()
            )));
        }
        return Heatmap::from_flat(cols, rows, arr.to_f64());
    }
    if bytes.starts_with(PNG_MAGIC) {
        let img = decode_png(&bytes, path)?;
        return Heatmap::from_flat(img.width, img.height, img.unit);
    }
    Err(Error::format(path, "neither an NPY nor a PNG file"))
}

/// Loads a reference mask: 8-bit values above 127 are foreground, float
/// values above 0.5 are foreground, boolean arrays are taken as-is.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(npy::MAGIC) {
        let (arr, rows, cols) = read_npy_2d(&bytes, path)?;
        use npy::DType::*;
        let cut = match arr.dtype() {
            Bool => 0.5,
            U8 => 127.0,
            F32 | F64 => 0.5,
            other => {
                return Err(Error::UnsupportedDtype(format!(
                    "{other} (masks must be bool, uint8 or float)"
                )))
            }
        };
        let bits = arr.to_f64().into_iter().map(|v| v > cut).collect();
        return BinaryMask::new(cols, rows, bits);
    }
    if bytes.starts_with(PNG_MAGIC) {
        let img = decode_png(&bytes, path)?;
        let bits = match img.raw8 {
            Some(raw) => raw.into_iter().map(|v| v > 127).collect(),
            None => img.unit.into_iter().map(|v| v > 127.0 / 255.0).collect(),
        };
        return BinaryMask::new(img.width, img.height, bits);
    }
    Err(Error::format(path, "neither an NPY nor a PNG file"))
}

fn encode_png(
    path: &Path,
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
    raw: &[u8],
) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut buf,
        raw,
        width as u32,
        height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| Error::format(path, format!("png encode: {e}")))?;
    fs::write(path, buf.into_inner()).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale PNG with foreground 255 and background 0.
pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let raw: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_png(path, mask.width(), mask.height(), image::ExtendedColorType::L8, &raw)
}

/// 8-bit grayscale rendering of a heatmap.
pub fn write_heatmap_png(path: &Path, heatmap: &Heatmap) -> Result<()> {
    let raw: Vec<u8> = heatmap.values().iter().map(|&v| to_u8(v)).collect();
    encode_png(path, heatmap.width(), heatmap.height(), image::ExtendedColorType::L8, &raw)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Foreground pixels with a 4-neighbour that is background or off-grid.
pub fn mask_boundary(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.shape();
    BinaryMask::from_fn(w, h, |r, c| {
        mask.get(r, c)
            && (r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1))
    })
}

/// RGB bytes of the overlay: grayscale base with the mask outline in
/// [`OVERLAY_ACCENT`].
pub fn overlay_rgb(base: &Heatmap, mask: &BinaryMask) -> Result<Vec<u8>> {
    if base.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            left: base.shape(),
            right: mask.shape(),
        });
    }
    let edge = mask_boundary(mask);
    let mut rgb = Vec::with_capacity(base.len() * 3);
    for (&v, &e) in base.values().iter().zip(edge.bits()) {
        if e {
            rgb.extend_from_slice(&OVERLAY_ACCENT);
        } else {
            let g = to_u8(v);
            rgb.extend_from_slice(&[g, g, g]);
        }
    }
    Ok(rgb)
}

pub fn write_overlay(path: &Path, base: &Heatmap, mask: &BinaryMask) -> Result<()> {
    let rgb = overlay_rgb(base, mask)?;
    encode_png(path, base.width(), base.height(), image::ExtendedColorType::Rgb8, &rgb)
}

/// Loads an atlas volume and its label-name table. Float voxels are rounded;
/// negative or non-finite labels are rejected.
pub fn read_atlas(volume_path: &Path, labels_path: &Path) -> Result<Atlas> {
    let volume = nifti::read_volume(volume_path)?;
    let labels = volume
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = v.round();
            if !r.is_finite() || r < 0.0 || r > u32::MAX as f64 {
                Err(Error::format(
                    volume_path,
                    format!("voxel {i} has invalid label value {v}"),
                ))
            } else {
                Ok(r as u32)
            }
        })
        .collect::<Result<Vec<u32>>>()?;
    let names = read_label_table(labels_path)?;
    let atlas = Atlas::new(volume.dims, labels, names)?;
    let unnamed = atlas.unnamed_labels();
    if !unnamed.is_empty() {
        log::warn!(
            "{}: labels {:?} have no name in {}",
            volume_path.display(),
            unnamed,
            labels_path.display()
        );
    }
    Ok(atlas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_of_full_mask_is_grid_edge() {
        let m = BinaryMask::from_fn(5, 4, |_, _| true);
        let b = mask_boundary(&m);
        for r in 0..4 {
            for c in 0..5 {
                assert_eq!(b.get(r, c), r == 0 || c == 0 || r == 3 || c == 4);
            }
        }
    }

    #[test]
    fn overlay_of_empty_mask_is_gray() {
        let h = Heatmap::from_flat(2, 1, vec![0.0, 1.0]).unwrap();
        let rgb = overlay_rgb(&h, &BinaryMask::empty(2, 1)).unwrap();
        assert_eq!(rgb, vec![0, 0, 0, 255, 255, 255]);
        assert!(overlay_rgb(&h, &BinaryMask::empty(1, 2)).is_err());
    }
}
