//! C ABI over `neuroexplain`.
//!
//! Objects cross the boundary as opaque handles (`NxHeatmap`, `NxMask`,
//! `NxAtlas`) that the caller releases with the matching `*_free` function.
//! Every fallible call returns an [`NxStatus`]; on failure the message is
//! available from [`nx_last_error_message`] on the same thread. Structured
//! results come back as NUL-terminated JSON owned by the library and
//! released with [`nx_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use neuroexplain::findings::validate_findings;
use neuroexplain::segmentation::{segment_heatmap, SegmentationParams, TieBreak};
use neuroexplain::text_metrics::{evaluate_text, TermFrequencyEmbedder};
use neuroexplain::{atlas, io, roi, Atlas, BinaryMask, Error, Heatmap};
use serde_json::json;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Processing = 5,
    Panic = 6,
}

/// How ties in the percentile search are broken.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NxTieBreak {
    LowestAlpha = 0,
    HighestAlpha = 1,
}

/// Segmentation parameters. Start from [`nx_segmentation_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NxSegmentationParams {
    pub alpha_low: u32,
    pub alpha_high: u32,
    pub s_min: usize,
    pub radius: usize,
    pub epsilon: f64,
    pub tie_break: NxTieBreak,
}

impl From<NxSegmentationParams> for SegmentationParams {
    fn from(p: NxSegmentationParams) -> Self {
        SegmentationParams {
            alpha_low: p.alpha_low,
            alpha_high: p.alpha_high,
            s_min: p.s_min,
            radius: p.radius,
            epsilon: p.epsilon,
            tie_break: match p.tie_break {
                NxTieBreak::LowestAlpha => TieBreak::LowestAlpha,
                NxTieBreak::HighestAlpha => TieBreak::HighestAlpha,
            },
        }
    }
}

/// Saliency heatmap, values in [0, 1].
pub struct NxHeatmap(Heatmap);

/// Binary mask.
pub struct NxMask(BinaryMask);

/// Labelled 3-D atlas with region names.
pub struct NxAtlas(Atlas);

struct Failure(NxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => NxStatus::Io,
            Error::Format { .. } | Error::UnsupportedDtype(_) => NxStatus::Format,
            Error::Inconsistent(_) => NxStatus::Processing,
            _ => NxStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(NxStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NxStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            NxStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(NxStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(NxStatus::NullPointer, format!("{what} is null")))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NxStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(NxStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(NxStatus::Processing, "result contains a NUL byte".into()))
}

fn checked_len(width: usize, height: usize) -> Result<usize, Failure> {
    width
        .checked_mul(height)
        .ok_or_else(|| invalid(format!("{width}x{height} overflows")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn nx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn nx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn nx_segmentation_params_default() -> NxSegmentationParams {
    let d = SegmentationParams::default();
    NxSegmentationParams {
        alpha_low: d.alpha_low,
        alpha_high: d.alpha_high,
        s_min: d.s_min,
        radius: d.radius,
        epsilon: d.epsilon,
        tie_break: NxTieBreak::LowestAlpha,
    }
}

// ---------------------------------------------------------------- heatmap

/// Builds a heatmap from `width * height` row-major values.
///
/// # Safety
/// `values` must point to `width * height` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_heatmap_new(
    width: usize,
    height: usize,
    values: *const f64,
    out: *mut *mut NxHeatmap,
) -> NxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let values = slice_arg(values, checked_len(width, height)?, "values")?;
        let h = Heatmap::from_flat(width, height, values.to_vec())?;
        *out = Box::into_raw(Box::new(NxHeatmap(h)));
        Ok(())
    })
}

/// Reads a 2-D float `.npy` heatmap.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_heatmap_read_npy(path: *const c_char, out: *mut *mut NxHeatmap) -> NxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let h = io::read_heatmap(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(NxHeatmap(h)));
        Ok(())
    })
}

/// # Safety
/// `heatmap` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nx_heatmap_free(heatmap: *mut NxHeatmap) {
    if !heatmap.is_null() {
        drop(Box::from_raw(heatmap));
    }
}

/// # Safety
/// `heatmap` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_heatmap_shape(
    heatmap: *const NxHeatmap,
    width: *mut usize,
    height: *mut usize,
) -> NxStatus {
    guard(|| {
        let h = &deref(heatmap, "heatmap")?.0;
        *out_ptr(width, "width")? = h.width();
        *out_ptr(height, "height")? = h.height();
        Ok(())
    })
}

// ------------------------------------------------------------------- mask

/// Builds a mask from `width * height` row-major bytes; non-zero is
/// foreground.
///
/// # Safety
/// `bits` must point to `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_new(
    width: usize,
    height: usize,
    bits: *const u8,
    out: *mut *mut NxMask,
) -> NxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bits = slice_arg(bits, checked_len(width, height)?, "bits")?;
        let m = BinaryMask::new(width, height, bits.iter().map(|&b| b != 0).collect())?;
        *out = Box::into_raw(Box::new(NxMask(m)));
        Ok(())
    })
}

/// Reads a grayscale PNG mask; pixels above 127 are foreground.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_read_png(path: *const c_char, out: *mut *mut NxMask) -> NxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = io::read_mask(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(NxMask(m)));
        Ok(())
    })
}

/// Writes the mask as an 8-bit PNG (0 or 255).
///
/// # Safety
/// `mask` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_write_png(mask: *const NxMask, path: *const c_char) -> NxStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        io::write_mask_png(&PathBuf::from(str_arg(path, "path")?), m)?;
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_free(mask: *mut NxMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_shape(mask: *const NxMask, width: *mut usize, height: *mut usize) -> NxStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        *out_ptr(width, "width")? = m.width();
        *out_ptr(height, "height")? = m.height();
        Ok(())
    })
}

/// # Safety
/// `mask` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_count(mask: *const NxMask, count: *mut usize) -> NxStatus {
    guard(|| {
        *out_ptr(count, "count")? = deref(mask, "mask")?.0.count();
        Ok(())
    })
}

/// Copies the mask into `buf` as row-major 0/1 bytes. `len` must equal
/// `width * height`.
///
/// # Safety
/// `mask` must be a live handle; `buf` must have room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn nx_mask_copy_bits(mask: *const NxMask, buf: *mut u8, len: usize) -> NxStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        if len != m.bits().len() {
            return Err(invalid(format!("buffer holds {len} bytes, mask has {}", m.bits().len())));
        }
        if len > 0 {
            if buf.is_null() {
                return Err(Failure(NxStatus::NullPointer, "buf is null".into()));
            }
            let dst = std::slice::from_raw_parts_mut(buf, len);
            for (d, &b) in dst.iter_mut().zip(m.bits()) {
                *d = b as u8;
            }
        }
        Ok(())
    })
}

// ------------------------------------------------------------------ atlas

/// Reads a NIfTI-1 label volume (`.nii`, `.nii.gz` or `.hdr`/`.img`) and a
/// label table (CSV or FSL XML).
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_atlas_read(
    volume_path: *const c_char,
    labels_path: *const c_char,
    out: *mut *mut NxAtlas,
) -> NxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let volume = PathBuf::from(str_arg(volume_path, "volume_path")?);
        let labels = PathBuf::from(str_arg(labels_path, "labels_path")?);
        *out = Box::into_raw(Box::new(NxAtlas(io::read_atlas(&volume, &labels)?)));
        Ok(())
    })
}

/// # Safety
/// `atlas` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nx_atlas_free(atlas: *mut NxAtlas) {
    if !atlas.is_null() {
        drop(Box::from_raw(atlas));
    }
}

/// # Safety
/// `atlas` must be a live handle; `depth` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_atlas_depth(atlas: *const NxAtlas, depth: *mut usize) -> NxStatus {
    guard(|| {
        *out_ptr(depth, "depth")? = deref(atlas, "atlas")?.0.depth();
        Ok(())
    })
}

// ---------------------------------------------------------------- stages

/// Thresholds `heatmap` at the percentile that maximizes Dice against
/// `reference`, then cleans the mask. `params` may be null for defaults.
/// Writes the final mask handle and a JSON summary with `alpha_star`,
/// `threshold`, `search_dsc`, `dsc`, `iou` and `foreground`.
///
/// # Safety
/// Handles must be live; `out_mask` and `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_segment(
    heatmap: *const NxHeatmap,
    reference: *const NxMask,
    params: *const NxSegmentationParams,
    out_mask: *mut *mut NxMask,
    out_json: *mut *mut c_char,
) -> NxStatus {
    guard(|| {
        let h = &deref(heatmap, "heatmap")?.0;
        let r = &deref(reference, "reference")?.0;
        let params: SegmentationParams = params
            .as_ref()
            .copied()
            .unwrap_or_else(|| nx_segmentation_params_default())
            .into();
        let out_mask = out_ptr(out_mask, "out_mask")?;
        let out_json = out_ptr(out_json, "out_json")?;
        let seg = segment_heatmap(h, r, &params)?;
        let summary = json!({
            "alpha_star": seg.alpha_star,
            "threshold": seg.threshold_value,
            "search_dsc": seg.search_dsc,
            "dsc": seg.dsc,
            "iou": seg.iou,
            "foreground": seg.mask.count(),
        });
        *out_json = into_c_string(summary.to_string())?;
        *out_mask = Box::into_raw(Box::new(NxMask(seg.mask)));
        Ok(())
    })
}

/// Connected regions (4-connectivity) of a mask as a JSON array of
/// `{label, area, bbox}`.
///
/// # Safety
/// `mask` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_extract_rois(mask: *const NxMask, out_json: *mut *mut c_char) -> NxStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        let out_json = out_ptr(out_json, "out_json")?;
        let rois: Vec<_> = roi::extract_rois(m)
            .iter()
            .enumerate()
            .map(|(i, r)| json!({"label": i + 1, "area": r.area, "bbox": r.bbox}))
            .collect();
        *out_json = into_c_string(serde_json::Value::from(rois).to_string())?;
        Ok(())
    })
}

/// Per-region overlap of `mask` with axial slice `slice` of `atlas`. A
/// negative `slice` selects the middle slice. The JSON object carries
/// `slice`, `foreground`, `rows` (label, region_name, voxel_count,
/// percentage) and `warnings`.
///
/// # Safety
/// Handles must be live; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_map_atlas(
    mask: *const NxMask,
    atlas: *const NxAtlas,
    slice: i64,
    out_json: *mut *mut c_char,
) -> NxStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        let a = &deref(atlas, "atlas")?.0;
        let out_json = out_ptr(out_json, "out_json")?;
        let z = usize::try_from(slice).unwrap_or(a.depth() / 2);
        let table = atlas::map_rois(m, a, z)?;
        let doc = json!({
            "slice": z,
            "foreground": table.foreground,
            "rows": table.rows,
            "warnings": table.warnings,
        });
        *out_json = into_c_string(doc.to_string())?;
        Ok(())
    })
}

/// TTR, Maas, Flesch reading ease and coherence of `text` as JSON.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_text_metrics(text: *const c_char, out_json: *mut *mut c_char) -> NxStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out_json = out_ptr(out_json, "out_json")?;
        let report = evaluate_text(text, &TermFrequencyEmbedder).map_err(|e| invalid(e.to_string()))?;
        let s = serde_json::to_string(&report).map_err(|e| Failure(NxStatus::Processing, e.to_string()))?;
        *out_json = into_c_string(s)?;
        Ok(())
    })
}

/// Validates a findings document and writes its canonical serialization.
/// Schema violations are reported as `NX_STATUS_FORMAT` with one line per
/// violation in the error message.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_canonical` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nx_findings_validate(json: *const c_char, out_canonical: *mut *mut c_char) -> NxStatus {
    guard(|| {
        let raw = str_arg(json, "json")?;
        let out = out_ptr(out_canonical, "out_canonical")?;
        let doc = validate_findings(raw).map_err(|e| Failure(NxStatus::Format, e.to_string()))?;
        *out = into_c_string(doc.to_canonical_json())?;
        Ok(())
    })
}
