//! Shared domain types.
//!
//! All 2D grids are row-major with the origin at the top-left and are indexed
//! `(row, col)`. `width` is the number of columns and `height` the number of
//! rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Saliency map with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    /// Builds a heatmap from a row-major buffer, min-max rescaling when any
    /// value falls outside `[0, 1]`.
    pub fn from_flat(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if values.len() != width * height {
            return Err(Error::BufferLength {
                len: values.len(),
                width,
                height,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let values = normalize(values);
        Ok(Heatmap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`, i.e. `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn normalize(mut values: Vec<f64>) -> Vec<f64> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min >= 0.0 && max <= 1.0 {
        return values;
    }
    let range = max - min;
    if range == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - min) / range);
    }
    values
}

/// Validates a rectangular grid of raw saliency values.
///
/// Values already inside `[0, 1]` are kept as-is. Otherwise the grid is
/// rescaled with `(v - min) / (max - min)`; a constant grid becomes all zeros.
pub fn validate_heatmap(raw: &[Vec<f64>]) -> Result<Heatmap> {
    let height = raw.len();
    let width = raw.first().map_or(0, Vec::len);
    if height == 0 || width == 0 {
        return Err(Error::EmptyGrid);
    }
    for (row, r) in raw.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Ragged {
                row,
                found: r.len(),
                expected: width,
            });
        }
    }
    Heatmap::from_flat(width, height, raw.concat())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyGrid);
        }
        if bits.len() != width * height {
            return Err(Error::BufferLength {
                len: bits.len(),
                width,
                height,
            });
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    /// All-background mask. Panics on a zero dimension.
    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = BinaryMask::empty(width, height);
        for r in 0..height {
            for c in 0..width {
                mask.bits[r * width + c] = f(r, c);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn check_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `true` if every foreground pixel of `other` is foreground here.
    pub fn contains(&self, other: &BinaryMask) -> bool {
        self.shape() == other.shape()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }
}

/// Integer label grid; `0` is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyGrid);
        }
        if labels.len() != width * height {
            return Err(Error::BufferLength {
                len: labels.len(),
                width,
                height,
            });
        }
        Ok(LabelGrid {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Largest label present, i.e. the component count for grids produced by
    /// [`crate::roi::label_components`].
    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Labelled 3D atlas volume. Voxels are stored with the first axis varying
/// fastest, as in NIfTI.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    dims: (usize, usize, usize),
    labels: Vec<u32>,
    names: BTreeMap<u32, String>,
}

impl Atlas {
    pub fn new(
        dims: (usize, usize, usize),
        labels: Vec<u32>,
        names: BTreeMap<u32, String>,
    ) -> Result<Self> {
        let (x, y, z) = dims;
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::EmptyGrid);
        }
        if labels.len() != x * y * z {
            return Err(Error::InvalidParam(format!(
                "atlas buffer has {} voxels, dims {:?} need {}",
                labels.len(),
                dims,
                x * y * z
            )));
        }
        Ok(Atlas {
            dims,
            labels,
            names,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims.2
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn names(&self) -> &BTreeMap<u32, String> {
        &self.names
    }

    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u32 {
        let (nx, ny, _) = self.dims;
        self.labels[x + nx * (y + ny * z)]
    }

    pub fn name(&self, label: u32) -> Option<&str> {
        self.names.get(&label).map(String::as_str)
    }

    /// Nonzero labels present in the volume without an entry in the name table.
    pub fn unnamed_labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self
            .labels
            .iter()
            .copied()
            .filter(|l| *l != 0 && !self.names.contains_key(l))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }
}

/// Inclusive bounding box; `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.x_min..=self.x_max).contains(&col) && (self.y_min..=self.y_max).contains(&row)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    /// `(row, col)` pixel locations in raster order.
    pub coords: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub label: u32,
    pub region_name: String,
    pub voxel_count: usize,
    pub percentage: f64,
}

/// Per-region overlap of a mask with an atlas slice, sorted by descending
/// voxel count and then ascending label.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    /// `(rows, cols)` of the mask the table was computed from.
    pub mask_shape: (usize, usize),
    /// Foreground pixel count of that mask, including pixels over background.
    pub foreground: usize,
    pub warnings: Vec<String>,
}

impl CoverageTable {
    pub fn total_voxels(&self) -> usize {
        self.rows.iter().map(|r| r.voxel_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Final post-processed mask.
    pub mask: BinaryMask,
    pub alpha_star: u32,
    pub threshold_value: f64,
    /// Dice of the final mask against the reference.
    pub dsc: f64,
    /// IoU of the final mask against the reference.
    pub iou: f64,
    /// Dice of the raw thresholded mask at `alpha_star`, the search objective.
    pub search_dsc: f64,
}
