//! Atlas slice extraction, nearest-neighbour resampling and per-region
//! coverage of a mask.
//!
//! An axial slice `A[:, :, z]` is laid out with the atlas' first axis as rows
//! and its second axis as columns. Orientation fix-ups belong to the loader.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Atlas, BinaryMask, CoverageRow, CoverageTable, LabelGrid};

pub fn extract_slice(atlas: &Atlas, z: usize) -> Result<LabelGrid> {
    let (nx, ny, nz) = atlas.dims();
    if z >= nz {
        return Err(Error::SliceOutOfRange { z, depth: nz });
    }
    let mut labels = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        for y in 0..ny {
            labels.push(atlas.label_at(x, y, z));
        }
    }
    LabelGrid::new(ny, nx, labels)
}

/// Nearest-neighbour resampling to `(rows, cols)`:
/// `out[i][j] = src[floor(i * R / rows)][floor(j * C / cols)]`.
pub fn resample_nearest(src: &LabelGrid, target: (usize, usize)) -> Result<LabelGrid> {
    let (rows, cols) = target;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyGrid);
    }
    let (src_rows, src_cols) = src.shape();
    let mut labels = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let si = i * src_rows / rows;
        for j in 0..cols {
            let sj = j * src_cols / cols;
            labels.push(src.get(si, sj));
        }
    }
    LabelGrid::new(cols, rows, labels)
}

pub fn unknown_region_name(label: u32) -> String {
    format!("UNKNOWN({label})")
}

/// Tallies atlas labels under the mask's foreground on slice `z`.
///
/// Background (label 0) is dropped before percentages are computed. Labels
/// missing from the name table get an `UNKNOWN(<label>)` name and a warning.
pub fn map_rois(mask: &BinaryMask, atlas: &Atlas, z: usize) -> Result<CoverageTable> {
    let slice = extract_slice(atlas, z)?;
    let resampled = resample_nearest(&slice, mask.shape())?;

    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (r, c) in mask.foreground() {
        let label = resampled.get(r, c);
        if label != 0 {
            *counts.entry(label).or_default() += 1;
        }
    }

    let total: usize = counts.values().sum();
    let mut warnings = Vec::new();
    let mut rows: Vec<CoverageRow> = counts
        .into_iter()
        .map(|(label, voxel_count)| {
            let region_name = match atlas.name(label) {
                Some(name) => name.to_string(),
                None => {
                    let msg = format!("atlas label {label} has no entry in the name table");
                    log::warn!("{msg}");
                    warnings.push(msg);
                    unknown_region_name(label)
                }
            };
            CoverageRow {
                label,
                region_name,
                voxel_count,
                percentage: voxel_count as f64 / total as f64 * 100.0,
            }
        })
        .collect();
    // BTreeMap iteration already orders by label, so a stable sort keeps
    // ascending labels among equal counts.
    rows.sort_by(|a, b| b.voxel_count.cmp(&a.voxel_count));

    Ok(CoverageTable {
        rows,
        mask_shape: mask.shape(),
        foreground: mask.count(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atlas_4x4x2() -> Atlas {
        let labels: Vec<u32> = (0..32).map(|i| i as u32 % 5).collect();
        Atlas::new((4, 4, 2), labels, BTreeMap::new()).unwrap()
    }

    #[test]
    fn slice_zero_is_first_plane() {
        let atlas = atlas_4x4x2();
        let s = extract_slice(&atlas, 0).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(s.get(x, y), atlas.label_at(x, y, 0));
            }
        }
        assert!(matches!(
            extract_slice(&atlas, 2),
            Err(Error::SliceOutOfRange { z: 2, depth: 2 })
        ));
    }

    #[test]
    fn constant_volume_gives_constant_slice() {
        let atlas = Atlas::new((3, 2, 2), vec![9; 12], BTreeMap::new()).unwrap();
        assert!(extract_slice(&atlas, 1).unwrap().labels().iter().all(|&l| l == 9));
    }

    #[test]
    fn upsample_quadrants() {
        let src = LabelGrid::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let up = resample_nearest(&src, (4, 4)).unwrap();
        #[rustfmt::skip]
        let expected = vec![
            1, 1, 2, 2,
            1, 1, 2, 2,
            3, 3, 4, 4,
            3, 3, 4, 4,
        ];
        assert_eq!(up.labels(), expected.as_slice());
        assert_eq!(resample_nearest(&src, (2, 2)).unwrap(), src);
    }

    #[test]
    fn single_region_coverage() {
        let names = BTreeMap::from([(7, "Insular Cortex".to_string())]);
        let atlas = Atlas::new((8, 8, 1), vec![7; 64], names).unwrap();
        let mask = BinaryMask::from_fn(16, 16, |r, c| r < 4 && c < 5);
        let table = map_rois(&mask, &atlas, 0).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(
            (row.label, row.region_name.as_str(), row.voxel_count),
            (7, "Insular Cortex", 20)
        );
        assert_eq!(row.percentage, 100.0);
    }

    #[test]
    fn background_only_gives_empty_table() {
        let atlas = Atlas::new((4, 4, 1), vec![0; 16], BTreeMap::new()).unwrap();
        let mask = BinaryMask::from_fn(4, 4, |_, _| true);
        let table = map_rois(&mask, &atlas, 0).unwrap();
        assert!(table.is_empty());
        assert_eq!(table.foreground, 16);
    }

    #[test]
    fn unknown_labels_warn_but_succeed() {
        let atlas = Atlas::new((2, 2, 1), vec![3; 4], BTreeMap::new()).unwrap();
        let mask = BinaryMask::from_fn(2, 2, |_, _| true);
        let table = map_rois(&mask, &atlas, 0).unwrap();
        assert_eq!(table.rows[0].region_name, "UNKNOWN(3)");
        assert_eq!(table.warnings.len(), 1);
    }

    #[test]
    fn rows_sorted_by_count_then_label() {
        // Four-region layout on a single 100-column row.
        let labels: Vec<u32> = (0..100)
            .map(|j| match j {
                0..=63 => 29,
                64..=95 => 2,
                96..=97 => 42,
                _ => 30,
            })
            .collect();
        let names = BTreeMap::from([
            (2, "Insular Cortex".to_string()),
            (29, "Cingulate Gyrus, anterior division".to_string()),
            (30, "Cingulate Gyrus, posterior division".to_string()),
            (42, "Central Opercular Cortex".to_string()),
        ]);
        // Atlas axis 0 becomes rows: dims (1, 100, 1).
        let atlas = Atlas::new((1, 100, 1), labels, names).unwrap();
        let mask = BinaryMask::from_fn(100, 1, |_, _| true);
        let table = map_rois(&mask, &atlas, 0).unwrap();
        let order: Vec<u32> = table.rows.iter().map(|r| r.label).collect();
        assert_eq!(order, vec![29, 2, 30, 42]);
        let sum: f64 = table.rows.iter().map(|r| r.percentage).sum();
        assert!((sum - 100.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn resample_only_uses_source_labels(
            w in 1usize..6, h in 1usize..6, tw in 1usize..20, th in 1usize..20, seed in any::<u64>()
        ) {
            let labels: Vec<u32> = (0..w * h).map(|i| ((seed >> (i % 60)) & 7) as u32).collect();
            let src = LabelGrid::new(w, h, labels).unwrap();
            let out = resample_nearest(&src, (th, tw)).unwrap();
            prop_assert!(out.labels().iter().all(|l| src.labels().contains(l)));
            prop_assert_eq!(out.shape(), (th, tw));
        }
    }
}
