//! Connected-component labelling and region properties.
//!
//! Connectivity is 4-adjacency throughout: pixels touching only diagonally
//! belong to different components. Labels are assigned in raster-scan order of
//! each component's first pixel.

use std::collections::VecDeque;

use crate::model::{BinaryMask, BoundingBox, LabelGrid, RegionDescriptor};

/// Labels every maximal 4-connected foreground region with `1..=K`.
pub fn label_components(mask: &BinaryMask) -> LabelGrid {
    let (h, w) = mask.shape();
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();

    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if bits[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
    }

    LabelGrid::new(w, h, labels).expect("dimensions come from a valid mask")
}

/// One descriptor per label, ordered by ascending label.
pub fn region_props(labels: &LabelGrid) -> Vec<RegionDescriptor> {
    let k = labels.max_label() as usize;
    let mut regions: Vec<RegionDescriptor> = (0..k)
        .map(|_| RegionDescriptor {
            coords: Vec::new(),
            bbox: BoundingBox {
                x_min: usize::MAX,
                y_min: usize::MAX,
                x_max: 0,
                y_max: 0,
            },
            area: 0,
        })
        .collect();

    let w = labels.width();
    for (i, &label) in labels.labels().iter().enumerate() {
        if label == 0 {
            continue;
        }
        let (row, col) = (i / w, i % w);
        let region = &mut regions[label as usize - 1];
        region.coords.push((row, col));
        region.area += 1;
        let b = &mut region.bbox;
        b.x_min = b.x_min.min(col);
        b.x_max = b.x_max.max(col);
        b.y_min = b.y_min.min(row);
        b.y_max = b.y_max.max(row);
    }

    // Label grids that skip an index would leave an empty slot.
    regions.retain(|r| r.area > 0);
    regions
}

pub fn extract_rois(mask: &BinaryMask) -> Vec<RegionDescriptor> {
    region_props(&label_components(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn flood_fill_components(mask: &BinaryMask) -> Vec<HashSet<(usize, usize)>> {
        let (h, w) = mask.shape();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if !mask.get(r, c) || seen.contains(&(r, c)) {
                    continue;
                }
                let mut comp = HashSet::new();
                let mut stack = vec![(r, c)];
                while let Some((y, x)) = stack.pop() {
                    if !mask.get(y, x) || !seen.insert((y, x)) {
                        continue;
                    }
                    comp.insert((y, x));
                    if y > 0 {
                        stack.push((y - 1, x));
                    }
                    if y + 1 < h {
                        stack.push((y + 1, x));
                    }
                    if x > 0 {
                        stack.push((y, x - 1));
                    }
                    if x + 1 < w {
                        stack.push((y, x + 1));
                    }
                }
                out.push(comp);
            }
        }
        out
    }

    #[test]
    fn empty_mask_has_no_components() {
        let labels = label_components(&BinaryMask::empty(5, 4));
        assert_eq!(labels.max_label(), 0);
        assert!(region_props(&labels).is_empty());
    }

    #[test]
    fn single_pixel() {
        let mask = BinaryMask::from_fn(6, 5, |r, c| (r, c) == (2, 3));
        let labels = label_components(&mask);
        assert_eq!(labels.get(2, 3), 1);
        assert_eq!(labels.max_label(), 1);
    }

    #[test]
    fn diagonal_neighbours_are_separate() {
        let mask = BinaryMask::from_fn(2, 2, |r, c| r == c);
        let labels = label_components(&mask);
        assert_eq!(labels.max_label(), 2);
        assert_eq!(labels.get(0, 0), 1);
        assert_eq!(labels.get(1, 1), 2);
    }

    #[test]
    fn two_by_two_block_props() {
        let mask = BinaryMask::from_fn(8, 5, |r, c| (1..=2).contains(&r) && (4..=5).contains(&c));
        let rois = extract_rois(&mask);
        assert_eq!(rois.len(), 1);
        assert_eq!(rois[0].area, 4);
        assert_eq!(
            rois[0].bbox,
            BoundingBox {
                x_min: 4,
                y_min: 1,
                x_max: 5,
                y_max: 2
            }
        );
    }

    #[test]
    fn three_blobs_by_area() {
        // Horizontal bars of length 10, 20 and 30 separated by blank rows.
        let mask = BinaryMask::from_fn(30, 7, |r, c| match r {
            0 => c < 10,
            3 => c < 20,
            6 => c < 30,
            _ => false,
        });
        let areas: Vec<usize> = extract_rois(&mask).iter().map(|r| r.area).collect();
        assert_eq!(areas, vec![10, 20, 30]);
    }

    #[test]
    fn full_mask_is_one_region() {
        let mask = BinaryMask::from_fn(7, 3, |_, _| true);
        let rois = extract_rois(&mask);
        assert_eq!(rois.len(), 1);
        assert_eq!(rois[0].area, 21);
        assert_eq!(
            rois[0].bbox,
            BoundingBox {
                x_min: 0,
                y_min: 0,
                x_max: 6,
                y_max: 2
            }
        );
    }

    #[test]
    fn region_props_counts_labels() {
        let grid = LabelGrid::new(3, 1, vec![1, 0, 2]).unwrap();
        assert_eq!(region_props(&grid).len(), 2);
    }

    fn small_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..=8, 1usize..=8).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h)
                .prop_map(move |bits| BinaryMask::new(w, h, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_flood_fill_and_partitions(mask in small_mask()) {
            let rois = extract_rois(&mask);
            let oracle = flood_fill_components(&mask);
            prop_assert_eq!(rois.len(), oracle.len());
            // Raster order of first pixel matches the oracle's discovery order.
            for (roi, comp) in rois.iter().zip(&oracle) {
                let set: HashSet<_> = roi.coords.iter().copied().collect();
                prop_assert_eq!(&set, comp);
                prop_assert_eq!(roi.area, roi.coords.len());
                for &(r, c) in &roi.coords {
                    prop_assert!(roi.bbox.contains(r, c));
                }
                prop_assert!(roi.coords.iter().any(|&(_, c)| c == roi.bbox.x_min));
                prop_assert!(roi.coords.iter().any(|&(_, c)| c == roi.bbox.x_max));
                prop_assert!(roi.coords.iter().any(|&(r, _)| r == roi.bbox.y_min));
                prop_assert!(roi.coords.iter().any(|&(r, _)| r == roi.bbox.y_max));
            }
            let total: usize = rois.iter().map(|r| r.area).sum();
            prop_assert_eq!(total, mask.count());
        }
    }
}
