//! Heatmap to tumor mask: adaptive percentile thresholding, small-object
//! removal and morphological closing.
//!
//! For each integer percentile in the search range the heatmap is thresholded
//! at that percentile and scored by Dice against the reference mask. The best
//! percentile's raw mask then has components smaller than `s_min` removed and
//! is closed with a disk of radius `radius`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMask, Heatmap, SegmentationResult};
use crate::roi::label_components;

/// Which percentile wins when several reach the same Dice score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest percentile, i.e. the largest mask.
    #[default]
    LowestAlpha,
    HighestAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub alpha_low: u32,
    pub alpha_high: u32,
    pub s_min: usize,
    pub radius: usize,
    pub epsilon: f64,
    pub tie_break: TieBreak,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            alpha_low: 70,
            alpha_high: 97,
            s_min: 50,
            radius: 3,
            epsilon: 1e-6,
            tie_break: TieBreak::LowestAlpha,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_low > self.alpha_high || self.alpha_high > 100 {
            return Err(Error::InvalidParam(format!(
                "alpha range {}:{} must satisfy 0 <= low <= high <= 100",
                self.alpha_low, self.alpha_high
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// 1-based rank `ceil(alpha * n / 100)`, clamped to `[1, n]`.
fn percentile_rank(alpha: f64, n: usize) -> usize {
    let alpha = alpha.clamp(0.0, 100.0);
    let rank = (alpha * n as f64 / 100.0).ceil();
    (rank as usize).clamp(1, n)
}

fn percentile_sorted(sorted: &[f64], alpha: f64) -> f64 {
    sorted[percentile_rank(alpha, sorted.len()) - 1]
}

fn sorted_values(heatmap: &Heatmap) -> Vec<f64> {
    let mut v = heatmap.values().to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// The `ceil(alpha * N / 100)`-th smallest value (1-indexed); `alpha = 0`
/// selects the minimum.
pub fn percentile(heatmap: &Heatmap, alpha: f64) -> f64 {
    let mut v = heatmap.values().to_vec();
    let k = percentile_rank(alpha, v.len()) - 1;
    let (_, kth, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *kth
}

fn threshold_value(heatmap: &Heatmap, t: f64) -> BinaryMask {
    let bits = heatmap.values().iter().map(|&v| v >= t).collect();
    BinaryMask::new(heatmap.width(), heatmap.height(), bits).expect("heatmap shape is valid")
}

/// Foreground wherever the heatmap is at or above its `alpha` percentile.
pub fn threshold_at(heatmap: &Heatmap, alpha: f64) -> BinaryMask {
    threshold_value(heatmap, percentile(heatmap, alpha))
}

fn dice_counts(inter: usize, a: usize, b: usize, epsilon: f64) -> f64 {
    (2.0 * inter as f64 + epsilon) / (a as f64 + b as f64 + epsilon)
}

fn intersection(a: &BinaryMask, b: &BinaryMask) -> usize {
    a.bits().iter().zip(b.bits()).filter(|(&x, &y)| x && y).count()
}

/// Smoothed Dice coefficient `(2|A∩B| + ε) / (|A| + |B| + ε)`.
pub fn dice(a: &BinaryMask, b: &BinaryMask, epsilon: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(dice_counts(intersection(a, b), a.count(), b.count(), epsilon))
}

/// `|A∩B| / |A∪B|`, defined as 1 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_shape(b)?;
    let inter = intersection(a, b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Drops every 4-connected component with fewer than `s_min` pixels.
pub fn remove_small_objects(mask: &BinaryMask, s_min: usize) -> BinaryMask {
    if s_min == 0 {
        return mask.clone();
    }
    let labels = label_components(mask);
    let mut areas = vec![0usize; labels.max_label() as usize + 1];
    for &l in labels.labels() {
        areas[l as usize] += 1;
    }
    let bits = labels
        .labels()
        .iter()
        .map(|&l| l != 0 && areas[l as usize] >= s_min)
        .collect();
    BinaryMask::new(mask.width(), mask.height(), bits).expect("same shape as input")
}

/// Set of `(row, col)` offsets relative to the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn new(mut offsets: Vec<(isize, isize)>) -> Self {
        offsets.sort_unstable();
        offsets.dedup();
        StructuringElement { offsets }
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Integer offsets within Euclidean distance `radius` of the origin.
pub fn disk(radius: usize) -> StructuringElement {
    let r = radius as isize;
    let r2 = r * r;
    let offsets = (-r..=r)
        .flat_map(|i| (-r..=r).map(move |j| (i, j)))
        .filter(|&(i, j)| i * i + j * j <= r2)
        .collect();
    StructuringElement::new(offsets)
}

fn shifted(row: usize, col: usize, (dr, dc): (isize, isize), h: usize, w: usize) -> Option<usize> {
    let r = row.checked_add_signed(dr)?;
    let c = col.checked_add_signed(dc)?;
    (r < h && c < w).then_some(r * w + c)
}

/// `p` is set iff `p - s` is foreground for some offset `s`. Pixels outside
/// the grid are background.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (h, w) = mask.shape();
    let mut out = vec![false; w * h];
    for (r, c) in mask.foreground() {
        for &off in se.offsets() {
            if let Some(i) = shifted(r, c, off, h, w) {
                out[i] = true;
            }
        }
    }
    BinaryMask::new(w, h, out).expect("same shape as input")
}

/// `p` is set iff `p + s` is foreground for every offset `s` that lands inside
/// the grid. Out-of-grid positions do not erode, which keeps closing
/// extensive at the border.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (h, w) = mask.shape();
    let bits = mask.bits();
    let mut out = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = se
                .offsets()
                .iter()
                .all(|&off| shifted(r, c, off, h, w).is_none_or(|i| bits[i]));
        }
    }
    BinaryMask::new(w, h, out).expect("same shape as input")
}

/// Dilation followed by erosion.
pub fn closing(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Per-percentile search objective: `(alpha, threshold, dice)` for every
/// integer percentile in the configured range.
pub fn alpha_sweep(
    heatmap: &Heatmap,
    reference: &BinaryMask,
    params: &SegmentationParams,
) -> Result<Vec<(u32, f64, f64)>> {
    params.validate()?;
    if heatmap.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            left: heatmap.shape(),
            right: reference.shape(),
        });
    }
    let sorted = sorted_values(heatmap);
    let ref_count = reference.count();
    let sweep = (params.alpha_low..=params.alpha_high)
        .map(|alpha| {
            let t = percentile_sorted(&sorted, alpha as f64);
            let (mut size, mut inter) = (0usize, 0usize);
            for (&v, &g) in heatmap.values().iter().zip(reference.bits()) {
                if v >= t {
                    size += 1;
                    inter += g as usize;
                }
            }
            (alpha, t, dice_counts(inter, size, ref_count, params.epsilon))
        })
        .collect();
    Ok(sweep)
}

/// Selects the Dice-maximizing percentile, thresholds the heatmap there and
/// post-processes the mask. Reported `dsc`/`iou` describe the final mask.
pub fn segment_heatmap(
    heatmap: &Heatmap,
    reference: &BinaryMask,
    params: &SegmentationParams,
) -> Result<SegmentationResult> {
    let sweep = alpha_sweep(heatmap, reference, params)?;
    let mut best = sweep[0];
    for &cand in &sweep[1..] {
        let better = match params.tie_break {
            TieBreak::LowestAlpha => cand.2 > best.2,
            TieBreak::HighestAlpha => cand.2 >= best.2,
        };
        if better {
            best = cand;
        }
    }
    let (alpha_star, threshold, search_dsc) = best;

    let raw = threshold_value(heatmap, threshold);
    let cleaned = remove_small_objects(&raw, params.s_min);
    let mask = closing(&cleaned, &disk(params.radius));

    Ok(SegmentationResult {
        dsc: dice(&mask, reference, params.epsilon)?,
        iou: iou(&mask, reference)?,
        mask,
        alpha_star,
        threshold_value: threshold,
        search_dsc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hm(width: usize, values: Vec<f64>) -> Heatmap {
        let h = values.len() / width;
        Heatmap::from_flat(width, h, values).unwrap()
    }

    #[test]
    fn percentile_examples() {
        let h = hm(4, vec![0.3, 0.1, 0.4, 0.2]);
        assert_eq!(percentile(&h, 100.0), 0.4);
        assert_eq!(percentile(&h, 50.0), 0.2);
        assert_eq!(percentile(&h, 0.0), 0.1);

        let tenths: Vec<f64> = (0..10).rev().map(|i| i as f64 / 10.0).collect();
        assert_eq!(percentile(&hm(10, tenths), 70.0), 0.6);
    }

    #[test]
    fn threshold_examples() {
        let flat = hm(3, vec![0.4; 6]);
        assert_eq!(threshold_at(&flat, 90.0).count(), 6);

        let split = hm(4, vec![0.1, 0.1, 0.9, 0.9]);
        let m = threshold_at(&split, 70.0);
        assert_eq!(m.bits(), &[false, false, true, true]);

        let ramp = hm(4, vec![0.0, 0.2, 0.5, 1.0]);
        assert_eq!(threshold_at(&ramp, 0.0).count(), 4);
    }

    fn mask_with(n: usize, on: impl Fn(usize) -> bool) -> BinaryMask {
        BinaryMask::new(n, 1, (0..n).map(on).collect()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = mask_with(300, |i| i < 100);
        assert!((1.0 - dice(&a, &a, 1e-6).unwrap()) < 1e-6);

        let b = mask_with(300, |i| (100..200).contains(&i));
        let d = dice(&a, &b, 1e-6).unwrap();
        assert!((d - 1e-6 / (200.0 + 1e-6)).abs() < 1e-15);

        let c = mask_with(300, |i| (50..150).contains(&i));
        assert!((dice(&a, &c, 1e-6).unwrap() - 0.5).abs() < 1e-8);
        assert!((iou(&a, &c).unwrap() - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);

        let empty = mask_with(300, |_| false);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);

        let other = BinaryMask::empty(10, 30);
        assert!(matches!(
            dice(&a, &other, 1e-6),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(iou(&a, &other).is_err());
    }

    #[test]
    fn disk_sizes() {
        assert_eq!(disk(0).offsets(), &[(0, 0)]);
        assert_eq!(disk(1).len(), 5);
        assert_eq!(disk(3).len(), 29);
    }

    #[test]
    fn small_object_boundary() {
        // 7x7 square = 49 pixels, 5x10 = 50 pixels.
        let small = BinaryMask::from_fn(20, 20, |r, c| r < 7 && c < 7);
        assert!(remove_small_objects(&small, 50).is_empty());
        let exact = BinaryMask::from_fn(20, 20, |r, c| r < 5 && c < 10);
        assert_eq!(remove_small_objects(&exact, 50), exact);
        assert_eq!(remove_small_objects(&small, 0), small);
    }

    #[test]
    fn closing_examples() {
        let se = disk(3);
        let empty = BinaryMask::empty(12, 12);
        assert_eq!(closing(&empty, &se), empty);

        let square = BinaryMask::from_fn(20, 20, |r, c| (5..15).contains(&r) && (5..15).contains(&c));
        assert_eq!(closing(&square, &se), square);

        let ring = BinaryMask::from_fn(21, 21, |r, c| {
            (6..15).contains(&r) && (6..15).contains(&c) && (r, c) != (10, 10)
        });
        let closed = closing(&ring, &se);
        assert!(closed.get(10, 10));
        assert!(closed.contains(&ring));
    }

    #[test]
    fn closing_keeps_border_pixels() {
        let m = BinaryMask::from_fn(8, 8, |r, c| r == 0 && c < 3);
        assert!(closing(&m, &disk(3)).contains(&m));
    }

    #[test]
    fn params_validation() {
        let mut p = SegmentationParams::default();
        assert!(p.validate().is_ok());
        p.alpha_low = 98;
        assert!(p.validate().is_err());
        let p = SegmentationParams {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn identical_heatmap_is_optimal() {
        let gt = BinaryMask::from_fn(30, 30, |r, c| (8..20).contains(&r) && (10..22).contains(&c));
        let h = Heatmap::from_flat(
            30,
            30,
            gt.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let res = segment_heatmap(&h, &gt, &SegmentationParams::default()).unwrap();
        for alpha in 70..=97 {
            let fixed = threshold_at(&h, alpha as f64);
            assert!(res.dsc >= dice(&fixed, &gt, 1e-6).unwrap());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let h = hm(4, vec![0.1; 8]);
        let gt = BinaryMask::empty(2, 4);
        assert!(matches!(
            segment_heatmap(&h, &gt, &SegmentationParams::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn tie_break_direction() {
        // Constant heatmap: every alpha produces the full mask.
        let h = hm(5, vec![0.5; 25]);
        let gt = BinaryMask::from_fn(5, 5, |r, _| r < 2);
        let low = segment_heatmap(&h, &gt, &SegmentationParams::default()).unwrap();
        assert_eq!(low.alpha_star, 70);
        let high = segment_heatmap(
            &h,
            &gt,
            &SegmentationParams {
                tie_break: TieBreak::HighestAlpha,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(high.alpha_star, 97);
    }

    fn heatmap_strategy() -> impl Strategy<Value = Heatmap> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f64..=1.0, w * h)
                .prop_map(move |v| Heatmap::from_flat(w, h, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn threshold_is_monotone(h in heatmap_strategy(), a in 0u32..=100, b in 0u32..=100) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let big = threshold_at(&h, lo as f64);
            let small = threshold_at(&h, hi as f64);
            prop_assert!(big.contains(&small));
        }

        #[test]
        fn percentile_matches_sorted_index(values in proptest::collection::vec(0.0f64..=1.0, 1..100), alpha in 0.0f64..=100.0) {
            let n = values.len();
            let h = Heatmap::from_flat(n, 1, values.clone()).unwrap();
            let mut sorted = values;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = ((alpha * n as f64 / 100.0).ceil() as usize).max(1);
            prop_assert_eq!(percentile(&h, alpha), sorted[k - 1]);
        }

        #[test]
        fn closing_is_extensive_and_idempotent(
            bits in proptest::collection::vec(any::<bool>(), 100), r in 0usize..4
        ) {
            let m = BinaryMask::new(10, 10, bits).unwrap();
            let se = disk(r);
            let c = closing(&m, &se);
            prop_assert!(c.contains(&m));
            prop_assert_eq!(closing(&c, &se), c);
        }

        #[test]
        fn iou_never_exceeds_dice(
            a in proptest::collection::vec(any::<bool>(), 36),
            b in proptest::collection::vec(any::<bool>(), 36)
        ) {
            let a = BinaryMask::new(6, 6, a).unwrap();
            let b = BinaryMask::new(6, 6, b).unwrap();
            let d = dice(&a, &b, 1e-12).unwrap();
            let j = iou(&a, &b).unwrap();
            prop_assert!(j <= d + 1e-9);
            prop_assert_eq!(d, dice(&b, &a, 1e-12).unwrap());
        }
    }
}
