//! Representation and segmentation analysis: linear CKA, boundary
//! extraction, uniform and character-derived baselines, precision/recall/
//! R-value bundles, and cluster purity.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mat::FrameMatrix;
use crate::pieces::UnitSequence;

/// Boundary positions between frames: position t marks a boundary between
/// frame t-1 and frame t, so 0 < t < sequence_length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    positions: Vec<usize>,
    sequence_length: usize,
}

impl BoundarySet {
    pub fn new(positions: Vec<usize>, sequence_length: usize) -> Result<Self> {
        for w in positions.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid(format!(
                    "boundary positions must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&p) = positions.iter().find(|&&p| p == 0 || p >= sequence_length) {
            return Err(Error::invalid(format!(
                "boundary {p} outside (0, {sequence_length})"
            )));
        }
        Ok(Self {
            positions,
            sequence_length,
        })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn sequence_length(&self) -> usize {
        self.sequence_length
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Linear centered kernel alignment between two representations of the same
/// frames: ||Yc' Xc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F) after column
/// centering. Invariant to orthogonal transforms and isotropic scaling.
pub fn linear_cka(x: &FrameMatrix, y: &FrameMatrix) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::shape(format!(
            "row counts differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::invalid("need at least 2 rows for CKA"));
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let cross = yc.t().dot(&xc);
    let xx = xc.t().dot(&xc);
    let yy = yc.t().dot(&yc);
    let num = frob_sq(&cross);
    let denom = frob_sq(&xx).sqrt() * frob_sq(&yy).sqrt();
    if denom <= 0.0 {
        return Err(Error::invalid(
            "zero-variance input matrix; CKA undefined".to_string(),
        ));
    }
    Ok(num / denom)
}

fn center_columns(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut col in out.columns_mut() {
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
    }
    out
}

fn frob_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Boundaries where adjacent discrete units differ.
pub fn boundaries_from_units(s: &UnitSequence) -> BoundarySet {
    let units = s.units();
    let positions = (1..units.len())
        .filter(|&t| units[t] != units[t - 1])
        .collect();
    BoundarySet {
        positions,
        sequence_length: units.len(),
    }
}

/// Splits `length` frames into equal pieces: boundary i sits at
/// round(length*(i+1)/(n+1)). Duplicate positions collapse.
pub fn uniform_segmentation(n_boundaries: usize, length: usize) -> Result<BoundarySet> {
    if n_boundaries >= length {
        return Err(Error::invalid(format!(
            "cannot place {n_boundaries} boundaries in {length} frames"
        )));
    }
    let mut positions: Vec<usize> = (0..n_boundaries)
        .map(|i| {
            (length as f64 * (i + 1) as f64 / (n_boundaries + 1) as f64).round() as usize
        })
        .collect();
    positions.dedup();
    positions.retain(|&p| p > 0 && p < length);
    BoundarySet::new(positions, length)
}

/// Character-level boundaries from force-aligned word segments
/// (start, end, char_count): each word contributes char_count - 1 equally
/// spaced internal boundaries plus its own edges. The sequence length is the
/// last segment's end.
pub fn char_boundaries_from_words(word_segments: &[(usize, usize, usize)]) -> Result<BoundarySet> {
    if word_segments.is_empty() {
        return Err(Error::EmptyInput("word segments"));
    }
    let mut prev_end = 0usize;
    for &(start, end, chars) in word_segments {
        if start < prev_end {
            return Err(Error::invalid(format!(
                "word segment starting at {start} overlaps previous end {prev_end}"
            )));
        }
        if end <= start {
            return Err(Error::invalid(format!(
                "word segment ({start}, {end}) is empty"
            )));
        }
        if chars == 0 {
            return Err(Error::invalid("char_count must be at least 1"));
        }
        prev_end = end;
    }
    let sequence_length = word_segments.last().unwrap().1;
    let mut positions = std::collections::BTreeSet::new();
    for &(start, end, chars) in word_segments {
        for j in 1..chars {
            let p = start
                + ((end - start) as f64 * j as f64 / chars as f64).round() as usize;
            positions.insert(p);
        }
        positions.insert(start);
        positions.insert(end);
    }
    let positions: Vec<usize> = positions
        .into_iter()
        .filter(|&p| p > 0 && p < sequence_length)
        .collect();
    BoundarySet::new(positions, sequence_length)
}

/// Precision/recall/F1, over-segmentation rate, and R-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub os: f64,
    pub r_value: f64,
}

impl SegMetrics {
    /// Builds the bundle from raw match counts. Conventions: precision is 0
    /// when there are no predictions, F1 is 0 when both precision and recall
    /// are, OS = n_pred/n_ref - 1, and
    /// r_value = 1 - (|r1| + |r2|)/2 with r1 = sqrt((1-recall)^2 + OS^2),
    /// r2 = (-OS + recall - 1)/sqrt(2).
    pub fn from_counts(matches: usize, n_pred: usize, n_ref: usize) -> Result<Self> {
        if n_ref == 0 {
            return Err(Error::EmptyInput("reference boundaries"));
        }
        let precision = if n_pred == 0 {
            0.0
        } else {
            matches as f64 / n_pred as f64
        };
        let recall = matches as f64 / n_ref as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let os = n_pred as f64 / n_ref as f64 - 1.0;
        let r1 = ((1.0 - recall) * (1.0 - recall) + os * os).sqrt();
        let r2 = (-os + recall - 1.0) / std::f64::consts::SQRT_2;
        let r_value = 1.0 - (r1.abs() + r2.abs()) / 2.0;
        Ok(Self {
            precision,
            recall,
            f1,
            os,
            r_value,
        })
    }
}

/// Greedy one-to-one boundary matching in time order: walk both sorted
/// lists, pairing positions within `tol_frames` and skipping whichever side
/// is too far behind. For sorted inputs this yields the maximum matching.
pub fn boundary_matches(pred: &BoundarySet, reference: &BoundarySet, tol_frames: usize) -> usize {
    let tol = tol_frames as i64;
    let mut matches = 0;
    let (mut i, mut j) = (0, 0);
    let p = pred.positions();
    let r = reference.positions();
    while i < p.len() && j < r.len() {
        let d = p[i] as i64 - r[j] as i64;
        if d.abs() <= tol {
            matches += 1;
            i += 1;
            j += 1;
        } else if d < 0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    matches
}

/// Scores predicted boundaries against a reference within a frame tolerance.
pub fn segmentation_metrics(
    pred: &BoundarySet,
    reference: &BoundarySet,
    tol_frames: usize,
) -> Result<SegMetrics> {
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference boundaries"));
    }
    if pred.sequence_length() != reference.sequence_length() {
        return Err(Error::shape(format!(
            "sequence lengths differ: {} vs {}",
            pred.sequence_length(),
            reference.sequence_length()
        )));
    }
    let matches = boundary_matches(pred, reference, tol_frames);
    SegMetrics::from_counts(matches, pred.len(), reference.len())
}

/// Fraction of frames whose cluster's majority reference label matches the
/// frame's own reference label.
pub fn cluster_purity(assignments: &UnitSequence, reference: &UnitSequence) -> Result<f64> {
    if assignments.len() != reference.len() {
        return Err(Error::shape(format!(
            "{} assignments vs {} reference labels",
            assignments.len(),
            reference.len()
        )));
    }
    let mut per_cluster: std::collections::BTreeMap<u32, std::collections::BTreeMap<u32, usize>> =
        std::collections::BTreeMap::new();
    for (&a, &r) in assignments.units().iter().zip(reference.units()) {
        *per_cluster.entry(a).or_default().entry(r).or_insert(0) += 1;
    }
    let majority_total: usize = per_cluster
        .values()
        .map(|hist| hist.values().copied().max().unwrap_or(0))
        .sum();
    Ok(majority_total as f64 / assignments.len() as f64)
}

/// Frequency of the most common label; the baseline purity of a single
/// all-in-one cluster.
pub fn majority_class_fraction(reference: &UnitSequence) -> f64 {
    let mut hist: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for &r in reference.units() {
        *hist.entry(r).or_insert(0) += 1;
    }
    let max = hist.values().copied().max().unwrap_or(0);
    max as f64 / reference.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn useq(v: &[u32]) -> UnitSequence {
        UnitSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cka_self_similarity_is_one() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0], [-2.0, 1.5]];
        let v = linear_cka(&x, &x).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn cka_rejects_constant_matrix() {
        let x = array![[1.0, 2.0], [0.5, -1.0]];
        let c = Array2::from_elem((2, 2), 3.0);
        assert!(linear_cka(&x, &c).is_err());
    }

    #[test]
    fn cka_scale_invariance() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = &x * -4.5;
        let v = linear_cka(&x, &y).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boundaries_match_unit_changes() {
        let b = boundaries_from_units(&useq(&[1, 1, 2, 2, 3]));
        assert_eq!(b.positions(), &[2, 4]);
        assert_eq!(b.sequence_length(), 5);

        assert!(boundaries_from_units(&useq(&[7, 7, 7])).is_empty());

        let b = boundaries_from_units(&useq(&[1, 2, 1, 2]));
        assert_eq!(b.positions(), &[1, 2, 3]);
    }

    #[test]
    fn uniform_segmentation_examples() {
        assert_eq!(uniform_segmentation(1, 10).unwrap().positions(), &[5]);
        assert!(uniform_segmentation(0, 10).unwrap().is_empty());
        assert_eq!(uniform_segmentation(3, 8).unwrap().positions(), &[2, 4, 6]);
        assert!(uniform_segmentation(10, 10).is_err());
    }

    #[test]
    fn char_boundaries_examples() {
        let b = char_boundaries_from_words(&[(0, 4, 2)]).unwrap();
        assert_eq!(b.positions(), &[2]);

        let b = char_boundaries_from_words(&[(0, 4, 1), (4, 8, 1)]).unwrap();
        assert_eq!(b.positions(), &[4]);

        let b = char_boundaries_from_words(&[(0, 6, 3), (6, 8, 1)]).unwrap();
        assert_eq!(b.positions(), &[2, 4, 6]);

        assert!(char_boundaries_from_words(&[(0, 5, 2), (3, 8, 1)]).is_err());
    }

    #[test]
    fn perfect_segmentation_bundle() {
        let r = BoundarySet::new(vec![3, 7, 11], 20).unwrap();
        let m = segmentation_metrics(&r, &r, 0).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.os, 0.0);
        assert_eq!(m.r_value, 1.0);
    }

    #[test]
    fn over_segmentation_fixture() {
        // 4 reference boundaries all matched, 8 predictions.
        let m = SegMetrics::from_counts(4, 8, 4).unwrap();
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.os, 1.0);
        assert!((m.r_value - 0.14645).abs() < 1e-5, "{}", m.r_value);
    }

    #[test]
    fn empty_prediction_convention() {
        let m = SegMetrics::from_counts(0, 0, 4).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.os, -1.0);
        let r1 = (1.0f64 + 1.0).sqrt();
        let expected = 1.0 - (r1 + 0.0) / 2.0;
        assert!((m.r_value - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_reference() {
        let p = BoundarySet::new(vec![1], 5).unwrap();
        let r = BoundarySet::new(vec![], 5).unwrap();
        assert!(segmentation_metrics(&p, &r, 1).is_err());
    }

    #[test]
    fn purity_is_relabeling_invariant() {
        let a = useq(&[0, 0, 1, 1, 2, 2]);
        let relabeled = useq(&[5, 5, 9, 9, 0, 0]);
        assert_eq!(cluster_purity(&relabeled, &a).unwrap(), 1.0);
    }

    #[test]
    fn purity_single_cluster_balanced() {
        let assignments = useq(&[3, 3, 3, 3]);
        let reference = useq(&[0, 0, 1, 1]);
        assert_eq!(cluster_purity(&assignments, &reference).unwrap(), 0.5);
        assert_eq!(majority_class_fraction(&reference), 0.5);
    }

    #[test]
    fn purity_rejects_length_mismatch() {
        assert!(cluster_purity(&useq(&[1, 2]), &useq(&[1])).is_err());
    }
}
