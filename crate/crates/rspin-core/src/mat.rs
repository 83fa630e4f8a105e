//! Shared dense-matrix helpers for the loss and trainer modules.
//!
//! Frame-level features and probabilities are plain `Array2<f64>` with frames
//! as rows. The helpers here centralize the numerically sensitive pieces
//! (softmax, row normalization) so every caller floors and stabilizes the
//! same way.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// T×D matrix of frame-level features; one row per frame.
pub type FrameMatrix = Array2<f64>;

/// B×K matrix of per-frame probability distributions; rows sum to 1.
pub type ProbMatrix = Array2<f64>;

/// Floor applied inside logarithms so a zero probability never yields -inf.
pub const LOG_FLOOR: f64 = 1e-30;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// L2-normalizes each row in place. Errors if a row norm falls below 1e-12.
pub fn l2_normalize_rows(m: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::invalid(format!(
                "row {i} has near-zero norm {norm:e}; cannot normalize"
            )));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Checks every entry is finite.
pub fn ensure_finite(m: &Array2<f64>, what: &'static str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Checks two matrices share the same shape.
pub fn ensure_same_shape(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "{what}: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Column sums as a 1-D array.
pub fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}
