//! Frame-wise pseudo-label classification loss and the combined objective.
//!
//! Both views are supervised by the same frame-aligned label sequence; the
//! combined objective adds the weighted classification term to the
//! swapped-prediction loss.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mat::{ensure_same_shape, softmax_rows, LOG_FLOOR};

/// Frame-aligned integer labels in [0, vocab).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabelSeq {
    labels: Vec<usize>,
    vocab: usize,
}

impl PseudoLabelSeq {
    pub fn new(labels: Vec<usize>, vocab: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("pseudo labels"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocab) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for vocabulary size {vocab}"
            )));
        }
        Ok(Self { labels, vocab })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_shapes(logits: &Array2<f64>, logits_tilde: &Array2<f64>, y: &PseudoLabelSeq) -> Result<()> {
    ensure_same_shape(logits, logits_tilde, "logits vs logits_tilde")?;
    if logits.nrows() != y.len() {
        return Err(Error::shape(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            y.len()
        )));
    }
    if logits.ncols() < y.vocab() {
        return Err(Error::shape(format!(
            "{} logit columns cannot cover vocabulary of {}",
            logits.ncols(),
            y.vocab()
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of the labels under both views' softmax,
/// -(1/2B) * sum_b [ log p(y_b | view1) + log p(y_b | view2) ].
pub fn aux_loss(
    logits: &Array2<f64>,
    logits_tilde: &Array2<f64>,
    y: &PseudoLabelSeq,
) -> Result<f64> {
    check_shapes(logits, logits_tilde, y)?;
    let b = y.len() as f64;
    let p = softmax_rows(logits);
    let p_tilde = softmax_rows(logits_tilde);
    let mut total = 0.0;
    for (i, &label) in y.labels().iter().enumerate() {
        total += p[[i, label]].max(LOG_FLOOR).ln();
        total += p_tilde[[i, label]].max(LOG_FLOOR).ln();
    }
    Ok(-total / (2.0 * b))
}

/// Gradients of [`aux_loss`] with respect to both logit matrices:
/// (softmax - onehot) / 2B per view.
pub fn aux_loss_grad(
    logits: &Array2<f64>,
    logits_tilde: &Array2<f64>,
    y: &PseudoLabelSeq,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_shapes(logits, logits_tilde, y)?;
    let b = y.len() as f64;
    let grad_of = |l: &Array2<f64>| {
        let mut g = softmax_rows(l);
        for (i, &label) in y.labels().iter().enumerate() {
            g[[i, label]] -= 1.0;
        }
        g / (2.0 * b)
    };
    Ok((grad_of(logits), grad_of(logits_tilde)))
}

/// Combined objective: swapped-prediction loss plus lambda times the
/// pseudo-label loss. Lambda must be strictly positive.
pub fn total_loss(l_spin: f64, l_aux: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(l_spin + lambda * l_aux)
}
