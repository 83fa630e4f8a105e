//! Swapped-prediction clustering loss over a learnable codebook.
//!
//! Frame features are projected, L2-normalized, and scored against unit-norm
//! code vectors. Each view's soft assignment is smoothed toward balanced
//! codebook usage with a few Sinkhorn iterations and then serves as the
//! classification target for the other view. Targets are constants: no
//! gradient flows through the smoothing.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::{
    ensure_finite, ensure_same_shape, l2_normalize_rows, softmax_rows, FrameMatrix, ProbMatrix,
    LOG_FLOOR,
};

/// K learnable code vectors (rows) plus the assignment softmax temperature.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub vectors: Array2<f64>,
    pub temperature: f64,
}

impl Codebook {
    pub fn new(vectors: Array2<f64>, temperature: f64) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::EmptyInput("codebook"));
        }
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            vectors,
            temperature,
        })
    }

    /// Seeds K unit-norm code vectors from a spherical Gaussian.
    pub fn init_random(k: usize, dim: usize, temperature: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Array2::zeros((k, dim));
        for mut row in vectors.rows_mut() {
            for v in row.iter_mut() {
                *v = crate::rng::gaussian(&mut rng);
            }
        }
        l2_normalize_rows(&mut vectors)?;
        Self::new(vectors, temperature)
    }

    pub fn size(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Restores unit L2 norm on every code vector; called after each
    /// optimizer step.
    pub fn renormalize(&mut self) -> Result<()> {
        l2_normalize_rows(&mut self.vectors)
    }
}

/// Projects frame features and L2-normalizes every row.
pub fn project_normalize(
    h: &FrameMatrix,
    w: &Array2<f64>,
    bias: &Array1<f64>,
) -> Result<FrameMatrix> {
    if h.ncols() != w.nrows() {
        return Err(Error::shape(format!(
            "features have {} columns but projection expects {}",
            h.ncols(),
            w.nrows()
        )));
    }
    if w.ncols() != bias.len() {
        return Err(Error::shape(format!(
            "projection produces {} dims but bias has {}",
            w.ncols(),
            bias.len()
        )));
    }
    let mut z = h.dot(w) + bias;
    l2_normalize_rows(&mut z)?;
    Ok(z)
}

/// Per-frame assignment probabilities: softmax over scaled code similarities.
pub fn code_probs(z: &FrameMatrix, cb: &Codebook) -> Result<ProbMatrix> {
    if cb.temperature <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    if z.ncols() != cb.dim() {
        return Err(Error::shape(format!(
            "features have {} dims but codebook has {}",
            z.ncols(),
            cb.dim()
        )));
    }
    let logits = z.dot(&cb.vectors.t()) / cb.temperature;
    Ok(softmax_rows(&logits))
}

/// Raw code similarities without temperature scaling; the Sinkhorn input.
pub fn code_scores(z: &FrameMatrix, cb: &Codebook) -> Result<Array2<f64>> {
    if z.ncols() != cb.dim() {
        return Err(Error::shape(format!(
            "features have {} dims but codebook has {}",
            z.ncols(),
            cb.dim()
        )));
    }
    Ok(z.dot(&cb.vectors.t()))
}

/// Smooths B×K scores toward balanced code usage.
///
/// Exponentiates (logits - row max)/eps, then alternates `n_iters` times:
/// rescale columns to sum B/K, rescale rows to sum 1. Row sums are exact on
/// exit; column sums approach B/K.
pub fn sinkhorn_smooth(logits: &Array2<f64>, eps: f64, n_iters: usize) -> Result<ProbMatrix> {
    ensure_finite(logits, "sinkhorn logits")?;
    if eps <= 0.0 {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if n_iters == 0 {
        return Err(Error::invalid("n_iters must be positive"));
    }
    let (b, k) = logits.dim();
    if b == 0 || k == 0 {
        return Err(Error::EmptyInput("sinkhorn logits"));
    }
    let mut q = logits.clone();
    for mut row in q.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| ((v - max) / eps).exp());
    }
    let col_target = b as f64 / k as f64;
    for _ in 0..n_iters {
        let col_sums = q.sum_axis(Axis(0));
        for (j, &s) in col_sums.iter().enumerate() {
            if s > 0.0 {
                let scale = col_target / s;
                q.column_mut(j).mapv_inplace(|v| v * scale);
            }
        }
        for mut row in q.rows_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v / s);
            }
        }
    }
    Ok(q)
}

/// The swapped-prediction cross-entropy between two views.
///
/// Returns -(1/2B) * sum_b sum_k [ q_tilde log p + q log p_tilde ] where the
/// smoothed targets q, q_tilde are constants. Log arguments are floored at
/// 1e-30.
pub fn spin_loss(
    p: &ProbMatrix,
    p_tilde: &ProbMatrix,
    q: &ProbMatrix,
    q_tilde: &ProbMatrix,
) -> Result<f64> {
    ensure_same_shape(p, p_tilde, "p vs p_tilde")?;
    ensure_same_shape(p, q, "p vs q")?;
    ensure_same_shape(p, q_tilde, "p vs q_tilde")?;
    let b = p.nrows() as f64;
    let mut total = 0.0;
    for ((pp, pt), (qq, qt)) in p
        .rows()
        .into_iter()
        .zip(p_tilde.rows())
        .zip(q.rows().into_iter().zip(q_tilde.rows()))
    {
        let mut row_sum = 0.0;
        for k in 0..pp.len() {
            row_sum += qt[k] * pp[k].max(LOG_FLOOR).ln();
            row_sum += qq[k] * pt[k].max(LOG_FLOOR).ln();
        }
        total += row_sum;
    }
    Ok(-total / (2.0 * b))
}

/// Gradients of [`spin_loss`] composed with [`code_probs`], with respect to
/// both views' normalized features and the code vectors.
#[derive(Debug, Clone)]
pub struct SpinGradients {
    pub z: Array2<f64>,
    pub z_tilde: Array2<f64>,
    pub codebook: Array2<f64>,
}

/// Gradient of the swapped-prediction loss at the logit level for one view:
/// (P - Q_other) / 2B, valid because every target row sums to 1.
pub fn spin_logit_grad(p: &ProbMatrix, q_other: &ProbMatrix) -> Result<Array2<f64>> {
    ensure_same_shape(p, q_other, "p vs target")?;
    let b = p.nrows() as f64;
    Ok((p - q_other) / (2.0 * b))
}

fn grad_wrt_z(dlogits: &Array2<f64>, cb: &Codebook) -> Array2<f64> {
    dlogits.dot(&cb.vectors) / cb.temperature
}

/// Analytic gradients of the swapped-prediction loss through the assignment
/// softmax. Targets are treated as constants.
pub fn spin_loss_grad(
    z: &FrameMatrix,
    z_tilde: &FrameMatrix,
    cb: &Codebook,
    q: &ProbMatrix,
    q_tilde: &ProbMatrix,
) -> Result<SpinGradients> {
    ensure_same_shape(z, z_tilde, "z vs z_tilde")?;
    let p = code_probs(z, cb)?;
    let p_tilde = code_probs(z_tilde, cb)?;
    let dlogits = spin_logit_grad(&p, q_tilde)?;
    let dlogits_tilde = spin_logit_grad(&p_tilde, q)?;
    let dz = grad_wrt_z(&dlogits, cb);
    let dz_tilde = grad_wrt_z(&dlogits_tilde, cb);
    let dc = (dlogits.t().dot(z) + dlogits_tilde.t().dot(z_tilde)) / cb.temperature;
    Ok(SpinGradients {
        z: dz,
        z_tilde: dz_tilde,
        codebook: dc,
    })
}
