//! Two-view training loop: swapped-prediction clustering plus the weighted
//! pseudo-label loss, optimized with plain gradient descent under a
//! triangular learning-rate schedule.
//!
//! All gradients are analytic and flow through the encoder stack, the
//! projection head with its row normalization, the codebook, and the
//! classification head. Smoothed assignment targets are constants.

use ndarray::{Array1, Array2, Axis};

use crate::auxiliary::{aux_loss, aux_loss_grad, PseudoLabelSeq};
use crate::encoder::{DenseLayer, Encoder, EncoderConfig, ForwardTrace};
use crate::error::{Error, Result};
use crate::mat::{FrameMatrix, ProbMatrix};
use crate::rng::derive_seed;
use crate::spin::{code_probs, code_scores, sinkhorn_smooth, spin_loss, spin_loss_grad, Codebook};

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub total_updates: usize,
    /// Frames per batch (both views see the same frame count).
    pub frames_per_batch: usize,
    pub lr_peak: f64,
    pub lr_floor: f64,
    /// Fraction of total updates spent ramping up.
    pub warmup_fraction: f64,
    /// Weight of the pseudo-label loss; 0 disables that term.
    pub lambda: f64,
    /// Codebook size K.
    pub codebook_size: usize,
    /// Pseudo-label vocabulary size V.
    pub aux_vocab: usize,
    /// Encoder layers below this index stay frozen (0 = train everything).
    pub freeze_below: usize,
    pub seed: u64,
    /// Assignment softmax temperature.
    pub temperature: f64,
    pub sinkhorn_eps: f64,
    pub sinkhorn_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_updates: 500,
            frames_per_batch: 512,
            lr_peak: 1e-4,
            lr_floor: 1e-6,
            warmup_fraction: 0.5,
            lambda: 5.0,
            codebook_size: 32,
            aux_vocab: 32,
            freeze_below: 0,
            seed: 0,
            temperature: 0.1,
            sinkhorn_eps: 0.05,
            sinkhorn_iters: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_floor < self.lr_peak) {
            return Err(Error::invalid(format!(
                "lr_floor {} must be below lr_peak {}",
                self.lr_floor, self.lr_peak
            )));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "warmup_fraction must lie in (0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.frames_per_batch < self.codebook_size {
            return Err(Error::invalid(format!(
                "frames_per_batch {} must be at least the codebook size {}; \
                 the usage-balancing marginals are ill-posed otherwise",
                self.frames_per_batch, self.codebook_size
            )));
        }
        if self.codebook_size < 1 {
            return Err(Error::invalid("codebook_size must be at least 1"));
        }
        if self.aux_vocab < 1 {
            return Err(Error::invalid("aux_vocab must be at least 1"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::invalid("temperature must be positive"));
        }
        if self.sinkhorn_eps <= 0.0 || self.sinkhorn_iters == 0 {
            return Err(Error::invalid("bad sinkhorn settings"));
        }
        Ok(())
    }
}

/// Piecewise-linear learning rate: floor to peak over the warmup span, then
/// back down to the floor at the final update. Exact at the three anchors.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> Result<f64> {
    if step > cfg.total_updates {
        return Err(Error::invalid(format!(
            "step {step} beyond total_updates {}",
            cfg.total_updates
        )));
    }
    if cfg.total_updates == 0 {
        return Ok(cfg.lr_floor);
    }
    let total = cfg.total_updates as f64;
    let w = cfg.warmup_fraction * total;
    let t = step as f64;
    if step == 0 || step == cfg.total_updates {
        Ok(cfg.lr_floor)
    } else if t == w {
        Ok(cfg.lr_peak)
    } else if t < w {
        Ok(cfg.lr_floor + (cfg.lr_peak - cfg.lr_floor) * t / w)
    } else {
        Ok(cfg.lr_peak - (cfg.lr_peak - cfg.lr_floor) * (t - w) / (total - w))
    }
}

/// One batch: frame-aligned clean and perturbed views plus pseudo labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub clean: FrameMatrix,
    pub perturbed: FrameMatrix,
    pub labels: Vec<usize>,
}

/// All trainable parameters.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub encoder: Encoder,
    pub spin_head: DenseLayer,
    pub codebook: Codebook,
    pub aux_head: DenseLayer,
    pub sinkhorn_eps: f64,
    pub sinkhorn_iters: usize,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub enc_w: Vec<Array2<f64>>,
    pub enc_b: Vec<Array1<f64>>,
    pub spin_w: Array2<f64>,
    pub spin_b: Array1<f64>,
    pub codebook: Array2<f64>,
    pub aux_w: Array2<f64>,
    pub aux_b: Array1<f64>,
}

/// Loss values plus the assignment distributions of both views.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub l_spin: f64,
    pub l_aux: f64,
    pub l_total: f64,
    pub p: ProbMatrix,
    pub p_tilde: ProbMatrix,
}

/// Per-step scalars logged to the metrics CSV.
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub l_spin: f64,
    pub l_aux: f64,
    pub l_total: f64,
    pub codebook_usage: f64,
    pub grad_norm: f64,
}

/// A logged step: index, learning rate, metrics.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub metrics: StepMetrics,
}

struct ViewPass {
    trace: ForwardTrace,
    proj_rows_pre_norm: Array2<f64>,
    z: Array2<f64>,
    aux_logits: Array2<f64>,
}

impl TrainerState {
    /// Seeds all parameters from the config.
    pub fn init(enc_cfg: &EncoderConfig, cfg: &TrainConfig) -> Result<Self> {
        enc_cfg.validate()?;
        cfg.validate()?;
        let encoder = Encoder::init(enc_cfg, derive_seed(cfg.seed, 10))?;
        let spin_head = DenseLayer::init(
            enc_cfg.hidden_dim,
            enc_cfg.proj_dim,
            derive_seed(cfg.seed, 11),
        );
        let codebook = Codebook::init_random(
            cfg.codebook_size,
            enc_cfg.proj_dim,
            cfg.temperature,
            derive_seed(cfg.seed, 12),
        )?;
        let aux_head = DenseLayer::init(
            enc_cfg.hidden_dim,
            cfg.aux_vocab,
            derive_seed(cfg.seed, 13),
        );
        Ok(Self {
            encoder,
            spin_head,
            codebook,
            aux_head,
            sinkhorn_eps: cfg.sinkhorn_eps,
            sinkhorn_iters: cfg.sinkhorn_iters,
        })
    }

    pub fn aux_vocab(&self) -> usize {
        self.aux_head.w.ncols()
    }

    fn forward_view(&self, features: &FrameMatrix) -> Result<ViewPass> {
        let trace = self.encoder.forward_trace(features)?;
        let h = trace.output();
        let proj = self.spin_head.affine(h);
        let mut z = proj.clone();
        crate::mat::l2_normalize_rows(&mut z)?;
        let aux_logits = self.aux_head.affine(h);
        Ok(ViewPass {
            trace,
            proj_rows_pre_norm: proj,
            z,
            aux_logits,
        })
    }

    /// Smoothed assignment targets for both views; constants thereafter.
    pub fn targets(&self, batch: &Batch) -> Result<(ProbMatrix, ProbMatrix)> {
        let clean = self.forward_view(&batch.clean)?;
        let pert = self.forward_view(&batch.perturbed)?;
        let q = sinkhorn_smooth(
            &code_scores(&clean.z, &self.codebook)?,
            self.sinkhorn_eps,
            self.sinkhorn_iters,
        )?;
        let q_tilde = sinkhorn_smooth(
            &code_scores(&pert.z, &self.codebook)?,
            self.sinkhorn_eps,
            self.sinkhorn_iters,
        )?;
        Ok((q, q_tilde))
    }

    /// Loss under fixed targets; the finite-difference oracle's entry point.
    pub fn loss_with_targets(
        &self,
        batch: &Batch,
        lambda: f64,
        q: &ProbMatrix,
        q_tilde: &ProbMatrix,
    ) -> Result<LossParts> {
        check_batch(batch)?;
        let clean = self.forward_view(&batch.clean)?;
        let pert = self.forward_view(&batch.perturbed)?;
        let p = code_probs(&clean.z, &self.codebook)?;
        let p_tilde = code_probs(&pert.z, &self.codebook)?;
        let l_spin = spin_loss(&p, &p_tilde, q, q_tilde)?;
        let y = PseudoLabelSeq::new(batch.labels.clone(), self.aux_vocab())?;
        let l_aux = aux_loss(&clean.aux_logits, &pert.aux_logits, &y)?;
        Ok(LossParts {
            l_spin,
            l_aux,
            l_total: l_spin + lambda * l_aux,
            p,
            p_tilde,
        })
    }

    /// Loss and analytic gradients of the combined objective under fixed
    /// targets.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        lambda: f64,
        q: &ProbMatrix,
        q_tilde: &ProbMatrix,
    ) -> Result<(LossParts, Gradients)> {
        check_batch(batch)?;
        let clean = self.forward_view(&batch.clean)?;
        let pert = self.forward_view(&batch.perturbed)?;
        let p = code_probs(&clean.z, &self.codebook)?;
        let p_tilde = code_probs(&pert.z, &self.codebook)?;
        let l_spin = spin_loss(&p, &p_tilde, q, q_tilde)?;
        let y = PseudoLabelSeq::new(batch.labels.clone(), self.aux_vocab())?;
        let l_aux = aux_loss(&clean.aux_logits, &pert.aux_logits, &y)?;

        // Clustering path: dZ and dC from the swapped-prediction loss.
        let sg = spin_loss_grad(&clean.z, &pert.z, &self.codebook, q, q_tilde)?;
        let dy = backprop_row_normalize(&sg.z, &clean.z, &clean.proj_rows_pre_norm);
        let dy_tilde = backprop_row_normalize(&sg.z_tilde, &pert.z, &pert.proj_rows_pre_norm);
        let h = clean.trace.output();
        let h_tilde = pert.trace.output();
        let spin_w = h.t().dot(&dy) + h_tilde.t().dot(&dy_tilde);
        let spin_b = dy.sum_axis(Axis(0)) + dy_tilde.sum_axis(Axis(0));
        let mut dh = dy.dot(&self.spin_head.w.t());
        let mut dh_tilde = dy_tilde.dot(&self.spin_head.w.t());

        // Classification path, weighted by lambda.
        let (ga, ga_tilde) = aux_loss_grad(&clean.aux_logits, &pert.aux_logits, &y)?;
        let ga = ga * lambda;
        let ga_tilde = ga_tilde * lambda;
        let aux_w = h.t().dot(&ga) + h_tilde.t().dot(&ga_tilde);
        let aux_b = ga.sum_axis(Axis(0)) + ga_tilde.sum_axis(Axis(0));
        dh = dh + ga.dot(&self.aux_head.w.t());
        dh_tilde = dh_tilde + ga_tilde.dot(&self.aux_head.w.t());

        // Encoder stack, both views accumulating into shared parameters.
        let mut enc_w: Vec<Array2<f64>> = self
            .encoder
            .layers
            .iter()
            .map(|l| Array2::zeros(l.w.dim()))
            .collect();
        let mut enc_b: Vec<Array1<f64>> = self
            .encoder
            .layers
            .iter()
            .map(|l| Array1::zeros(l.b.len()))
            .collect();
        backprop_encoder(&self.encoder, &clean.trace, dh, &mut enc_w, &mut enc_b);
        backprop_encoder(&self.encoder, &pert.trace, dh_tilde, &mut enc_w, &mut enc_b);

        let parts = LossParts {
            l_spin,
            l_aux,
            l_total: l_spin + lambda * l_aux,
            p,
            p_tilde,
        };
        let grads = Gradients {
            enc_w,
            enc_b,
            spin_w,
            spin_b,
            codebook: sg.codebook,
            aux_w,
            aux_b,
        };
        Ok((parts, grads))
    }

    /// Gradient-descent update on all unfrozen parameters, then codebook
    /// renormalization.
    pub fn apply_update(&mut self, grads: &Gradients, lr: f64, freeze_below: usize) -> Result<()> {
        for (i, layer) in self.encoder.layers.iter_mut().enumerate() {
            if i < freeze_below {
                continue;
            }
            layer.w.scaled_add(-lr, &grads.enc_w[i]);
            layer.b.scaled_add(-lr, &grads.enc_b[i]);
        }
        self.spin_head.w.scaled_add(-lr, &grads.spin_w);
        self.spin_head.b.scaled_add(-lr, &grads.spin_b);
        self.aux_head.w.scaled_add(-lr, &grads.aux_w);
        self.aux_head.b.scaled_add(-lr, &grads.aux_b);
        self.codebook.vectors.scaled_add(-lr, &grads.codebook);
        self.codebook.renormalize()
    }

    /// One full update: targets, losses, gradients, parameter step, metrics.
    pub fn train_step(
        &mut self,
        batch: &Batch,
        step: usize,
        cfg: &TrainConfig,
    ) -> Result<StepMetrics> {
        if batch.clean.nrows() < cfg.codebook_size {
            return Err(Error::invalid(format!(
                "batch of {} frames is smaller than the codebook ({}); \
                 usage-balancing marginals are ill-posed",
                batch.clean.nrows(),
                cfg.codebook_size
            )));
        }
        let (q, q_tilde) = self.targets(batch)?;
        let (parts, grads) = self.loss_and_grads(batch, cfg.lambda, &q, &q_tilde)?;
        let grad_norm = grad_norm(&grads, cfg.freeze_below);
        let usage = codebook_usage(&parts.p, &parts.p_tilde, self.codebook.size());
        let lr = lr_at(step, cfg)?;
        self.apply_update(&grads, lr, cfg.freeze_below)?;
        Ok(StepMetrics {
            l_spin: parts.l_spin,
            l_aux: parts.l_aux,
            l_total: parts.l_total,
            codebook_usage: usage,
            grad_norm,
        })
    }
}

fn check_batch(batch: &Batch) -> Result<()> {
    if batch.clean.nrows() != batch.perturbed.nrows() {
        return Err(Error::shape(format!(
            "views have {} vs {} frames",
            batch.clean.nrows(),
            batch.perturbed.nrows()
        )));
    }
    if batch.clean.nrows() != batch.labels.len() {
        return Err(Error::shape(format!(
            "{} frames vs {} labels",
            batch.clean.nrows(),
            batch.labels.len()
        )));
    }
    Ok(())
}

/// Chain rule through z = y / ||y||: dy = (dz - (dz . z) z) / ||y||.
fn backprop_row_normalize(
    dz: &Array2<f64>,
    z: &Array2<f64>,
    y_pre_norm: &Array2<f64>,
) -> Array2<f64> {
    let mut dy = dz.clone();
    for ((mut dy_row, z_row), y_row) in dy
        .rows_mut()
        .into_iter()
        .zip(z.rows())
        .zip(y_pre_norm.rows())
    {
        let norm = y_row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = dy_row.iter().zip(z_row.iter()).map(|(a, b)| a * b).sum();
        for (d, &zv) in dy_row.iter_mut().zip(z_row.iter()) {
            *d = (*d - dot * zv) / norm;
        }
    }
    dy
}

fn backprop_encoder(
    enc: &Encoder,
    trace: &ForwardTrace,
    mut dx: Array2<f64>,
    grads_w: &mut [Array2<f64>],
    grads_b: &mut [Array1<f64>],
) {
    for i in (0..enc.layers.len()).rev() {
        let mut da = dx;
        da.zip_mut_with(&trace.preacts[i], |g, &a| {
            *g *= enc.nonlinearity.derivative(a);
        });
        grads_w[i] += &trace.layer_inputs[i].t().dot(&da);
        grads_b[i] += &da.sum_axis(Axis(0));
        dx = if i > 0 {
            da.dot(&enc.layers[i].w.t())
        } else {
            Array2::zeros((0, 0))
        };
    }
}

/// Fraction of codes that are the hard assignment of at least one frame in
/// either view.
pub fn codebook_usage(p: &ProbMatrix, p_tilde: &ProbMatrix, k: usize) -> f64 {
    let mut used = vec![false; k];
    for row in p.rows().into_iter().chain(p_tilde.rows()) {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        used[best] = true;
    }
    used.iter().filter(|&&u| u).count() as f64 / k as f64
}

fn grad_norm(grads: &Gradients, freeze_below: usize) -> f64 {
    let mut total = 0.0;
    for (i, g) in grads.enc_w.iter().enumerate() {
        if i >= freeze_below {
            total += g.iter().map(|v| v * v).sum::<f64>();
            total += grads.enc_b[i].iter().map(|v| v * v).sum::<f64>();
        }
    }
    for g in [&grads.spin_w, &grads.codebook, &grads.aux_w] {
        total += g.iter().map(|v| v * v).sum::<f64>();
    }
    for g in [&grads.spin_b, &grads.aux_b] {
        total += g.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

/// In-memory corpus cursor that packs utterance frames into fixed-size
/// batches, optionally cycling.
#[derive(Debug, Clone)]
pub struct CorpusStream {
    items: Vec<(FrameMatrix, FrameMatrix, Vec<usize>)>,
    repeat: bool,
    utt: usize,
    offset: usize,
    consumed: usize,
}

impl CorpusStream {
    pub fn new(items: Vec<(FrameMatrix, FrameMatrix, Vec<usize>)>, repeat: bool) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyInput("training corpus"));
        }
        for (i, (clean, pert, labels)) in items.iter().enumerate() {
            if clean.nrows() != pert.nrows() || clean.nrows() != labels.len() {
                return Err(Error::shape(format!(
                    "utterance {i}: {} clean frames, {} perturbed frames, {} labels",
                    clean.nrows(),
                    pert.nrows(),
                    labels.len()
                )));
            }
        }
        Ok(Self {
            items,
            repeat,
            utt: 0,
            offset: 0,
            consumed: 0,
        })
    }

    pub fn total_frames(&self) -> usize {
        self.items.iter().map(|(c, _, _)| c.nrows()).sum()
    }

    /// Assembles the next `frames` rows, spanning utterances as needed.
    pub fn next_batch(&mut self, frames: usize) -> Result<Batch> {
        let dim = self.items[0].0.ncols();
        let mut clean = Array2::zeros((frames, dim));
        let mut perturbed = Array2::zeros((frames, dim));
        let mut labels = Vec::with_capacity(frames);
        let mut filled = 0;
        while filled < frames {
            if self.utt >= self.items.len() {
                if self.repeat {
                    self.utt = 0;
                    self.offset = 0;
                } else {
                    return Err(Error::CorpusExhausted(self.consumed));
                }
            }
            let (c, p, l) = &self.items[self.utt];
            let avail = c.nrows() - self.offset;
            let take = avail.min(frames - filled);
            for t in 0..take {
                clean
                    .row_mut(filled + t)
                    .assign(&c.row(self.offset + t));
                perturbed
                    .row_mut(filled + t)
                    .assign(&p.row(self.offset + t));
                labels.push(l[self.offset + t]);
            }
            filled += take;
            self.offset += take;
            self.consumed += take;
            if self.offset >= c.nrows() {
                self.utt += 1;
                self.offset = 0;
            }
        }
        Ok(Batch {
            clean,
            perturbed,
            labels,
        })
    }
}

/// Runs the full loop and collects one record per update.
pub fn train(
    stream: &mut CorpusStream,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(TrainerState, Vec<StepRecord>)> {
    let mut state = TrainerState::init(enc_cfg, cfg)?;
    let mut records = Vec::with_capacity(cfg.total_updates);
    for step in 0..cfg.total_updates {
        let batch = stream.next_batch(cfg.frames_per_batch)?;
        let lr = lr_at(step, cfg)?;
        let metrics = state.train_step(&batch, step, cfg)?;
        records.push(StepRecord { step, lr, metrics });
    }
    Ok((state, records))
}

/// Writes the metrics log: a `# R-Spin_{K,V}` run label, the column header,
/// then one row per update.
pub fn write_metrics_csv(
    w: &mut dyn std::io::Write,
    records: &[StepRecord],
    k: usize,
    v: usize,
) -> Result<()> {
    writeln!(w, "# R-Spin_{{{k},{v}}}")?;
    writeln!(w, "step,lr,l_spin,l_aux,l_total,usage,grad_norm")?;
    for r in records {
        writeln!(
            w,
            "{},{:e},{},{},{},{},{}",
            r.step,
            r.lr,
            r.metrics.l_spin,
            r.metrics.l_aux,
            r.metrics.l_total,
            r.metrics.codebook_usage,
            r.metrics.grad_norm
        )?;
    }
    Ok(())
}
