//! Independent reference implementations used to check the library.
//! Everything here recomputes results from definitions, without touching the
//! code paths under test.

#![allow(dead_code)]

use rustfft::{num_complex::Complex, FftPlanner};

/// Welch power-spectral-density estimate, then a least-squares fit of
/// log10(PSD) against log10(f) over [f_lo, f_hi]. Returns the slope, which
/// for PSD ∝ f^beta estimates beta.
pub fn welch_psd_slope(samples: &[f64], rate: f64, f_lo: f64, f_hi: f64) -> f64 {
    let seg = 4096.min(samples.len());
    let hop = seg / 2;
    let window: Vec<f64> = (0..seg)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / seg as f64;
            x.sin() * x.sin()
        })
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg);
    let mut psd = vec![0.0; seg / 2 + 1];
    let mut n_segments = 0;
    let mut start = 0;
    while start + seg <= samples.len() {
        let mut buf: Vec<Complex<f64>> = (0..seg)
            .map(|i| Complex::new(samples[start + i] * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            *p += buf[k].norm_sqr() / (win_power * rate);
        }
        n_segments += 1;
        start += hop;
    }
    assert!(n_segments > 0, "signal too short for Welch estimate");
    for p in psd.iter_mut() {
        *p /= n_segments as f64;
    }

    // Least-squares line through (log10 f, log10 PSD) inside the band.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &p) in psd.iter().enumerate().skip(1) {
        let f = k as f64 * rate / seg as f64;
        if f >= f_lo && f <= f_hi && p > 0.0 {
            xs.push(f.log10());
            ys.push(p.log10());
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Index of the largest-magnitude FFT bin over the positive frequencies.
pub fn dominant_fft_bin(samples: &[f64]) -> usize {
    let n = samples.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    (1..n / 2)
        .max_by(|&a, &b| {
            buf[a]
                .norm_sqr()
                .partial_cmp(&buf[b].norm_sqr())
                .unwrap()
        })
        .unwrap()
}

/// Plain O(n*m) convolution.
pub fn naive_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

/// Reference Sinkhorn smoothing written over plain nested vectors:
/// exponentiate (row-max-subtracted) logits over eps, then per iteration
/// rescale every column to sum B/K and every row to sum 1.
pub fn sinkhorn_reference(logits: &[Vec<f64>], eps: f64, iters: usize) -> Vec<Vec<f64>> {
    let b = logits.len();
    let k = logits[0].len();
    let mut q: Vec<Vec<f64>> = logits
        .iter()
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter().map(|&v| ((v - max) / eps).exp()).collect()
        })
        .collect();
    let col_target = b as f64 / k as f64;
    for _ in 0..iters {
        for j in 0..k {
            let s: f64 = q.iter().map(|row| row[j]).sum();
            if s > 0.0 {
                for row in q.iter_mut() {
                    row[j] *= col_target / s;
                }
            }
        }
        for row in q.iter_mut() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
    }
    q
}

/// From-scratch BPE: recounts every adjacent pair across the corpus each
/// round, picks the most frequent pair with at least two occurrences
/// (ties to the smallest pair), and replaces occurrences left to right.
/// Returns (rank, left, right, new_id) tuples.
pub fn bpe_brute_force(
    corpus: &[Vec<u32>],
    base_vocab: u32,
    nominal_size: u32,
) -> Vec<(u32, u32, u32, u32)> {
    let mut seqs: Vec<Vec<u32>> = corpus.to_vec();
    let mut merges = Vec::new();
    for rank in 0..nominal_size - base_vocab {
        let mut counts: std::collections::HashMap<(u32, u32), u64> =
            std::collections::HashMap::new();
        for seq in &seqs {
            for w in seq.windows(2) {
                *counts.entry((w[0], w[1])).or_insert(0) += 1;
            }
        }
        let mut best: Option<((u32, u32), u64)> = None;
        for (&pair, &c) in &counts {
            if c < 2 {
                continue;
            }
            best = match best {
                None => Some((pair, c)),
                Some((bp, bc)) if c > bc || (c == bc && pair < bp) => Some((pair, c)),
                keep => keep,
            };
        }
        let Some(((left, right), _)) = best else { break };
        let new_id = base_vocab + rank;
        for seq in seqs.iter_mut() {
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
        merges.push((rank, left, right, new_id));
    }
    merges
}

/// Relative error between a numerical and an analytic value.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Maximum relative error between analytic and central-difference gradients,
/// skipping entries where both are below `threshold`.
pub fn max_grad_rel_err(
    analytic: &[f64],
    numeric: &[f64],
    threshold: f64,
) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs().max(n.abs()) > threshold)
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}
