//! Speaker perturbation: pitch shift and formant warp.
//!
//! Pitch is shifted by a waveform-domain time-stretch (WSOLA) followed by
//! linear resampling, avoiding any phase-vocoder machinery. Formants are
//! moved by scaling the spectral envelope along the frequency axis while
//! keeping the fine structure and phase, per STFT frame. Both factors are
//! drawn from configured ranges with a caller-supplied seed, so a given
//! (input, seed) pair always produces the same output.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::wave::Waveform;

/// Ranges for the two speaker-perturbation factors.
#[derive(Debug, Clone)]
pub struct SpeakerPerturbParams {
    /// Pitch shift range in semitones (closed interval).
    pub pitch_shift_range: (f64, f64),
    /// Formant warp factor range (closed interval, strictly positive).
    pub formant_warp_range: (f64, f64),
    pub seed: u64,
}

impl SpeakerPerturbParams {
    pub fn new(
        pitch_shift_range: (f64, f64),
        formant_warp_range: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        if pitch_shift_range.0 > pitch_shift_range.1 {
            return Err(Error::invalid(format!(
                "empty pitch range [{}, {}]",
                pitch_shift_range.0, pitch_shift_range.1
            )));
        }
        if formant_warp_range.0 > formant_warp_range.1 {
            return Err(Error::invalid(format!(
                "empty warp range [{}, {}]",
                formant_warp_range.0, formant_warp_range.1
            )));
        }
        if formant_warp_range.0 <= 0.0 {
            return Err(Error::invalid("warp factors must be strictly positive"));
        }
        Ok(Self {
            pitch_shift_range,
            formant_warp_range,
            seed,
        })
    }

    /// Default ranges: +-4 semitones, warp in [0.85, 1.18].
    pub fn defaults(seed: u64) -> Self {
        Self {
            pitch_shift_range: (-4.0, 4.0),
            formant_warp_range: (0.85, 1.18),
            seed,
        }
    }

    fn sample_factors(&self) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let semitones = if self.pitch_shift_range.0 == self.pitch_shift_range.1 {
            self.pitch_shift_range.0
        } else {
            rng.random_range(self.pitch_shift_range.0..=self.pitch_shift_range.1)
        };
        let warp = if self.formant_warp_range.0 == self.formant_warp_range.1 {
            self.formant_warp_range.0
        } else {
            rng.random_range(self.formant_warp_range.0..=self.formant_warp_range.1)
        };
        (semitones, warp)
    }
}

/// Applies a randomized pitch shift and formant warp, preserving the sample
/// rate and length. When both sampled factors land on the identity (0
/// semitones, warp 1.0) the input is returned unchanged.
pub fn perturb_speaker(w: &Waveform, p: &SpeakerPerturbParams) -> Result<Waveform> {
    let (semitones, warp) = p.sample_factors();
    let pitch_factor = 2f64.powf(semitones / 12.0);
    if pitch_factor == 1.0 && warp == 1.0 {
        return Ok(w.clone());
    }
    let n = w.len();
    let mut samples = w.samples().to_vec();
    if pitch_factor != 1.0 {
        let stretched = wsola_stretch(&samples, pitch_factor);
        samples = resample_step(&stretched, pitch_factor);
        samples.resize(n, 0.0); // pad/trim back to the input length
    }
    if warp != 1.0 {
        samples = formant_warp(&samples, warp);
        samples.truncate(n);
        samples.resize(n, 0.0);
    }
    Waveform::new(samples, w.sample_rate())
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / len as f64;
            x.sin() * x.sin()
        })
        .collect()
}

/// Time-stretches by `stretch` without changing pitch: Hann-windowed
/// overlap-add where each analysis segment is chosen within a small search
/// window to maximize correlation with the natural continuation of the
/// previous segment.
fn wsola_stretch(x: &[f64], stretch: f64) -> Vec<f64> {
    let out_len = (x.len() as f64 * stretch).round().max(1.0) as usize;
    let win = 1024usize;
    if x.len() < 3 * win {
        // Too short for overlap-add; plain interpolation to the target
        // length (content timing is distorted but the contract holds).
        return resample_to_len(x, out_len);
    }
    let hop_syn = win / 2;
    let hop_ana = hop_syn as f64 / stretch;
    let tol = (win / 4) as isize;
    let window = hann(win);

    let mut out = vec![0.0; out_len + win];
    let mut wsum = vec![0.0; out_len + win];
    let ola = |pos: usize, seg: &[f64], out: &mut [f64], wsum: &mut [f64]| {
        for (i, (&s, &wv)) in seg.iter().zip(window.iter()).enumerate() {
            out[pos + i] += s * wv;
            wsum[pos + i] += wv;
        }
    };

    ola(0, &x[0..win], &mut out, &mut wsum);
    let mut prev_src = 0usize;
    let n_frames = out_len / hop_syn + 1;
    for k in 1..n_frames {
        let out_pos = k * hop_syn;
        let natural = prev_src + hop_syn;
        if natural + win > x.len() {
            break;
        }
        let target = (k as f64 * hop_ana).round() as isize;
        let lo = (target - tol).max(0);
        let hi = (target + tol).min((x.len() - win) as isize);
        let mut best_pos = lo;
        let mut best_corr = f64::NEG_INFINITY;
        for p in lo..=hi {
            let mut corr = 0.0;
            let cand = &x[p as usize..p as usize + hop_syn];
            let refseg = &x[natural..natural + hop_syn];
            for (a, b) in cand.iter().zip(refseg.iter()) {
                corr += a * b;
            }
            if corr > best_corr {
                best_corr = corr;
                best_pos = p;
            }
        }
        let p = best_pos as usize;
        ola(out_pos, &x[p..p + win], &mut out, &mut wsum);
        prev_src = p;
    }
    out.truncate(out_len);
    for (o, &ws) in out.iter_mut().zip(wsum.iter()) {
        if ws > 1e-9 {
            *o /= ws;
        }
    }
    out
}

/// Reads the input at a fractional step with linear interpolation.
/// A step > 1 shortens the signal and raises all frequencies by `step`.
fn resample_step(x: &[f64], step: f64) -> Vec<f64> {
    let out_len = ((x.len() - 1) as f64 / step).floor() as usize + 1;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * step;
            let j = t.floor() as usize;
            let frac = t - j as f64;
            if j + 1 < x.len() {
                x[j] * (1.0 - frac) + x[j + 1] * frac
            } else {
                x[j.min(x.len() - 1)]
            }
        })
        .collect()
}

fn resample_to_len(x: &[f64], out_len: usize) -> Vec<f64> {
    if out_len <= 1 {
        return vec![x[0]; out_len.max(1)];
    }
    let step = (x.len() - 1) as f64 / (out_len - 1) as f64;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * step;
            let j = t.floor() as usize;
            let frac = t - j as f64;
            if j + 1 < x.len() {
                x[j] * (1.0 - frac) + x[j + 1] * frac
            } else {
                x[x.len() - 1]
            }
        })
        .collect()
}

/// Scales the spectral envelope along frequency by `warp` per STFT frame,
/// leaving the harmonic fine structure and phases in place.
fn formant_warp(x: &[f64], warp: f64) -> Vec<f64> {
    let win = 1024usize.min(x.len().next_power_of_two());
    if x.len() < win || win < 64 {
        return x.to_vec();
    }
    let hop = win / 4;
    let window = hann(win);
    let lifter_cut = 32usize.min(win / 8);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(win);
    let ifft = planner.plan_fft_inverse(win);

    let n = x.len();
    let mut out = vec![0.0; n + win];
    let mut wsum = vec![0.0; n + win];
    let n_frames = n.div_ceil(hop);
    for fi in 0..n_frames {
        let pos = fi * hop;
        let mut frame: Vec<Complex<f64>> = (0..win)
            .map(|i| {
                let v = if pos + i < n { x[pos + i] } else { 0.0 };
                Complex::new(v * window[i], 0.0)
            })
            .collect();
        fft.process(&mut frame);

        // Cepstral envelope: lifter the log-magnitude spectrum.
        let log_mag: Vec<f64> = frame.iter().map(|c| (c.norm() + 1e-12).ln()).collect();
        let mut ceps: Vec<Complex<f64>> =
            log_mag.iter().map(|&v| Complex::new(v, 0.0)).collect();
        ifft.process(&mut ceps);
        for c in ceps.iter_mut() {
            *c /= win as f64;
        }
        for (q, c) in ceps.iter_mut().enumerate() {
            let mirror = win - q;
            if q > lifter_cut && mirror > lifter_cut {
                *c = Complex::new(0.0, 0.0);
            }
        }
        fft.process(&mut ceps);
        let log_env: Vec<f64> = ceps.iter().map(|c| c.re).collect();

        // Warp the envelope along frequency and reapply as a gain.
        let half = win / 2;
        let mut spectrum = frame.clone();
        for k in 0..=half {
            let src = k as f64 / warp;
            let j = src.floor() as usize;
            let frac = src - j as f64;
            let env_w = if j >= half {
                log_env[half]
            } else {
                log_env[j] * (1.0 - frac) + log_env[j + 1] * frac
            };
            let gain = (env_w - log_env[k]).clamp(-4.6, 4.6).exp();
            spectrum[k] = frame[k] * gain;
            if k != 0 && k != win - k {
                spectrum[win - k] = spectrum[k].conj();
            }
        }
        ifft.process(&mut spectrum);
        for i in 0..win {
            let v = spectrum[i].re / win as f64;
            out[pos + i] += v * window[i];
            wsum[pos + i] += window[i] * window[i];
        }
    }
    out.truncate(n);
    for (o, &ws) in out.iter_mut().zip(wsum.iter()) {
        if ws > 1e-9 {
            *o /= ws;
        }
    }
    out
}
