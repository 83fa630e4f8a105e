//! Additive distortions: colored noise, SNR-controlled mixing, reverberation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::wave::Waveform;

/// The five noise colors, identified by the exponent of their power
/// spectral density, PSD ∝ f^beta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Blue,
    Violet,
}

impl NoiseKind {
    /// PSD slope exponent beta.
    pub fn psd_exponent(self) -> f64 {
        match self {
            NoiseKind::White => 0.0,
            NoiseKind::Pink => -1.0,
            NoiseKind::Brown => -2.0,
            NoiseKind::Blue => 1.0,
            NoiseKind::Violet => 2.0,
        }
    }

    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Brown,
        NoiseKind::Blue,
        NoiseKind::Violet,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "brown" => Ok(NoiseKind::Brown),
            "blue" => Ok(NoiseKind::Blue),
            "violet" => Ok(NoiseKind::Violet),
            other => Err(Error::invalid(format!(
                "unknown noise kind '{other}' (white|pink|brown|blue|violet)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Blue => "blue",
            NoiseKind::Violet => "violet",
        }
    }
}

use crate::rng::gaussian;

/// Generates `n` samples of colored noise by shaping a white Gaussian
/// spectrum: each positive-frequency bin is scaled by f^(beta/2), so the
/// PSD follows f^beta exactly in expectation. The DC bin is zeroed and the
/// output is RMS-normalized to 1.0.
pub fn gen_colored_noise(kind: NoiseKind, n: usize, rate: u32, seed: u64) -> Result<Waveform> {
    if n < 256 {
        return Err(Error::invalid(format!(
            "need at least 256 samples to shape a spectrum, got {n}"
        )));
    }
    if rate == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = kind.psd_exponent();
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..=half {
        let f = k as f64 * rate as f64 / n as f64;
        let amp = f.powf(beta / 2.0);
        let re = gaussian(&mut rng);
        let im = if k == half && n % 2 == 0 {
            0.0 // Nyquist bin must be real
        } else {
            gaussian(&mut rng)
        };
        spectrum[k] = Complex::new(re * amp, im * amp);
        if k != half || n % 2 != 0 {
            spectrum[n - k] = spectrum[k].conj();
        }
    }
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut spectrum);
    let mut samples: Vec<f64> = spectrum.iter().map(|c| c.re / n as f64).collect();
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms <= 0.0 {
        return Err(Error::NonFinite("colored noise rms"));
    }
    for s in samples.iter_mut() {
        *s /= rms;
    }
    Waveform::new(samples, rate)
}

/// Tiles or truncates `noise` to `len` samples, reading cyclically from
/// `offset`. Used to fit a noise recording to a signal before mixing.
pub fn loop_noise_to_len(noise: &Waveform, len: usize, offset: usize) -> Vec<f64> {
    let src = noise.samples();
    (0..len).map(|i| src[(offset + i) % src.len()]).collect()
}

/// Mixes noise into a signal at an exact signal-to-noise ratio.
///
/// The noise is first looped or truncated to the signal length, then scaled
/// by alpha = sqrt(P_signal / (P_noise * 10^(snr_db/10))) so the measured
/// ratio 10*log10(P_signal / P_scaled_noise) equals `snr_db`.
pub fn mix_noise_at_snr(signal: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if signal.sample_rate() != noise.sample_rate() {
        return Err(Error::invalid(format!(
            "sample-rate mismatch: signal {} Hz vs noise {} Hz",
            signal.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::NonFinite("snr_db"));
    }
    let fitted = loop_noise_to_len(noise, signal.len(), 0);
    let p_signal = signal.power();
    let p_noise = fitted.iter().map(|s| s * s).sum::<f64>() / fitted.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::invalid("noise is silent; cannot reach a target SNR"));
    }
    let alpha = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mixed: Vec<f64> = signal
        .samples()
        .iter()
        .zip(fitted.iter())
        .map(|(s, v)| s + alpha * v)
        .collect();
    Waveform::new(mixed, signal.sample_rate())
}

/// Convolves the signal with an impulse response, truncates to the input
/// length, and rescales so the output peak equals the input peak.
///
/// Short kernels run as direct convolution (exact); longer ones through an
/// FFT product.
pub fn apply_reverb(w: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if rir.is_empty() {
        return Err(Error::EmptyInput("impulse response"));
    }
    if w.sample_rate() != rir.sample_rate() {
        return Err(Error::invalid(format!(
            "sample-rate mismatch: signal {} Hz vs RIR {} Hz",
            w.sample_rate(),
            rir.sample_rate()
        )));
    }
    let n = w.len();
    let kernel = rir.samples();
    let full = if kernel.len() <= 32 {
        convolve_direct(w.samples(), kernel)
    } else {
        convolve_fft(w.samples(), kernel)
    };
    let mut out: Vec<f64> = full[..n].to_vec();
    let out_peak = out.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if out_peak > 0.0 {
        let scale = w.peak() / out_peak;
        for s in out.iter_mut() {
            *s *= scale;
        }
    }
    Waveform::new(out, w.sample_rate())
}

fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);
    let mut fx: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut fh: Vec<Complex<f64>> = h
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fft.process(&mut fx);
    fft.process(&mut fh);
    for (a, b) in fx.iter_mut().zip(fh.iter()) {
        *a *= *b;
    }
    ifft.process(&mut fx);
    fx[..out_len].iter().map(|c| c.re / size as f64).collect()
}

/// Draws a mixing SNR uniformly from [low, high] dB.
pub fn sample_snr(rng: &mut impl Rng, low: f64, high: f64) -> Result<f64> {
    if !(low < high) {
        return Err(Error::invalid(format!(
            "SNR range must satisfy low < high, got [{low}, {high}]"
        )));
    }
    Ok(rng.random_range(low..=high))
}

/// Measures 10*log10(P_signal / P_noise) between a mixed signal and the
/// clean signal it was built from. Test and CLI helper.
pub fn measure_snr(clean: &Waveform, mixed: &Waveform) -> Result<f64> {
    if clean.len() != mixed.len() {
        return Err(Error::shape(format!(
            "length mismatch: {} vs {}",
            clean.len(),
            mixed.len()
        )));
    }
    let p_signal = clean.power();
    let p_noise = clean
        .samples()
        .iter()
        .zip(mixed.samples())
        .map(|(c, m)| (m - c) * (m - c))
        .sum::<f64>()
        / clean.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::invalid("no noise component to measure"));
    }
    Ok(10.0 * (p_signal / p_noise).log10())
}
