//! Signal-chain checks against independent DSP oracles.

mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rspin_core::noise::{
    apply_reverb, gen_colored_noise, measure_snr, mix_noise_at_snr, sample_snr, NoiseKind,
};
use rspin_core::perturb::{perturb_speaker, SpeakerPerturbParams};
use rspin_core::wave::Waveform;

fn sine(freq: f64, rate: u32, n: usize, amp: f64) -> Waveform {
    let samples = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() * amp)
        .collect();
    Waveform::new(samples, rate).unwrap()
}

fn random_wave(n: usize, rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    Waveform::new(samples, rate).unwrap()
}

// --- colored noise ----------------------------------------------------------

#[test]
fn colored_noise_psd_slopes_match_exponents() {
    let n = 1 << 16;
    let rate = 16_000u32;
    for kind in NoiseKind::ALL {
        let w = gen_colored_noise(kind, n, rate, 42).unwrap();
        let slope =
            oracles::welch_psd_slope(w.samples(), rate as f64, rate as f64 / 100.0, rate as f64 / 4.0);
        let beta = kind.psd_exponent();
        assert!(
            (slope - beta).abs() <= 0.3,
            "{}: fitted slope {slope:.3} vs beta {beta}",
            kind.name()
        );
    }
}

#[test]
fn colored_noise_is_rms_normalized_and_seeded() {
    let w = gen_colored_noise(NoiseKind::Pink, 4096, 16_000, 7).unwrap();
    assert!((w.rms() - 1.0).abs() < 1e-12);
    let again = gen_colored_noise(NoiseKind::Pink, 4096, 16_000, 7).unwrap();
    assert_eq!(w.samples(), again.samples());
    let other = gen_colored_noise(NoiseKind::Pink, 4096, 16_000, 8).unwrap();
    assert_ne!(w.samples(), other.samples());
}

#[test]
fn colored_noise_rejects_short_lengths() {
    assert!(gen_colored_noise(NoiseKind::White, 255, 16_000, 0).is_err());
    assert!(gen_colored_noise(NoiseKind::White, 256, 16_000, 0).is_ok());
}

// --- SNR mixing -------------------------------------------------------------

#[test]
fn equal_power_zero_snr_adds_noise_unscaled() {
    // signal and noise both alternate +-0.5: equal power, alpha = 1.
    let signal = Waveform::new(vec![0.5, -0.5, 0.5, -0.5], 16_000).unwrap();
    let noise = Waveform::new(vec![-0.5, 0.5, -0.5, 0.5], 16_000).unwrap();
    let mixed = mix_noise_at_snr(&signal, &noise, 0.0).unwrap();
    for (m, (s, v)) in mixed
        .samples()
        .iter()
        .zip(signal.samples().iter().zip(noise.samples()))
    {
        assert!((m - (s + v)).abs() < 1e-15);
    }
}

#[test]
fn ten_db_snr_scales_noise_by_ten_to_minus_half() {
    // unit-power signal and noise: alpha = 10^(-0.5).
    let signal = Waveform::new(vec![1.0, -1.0, 1.0, -1.0], 8_000).unwrap();
    let noise = Waveform::new(vec![-1.0, -1.0, 1.0, 1.0], 8_000).unwrap();
    let mixed = mix_noise_at_snr(&signal, &noise, 10.0).unwrap();
    let alpha = 10f64.powf(-0.5);
    for (m, (s, v)) in mixed
        .samples()
        .iter()
        .zip(signal.samples().iter().zip(noise.samples()))
    {
        assert!((m - (s + alpha * v)).abs() < 1e-12);
    }
    assert!((alpha - 0.31623).abs() < 1e-5);
}

#[test]
fn silent_noise_and_rate_mismatch_error() {
    let signal = random_wave(100, 16_000, 1);
    let silent = Waveform::new(vec![0.0; 50], 16_000).unwrap();
    assert!(mix_noise_at_snr(&signal, &silent, 0.0).is_err());
    let other_rate = random_wave(100, 8_000, 2);
    assert!(mix_noise_at_snr(&signal, &other_rate, 0.0).is_err());
}

#[test]
fn measured_snr_tracks_target_over_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..100 {
        let n = rng.random_range(500..3000);
        let signal = random_wave(n, 16_000, 1000 + i);
        // noise shorter or longer than the signal to exercise looping
        let m = rng.random_range(200..5000);
        let noise = random_wave(m, 16_000, 2000 + i);
        let target = rng.random_range(-10.0..=10.0);
        let mixed = mix_noise_at_snr(&signal, &noise, target).unwrap();
        let measured = measure_snr(&signal, &mixed).unwrap();
        assert!(
            (measured - target).abs() < 0.05,
            "target {target:.3} dB, measured {measured:.3} dB"
        );
    }
}

// --- reverb -----------------------------------------------------------------

#[test]
fn unit_impulse_is_identity() {
    let w = random_wave(512, 16_000, 3);
    let rir = Waveform::new(vec![1.0], 16_000).unwrap();
    let out = apply_reverb(&w, &rir).unwrap();
    assert_eq!(out.samples(), w.samples());
}

#[test]
fn one_sample_delay_shifts_right() {
    let w = random_wave(64, 16_000, 4);
    let rir = Waveform::new(vec![0.0, 1.0], 16_000).unwrap();
    let out = apply_reverb(&w, &rir).unwrap();
    assert_eq!(out.samples()[0], 0.0);
    assert_eq!(&out.samples()[1..], &w.samples()[..63]);
}

#[test]
fn long_rir_matches_naive_convolution() {
    let w = random_wave(2000, 16_000, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rir_samples: Vec<f64> = (0..64).map(|_| rng.random_range(-0.3..0.3)).collect();
    let rir = Waveform::new(rir_samples.clone(), 16_000).unwrap();
    let out = apply_reverb(&w, &rir).unwrap();

    let mut expected = oracles::naive_convolution(w.samples(), &rir_samples);
    expected.truncate(2000);
    let peak_out = expected.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let scale = w.peak() / peak_out;
    for e in expected.iter_mut() {
        *e *= scale;
    }
    for (a, b) in out.samples().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn reverb_preserves_peak_and_rejects_rate_mismatch() {
    let w = random_wave(300, 16_000, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rir_samples: Vec<f64> = (0..100).map(|_| rng.random_range(-0.3..0.3)).collect();
    let rir = Waveform::new(rir_samples, 16_000).unwrap();
    let out = apply_reverb(&w, &rir).unwrap();
    assert!((out.peak() - w.peak()).abs() < 1e-12);

    let wrong = Waveform::new(vec![1.0], 8_000).unwrap();
    assert!(apply_reverb(&w, &wrong).is_err());
}

// --- SNR sampling -----------------------------------------------------------

#[test]
fn sample_snr_respects_range_and_rejects_bad_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let v = sample_snr(&mut rng, 0.0, 0.001).unwrap();
        assert!((0.0..=0.001).contains(&v));
    }
    assert!(sample_snr(&mut rng, 10.0, -10.0).is_err());
    assert!(sample_snr(&mut rng, 5.0, 5.0).is_err());
}

#[test]
fn sample_snr_mean_is_centered() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| sample_snr(&mut rng, -10.0, 10.0).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!(mean.abs() < 0.1, "mean {mean}");
}

// --- speaker perturbation ---------------------------------------------------

#[test]
fn identity_factors_return_input_bit_exact() {
    let w = random_wave(4000, 16_000, 13);
    let p = SpeakerPerturbParams::new((0.0, 0.0), (1.0, 1.0), 5).unwrap();
    let out = perturb_speaker(&w, &p).unwrap();
    assert_eq!(out.samples(), w.samples());
}

#[test]
fn octave_shift_moves_fft_peak_to_double_frequency() {
    let rate = 16_000u32;
    let n = 1 << 15;
    let w = sine(440.0, rate, n, 0.8);
    // +12 semitones forces the pitch factor to exactly 2.
    let p = SpeakerPerturbParams::new((12.0, 12.0), (1.0, 1.0), 3).unwrap();
    let out = perturb_speaker(&w, &p).unwrap();
    assert_eq!(out.len(), n);
    let peak_bin = oracles::dominant_fft_bin(out.samples());
    let expected_bin = (880.0 * n as f64 / rate as f64).round() as usize;
    assert!(
        peak_bin.abs_diff(expected_bin) <= 1,
        "peak bin {peak_bin}, expected {expected_bin}"
    );
}

#[test]
fn perturbation_is_deterministic_per_seed() {
    let w = random_wave(6000, 16_000, 14);
    let a = perturb_speaker(&w, &SpeakerPerturbParams::defaults(21)).unwrap();
    let b = perturb_speaker(&w, &SpeakerPerturbParams::defaults(21)).unwrap();
    assert_eq!(a.samples(), b.samples());
    let c = perturb_speaker(&w, &SpeakerPerturbParams::defaults(22)).unwrap();
    assert_ne!(a.samples(), c.samples());
}

#[test]
fn perturbation_preserves_length_and_rate() {
    for n in [700usize, 5000, 20_000] {
        let w = random_wave(n, 16_000, n as u64);
        let out = perturb_speaker(&w, &SpeakerPerturbParams::defaults(1)).unwrap();
        assert_eq!(out.len(), n);
        assert_eq!(out.sample_rate(), 16_000);
    }
}

#[test]
fn formant_warp_changes_signal_but_keeps_pitch_peak() {
    let rate = 16_000u32;
    let n = 1 << 14;
    let w = sine(440.0, rate, n, 0.8);
    let p = SpeakerPerturbParams::new((0.0, 0.0), (1.15, 1.15), 9).unwrap();
    let out = perturb_speaker(&w, &p).unwrap();
    assert_ne!(out.samples(), w.samples());
    let peak_bin = oracles::dominant_fft_bin(out.samples());
    let expected_bin = (440.0 * n as f64 / rate as f64).round() as usize;
    assert!(
        peak_bin.abs_diff(expected_bin) <= 1,
        "formant warp moved the pitch peak: {peak_bin} vs {expected_bin}"
    );
}

#[test]
fn perturb_params_validation() {
    assert!(SpeakerPerturbParams::new((2.0, 1.0), (1.0, 1.0), 0).is_err());
    assert!(SpeakerPerturbParams::new((0.0, 0.0), (1.2, 0.9), 0).is_err());
    assert!(SpeakerPerturbParams::new((0.0, 0.0), (0.0, 1.0), 0).is_err());
}
