//! Mono waveform container and WAV file I/O.
//!
//! Samples are held as f64 internally regardless of the on-disk encoding;
//! supported WAV subformats are 16-bit PCM mono and IEEE float32 mono.

use std::path::Path;

use crate::error::{Error, Result};

/// A mono audio signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Wraps samples, checking they are non-empty and finite.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("waveform"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Root mean square of the samples.
    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Mean power (mean square).
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Reads a mono WAV file (PCM16 or float32).
    pub fn read_wav(path: &Path) -> Result<Self> {
        let reader = hound::WavReader::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::Format(format!(
                "{}: expected mono, got {} channels",
                path.display(),
                spec.channels
            )));
        }
        let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
            (hound::SampleFormat::Float, 32) => reader
                .into_samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
            (fmt, bits) => {
                return Err(Error::Format(format!(
                    "{}: unsupported WAV encoding {fmt:?}/{bits} bit (want PCM16 or float32)",
                    path.display()
                )))
            }
        };
        Waveform::new(samples, spec.sample_rate)
    }

    /// Writes as IEEE float32 mono WAV.
    pub fn write_wav_f32(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(path, spec)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for &s in &self.samples {
            writer
                .write_sample(s as f32)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        writer
            .finalize()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Writes as 16-bit PCM mono WAV, saturating samples outside [-1, 1].
    pub fn write_wav_pcm16(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for &s in &self.samples {
            let clamped = s.clamp(-1.0, 1.0);
            let q = (clamped * 32767.0).round() as i16;
            writer
                .write_sample(q)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        writer
            .finalize()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}
