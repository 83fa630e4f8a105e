//! Deterministic synthetic frame-feature corpus.
//!
//! Each utterance is a random walk over unit classes with bounded run
//! lengths; a frame's feature vector is its unit centroid plus a speaker
//! offset plus Gaussian noise. The perturbed counterpart of an utterance
//! swaps in a different speaker's offset while keeping the unit sequence, so
//! the two views share content but not speaker identity.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmat::write_fmat;
use crate::mat::FrameMatrix;
use crate::pieces::UnitSequence;
use crate::rng::{derive_seed, gaussian};

/// Shape of the synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_units: usize,
    pub n_speakers: usize,
    pub feat_dim: usize,
    /// Frames per utterance, inclusive range.
    pub frames_per_utt: (usize, usize),
    /// Frames per unit occurrence, inclusive range.
    pub run_length: (usize, usize),
    pub speaker_offset_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_units: 20,
            n_speakers: 4,
            feat_dim: 16,
            frames_per_utt: (30, 70),
            run_length: (2, 8),
            speaker_offset_scale: 1.0,
            noise_scale: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_units < 2 {
            return Err(Error::invalid("n_units must be at least 2"));
        }
        if self.n_speakers < 2 {
            return Err(Error::invalid("n_speakers must be at least 2"));
        }
        if self.feat_dim == 0 {
            return Err(Error::invalid("feat_dim must be positive"));
        }
        if self.frames_per_utt.0 == 0 || self.frames_per_utt.0 > self.frames_per_utt.1 {
            return Err(Error::invalid(format!(
                "bad frames_per_utt range {:?}",
                self.frames_per_utt
            )));
        }
        if self.run_length.0 == 0 || self.run_length.0 > self.run_length.1 {
            return Err(Error::invalid(format!(
                "bad run_length range {:?}",
                self.run_length
            )));
        }
        if self.speaker_offset_scale < 0.0 || self.noise_scale < 0.0 {
            return Err(Error::invalid("scales must be non-negative"));
        }
        Ok(())
    }
}

/// One synthetic utterance with its perturbed-view counterpart.
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub features: FrameMatrix,
    pub perturbed: FrameMatrix,
    pub units: UnitSequence,
    pub speaker: usize,
    pub perturbed_speaker: usize,
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = gaussian(&mut rng) * scale;
    }
    m
}

/// Generates `n_utts` utterances. Utterance i depends only on
/// (spec.seed, i), so generation order does not matter.
pub fn generate(spec: &SynthSpec, n_utts: usize) -> Result<Vec<SynthUtterance>> {
    spec.validate()?;
    if n_utts == 0 {
        return Err(Error::invalid("n_utts must be at least 1"));
    }
    let centroids = gaussian_matrix(spec.n_units, spec.feat_dim, 1.0, derive_seed(spec.seed, 1));
    let offsets = gaussian_matrix(
        spec.n_speakers,
        spec.feat_dim,
        spec.speaker_offset_scale,
        derive_seed(spec.seed, 2),
    );
    let mut out = Vec::with_capacity(n_utts);
    for utt in 0..n_utts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1000 + utt as u64));
        let frames = rng.random_range(spec.frames_per_utt.0..=spec.frames_per_utt.1);
        let speaker = rng.random_range(0..spec.n_speakers);
        let perturbed_speaker = pick_other(&mut rng, spec.n_speakers, speaker);

        // Random walk over units: each run picks a fresh unit different
        // from the previous one and a bounded duration.
        let mut units = Vec::with_capacity(frames);
        let mut prev: Option<u32> = None;
        while units.len() < frames {
            let unit = loop {
                let u = rng.random_range(0..spec.n_units) as u32;
                if Some(u) != prev {
                    break u;
                }
            };
            let run = rng.random_range(spec.run_length.0..=spec.run_length.1);
            for _ in 0..run.min(frames - units.len()) {
                units.push(unit);
            }
            prev = Some(unit);
        }

        let mut features = Array2::zeros((frames, spec.feat_dim));
        let mut perturbed = Array2::zeros((frames, spec.feat_dim));
        for (t, &u) in units.iter().enumerate() {
            for d in 0..spec.feat_dim {
                let base = centroids[[u as usize, d]];
                features[[t, d]] =
                    base + offsets[[speaker, d]] + spec.noise_scale * gaussian(&mut rng);
                perturbed[[t, d]] =
                    base + offsets[[perturbed_speaker, d]] + spec.noise_scale * gaussian(&mut rng);
            }
        }
        out.push(SynthUtterance {
            features,
            perturbed,
            units: UnitSequence::new(units)?,
            speaker,
            perturbed_speaker,
        });
    }
    Ok(out)
}

fn pick_other(rng: &mut impl Rng, n: usize, not: usize) -> usize {
    loop {
        let s = rng.random_range(0..n);
        if s != not {
            return s;
        }
    }
}

/// Writes a corpus directory: per-utterance FMAT features (clean and
/// perturbed view), per-utterance unit files, a combined `units.txt`, and a
/// `manifest.csv` with header `utt_id,speaker,frames,path_feats,path_units`.
pub fn write_corpus(dir: &Path, corpus: &[SynthUtterance]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("utt_id,speaker,frames,path_feats,path_units\n");
    let mut all_units = String::new();
    for (i, utt) in corpus.iter().enumerate() {
        let utt_id = format!("utt_{i:05}");
        let feats_name = format!("{utt_id}.fmat");
        let pert_name = format!("{utt_id}.pert.fmat");
        let units_name = format!("{utt_id}.units");
        write_fmat(&dir.join(&feats_name), &utt.features)?;
        write_fmat(&dir.join(&pert_name), &utt.perturbed)?;
        let unit_line: Vec<String> = utt.units.units().iter().map(|u| u.to_string()).collect();
        let unit_line = unit_line.join(" ");
        fs::write(dir.join(&units_name), format!("{unit_line}\n"))?;
        writeln!(all_units, "{unit_line}").expect("string write");
        writeln!(
            manifest,
            "{utt_id},{},{},{feats_name},{units_name}",
            utt.speaker,
            utt.units.len()
        )
        .expect("string write");
    }
    fs::write(dir.join("units.txt"), all_units)?;
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

/// One manifest row.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub speaker: usize,
    pub frames: usize,
    pub path_feats: String,
    pub path_units: String,
}

/// Reads `manifest.csv` back from a corpus directory.
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join("manifest.csv");
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "utt_id,speaker,frames,path_feats,path_units" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "bad manifest header".to_string(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 5 fields, got {}", f.len()),
            });
        }
        out.push(ManifestEntry {
            utt_id: f[0].to_string(),
            speaker: f[1].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: "bad speaker id".to_string(),
            })?,
            frames: f[2].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: "bad frame count".to_string(),
            })?,
            path_feats: f[3].to_string(),
            path_units: f[4].to_string(),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }
    Ok(out)
}

/// Derived path of the perturbed-view features for a manifest entry.
pub fn perturbed_path(path_feats: &str) -> String {
    match path_feats.strip_suffix(".fmat") {
        Some(stem) => format!("{stem}.pert.fmat"),
        None => format!("{path_feats}.pert"),
    }
}
