//! Speaker- and noise-invariant representation learning at desk scale:
//! two-view swapped-prediction clustering with Sinkhorn-balanced codebook
//! assignments, a frame-wise pseudo-label loss over acoustic pieces (BPE on
//! deduplicated discrete units), waveform perturbation with exact SNR
//! control, and the matching analysis toolkit (CKA, boundary segmentation
//! metrics, cluster purity).

pub mod auxiliary;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fmat;
pub mod mat;
pub mod noise;
pub mod perturb;
pub mod pieces;
pub mod rng;
pub mod spin;
pub mod synth;
pub mod trainer;
pub mod wave;

pub use error::{Error, Result};
