//! Black-box adversarial patch search against face verification oracles.
//!
//! A symmetric grayscale forehead patch is grown one Gaussian blob at a time,
//! guided only by cosine similarity scores returned by a [`SimilarityOracle`].
//! The crate also carries a deterministic synthetic face corpus, a toy
//! embedding oracle, an HTTP client for remote oracles and the evaluation
//! harness (attack success rate, retrieval misidentification, baselines,
//! ablations, geometry sweeps, query-efficiency curves).

pub mod blob;
pub mod cli;
pub mod error;
pub mod eval;
pub mod image;
pub mod optimizer;
pub mod oracle;
pub mod patch;
pub mod seed;
pub mod synth;

pub use blob::{render_blob, sample_blob, Amplitude, GaussianBlob, SamplerConfig};
pub use error::{GapError, Result};
pub use image::{Image, IMAGE_SIZE};
pub use optimizer::{loss, run_greedy, tie_break, ImagePair, OptTrace, OptimizerConfig};
pub use oracle::{SimilarityOracle, ToyOracle};
pub use patch::{add_blob, apply_patch, enforce_symmetry, mask_patch, Patch, Placement, RegionMask};
pub use synth::{build_corpus, Corpus, Gallery, PhotoParams};
