//! Gaze-guided CLIP-style deepfake attribution and detection (DFAD).
//!
//! A desk-scale, dependency-light implementation of a multimodal
//! architecture that fuses appearance, gaze, and language signals to
//! attribute face forgeries to their generator and detect them, together
//! with an open-set benchmark protocol: threshold-rejection attribution
//! accuracy, detection ACC/AUC, 2-D gaze Frechet distance, and corruption
//! robustness sweeps.
//!
//! Everything numeric is built on a minimal reverse-mode tensor core in
//! [`tensor`], verified by finite differences rather than trusted.
//! Start with the runnable programs in `examples/`.

pub mod agpm;
pub mod blocks;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corrupt;
pub mod data;
pub mod error;
pub mod eval;
pub mod fid;
pub mod fusion;
pub mod gaze;
pub mod gie;
pub mod gradcheck;
pub mod image;
pub mod loss;
pub mod lre;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;

pub use config::{ModelConfig, Precision};
pub use error::{Error, Result};
