//! Toolkit for synthetic-image detector development: balanced dataset
//! manifests, deterministic seeded augmentation and test perturbation,
//! prompt generation for external image generators, a self-contrastive
//! dual-track training stage with chunked gradient caching, classifier
//! calibration with normalization-statistics refresh, two-track
//! evaluation with robustness sweeps, and a relational autoencoder for
//! 2D embedding visualization.
//!
//! Everything is seeded and deterministic: identical inputs and seeds
//! reproduce byte-identical manifests, augmented images, checkpoints,
//! and reports. Record-level work (augmentation, scoring) runs as a
//! parallel map when the `parallel` feature is enabled (default) and
//! falls back to a sequential map otherwise; results are independent of
//! scheduling either way.

pub mod dimred;
pub mod eval;
pub mod imgproc;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod promptgen;
pub mod rng;
pub mod selfcon;
pub mod toydata;
pub mod train;

/// Codec identifiers recorded in perturbation output metadata so that
/// lossy outputs can be tied to the exact encoder that produced them.
pub mod codecs {
    pub const JPEG: &str = concat!("image-", "0.25", "/jpeg");
    pub const WEBP: &str = concat!("libwebp-sys-", "0.9", "/vp8");
    pub const PNG: &str = concat!("image-", "0.25", "/png");
}
