//! Learned computational zoom toolkit.
//!
//! Raw Bayer preprocessing, optically-zoomed pair alignment, the contextual
//! (CX) and contextual bilateral (CoBi) losses with gradients, synthetic
//! sensor simulation, image-quality metrics, and a pixel-domain optimizer
//! for comparing losses on misaligned targets.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod bayer;
pub mod cobi;
pub mod dataset;
pub mod error;
pub mod features;
pub mod image;
pub mod imageio;
pub mod metrics;
pub mod optimize;
pub mod raw_pipeline;
pub mod resample;
pub mod sensor_synth;
pub mod tensor;
pub mod texture;

pub use bayer::{BayerMosaic, Cfa, RawMetadata};
pub use error::{Error, Result};
pub use image::{ColorSpace, ImageBuffer};
pub use tensor::Tensor;
