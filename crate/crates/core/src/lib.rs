//! Algorithmic core for object-centric panoptic segmentation
//! post-processing: proposal extraction from center heatmaps, box-aware
//! matching, bbox-constrained mask decoding, supervision-target synthesis,
//! greedy fusion and panoptic-quality evaluation. Everything operates on
//! portable serialized feature maps and masks, so outputs of any trained
//! network can be decoded, matched, fused and scored offline.

pub mod augment;
pub mod bundle;
pub mod config;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod mask_decode;
pub mod matching;
pub mod metrics;
pub mod proposals;
pub mod rasters;
pub mod rng;
pub mod targets;

pub use config::PipelineConfig;
pub use error::{Error, Result};
