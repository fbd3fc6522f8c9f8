//! Partition-based label attention for multi-label document classification.
//!
//! A document is split into contiguous segments, embedded, run through a
//! bi-LSTM and scored by two label-attention mechanisms: one over the whole
//! document and one that attends within each segment and mixes the results.
//! Everything is `f64` on the CPU, with a small reverse-mode tape for
//! gradients.

pub mod attention;
pub mod data;
pub mod encoder;
mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use attention::{label_attention, partition_attention, AttentionParams};
pub use data::{Document, GenSpec, TextDocument, Vocab};
pub use encoder::{segment_tokens, EncoderKind, SegmentBoundaries};
pub use error::{Error, Result};
pub use metrics::{evaluate, MetricsReport, ScoreMatrix};
pub use model::{PaatConfig, PaatModel, TrainConfig, Variant};
pub use numerics::Matrix;
