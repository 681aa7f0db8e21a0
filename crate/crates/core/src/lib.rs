//! Siamese hierarchical-attention conversation encoder.
//!
//! Long conversations are split into sections of consecutive speaker turns.
//! A bidirectional GRU with attention pools the turns of each section, a
//! second bidirectional GRU with attention pools the sections, and the
//! resulting embedding is trained with a contrastive loss on pairs drawn from
//! the low- and high-score extremes of a corpus.
//!
//! The numeric kernel and the encoder are generic over [`Scalar`]; the
//! aliases below fix the element type to `f64`, which the training and
//! evaluation pipeline uses throughout.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub(crate) mod fsutil;
pub mod numeric;
pub mod scalar;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = numeric::Tensor<f64>;
pub type Tape = numeric::Tape<f64>;
pub type EncoderParams = encoder::EncoderParams<f64>;
pub type GruParams = encoder::GruParams<f64>;
pub type AttentionParams = encoder::AttentionParams<f64>;
pub type Embedding = encoder::Embedding<f64>;
pub type AdamState = trainer::AdamState<f64>;

pub type TensorF32 = numeric::Tensor<f32>;
pub type EncoderParamsF32 = encoder::EncoderParams<f32>;
