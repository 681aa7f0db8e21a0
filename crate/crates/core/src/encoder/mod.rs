//! Hierarchical attention encoder: a turn-level BiGRU with attention pools
//! each section, a section-level BiGRU with attention pools the sections.

mod config;
mod grid;
mod network;
mod params;

use serde::{Deserialize, Serialize};

pub use config::EncoderConfig;
pub use grid::{section_conversation, SectionGrid};
pub use network::{attend, bigru_encode, encode_conversation, encode_grid, gru_cell, EncodedVars, EncodingPass};
pub use params::{
    param_shapes, AttentionBlock, AttentionParams, EncoderBlocks, EncoderParams, GruBlock, GruParams, ParamVars,
};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding<T> {
    pub conv_id: String,
    pub values: Vec<T>,
}

/// Attention weights of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace<T> {
    /// `num_sections` rows of `section_size` turn weights.
    pub turn_weights: Vec<Vec<T>>,
    pub section_weights: Vec<T>,
}

pub fn init_params<T: Scalar>(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams<T>> {
    EncoderParams::init(cfg, seed)
}
