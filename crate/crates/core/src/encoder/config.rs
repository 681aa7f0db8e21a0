use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub feat_dim: usize,
    /// Turns per section (N).
    pub section_size: usize,
    /// Sections per conversation (M).
    pub num_sections: usize,
    pub turn_hidden: usize,
    pub section_hidden: usize,
    pub turn_ctx_dim: usize,
    pub section_ctx_dim: usize,
    /// Exclude zero-padded turns and sections from the recurrences and the
    /// attention softmax. `false` feeds the padding through like real turns.
    pub mask_padding: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feat_dim: 88,
            section_size: 4,
            num_sections: 200,
            turn_hidden: 64,
            section_hidden: 16,
            turn_ctx_dim: 128,
            section_ctx_dim: 32,
            mask_padding: true,
        }
    }
}

impl EncoderConfig {
    /// Hidden sizes with context dimensions derived from them.
    pub fn with_hidden(mut self, turn_hidden: usize, section_hidden: usize) -> Self {
        self.turn_hidden = turn_hidden;
        self.section_hidden = section_hidden;
        self.turn_ctx_dim = 2 * turn_hidden;
        self.section_ctx_dim = 2 * section_hidden;
        self
    }

    /// Smallest section count that holds `max_turns` turns.
    pub fn sections_for(section_size: usize, max_turns: usize) -> usize {
        max_turns.div_ceil(section_size).max(1)
    }

    pub fn capacity(&self) -> usize {
        self.section_size * self.num_sections
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.section_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feat_dim", self.feat_dim),
            ("section_size", self.section_size),
            ("num_sections", self.num_sections),
            ("turn_hidden", self.turn_hidden),
            ("section_hidden", self.section_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.turn_ctx_dim != 2 * self.turn_hidden {
            return Err(Error::Config(format!(
                "turn_ctx_dim {} must equal 2 * turn_hidden = {}",
                self.turn_ctx_dim,
                2 * self.turn_hidden
            )));
        }
        if self.section_ctx_dim != 2 * self.section_hidden {
            return Err(Error::Config(format!(
                "section_ctx_dim {} must equal 2 * section_hidden = {}",
                self.section_ctx_dim,
                2 * self.section_hidden
            )));
        }
        Ok(())
    }
}
