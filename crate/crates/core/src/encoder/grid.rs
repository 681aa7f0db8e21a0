use super::EncoderConfig;
use crate::corpus::Conversation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Turns laid out row-major into `num_sections x section_size` slots; the
/// tail is zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionGrid<T> {
    pub section_size: usize,
    pub num_sections: usize,
    pub feat_dim: usize,
    features: Vec<T>,
    mask: Vec<bool>,
    real_turn_count: usize,
}

impl<T: Scalar> SectionGrid<T> {
    pub fn turn(&self, section: usize, pos: usize) -> &[T] {
        let slot = section * self.section_size + pos;
        &self.features[slot * self.feat_dim..(slot + 1) * self.feat_dim]
    }

    pub fn is_real(&self, section: usize, pos: usize) -> bool {
        self.mask[section * self.section_size + pos]
    }

    /// Mask row of one section.
    pub fn section_mask(&self, section: usize) -> &[bool] {
        &self.mask[section * self.section_size..(section + 1) * self.section_size]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn real_turn_count(&self) -> usize {
        self.real_turn_count
    }

    /// Sections holding at least one real turn.
    pub fn real_sections(&self) -> usize {
        self.real_turn_count.div_ceil(self.section_size)
    }
}

pub fn section_conversation<T: Scalar>(conv: &Conversation, cfg: &EncoderConfig) -> Result<SectionGrid<T>> {
    let n_turns = conv.turns.len();
    if n_turns == 0 {
        return Err(Error::EmptyConversation(conv.conv_id.clone()));
    }
    if n_turns > cfg.capacity() {
        return Err(Error::Capacity {
            conv_id: conv.conv_id.clone(),
            turns: n_turns,
            capacity: cfg.capacity(),
        });
    }
    let slots = cfg.capacity();
    let mut features = vec![T::zero(); slots * cfg.feat_dim];
    let mut mask = vec![false; slots];
    for (k, turn) in conv.turns.iter().enumerate() {
        if turn.features.len() != cfg.feat_dim {
            return Err(Error::shape("section_conversation", (cfg.feat_dim, 1), (turn.features.len(), 1)));
        }
        for (dst, &src) in features[k * cfg.feat_dim..(k + 1) * cfg.feat_dim]
            .iter_mut()
            .zip(&turn.features)
        {
            *dst = T::from_f64_lossy(src);
        }
        mask[k] = true;
    }
    Ok(SectionGrid {
        section_size: cfg.section_size,
        num_sections: cfg.num_sections,
        feat_dim: cfg.feat_dim,
        features,
        mask,
        real_turn_count: n_turns,
    })
}
