use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Weights of one GRU direction: input matrices `w_*`, recurrent matrices
/// `u_*` and biases `b_*` for the update gate, reset gate and candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct GruBlock<X> {
    pub w_z: X,
    pub u_z: X,
    pub b_z: X,
    pub w_r: X,
    pub u_r: X,
    pub b_r: X,
    pub w_h: X,
    pub u_h: X,
    pub b_h: X,
}

/// `u_j = tanh(w h_j + b)`, scored against the context vector `ctx`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock<X> {
    pub w: X,
    pub b: X,
    pub ctx: X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlocks<X> {
    pub turn_fwd: GruBlock<X>,
    pub turn_bwd: GruBlock<X>,
    pub section_fwd: GruBlock<X>,
    pub section_bwd: GruBlock<X>,
    pub turn_attn: AttentionBlock<X>,
    pub section_attn: AttentionBlock<X>,
}

pub type GruParams<T> = GruBlock<Tensor<T>>;
pub type AttentionParams<T> = AttentionBlock<Tensor<T>>;
pub type EncoderParams<T> = EncoderBlocks<Tensor<T>>;
/// Parameters recorded as leaves on a tape.
pub type ParamVars = EncoderBlocks<Var>;

const GRU_FIELDS: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];
const ATTN_FIELDS: [&str; 3] = ["w", "b", "ctx"];
const GRU_NAMES: [&str; 4] = ["turn_fwd", "turn_bwd", "section_fwd", "section_bwd"];
const ATTN_NAMES: [&str; 2] = ["turn_attn", "section_attn"];

impl<X> GruBlock<X> {
    fn items(&self) -> [&X; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h,
        ]
    }

    fn items_mut(&mut self) -> [&mut X; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }

    fn take(it: &mut impl Iterator<Item = X>) -> Self {
        let mut next = || it.next().expect("enough items");
        Self {
            w_z: next(),
            u_z: next(),
            b_z: next(),
            w_r: next(),
            u_r: next(),
            b_r: next(),
            w_h: next(),
            u_h: next(),
            b_h: next(),
        }
    }
}

impl<X> AttentionBlock<X> {
    fn take(it: &mut impl Iterator<Item = X>) -> Self {
        let mut next = || it.next().expect("enough items");
        Self {
            w: next(),
            b: next(),
            ctx: next(),
        }
    }
}

impl<X> EncoderBlocks<X> {
    pub const COUNT: usize = 4 * 9 + 2 * 3;

    /// Canonical parameter names, in the order of [`Self::items`].
    pub fn names() -> Vec<String> {
        let mut out = Vec::with_capacity(Self::COUNT);
        for g in GRU_NAMES {
            out.extend(GRU_FIELDS.iter().map(|f| format!("{g}.{f}")));
        }
        for a in ATTN_NAMES {
            out.extend(ATTN_FIELDS.iter().map(|f| format!("{a}.{f}")));
        }
        out
    }

    pub fn items(&self) -> Vec<&X> {
        let mut out = Vec::with_capacity(Self::COUNT);
        for g in [&self.turn_fwd, &self.turn_bwd, &self.section_fwd, &self.section_bwd] {
            out.extend(g.items());
        }
        for a in [&self.turn_attn, &self.section_attn] {
            out.extend([&a.w, &a.b, &a.ctx]);
        }
        out
    }

    pub fn items_mut(&mut self) -> Vec<&mut X> {
        let mut out = Vec::with_capacity(Self::COUNT);
        out.extend(self.turn_fwd.items_mut());
        out.extend(self.turn_bwd.items_mut());
        out.extend(self.section_fwd.items_mut());
        out.extend(self.section_bwd.items_mut());
        for a in [&mut self.turn_attn, &mut self.section_attn] {
            out.extend([&mut a.w, &mut a.b, &mut a.ctx]);
        }
        out
    }

    /// Inverse of [`Self::items`]; panics unless exactly [`Self::COUNT`] items.
    pub fn from_items(items: Vec<X>) -> Self {
        assert_eq!(items.len(), Self::COUNT, "parameter count");
        let mut it = items.into_iter();
        Self {
            turn_fwd: GruBlock::take(&mut it),
            turn_bwd: GruBlock::take(&mut it),
            section_fwd: GruBlock::take(&mut it),
            section_bwd: GruBlock::take(&mut it),
            turn_attn: AttentionBlock::take(&mut it),
            section_attn: AttentionBlock::take(&mut it),
        }
    }

    pub fn map<Y>(&self, f: impl FnMut(&X) -> Y) -> EncoderBlocks<Y> {
        EncoderBlocks::from_items(self.items().into_iter().map(f).collect())
    }
}

fn gru_shapes(input: usize, hidden: usize) -> [(usize, usize); 9] {
    let (w, u, b) = ((hidden, input), (hidden, hidden), (hidden, 1));
    [w, u, b, w, u, b, w, u, b]
}

/// Shapes in canonical order.
pub fn param_shapes(cfg: &EncoderConfig) -> Vec<(usize, usize)> {
    let turn_out = 2 * cfg.turn_hidden;
    let sec_out = 2 * cfg.section_hidden;
    let mut out = Vec::with_capacity(ParamVars::COUNT);
    for _ in 0..2 {
        out.extend(gru_shapes(cfg.feat_dim, cfg.turn_hidden));
    }
    for _ in 0..2 {
        out.extend(gru_shapes(turn_out, cfg.section_hidden));
    }
    out.extend([(cfg.turn_ctx_dim, turn_out), (cfg.turn_ctx_dim, 1), (cfg.turn_ctx_dim, 1)]);
    out.extend([(cfg.section_ctx_dim, sec_out), (cfg.section_ctx_dim, 1), (cfg.section_ctx_dim, 1)]);
    out
}

impl<T: Scalar> EncoderBlocks<Tensor<T>> {
    /// Glorot-uniform matrices, zero biases, context vectors in (-0.1, 0.1).
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = Self::names();
        let tensors = param_shapes(cfg)
            .into_iter()
            .zip(&names)
            .map(|((r, c), name)| {
                let n = r * c;
                let data: Vec<T> = if name.ends_with(".ctx") {
                    (0..n).map(|_| T::from_f64_lossy(rng.random_range(-0.1..0.1))).collect()
                } else if c == 1 {
                    vec![T::zero(); n]
                } else {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    (0..n).map(|_| T::from_f64_lossy(rng.random_range(-a..a))).collect()
                };
                Tensor::from_vec(r, c, data).expect("shape")
            })
            .collect();
        Ok(Self::from_items(tensors))
    }

    pub fn zeros(cfg: &EncoderConfig) -> Self {
        Self::from_items(param_shapes(cfg).into_iter().map(|(r, c)| Tensor::zeros(r, c)).collect())
    }

    /// Builds parameters from tensors in canonical order, checking shapes.
    pub fn from_tensors(cfg: &EncoderConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = param_shapes(cfg);
        if tensors.len() != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, want), name) in tensors.iter().zip(&shapes).zip(Self::names()) {
            if t.shape() != *want {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?} inconsistent with config (expected {want:?})",
                    t.shape()
                )));
            }
        }
        Ok(Self::from_items(tensors))
    }

    pub fn num_params(&self) -> usize {
        self.items().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.items().iter().all(|t| t.is_finite())
    }

    pub fn record(&self, tape: &mut Tape<T>) -> ParamVars {
        self.map(|t| tape.leaf(t.clone()))
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        self.map(|t| t.cast())
    }
}
