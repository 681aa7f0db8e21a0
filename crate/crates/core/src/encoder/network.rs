use super::grid::{section_conversation, SectionGrid};
use super::params::{AttentionBlock, GruBlock, ParamVars};
use super::{AttentionTrace, EncoderConfig, EncoderParams, Embedding};
use crate::corpus::Conversation;
use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// One GRU step with the reset gate applied to the previous state before the
/// recurrent product of the candidate:
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
pub fn gru_cell<T: Scalar>(tape: &mut Tape<T>, x: Var, h: Var, p: &GruBlock<Var>) -> Result<Var> {
    let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, h: Var| -> Result<Var> {
        let input = tape.affine(w, x, b)?;
        let rec = tape.matvec(u, h)?;
        tape.add(input, rec)
    };
    let z = gate(tape, p.w_z, p.u_z, p.b_z, h)?;
    let z = tape.sigmoid(z)?;
    let r = gate(tape, p.w_r, p.u_r, p.b_r, h)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.hadamard(r, h)?;
    let cand = gate(tape, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = tape.tanh(cand)?;
    // h + z * (h~ - h)
    let step = tape.sub(cand, h)?;
    let step = tape.hadamard(z, step)?;
    tape.add(h, step)
}

fn real_length(mask: &[bool]) -> Result<usize> {
    let len = mask.iter().take_while(|&&m| m).count();
    if mask[len..].iter().any(|&m| m) {
        return Err(Error::NonPrefixMask);
    }
    Ok(len)
}

/// Runs the forward direction over real positions `0..L` and the backward
/// direction over `L-1..=0`, both from a zero state. Position `j` holds
/// `[fwd_j, bwd_j]`; padded positions hold zeros.
pub fn bigru_encode<T: Scalar>(
    tape: &mut Tape<T>,
    seq: &[Var],
    mask: &[bool],
    fwd: &GruBlock<Var>,
    bwd: &GruBlock<Var>,
    hidden: usize,
) -> Result<Vec<Var>> {
    if seq.len() != mask.len() {
        return Err(Error::shape("bigru_encode", (seq.len(), 1), (mask.len(), 1)));
    }
    let len = real_length(mask)?;
    let h0 = tape.constant(Tensor::zeros(hidden, 1));

    let mut forward = Vec::with_capacity(len);
    let mut h = h0;
    for &x in &seq[..len] {
        h = gru_cell(tape, x, h, fwd)?;
        forward.push(h);
    }
    let mut backward = vec![h0; len];
    let mut h = h0;
    for j in (0..len).rev() {
        h = gru_cell(tape, seq[j], h, bwd)?;
        backward[j] = h;
    }

    let mut out = Vec::with_capacity(seq.len());
    for (f, b) in forward.into_iter().zip(backward) {
        out.push(tape.concat(f, b)?);
    }
    if len < seq.len() {
        let pad = tape.constant(Tensor::zeros(2 * hidden, 1));
        out.resize(seq.len(), pad);
    }
    Ok(out)
}

/// Attention pooling: `u_j = tanh(W h_j + b)`, weights are the masked softmax
/// of `u_j . ctx`, output is the weighted sum of the `h_j`.
/// Returns `(pooled, weights)`.
pub fn attend<T: Scalar>(
    tape: &mut Tape<T>,
    hiddens: &[Var],
    mask: &[bool],
    p: &AttentionBlock<Var>,
) -> Result<(Var, Var)> {
    if hiddens.len() != mask.len() {
        return Err(Error::shape("attend", (hiddens.len(), 1), (mask.len(), 1)));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyAttention);
    }
    let masked_logit = tape.constant(Tensor::scalar(T::zero()));
    let mut logits = Vec::with_capacity(hiddens.len());
    for (&h, &m) in hiddens.iter().zip(mask) {
        if m {
            let u = tape.affine(p.w, h, p.b)?;
            let u = tape.tanh(u)?;
            logits.push(tape.dot(u, p.ctx)?);
        } else {
            logits.push(masked_logit);
        }
    }
    let logits = tape.stack(&logits)?;
    let weights = tape.masked_softmax(logits, mask)?;
    let pooled = tape.weighted_sum(weights, hiddens)?;
    Ok((pooled, weights))
}

/// Handles to the outputs of one conversation recorded on a tape.
#[derive(Debug, Clone)]
pub struct EncodedVars {
    pub embedding: Var,
    /// Per section; `None` where the section was skipped as pure padding.
    pub turn_weights: Vec<Option<Var>>,
    pub section_weights: Var,
}

impl EncodedVars {
    pub fn trace<T: Scalar>(&self, tape: &Tape<T>, section_size: usize) -> AttentionTrace<T> {
        let turn_weights = self
            .turn_weights
            .iter()
            .map(|w| match w {
                Some(w) => tape.value(*w).as_slice().to_vec(),
                None => vec![T::zero(); section_size],
            })
            .collect();
        AttentionTrace {
            turn_weights,
            section_weights: tape.value(self.section_weights).as_slice().to_vec(),
        }
    }
}

/// Records the full hierarchical encoder for one sectioned conversation.
pub fn encode_grid<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    grid: &SectionGrid<T>,
    cfg: &EncoderConfig,
) -> Result<EncodedVars> {
    let n = grid.section_size;
    let skipped = tape.constant(Tensor::zeros(2 * cfg.turn_hidden, 1));
    let mut sections = Vec::with_capacity(grid.num_sections);
    let mut section_mask = Vec::with_capacity(grid.num_sections);
    let mut turn_weights = Vec::with_capacity(grid.num_sections);

    for i in 0..grid.num_sections {
        let has_real = grid.is_real(i, 0);
        if cfg.mask_padding && !has_real {
            sections.push(skipped);
            section_mask.push(false);
            turn_weights.push(None);
            continue;
        }
        let mask: Vec<bool> = if cfg.mask_padding {
            grid.section_mask(i).to_vec()
        } else {
            vec![true; n]
        };
        let inputs: Vec<Var> = (0..n)
            .map(|j| tape.constant(Tensor::vector(grid.turn(i, j).to_vec())))
            .collect();
        let hs = bigru_encode(tape, &inputs, &mask, &vars.turn_fwd, &vars.turn_bwd, cfg.turn_hidden)?;
        let (pooled, weights) = attend(tape, &hs, &mask, &vars.turn_attn)?;
        sections.push(pooled);
        section_mask.push(true);
        turn_weights.push(Some(weights));
    }

    let hs = bigru_encode(
        tape,
        &sections,
        &section_mask,
        &vars.section_fwd,
        &vars.section_bwd,
        cfg.section_hidden,
    )?;
    let (embedding, section_weights) = attend(tape, &hs, &section_mask, &vars.section_attn)?;
    Ok(EncodedVars {
        embedding,
        turn_weights,
        section_weights,
    })
}

/// A conversation encoded on its own tape, kept for a later backward pass.
#[derive(Debug)]
pub struct EncodingPass<T> {
    pub tape: Tape<T>,
    pub params: ParamVars,
    pub outputs: EncodedVars,
}

impl<T: Scalar> EncodingPass<T> {
    pub fn run(conv: &Conversation, cfg: &EncoderConfig, params: &EncoderParams<T>) -> Result<Self> {
        let grid = section_conversation(conv, cfg)?;
        let mut tape = Tape::new();
        let vars = params.record(&mut tape);
        let outputs = encode_grid(&mut tape, &vars, &grid, cfg)?;
        Ok(Self {
            tape,
            params: vars,
            outputs,
        })
    }

    pub fn embedding(&self) -> &[T] {
        self.tape.value(self.outputs.embedding).as_slice()
    }

    /// Parameter gradients (canonical order) of `seed . embedding`.
    pub fn param_gradients(&self, seed: &[T]) -> Result<Vec<Tensor<T>>> {
        let mut grads = self.tape.backward(self.outputs.embedding, seed)?;
        Ok(self
            .params
            .items()
            .into_iter()
            .map(|&v| {
                let (r, c) = self.tape.value(v).shape();
                match grads.take(v) {
                    Some(g) => Tensor::from_vec(r, c, g).expect("gradient shape"),
                    None => Tensor::zeros(r, c),
                }
            })
            .collect())
    }
}

pub fn encode_conversation<T: Scalar>(
    conv: &Conversation,
    cfg: &EncoderConfig,
    params: &EncoderParams<T>,
) -> Result<(Embedding<T>, AttentionTrace<T>)> {
    let pass = EncodingPass::run(conv, cfg, params)?;
    let trace = pass.outputs.trace(&pass.tape, cfg.section_size);
    Ok((
        Embedding {
            conv_id: conv.conv_id.clone(),
            values: pass.embedding().to_vec(),
        },
        trace,
    ))
}
