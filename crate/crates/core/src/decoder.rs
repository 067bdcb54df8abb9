//! Upper, time-dependent guided LSTM and the softmax readout over the
//! vocabulary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glstm::{glstm_forward, GlstmParams, GlstmState, StepTape};
use crate::guidance::{attention_mask, fuse_guidance, CombinedGuidance, ImageFeature, RatingGuidance};
use crate::model::Model;
use crate::numerics::{softmax, Matrix, TensorMut, TensorRef, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    /// guidance dim is `F + rating dim`
    pub cell: GlstmParams,
    /// vocab × hidden
    pub w_y: Matrix,
    pub b_y: Vector,
}

impl DecoderParams {
    pub fn zeros_like(&self) -> Self {
        DecoderParams {
            cell: self.cell.zeros_like(),
            w_y: Matrix::zeros(self.w_y.rows(), self.w_y.cols()),
            b_y: Vector::zeros(self.b_y.len()),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.b_y.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        if self.w_y.shape() != (self.b_y.len(), self.cell.hidden_dim()) {
            return Err(Error::shape(
                "decoder params",
                format!("w_y is {}x{}", self.w_y.rows(), self.w_y.cols()),
                format!("expected {}x{}", self.b_y.len(), self.cell.hidden_dim()),
            ));
        }
        if self.b_y.len() < crate::textdata::NUM_RESERVED {
            return Err(Error::Config(format!(
                "vocabulary of size {} cannot hold the reserved tokens",
                self.b_y.len()
            )));
        }
        Ok(())
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        self.cell.tensors(prefix, out);
        out.push(self.w_y.tensor_ref(format!("{prefix}w_y")));
        out.push(self.b_y.tensor_ref(format!("{prefix}b_y")));
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        self.cell.tensors_mut(prefix, out);
        out.push(self.w_y.tensor_mut(format!("{prefix}w_y")));
        out.push(self.b_y.tensor_mut(format!("{prefix}b_y")));
    }
}

/// Next-token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub probs: Vector,
}

impl TokenDistribution {
    pub fn argmax(&self) -> usize {
        // first maximum, so ties go to the lowest id
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct DecodeStep {
    pub dist: TokenDistribution,
    pub logits: Vector,
    pub state: GlstmState,
    pub tape: StepTape,
}

/// Runs the decoder cell under `g_hat` and reads out `softmax(W_y m + b_y)`.
pub fn decode_step(p: &DecoderParams, x: &[f64], g_hat: &CombinedGuidance, prev: &GlstmState) -> Result<DecodeStep> {
    let (state, tape) = glstm_forward(&p.cell, x, g_hat.vector(), prev)?;
    let mut logits = p.b_y.clone();
    p.w_y.matvec_acc(&state.m, &mut logits)?;
    let probs = softmax(&logits)?;
    Ok(DecodeStep {
        dist: TokenDistribution { probs },
        logits,
        state,
        tape,
    })
}

/// Teacher-forced pass: one distribution per input position. Both levels
/// start from zero state.
pub fn rollout(
    model: &Model,
    f: &ImageFeature,
    g: &RatingGuidance,
    tokens: &[usize],
) -> Result<Vec<TokenDistribution>> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let params = &model.params;
    let mut lower = GlstmState::zeros(params.lower.hidden_dim());
    let mut upper = GlstmState::zeros(params.decoder.cell.hidden_dim());
    let mut out = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        let x = model.embed(tok)?;
        let step = attention_mask(&params.lower, &lower, x, g, model.config.mask_norm)?;
        let g_hat = fuse_guidance(f, &step.mask, g)?;
        let dec = decode_step(&params.decoder, x, &g_hat, &upper)?;
        lower = step.state;
        upper = dec.state;
        out.push(dec.dist);
    }
    Ok(out)
}
