//! The full bilevel model: shared word embedding, optional feature
//! projection, the lower mask cell, and the decoder.

use serde::{Deserialize, Serialize};

use crate::decoder::{decode_step, DecoderParams, TokenDistribution};
use crate::error::{Error, Result};
use crate::glstm::{CellOptions, GlstmParams, GlstmState};
use crate::guidance::{
    attention_mask, fuse_guidance, project_feature, ImageFeature, MaskNorm, RatingEncoding, RatingGuidance,
};
use crate::numerics::{Matrix, Rng, TensorMut, TensorRef, Vector, DEFAULT_INIT_SCALE};
use crate::textdata::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Length of the feature vectors as stored on disk.
    pub raw_feature_dim: usize,
    /// `F`: length of the attended feature and of the lower hidden state.
    pub feature_dim: usize,
    /// Decoder hidden size.
    pub hidden_dim: usize,
    pub rating_encoding: RatingEncoding,
    pub mask_norm: MaskNorm,
    pub cell: CellOptions,
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, raw_feature_dim: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 32,
            raw_feature_dim,
            feature_dim: raw_feature_dim.min(32),
            hidden_dim: 64,
            rating_encoding: RatingEncoding::OneHot,
            mask_norm: MaskNorm::None,
            cell: CellOptions::default(),
            init_scale: DEFAULT_INIT_SCALE,
        }
    }

    /// A projection is used whenever the stored features differ in length
    /// from `F`.
    pub fn has_projection(&self) -> bool {
        self.raw_feature_dim != self.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("raw_feature_dim", self.raw_feature_dim),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.vocab_size < crate::textdata::NUM_RESERVED {
            return Err(Error::Config("vocabulary must hold the reserved tokens".into()));
        }
        if self.feature_dim > self.raw_feature_dim {
            return Err(Error::Config(format!(
                "feature_dim {} exceeds raw feature length {}",
                self.feature_dim, self.raw_feature_dim
            )));
        }
        Ok(())
    }
}

/// Every trainable tensor. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// vocab × embed
    pub embedding: Matrix,
    /// F × raw, when present
    pub projection: Option<Matrix>,
    /// embed → F, guided by the rating
    pub lower: GlstmParams,
    pub decoder: DecoderParams,
}

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            projection: self.projection.as_ref().map(|p| Matrix::zeros(p.rows(), p.cols())),
            lower: self.lower.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![self.embedding.tensor_ref("embedding".into())];
        if let Some(p) = &self.projection {
            out.push(p.tensor_ref("projection".into()));
        }
        self.lower.tensors("lower.", &mut out);
        self.decoder.tensors("decoder.", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = vec![self.embedding.tensor_mut("embedding".into())];
        if let Some(p) = &mut self.projection {
            out.push(p.tensor_mut("projection".into()));
        }
        self.lower.tensors_mut("lower.", &mut out);
        self.decoder.tensors_mut("decoder.", &mut out);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.data.iter()).map(|x| x * x).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, tensor by tensor in a fixed order.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            crate::numerics::add_into(dst.data, src.data);
        }
    }

    /// Zero every guidance weight at both levels.
    pub fn clear_guidance(&mut self) {
        self.lower.clear_guidance();
        self.decoder.cell.clear_guidance();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl Model {
    /// Random weights, zero biases.
    pub fn init(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let mut rng = Rng::new(seed);
        let scale = config.init_scale;
        let g_dim = config.rating_encoding.dim();
        let embedding = Matrix::init_uniform(config.vocab_size, config.embed_dim, scale, &mut rng)?;
        let projection = if config.has_projection() {
            // keep the projected feature on the same scale as the raw one
            let s = (3.0 / config.raw_feature_dim as f64).sqrt();
            Some(Matrix::init_uniform(
                config.feature_dim,
                config.raw_feature_dim,
                s,
                &mut rng,
            )?)
        } else {
            None
        };
        let lower = GlstmParams::init(
            config.embed_dim,
            config.feature_dim,
            g_dim,
            scale,
            &mut rng,
            config.cell,
        )?;
        let cell = GlstmParams::init(
            config.embed_dim,
            config.hidden_dim,
            config.feature_dim + g_dim,
            scale,
            &mut rng,
            config.cell,
        )?;
        let w_y = Matrix::init_uniform(config.vocab_size, config.hidden_dim, scale, &mut rng)?;
        let params = ModelParams {
            embedding,
            projection,
            lower,
            decoder: DecoderParams {
                cell,
                w_y,
                b_y: Vector::zeros(config.vocab_size),
            },
        };
        Ok(Model { config, vocab, params })
    }

    /// Checks that `params` match `config`.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let p = &self.params;
        let g_dim = c.rating_encoding.dim();
        let mismatch =
            |what: &str, got: String, want: String| Err(Error::shape("model", format!("{what} {got}"), want));
        if p.embedding.shape() != (c.vocab_size, c.embed_dim) {
            return mismatch(
                "embedding",
                format!("{:?}", p.embedding.shape()),
                format!("{}x{}", c.vocab_size, c.embed_dim),
            );
        }
        match (&p.projection, c.has_projection()) {
            (Some(m), true) if m.shape() == (c.feature_dim, c.raw_feature_dim) => {}
            (None, false) => {}
            (got, _) => {
                return mismatch(
                    "projection",
                    format!("{:?}", got.as_ref().map(|m| m.shape())),
                    format!("{}x{} when raw != F", c.feature_dim, c.raw_feature_dim),
                )
            }
        }
        p.lower.validate()?;
        p.decoder.validate()?;
        let lower = (p.lower.input_dim(), p.lower.hidden_dim(), p.lower.guidance_dim());
        if lower != (c.embed_dim, c.feature_dim, g_dim) {
            return mismatch(
                "lower cell",
                format!("{lower:?}"),
                format!("{:?}", (c.embed_dim, c.feature_dim, g_dim)),
            );
        }
        let cell = &p.decoder.cell;
        let upper = (
            cell.input_dim(),
            cell.hidden_dim(),
            cell.guidance_dim(),
            p.decoder.vocab_size(),
        );
        let want = (c.embed_dim, c.hidden_dim, c.feature_dim + g_dim, c.vocab_size);
        if upper != want {
            return mismatch("decoder", format!("{upper:?}"), format!("{want:?}"));
        }
        if self.vocab.len() != c.vocab_size {
            return mismatch("vocabulary", self.vocab.len().to_string(), c.vocab_size.to_string());
        }
        Ok(())
    }

    pub fn embed(&self, token: usize) -> Result<&[f64]> {
        if token >= self.config.vocab_size {
            return Err(Error::UnknownToken {
                id: token,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(self.params.embedding.row(token))
    }

    /// Maps a stored feature vector to `F` dimensions.
    pub fn project(&self, raw: &[f64]) -> Result<ImageFeature> {
        if raw.len() != self.config.raw_feature_dim {
            return Err(Error::shape(
                "model feature",
                format!("feature length {}", raw.len()),
                format!("configured {}", self.config.raw_feature_dim),
            ));
        }
        match &self.params.projection {
            Some(p) => project_feature(raw, p),
            None => Ok(ImageFeature::new(raw.into())),
        }
    }

    pub fn encode_rating(&self, rating: i64) -> Result<RatingGuidance> {
        self.config.rating_encoding.encode(rating)
    }

    /// Initial decoding state for a feature/rating pair, with the
    /// begin-of-sequence token already consumed.
    pub fn start(&self, raw_feature: &[f64], rating: i64) -> Result<DecodeState> {
        let state = DecodeState {
            feature: self.project(raw_feature)?,
            rating: self.encode_rating(rating)?,
            lower: GlstmState::zeros(self.config.feature_dim),
            upper: GlstmState::zeros(self.config.hidden_dim),
            next: TokenDistribution {
                probs: Vector::zeros(0),
            },
            logits: Vector::zeros(0),
        };
        self.feed(&state, crate::textdata::BOS)
    }

    /// Consumes `token` and computes the distribution over the next one.
    pub fn feed(&self, state: &DecodeState, token: usize) -> Result<DecodeState> {
        let x = self.embed(token)?;
        let step = attention_mask(
            &self.params.lower,
            &state.lower,
            x,
            &state.rating,
            self.config.mask_norm,
        )?;
        let g_hat = fuse_guidance(&state.feature, &step.mask, &state.rating)?;
        let dec = decode_step(&self.params.decoder, x, &g_hat, &state.upper)?;
        Ok(DecodeState {
            feature: state.feature.clone(),
            rating: state.rating.clone(),
            lower: step.state,
            upper: dec.state,
            next: dec.dist,
            logits: dec.logits,
        })
    }
}

/// Recurrent state of both levels during free-running decoding.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pub feature: ImageFeature,
    pub rating: RatingGuidance,
    pub lower: GlstmState,
    pub upper: GlstmState,
    /// distribution over the next token
    pub next: TokenDistribution,
    pub logits: Vector,
}
