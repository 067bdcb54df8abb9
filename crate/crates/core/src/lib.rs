//! Review text generation from image features under rating guidance.
//!
//! A lower guided LSTM turns the previously generated word and the
//! purchaser rating into an attention mask over the image feature; an upper
//! time-dependent guided LSTM decodes the next word from the masked feature
//! and the rating. Everything is plain `f64` arithmetic with exact
//! backpropagation through time.

pub mod checkpoint;
pub mod decoder;
pub mod error;
pub mod generation;
pub mod glstm;
pub mod gradcheck;
pub mod guidance;
pub mod model;
pub mod numerics;
pub mod textdata;
pub mod training;

pub use checkpoint::Checkpoint;
pub use decoder::{decode_step, rollout, DecoderParams, TokenDistribution};
pub use error::{Error, Result};
pub use generation::{beam_search, generate, greedy, sentiment_divergence, GeneratedReview, GenerationConfig};
pub use glstm::{glstm_backward, glstm_forward, CellOptions, GlstmParams, GlstmState, StepTape};
pub use guidance::{
    attention_mask, fuse_guidance, project_feature, ImageFeature, MaskNorm, RatingEncoding, RatingGuidance,
};
pub use model::{Model, ModelConfig, ModelParams};
pub use numerics::{Matrix, Rng, Vector};
pub use textdata::{load_dataset, tokenize, DataConfig, Dataset, FeatureTable, ReviewExample, Vocabulary};
pub use training::{sequence_loss, train, OptimizerKind, TrainConfig, TrainReport, Trainer};
