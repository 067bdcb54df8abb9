//! Teacher-forced cross-entropy training with backpropagation through time.

use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::decode_step;
use crate::error::{Error, Result};
use crate::glstm::{glstm_backward_into, CellOptions, GlstmState, StepTape, DEFAULT_CELL_CLIP};
use crate::guidance::{attention_mask, fuse_guidance, MaskNorm, RatingEncoding};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::{log_sum_exp, Rng, Vector, DEFAULT_INIT_SCALE};
use crate::textdata::{ReviewExample, Vocabulary, DEFAULT_MAX_LEN, DEFAULT_MIN_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub max_len: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub min_count: usize,
    pub freeze_embeddings: bool,
    pub mask_norm: MaskNorm,
    pub rating_encoding: RatingEncoding,
    pub output_tanh: bool,
    pub cell_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 1,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            grad_clip_norm: 5.0,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            feature_dim: 32,
            hidden_dim: 64,
            embed_dim: 32,
            min_count: DEFAULT_MIN_COUNT,
            freeze_embeddings: false,
            mask_norm: MaskNorm::None,
            rating_encoding: RatingEncoding::OneHot,
            output_tanh: false,
            cell_clip: Some(DEFAULT_CELL_CLIP),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("min_count", self.min_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) || !positive(self.grad_clip_norm) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize, raw_feature_dim: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            raw_feature_dim,
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            rating_encoding: self.rating_encoding,
            mask_norm: self.mask_norm,
            cell: CellOptions {
                output_tanh: self.output_tanh,
                cell_clip: self.cell_clip,
            },
            init_scale: DEFAULT_INIT_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// token-weighted mean cross-entropy over the epoch
    pub mean_loss: f64,
    pub perplexity: f64,
    /// excluded from serialized reports so they stay reproducible
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    #[serde(skip)]
    pub seconds: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

pub struct LossAndGrads {
    /// mean negative log-likelihood per predicted token
    pub loss: f64,
    /// number of predicted tokens
    pub tokens: usize,
    pub grads: ModelParams,
}

struct StepRecord {
    token: usize,
    target: usize,
    lower_tape: StepTape,
    mask: Vector,
    upper_tape: StepTape,
    upper_m: Vector,
    probs: Vector,
}

struct Trace {
    feature: Vector,
    steps: Vec<StepRecord>,
    loss: f64,
}

fn forward(model: &Model, example: &ReviewExample) -> Result<Trace> {
    if example.tokens.len() < 2 {
        return Err(Error::EmptySequence);
    }
    let params = &model.params;
    let f = model.project(&example.feature)?;
    let g = model.encode_rating(example.rating as i64)?;
    let mut lower = GlstmState::zeros(params.lower.hidden_dim());
    let mut upper = GlstmState::zeros(params.decoder.cell.hidden_dim());
    let steps_n = example.tokens.len() - 1;
    let mut steps = Vec::with_capacity(steps_n);
    let mut total = 0.0;
    for pair in example.tokens.windows(2) {
        let (token, target) = (pair[0], pair[1]);
        if target >= model.config.vocab_size {
            return Err(Error::UnknownToken {
                id: target,
                vocab_size: model.config.vocab_size,
            });
        }
        let x = model.embed(token)?;
        let step = attention_mask(&params.lower, &lower, x, &g, model.config.mask_norm)?;
        let g_hat = fuse_guidance(&f, &step.mask, &g)?;
        let dec = decode_step(&params.decoder, x, &g_hat, &upper)?;
        total += log_sum_exp(&dec.logits) - dec.logits[target];
        lower = step.state;
        upper = dec.state;
        steps.push(StepRecord {
            token,
            target,
            lower_tape: step.tape,
            mask: step.mask,
            upper_tape: dec.tape,
            upper_m: upper.m.clone(),
            probs: dec.dist.probs,
        });
    }
    Ok(Trace {
        feature: f.into_inner(),
        steps,
        loss: total / steps_n as f64,
    })
}

/// Mean token loss without gradients.
pub fn sequence_loss_value(model: &Model, example: &ReviewExample) -> Result<f64> {
    Ok(forward(model, example)?.loss)
}

/// Mean token negative log-likelihood of `example` and its gradient with
/// respect to every parameter.
pub fn sequence_loss(model: &Model, example: &ReviewExample) -> Result<LossAndGrads> {
    let trace = forward(model, example)?;
    let params = &model.params;
    let mut grads = params.zeros_like();
    let scale = 1.0 / trace.steps.len() as f64;
    let f_dim = model.config.feature_dim;
    let hidden = params.decoder.cell.hidden_dim();

    let mut d_m_upper = Vector::zeros(hidden);
    let mut d_c_upper = Vector::zeros(hidden);
    let mut d_m_lower = Vector::zeros(f_dim);
    let mut d_c_lower = Vector::zeros(f_dim);
    let mut d_feature = Vector::zeros(f_dim);

    for step in trace.steps.iter().rev() {
        let mut d_logits = step.probs.clone();
        d_logits[step.target] -= 1.0;
        d_logits.iter_mut().for_each(|v| *v *= scale);

        grads.decoder.w_y.add_outer(&d_logits, &step.upper_m)?;
        grads.decoder.b_y.add_assign(&d_logits)?;
        params.decoder.w_y.matvec_t_acc(&d_logits, &mut d_m_upper)?;

        let up = glstm_backward_into(
            &params.decoder.cell,
            &step.upper_tape,
            &d_m_upper,
            &d_c_upper,
            &mut grads.decoder.cell,
        )?;

        let d_masked = &up.d_g[..f_dim];
        let mut d_mask = Vector::zeros(f_dim);
        for k in 0..f_dim {
            d_mask[k] = d_masked[k] * trace.feature[k];
            d_feature[k] += d_masked[k] * step.mask[k];
        }
        let mut d_m = model.config.mask_norm.backward(&step.mask, &d_mask);
        d_m.add_assign(&d_m_lower)?;
        let low = glstm_backward_into(&params.lower, &step.lower_tape, &d_m, &d_c_lower, &mut grads.lower)?;

        let row = grads.embedding.row_mut(step.token);
        for (r, (a, b)) in row.iter_mut().zip(up.d_x.iter().zip(low.d_x.iter())) {
            *r += a + b;
        }

        d_m_upper = up.d_m_prev;
        d_c_upper = up.d_c_prev;
        d_m_lower = low.d_m_prev;
        d_c_lower = low.d_c_prev;
    }

    if let Some(p) = &mut grads.projection {
        p.add_outer(&d_feature, &example.feature)?;
    }

    Ok(LossAndGrads {
        loss: trace.loss,
        tokens: trace.steps.len(),
        grads,
    })
}

pub struct BatchLoss {
    /// mean of the per-example losses
    pub loss: f64,
    pub grads: ModelParams,
    /// `(loss, predicted tokens)` per example, in batch order
    pub per_example: Vec<(f64, usize)>,
}

/// Mean of per-example losses and of their gradients, reduced in input
/// order.
pub fn batch_loss(model: &Model, batch: &[&ReviewExample]) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let parts: Vec<LossAndGrads> = batch
        .par_iter()
        .map(|ex| sequence_loss(model, ex))
        .collect::<Result<_>>()?;
    let n = parts.len() as f64;
    let per_example: Vec<(f64, usize)> = parts.iter().map(|p| (p.loss, p.tokens)).collect();
    let mut iter = parts.into_iter();
    let mut grads = iter.next().expect("non-empty batch").grads;
    for part in iter {
        grads.add_assign(&part.grads);
    }
    grads.scale(1.0 / n);
    Ok(BatchLoss {
        loss: per_example.iter().map(|p| p.0).sum::<f64>() / n,
        grads,
        per_example,
    })
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Parameter update rule with its running state.
#[allow(clippy::large_enum_variant)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: ModelParams,
        v: ModelParams,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, like: &ModelParams) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                step: 0,
                m: like.zeros_like(),
                v: like.zeros_like(),
            },
        }
    }

    /// Applies one update. The embedding table is skipped when frozen.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, freeze_embeddings: bool) {
        let skip = usize::from(freeze_embeddings);
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()).skip(skip) {
                    for (w, d) in p.data.iter_mut().zip(g.data) {
                        *w -= *lr * d;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                *step += 1;
                let bc1 = 1.0 - beta1.powi(*step as i32);
                let bc2 = 1.0 - beta2.powi(*step as i32);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()))
                    .skip(skip);
                for ((p, g), (m, v)) in tensors {
                    for i in 0..p.data.len() {
                        let d = g.data[i];
                        m.data[i] = *beta1 * m.data[i] + (1.0 - *beta1) * d;
                        v.data[i] = *beta2 * v.data[i] + (1.0 - *beta2) * d * d;
                        let m_hat = m.data[i] / bc1;
                        let v_hat = v.data[i] / bc2;
                        p.data[i] -= *lr * m_hat / (v_hat.sqrt() + *eps);
                    }
                }
            }
        }
    }
}

pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    optimizer: Optimizer,
    rng: Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.params);
        // shuffling draws from its own stream so it does not depend on init
        let rng = Rng::new(config.seed ^ 0x5EED_5EED_5EED_5EED);
        Ok(Trainer {
            model,
            config,
            optimizer,
            rng,
            epoch: 0,
        })
    }

    /// One pass over `examples` in a freshly shuffled order.
    pub fn run_epoch(&mut self, examples: &[ReviewExample]) -> Result<EpochReport> {
        if examples.is_empty() {
            return Err(Error::Config("cannot train on an empty dataset".into()));
        }
        let start = Instant::now();
        self.epoch += 1;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        self.rng.shuffle(&mut order);
        let mut weighted = 0.0;
        let mut tokens = 0usize;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&ReviewExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let mut out = batch_loss(&self.model, &batch)?;
            let diverged = |loss: f64| Error::Diverged {
                epoch: self.epoch,
                batch: b + 1,
                loss,
            };
            if !out.loss.is_finite() {
                return Err(diverged(out.loss));
            }
            let norm = clip_grad_norm(&mut out.grads, self.config.grad_clip_norm);
            if !norm.is_finite() {
                return Err(diverged(out.loss));
            }
            self.optimizer
                .step(&mut self.model.params, &out.grads, self.config.freeze_embeddings);
            for &(loss, n) in &out.per_example {
                weighted += loss * n as f64;
                tokens += n;
            }
        }
        let mean_loss = weighted / tokens as f64;
        Ok(EpochReport {
            epoch: self.epoch,
            mean_loss,
            perplexity: mean_loss.exp(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Trains for `config.epochs`, calling `on_epoch` after each epoch.
    pub fn run(
        &mut self,
        examples: &[ReviewExample],
        mut on_epoch: impl FnMut(&EpochReport, &Model) -> Result<()>,
    ) -> Result<TrainReport> {
        let start = Instant::now();
        let mut report = TrainReport::default();
        for _ in 0..self.config.epochs {
            let epoch = self.run_epoch(examples)?;
            info!(
                "epoch {}: loss {:.4} ppl {:.3} ({:.2}s)",
                epoch.epoch, epoch.mean_loss, epoch.perplexity, epoch.seconds
            );
            on_epoch(&epoch, &self.model)?;
            report.epochs.push(epoch);
        }
        report.seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

/// Builds a freshly initialized model and trains it.
pub fn train(examples: &[ReviewExample], vocab: &Vocabulary, config: &TrainConfig) -> Result<(Model, TrainReport)> {
    let raw_dim = examples
        .first()
        .map(|e| e.feature.len())
        .ok_or_else(|| Error::Config("cannot train on an empty dataset".into()))?;
    let model = Model::init(config.model_config(vocab.len(), raw_dim), vocab.clone(), config.seed)?;
    let mut trainer = Trainer::new(model, config.clone())?;
    let report = trainer.run(examples, |_, _| Ok(()))?;
    Ok((trainer.model, report))
}
