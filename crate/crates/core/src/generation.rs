//! Free-running decoding: greedy, beam search, and the rating-contrast
//! sentiment report.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecodeState, Model};
use crate::numerics::log_sum_exp;
use crate::textdata::{detokenize, tokenize, BOS, EOS, PAD, UNK};

/// Anything that scores the next token given a decoding state.
pub trait StepModel {
    type State: Clone;

    fn eos(&self) -> usize;

    /// State after the begin-of-sequence token.
    fn start(&self) -> Result<Self::State>;

    /// Log-probabilities of the next token. Disallowed tokens are `-inf`.
    fn log_probs(&self, state: &Self::State) -> Vec<f64>;

    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State>;
}

/// The model bound to one image feature and rating.
pub struct Conditioned<'a> {
    pub model: &'a Model,
    pub feature: &'a [f64],
    pub rating: i64,
}

/// Ids never emitted during generation.
const BANNED: [usize; 3] = [PAD, BOS, UNK];

impl StepModel for Conditioned<'_> {
    type State = DecodeState;

    fn eos(&self) -> usize {
        EOS
    }

    fn start(&self) -> Result<DecodeState> {
        self.model.start(self.feature, self.rating)
    }

    /// Log-softmax over the allowed tokens only.
    fn log_probs(&self, state: &DecodeState) -> Vec<f64> {
        let mut logits = state.logits.clone().into_inner();
        for &b in &BANNED {
            if b < logits.len() {
                logits[b] = f64::NEG_INFINITY;
            }
        }
        let norm = log_sum_exp(&logits);
        logits.iter().map(|&l| l - norm).collect()
    }

    fn advance(&self, state: &DecodeState, token: usize) -> Result<DecodeState> {
        self.model.feed(state, token)
    }
}

/// A (partial or complete) output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// generated ids, including a final EOS when one was emitted
    pub tokens: Vec<usize>,
    pub step_log_probs: Vec<f64>,
    pub total: f64,
}

impl Hypothesis {
    fn extend(&self, token: usize, log_prob: f64) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        let mut step_log_probs = self.step_log_probs.clone();
        step_log_probs.push(log_prob);
        Hypothesis {
            tokens,
            step_log_probs,
            total: self.total + log_prob,
        }
    }
}

/// Higher total first; ties by token sequence, lexicographically.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.total.total_cmp(&a.total).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Argmax decoding, lowest id on ties, at most `max_len` tokens.
pub fn greedy<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis> {
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        step_log_probs: Vec::new(),
        total: 0.0,
    };
    let mut state = model.start()?;
    while hyp.tokens.len() < max_len {
        let lp = model.log_probs(&state);
        let mut best = None;
        for (tok, &l) in lp.iter().enumerate() {
            if l > f64::NEG_INFINITY && best.is_none_or(|b: usize| l > lp[b]) {
                best = Some(tok);
            }
        }
        let tok = best.ok_or_else(|| Error::Config("no token may be emitted".into()))?;
        hyp = hyp.extend(tok, lp[tok]);
        if tok == model.eos() || hyp.tokens.len() == max_len {
            break;
        }
        state = model.advance(&state, tok)?;
    }
    Ok(hyp)
}

/// Length-synchronous beam search over summed log-probabilities.
///
/// Each step keeps the best `width` extensions of the live hypotheses.
/// Extensions ending in EOS, or reaching `max_len`, move to the finished
/// pool. Search stops early once no live hypothesis can beat the
/// `width`-th finished one. Returns up to `width` finished hypotheses,
/// best first.
pub fn beam_search<M: StepModel>(model: &M, width: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let root = Hypothesis {
        tokens: Vec::new(),
        step_log_probs: Vec::new(),
        total: 0.0,
    };
    let mut live = vec![(root, model.start()?)];
    let mut pool: Vec<Hypothesis> = Vec::new();

    while !live.is_empty() {
        let mut candidates: Vec<(Hypothesis, usize)> = Vec::new();
        for (i, (hyp, state)) in live.iter().enumerate() {
            for (tok, &l) in model.log_probs(state).iter().enumerate() {
                if l > f64::NEG_INFINITY {
                    candidates.push((hyp.extend(tok, l), i));
                }
            }
        }
        candidates.sort_by(|a, b| rank(&a.0, &b.0));
        candidates.truncate(width);

        let mut next = Vec::new();
        for (hyp, parent) in candidates {
            let last = *hyp.tokens.last().expect("extended hypothesis");
            if last == model.eos() || hyp.tokens.len() >= max_len {
                pool.push(hyp);
            } else {
                let state = model.advance(&live[parent].1, last)?;
                next.push((hyp, state));
            }
        }
        live = next;

        if pool.len() >= width {
            pool.sort_by(rank);
            let threshold = pool[width - 1].total;
            if live.iter().all(|(h, _)| h.total < threshold) {
                break;
            }
        }
    }
    pool.sort_by(rank);
    pool.truncate(width);
    Ok(pool)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub mode: DecodeMode,
    pub beam_width: usize,
    /// maximum number of emitted tokens, EOS included
    pub max_len: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            mode: DecodeMode::Greedy,
            beam_width: 1,
            max_len: crate::textdata::DEFAULT_MAX_LEN,
        }
    }
}

impl GenerationConfig {
    pub fn beam(width: usize) -> Self {
        GenerationConfig {
            mode: DecodeMode::Beam,
            beam_width: width,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReview {
    pub rating: u8,
    pub tokens: Vec<usize>,
    pub words: Vec<String>,
    pub text: String,
    pub step_log_probs: Vec<f64>,
    pub total_log_prob: f64,
    /// whether an EOS was emitted before the length cap
    pub finished: bool,
}

impl GeneratedReview {
    fn from_hypothesis(model: &Model, rating: i64, hyp: Hypothesis) -> Self {
        let words = model.vocab.decode(&hyp.tokens);
        GeneratedReview {
            rating: rating as u8,
            finished: hyp.tokens.last() == Some(&EOS),
            text: detokenize(&words),
            words,
            tokens: hyp.tokens,
            step_log_probs: hyp.step_log_probs,
            total_log_prob: hyp.total,
        }
    }
}

/// Generates one review for a stored feature vector and rating.
pub fn generate(model: &Model, feature: &[f64], rating: i64, cfg: &GenerationConfig) -> Result<GeneratedReview> {
    Ok(generate_top(model, feature, rating, cfg)?.remove(0))
}

/// Like [`generate`] but returns every beam, best first.
pub fn generate_top(
    model: &Model,
    feature: &[f64],
    rating: i64,
    cfg: &GenerationConfig,
) -> Result<Vec<GeneratedReview>> {
    model.encode_rating(rating)?;
    let scorer = Conditioned { model, feature, rating };
    let hyps = match cfg.mode {
        DecodeMode::Greedy => vec![greedy(&scorer, cfg.max_len)?],
        DecodeMode::Beam => beam_search(&scorer, cfg.beam_width, cfg.max_len)?,
    };
    if hyps.is_empty() {
        return Err(Error::Config("decoding produced no hypothesis".into()));
    }
    Ok(hyps
        .into_iter()
        .map(|h| GeneratedReview::from_hypothesis(model, rating, h))
        .collect())
}

/// A sentiment word list.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Lexicon {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Lexicon {
            words: words.into_iter().flat_map(|w| tokenize(w.as_ref())).collect(),
        }
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: format!("cannot read lexicon: {e}"),
        })?;
        Ok(Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSide {
    pub generation: GeneratedReview,
    pub positive: usize,
    pub negative: usize,
    /// positive hits per generated word
    pub positive_freq: f64,
    pub negative_freq: f64,
}

impl SentimentSide {
    fn score(generation: GeneratedReview, positive: &Lexicon, negative: &Lexicon) -> Self {
        let pos = generation.words.iter().filter(|w| positive.contains(w)).count();
        let neg = generation.words.iter().filter(|w| negative.contains(w)).count();
        let n = generation.words.len();
        let freq = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        SentimentSide {
            positive_freq: freq(pos),
            negative_freq: freq(neg),
            positive: pos,
            negative: neg,
            generation,
        }
    }

    pub fn polarity(&self) -> f64 {
        self.positive_freq - self.negative_freq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub high: SentimentSide,
    pub low: SentimentSide,
    /// `(pos₅ − neg₅) − (pos₁ − neg₁)` over lexicon frequencies
    pub divergence: f64,
    pub identical: bool,
}

/// Generates under ratings 5 and 1 for the same feature and contrasts their
/// lexicon polarity.
pub fn sentiment_divergence(
    model: &Model,
    feature: &[f64],
    positive: &Lexicon,
    negative: &Lexicon,
    cfg: &GenerationConfig,
) -> Result<SentimentReport> {
    let high = SentimentSide::score(generate(model, feature, 5, cfg)?, positive, negative);
    let low = SentimentSide::score(generate(model, feature, 1, cfg)?, positive, negative);
    Ok(SentimentReport {
        divergence: high.polarity() - low.polarity(),
        identical: high.generation.tokens == low.generation.tokens,
        high,
        low,
    })
}
