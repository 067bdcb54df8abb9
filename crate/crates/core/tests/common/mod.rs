#![allow(dead_code)]

use std::path::PathBuf;

use revgen::glstm::CellOptions;
use revgen::numerics::Rng;
use revgen::{DataConfig, Dataset, Model, ModelConfig, Vector, Vocabulary};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn toy_dataset() -> Dataset {
    let cfg = DataConfig {
        min_count: 1,
        feature_dim: Some(32),
        ..Default::default()
    };
    let dir = fixtures();
    revgen::load_dataset(&dir.join("toy_reviews.jsonl"), &dir.join("toy_features.bin"), &cfg).unwrap()
}

pub fn vocab(n_words: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..n_words).map(|i| format!("w{i}"))).unwrap()
}

/// Small random model with nonzero biases and no cell clipping.
pub fn small_model(vocab_words: usize, raw: usize, f: usize, hidden: usize, embed: usize, seed: u64) -> Model {
    let v = vocab(vocab_words);
    let mut cfg = ModelConfig::new(v.len(), raw);
    cfg.feature_dim = f;
    cfg.hidden_dim = hidden;
    cfg.embed_dim = embed;
    cfg.init_scale = 0.5;
    cfg.cell = CellOptions::exact();
    let mut model = Model::init(cfg, v, seed).unwrap();
    let mut rng = Rng::new(seed.wrapping_add(99));
    for t in model.params.tensors_mut() {
        if t.name.contains("b_") {
            for x in t.data.iter_mut() {
                *x = rng.uniform(-0.5, 0.5);
            }
        }
    }
    model
}

pub fn random_vector(n: usize, rng: &mut Rng) -> Vector {
    Vector::from_fn(n, |_| rng.uniform(-1.0, 1.0))
}
