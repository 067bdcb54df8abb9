//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use revgen::checkpoint::{load_checkpoint, save_checkpoint};
use revgen::generation::{beam_search, greedy, Conditioned, Lexicon, StepModel};
use revgen::glstm::{CellOptions, GlstmParams};
use revgen::gradcheck::{check_model, ModelCheckDims};
use revgen::numerics::{sigmoid, softmax, tanh, Rng};
use revgen::textdata::{DropReason, BOS, EOS};
use revgen::{
    generate, load_dataset, rollout, sentiment_divergence, train, Checkpoint, DataConfig, Dataset, Error,
    GenerationConfig, Model, ModelConfig, TrainConfig, Vocabulary,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn toy_dataset() -> Dataset {
    let cfg = DataConfig {
        min_count: 1,
        feature_dim: Some(32),
        ..Default::default()
    };
    load_dataset(
        &fixtures().join("toy_reviews.jsonl"),
        &fixtures().join("toy_features.bin"),
        &cfg,
    )
    .unwrap()
}

fn memorize_config() -> TrainConfig {
    TrainConfig {
        epochs: 300,
        learning_rate: 1e-2,
        seed: 0,
        min_count: 1,
        ..Default::default()
    }
}

fn random_model(words: usize, raw: usize, f: usize, hidden: usize, embed: usize, seed: u64) -> Model {
    let vocab = Vocabulary::from_tokens((0..words).map(|i| format!("w{i}"))).unwrap();
    let mut cfg = ModelConfig::new(vocab.len(), raw);
    cfg.feature_dim = f;
    cfg.hidden_dim = hidden;
    cfg.embed_dim = embed;
    cfg.init_scale = 0.5;
    cfg.cell = CellOptions::exact();
    let mut model = Model::init(cfg, vocab, seed).unwrap();
    let mut rng = Rng::new(!seed);
    for t in model.params.tensors_mut() {
        if t.name.contains("b_") {
            t.data.iter_mut().for_each(|b| *b = rng.uniform(-0.5, 0.5));
        }
    }
    model
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let dims = ModelCheckDims {
        vocab_size: 6,
        feature_dim: 4,
        raw_feature_dim: 6,
        hidden_dim: 4,
        embed_dim: 4,
        seq_len: 5,
        ..ModelCheckDims::uniform(4, 5)
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..20 {
        let r = check_model(&dims, seed).map_err(|e| e.to_string())?;
        ensure!(
            r.passed,
            "seed {seed}: max relative error {:.3e} at {}",
            r.max_rel_error,
            r.worst
        );
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "20 seeds, {checked} entries, max relative error {worst:.2e}, {secs:.1}s"
    ))
}

/// One step of an ordinary LSTM, without any guidance input.
fn plain_lstm(p: &GlstmParams, x: &[f64], m: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = m.len();
    let gates = p.gates();
    let mut act = vec![vec![0.0; h]; 4];
    for (k, (gate, out)) in gates.iter().zip(act.iter_mut()).enumerate() {
        for (r, slot) in out.iter_mut().enumerate() {
            let mut sx = 0.0;
            for (j, xj) in x.iter().enumerate() {
                sx += gate.w_x.get(r, j) * xj;
            }
            let mut sm = 0.0;
            for (j, mj) in m.iter().enumerate() {
                sm += gate.w_m.get(r, j) * mj;
            }
            let a = sx + sm + gate.b[r];
            *slot = if k == 3 { tanh(a) } else { sigmoid(a) };
        }
    }
    let c_new: Vec<f64> = (0..h).map(|r| act[1][r] * c[r] + act[0][r] * act[3][r]).collect();
    let m_new = (0..h).map(|r| act[2][r] * c_new[r]).collect();
    (m_new, c_new)
}

fn guidance_zero() -> Outcome {
    let tokens = [BOS, 4, 7, 5, 8, 6, EOS];
    let raw = [0.3, -0.6, 0.9, 0.1];
    let mut steps = 0;
    for seed in 0..10 {
        let mut model = random_model(5, 4, 4, 5, 3, seed);
        model.params.clear_guidance();
        let p = &model.params;
        let (mut lm, mut lc) = (vec![0.0; 4], vec![0.0; 4]);
        let (mut um, mut uc) = (vec![0.0; 5], vec![0.0; 5]);
        let mut reference = Vec::new();
        for &tok in &tokens {
            let x = p.embedding.row(tok);
            (lm, lc) = plain_lstm(&p.lower, x, &lm, &lc);
            (um, uc) = plain_lstm(&p.decoder.cell, x, &um, &uc);
            let logits: Vec<f64> = (0..model.vocab.len())
                .map(|k| {
                    let mut s = 0.0;
                    for (j, mj) in um.iter().enumerate() {
                        s += p.decoder.w_y.get(k, j) * mj;
                    }
                    p.decoder.b_y[k] + s
                })
                .collect();
            reference.push(softmax(&logits).unwrap());
        }
        let f = model.project(&raw).unwrap();
        for rating in 1..=5 {
            let dists = rollout(&model, &f, &model.encode_rating(rating).unwrap(), &tokens).unwrap();
            for (t, d) in dists.iter().enumerate() {
                let same = d
                    .probs
                    .iter()
                    .zip(reference[t].iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                ensure!(
                    same,
                    "seed {seed} rating {rating} step {t} differs from the reference LSTM"
                );
                steps += 1;
            }
        }
        let cfg = GenerationConfig {
            max_len: 20,
            ..Default::default()
        };
        let first = generate(&model, &raw, 1, &cfg).unwrap();
        for rating in 2..=5 {
            let out = generate(&model, &raw, rating, &cfg).unwrap();
            ensure!(
                out.tokens == first.tokens,
                "seed {seed}: rating {rating} generated differently"
            );
        }
    }
    Ok(format!(
        "{steps} rollout steps bit-identical to a plain LSTM; generations equal for all ratings"
    ))
}

fn memorization(ds: &Dataset, model: &Model, loss: f64, secs: f64) -> Outcome {
    ensure!(loss < 0.1, "final mean token loss {loss}");
    ensure!(secs < 300.0, "took {secs:.1}s");
    for ex in &ds.examples {
        let out = generate(model, &ex.feature, ex.rating as i64, &GenerationConfig::default()).unwrap();
        ensure!(
            out.tokens == ex.tokens[1..],
            "{} rated {}: got {:?}",
            ex.product_id,
            ex.rating,
            out.text
        );
    }
    Ok(format!(
        "final loss {loss:.2e} after 300 epochs in {secs:.1}s; {} reviews reproduced",
        ds.examples.len()
    ))
}

fn emotional_guidance(ds: &Dataset, model: &Model) -> Outcome {
    let pos = Lexicon::load(&fixtures().join("pos.txt")).unwrap();
    let neg = Lexicon::load(&fixtures().join("neg.txt")).unwrap();
    let mut least = f64::INFINITY;
    for (id, feature) in ds.features.iter() {
        let r = sentiment_divergence(model, feature, &pos, &neg, &GenerationConfig::default()).unwrap();
        ensure!(r.divergence > 0.0, "{id}: divergence {}", r.divergence);
        ensure!(!r.identical, "{id}: identical generations");
        least = least.min(r.divergence);
    }
    Ok(format!(
        "divergence > 0 for all {} products (min {least:.3})",
        ds.features.len()
    ))
}

struct ToyModel;

impl StepModel for ToyModel {
    type State = Vec<usize>;
    fn eos(&self) -> usize {
        0
    }
    fn start(&self) -> revgen::Result<Vec<usize>> {
        Ok(Vec::new())
    }
    fn log_probs(&self, prefix: &Vec<usize>) -> Vec<f64> {
        let p = match prefix.as_slice() {
            [] => [0.1, 0.5, 0.4],
            [1] => [0.4, 0.3, 0.3],
            [2] => [0.05, 0.9, 0.05],
            [1, 1] => [0.5, 0.25, 0.25],
            [1, 2] => [0.2, 0.2, 0.6],
            [2, 1] => [0.7, 0.1, 0.2],
            [2, 2] => [0.3, 0.3, 0.4],
            _ => unreachable!(),
        };
        p.iter().map(|x: &f64| x.ln()).collect()
    }
    fn advance(&self, prefix: &Vec<usize>, token: usize) -> revgen::Result<Vec<usize>> {
        let mut next = prefix.clone();
        next.push(token);
        Ok(next)
    }
}

fn exhaustive(max_len: usize) -> Vec<(Vec<usize>, f64)> {
    let m = ToyModel;
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), 0.0)];
    while let Some((prefix, total)) = stack.pop() {
        for (tok, l) in m.log_probs(&prefix).into_iter().enumerate() {
            let mut seq = prefix.clone();
            seq.push(tok);
            if tok == m.eos() || seq.len() == max_len {
                out.push((seq, total + l));
            } else {
                stack.push((seq, total + l));
            }
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn beam_oracle() -> Outcome {
    let all = exhaustive(3);
    ensure!(all.len() == 15, "enumerated {} sequences", all.len());
    let beams = beam_search(&ToyModel, 2, 3).map_err(|e| e.to_string())?;
    ensure!(beams.len() == 2, "beam returned {} hypotheses", beams.len());
    for (b, (seq, total)) in beams.iter().zip(&all) {
        ensure!(
            &b.tokens == seq && (b.total - total).abs() < 1e-12,
            "beam {:?} vs enumeration {seq:?}",
            b.tokens
        );
    }
    let feature = [0.7, -0.2, 0.4, 1.1];
    for seed in 0..50 {
        let model = random_model(6, 4, 4, 5, 3, seed);
        let scorer = Conditioned {
            model: &model,
            feature: &feature,
            rating: 1 + (seed % 5) as i64,
        };
        let g = greedy(&scorer, 10).unwrap();
        let b = beam_search(&scorer, 3, 10).unwrap();
        ensure!(
            b[0].total >= g.total,
            "seed {seed}: beam {} < greedy {}",
            b[0].total,
            g.total
        );
    }
    Ok(format!(
        "width-2 beam = exhaustive top 2 {:?}, {:?}; beam >= greedy on 50 random models",
        all[0].0, all[1].0
    ))
}

fn data_contract() -> Outcome {
    let dir = fixtures();
    let cfg = DataConfig {
        min_count: 1,
        ..Default::default()
    };
    let ds = load_dataset(&dir.join("boundary_reviews.jsonl"), &dir.join("toy_features.bin"), &cfg)
        .map_err(|e| e.to_string())?;
    ensure!(ds.examples.len() == 1, "{} examples kept", ds.examples.len());
    ensure!(
        ds.examples[0].tokens.len() == 102,
        "kept review has {} ids",
        ds.examples[0].tokens.len()
    );
    ensure!(
        ds.stats.dropped.len() == 1
            && ds.stats.dropped[0].reason == DropReason::TooLong
            && ds.stats.dropped[0].tokens == 101,
        "unexpected drops {:?}",
        ds.stats.dropped
    );

    match load_dataset(
        &dir.join("bad_rating_reviews.jsonl"),
        &dir.join("toy_features.bin"),
        &cfg,
    ) {
        Err(Error::Record { line: 2, .. }) => {}
        other => return Err(format!("rating 7 not rejected at line 2: {:?}", other.map(|d| d.stats))),
    }
    for bad in [0, 6, -3] {
        ensure!(
            matches!(revgen::textdata::encode_rating(bad), Err(Error::Rating(_))),
            "rating {bad} accepted"
        );
    }

    let strict = DataConfig {
        feature_dim: Some(32),
        ..cfg
    };
    ensure!(
        load_dataset(
            &dir.join("toy_reviews.jsonl"),
            &dir.join("wrong_dim_features.bin"),
            &strict
        )
        .is_err(),
        "16-dim features accepted for F=32"
    );
    Ok("100 tokens kept, 101 dropped; rating 7 rejected at line 2; 16-dim features rejected".into())
}

fn round_trip(ds: &Dataset, model: &Model, config: &TrainConfig) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("model.ckpt");
    save_checkpoint(model, Some(config), &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?.model;
    let cfg = GenerationConfig::default();
    for ex in &ds.examples {
        for rating in [1, 5] {
            let a = generate(model, &ex.feature, rating, &cfg).unwrap();
            let b = generate(&loaded, &ex.feature, rating, &cfg).unwrap();
            ensure!(
                a.tokens == b.tokens,
                "{} rating {rating} changed after reload",
                ex.product_id
            );
        }
    }
    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let resaved = Checkpoint::new(loaded, Some(config.clone())).to_bytes().unwrap();
    ensure!(resaved == bytes, "save -> load -> save is not byte-identical");

    let mut flipped = bytes.clone();
    flipped[bytes.len() - 100] ^= 0x10;
    ensure!(
        matches!(Checkpoint::from_bytes(&flipped), Err(Error::Checksum { .. })),
        "flipped byte accepted"
    );
    ensure!(
        matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Truncated(_))
        ),
        "truncated file accepted"
    );
    let mut version = bytes.clone();
    version[4] = 2;
    ensure!(
        matches!(Checkpoint::from_bytes(&version), Err(Error::Version { .. })),
        "version 2 accepted"
    );
    let mut magic = bytes;
    magic[..4].copy_from_slice(b"JUNK");
    ensure!(
        matches!(Checkpoint::from_bytes(&magic), Err(Error::BadMagic)),
        "bad magic accepted"
    );
    Ok("greedy output unchanged after reload; flipped, truncated, re-versioned and foreign files rejected".into())
}

fn revgen_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_revgen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "revgen {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let fx = fixtures();
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let data = root.join("data");
    revgen_cli(&[
        "prepare-data",
        "--reviews",
        &s(&fx.join("toy_reviews.jsonl")),
        "--features",
        &s(&fx.join("toy_features.bin")),
        "--out",
        &s(&data),
        "--min-count",
        "1",
    ])?;
    let mut runs = Vec::new();
    for run in 0..2 {
        let ckpt = root.join(format!("run{run}.ckpt"));
        let report = revgen_cli(&[
            "train",
            "--data",
            &s(&data),
            "--out",
            &s(&ckpt),
            "--epochs",
            "15",
            "--lr",
            "1e-2",
            "--seed",
            "3",
            "--batch-size",
            "3",
        ])?;
        let generated = revgen_cli(&[
            "generate",
            "--ckpt",
            &s(&ckpt),
            "--data",
            &s(&data),
            "--feature-id",
            "kettle",
            "--rating",
            "5",
            "--beam",
            "3",
            "--max-len",
            "20",
        ])?;
        let bytes = fs::read(&ckpt).map_err(|e| e.to_string())?;
        runs.push((report, generated, bytes));
    }
    ensure!(runs[0].0 == runs[1].0, "training reports differ");
    ensure!(runs[0].1 == runs[1].1, "generations differ");
    ensure!(runs[0].2 == runs[1].2, "checkpoints differ");
    let lines = runs[0].0.iter().filter(|&&b| b == b'\n').count();
    ensure!(lines == 15, "expected 15 report lines, got {lines}");
    Ok(format!(
        "2 runs: {lines} report lines, generation and checkpoint bytes identical"
    ))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 gradient fidelity", guarded(gradient_fidelity)));
    results.push(("2 guidance-zero oracle", guarded(guidance_zero)));

    let trained = guarded(|| {
        let ds = toy_dataset();
        let start = Instant::now();
        let config = memorize_config();
        let (model, report) = train(&ds.examples, &ds.vocab, &config).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let loss = report.final_loss().unwrap_or(f64::INFINITY);
        Ok::<_, String>((ds, model, config, loss, secs))
    });
    match &trained {
        Ok((ds, model, config, loss, secs)) => {
            results.push(("3 memorization", guarded(|| memorization(ds, model, *loss, *secs))));
            results.push(("4 emotional guidance", guarded(|| emotional_guidance(ds, model))));
            results.push(("5 beam oracle", guarded(beam_oracle)));
            results.push(("6 data contract", guarded(data_contract)));
            results.push(("7 checkpoint round trip", guarded(|| round_trip(ds, model, config))));
        }
        Err(e) => {
            results.push(("3 memorization", Err(format!("training failed: {e}"))));
            results.push(("4 emotional guidance", Err("no trained model".into())));
            results.push(("5 beam oracle", guarded(beam_oracle)));
            results.push(("6 data contract", guarded(data_contract)));
            results.push(("7 checkpoint round trip", Err("no trained model".into())));
        }
    }
    results.push(("8 determinism", guarded(determinism)));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
