//! `revgen`: prepare data, train, check gradients, and generate reviews.
//!
//! Machine-readable results go to stdout as JSON; logs go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use revgen::checkpoint::{load_checkpoint, save_checkpoint};
use revgen::generation::{generate_top, DecodeMode, GeneratedReview, Lexicon};
use revgen::gradcheck::gradcheck;
use revgen::textdata::{load_embeddings, DEFAULT_MAX_LEN, DEFAULT_MIN_COUNT};
use revgen::{
    load_dataset, sentiment_divergence, DataConfig, Dataset, FeatureTable, GenerationConfig, MaskNorm, Model,
    OptimizerKind, RatingEncoding, TrainConfig, Trainer,
};

#[derive(Parser)]
#[command(
    name = "revgen",
    version,
    about = "Rating-guided review generation from image features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and encode reviews; writes vocabulary, examples, features, and stats.
    PrepareData(PrepareArgs),
    /// Train a model on a prepared data directory.
    Train(TrainArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a review for one image feature and rating.
    Generate(GenerateArgs),
    /// Contrast generations under ratings 5 and 1 with sentiment lexicons.
    EvalSentiment(SentimentArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// reviews, one JSON object per line
    #[arg(long)]
    reviews: PathBuf,
    /// binary feature file
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// reject feature files of any other width
    #[arg(long)]
    feature_dim: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskNormArg {
    None,
    Softmax,
    Sigmoid,
}

#[derive(Clone, Copy, ValueEnum)]
enum RatingEncodingArg {
    OneHot,
    Scalar,
}

#[derive(Args)]
struct TrainArgs {
    /// directory written by prepare-data
    #[arg(long)]
    data: PathBuf,
    /// checkpoint path, rewritten after every epoch
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    feat_dim: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    /// global gradient-norm clip
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    /// initial word vectors, `token v1 v2 ...` per line
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    freeze_embeddings: bool,
    #[arg(long, value_enum, default_value_t = MaskNormArg::None)]
    mask_norm: MaskNormArg,
    #[arg(long, value_enum, default_value_t = RatingEncodingArg::OneHot)]
    rating_encoding: RatingEncodingArg,
    /// apply tanh to the cell before the output gate
    #[arg(long)]
    output_tanh: bool,
    /// bound on |c|; 0 disables clipping
    #[arg(long, default_value_t = revgen::glstm::DEFAULT_CELL_CLIP)]
    cell_clip: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// size of every dimension (1..=8)
    #[arg(long, default_value_t = 4)]
    dims: usize,
}

#[derive(Args)]
struct FeatureSource {
    /// product id to look up
    #[arg(long)]
    feature_id: Option<String>,
    /// binary feature file; may be omitted when --data is given
    #[arg(long)]
    feature_file: Option<PathBuf>,
    /// prepared data directory whose features to use
    #[arg(long)]
    data: Option<PathBuf>,
}

impl FeatureSource {
    fn resolve(&self, expected_dim: usize) -> Result<(String, Vec<f64>)> {
        let path = match (&self.feature_file, &self.data) {
            (Some(f), _) => f.clone(),
            (None, Some(dir)) => dir.join(revgen::textdata::FEATURES_FILE),
            (None, None) => bail!("one of --feature-file or --data is required"),
        };
        let table = FeatureTable::read(&path, Some(expected_dim))
            .with_context(|| format!("reading features from {}", path.display()))?;
        let id = match &self.feature_id {
            Some(id) => id.clone(),
            None if table.len() == 1 => table.iter().next().map(|(id, _)| id.to_string()).unwrap_or_default(),
            None => bail!(
                "{} holds {} features; choose one with --feature-id",
                path.display(),
                table.len()
            ),
        };
        let feature = table
            .get(&id)
            .with_context(|| format!("no feature for product {id:?} in {}", path.display()))?;
        Ok((id, feature.to_vec()))
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// beam width; 1 decodes greedily
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// maximum number of generated tokens
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
}

impl DecodeArgs {
    fn config(&self) -> Result<GenerationConfig> {
        if self.beam == 0 || self.max_len == 0 {
            bail!("--beam and --max-len must be positive");
        }
        Ok(GenerationConfig {
            mode: if self.beam == 1 {
                DecodeMode::Greedy
            } else {
                DecodeMode::Beam
            },
            beam_width: self.beam,
            max_len: self.max_len,
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    source: FeatureSource,
    /// purchaser rating, 1 to 5
    #[arg(long, allow_negative_numbers = true)]
    rating: i64,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct SentimentArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    source: FeatureSource,
    /// positive words, one per line
    #[arg(long)]
    pos: PathBuf,
    /// negative words, one per line
    #[arg(long)]
    neg: PathBuf,
    #[command(flatten)]
    decode: DecodeArgs,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn prepare(args: &PrepareArgs) -> Result<()> {
    let config = DataConfig {
        max_len: args.max_len,
        min_count: args.min_count,
        feature_dim: args.feature_dim,
        vocab: None,
    };
    let ds = load_dataset(&args.reviews, &args.features, &config)?;
    ds.save(&args.out)
        .with_context(|| format!("writing prepared data to {}", args.out.display()))?;
    print_json(&ds.stats)
}

fn train_config(args: &TrainArgs, min_count: usize) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        optimizer: match args.optimizer {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        },
        grad_clip_norm: args.clip,
        seed: args.seed,
        max_len: DEFAULT_MAX_LEN,
        feature_dim: args.feat_dim,
        hidden_dim: args.hidden_dim,
        embed_dim: args.embed_dim,
        min_count,
        freeze_embeddings: args.freeze_embeddings,
        mask_norm: match args.mask_norm {
            MaskNormArg::None => MaskNorm::None,
            MaskNormArg::Softmax => MaskNorm::Softmax,
            MaskNormArg::Sigmoid => MaskNorm::Sigmoid,
        },
        rating_encoding: match args.rating_encoding {
            RatingEncodingArg::OneHot => RatingEncoding::OneHot,
            RatingEncodingArg::Scalar => RatingEncoding::Scalar,
        },
        output_tanh: args.output_tanh,
        cell_clip: (args.cell_clip > 0.0).then_some(args.cell_clip),
    }
}

fn train(args: &TrainArgs) -> Result<()> {
    let ds = Dataset::load(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let mut config = train_config(args, ds.stats.min_count);
    config.max_len = ds.stats.max_len;
    let model_config = config.model_config(ds.vocab.len(), ds.features.dim());
    let mut model = Model::init(model_config, ds.vocab.clone(), config.seed)?;
    if let Some(path) = &args.embeddings {
        let rows = load_embeddings(path, &ds.vocab, config.embed_dim)?;
        info!(
            "loaded {} of {} word vectors from {}",
            rows.len(),
            ds.vocab.len(),
            path.display()
        );
        for (id, v) in rows {
            model.params.embedding.row_mut(id).copy_from_slice(&v);
        }
    }
    info!(
        "training on {} examples, vocabulary {}, {} parameters",
        ds.examples.len(),
        ds.vocab.len(),
        model.params.num_params()
    );
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(&ds.examples, |epoch, model| {
        save_checkpoint(model, Some(&config), &args.out)?;
        println!("{}", serde_json::to_string(epoch)?);
        Ok(())
    })?;
    Ok(())
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let summary = gradcheck(args.dims, args.seed)?;
    print_json(&summary)?;
    Ok(summary.passed)
}

#[derive(Serialize)]
struct GenerateOutput<'a> {
    feature_id: &'a str,
    rating: i64,
    mode: DecodeMode,
    beam_width: usize,
    /// best first
    results: Vec<GeneratedReview>,
}

fn load_model(path: &Path) -> Result<Model> {
    Ok(load_checkpoint(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?
        .model)
}

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let cfg = args.decode.config()?;
    let model = load_model(&args.ckpt)?;
    model.encode_rating(args.rating)?;
    let (id, feature) = args.source.resolve(model.config.raw_feature_dim)?;
    let results = generate_top(&model, &feature, args.rating, &cfg)?;
    print_json(&GenerateOutput {
        feature_id: &id,
        rating: args.rating,
        mode: cfg.mode,
        beam_width: cfg.beam_width,
        results,
    })
}

#[derive(Serialize)]
struct SentimentOutput<'a> {
    feature_id: &'a str,
    #[serde(flatten)]
    report: revgen::generation::SentimentReport,
}

fn run_sentiment(args: &SentimentArgs) -> Result<()> {
    let cfg = args.decode.config()?;
    let model = load_model(&args.ckpt)?;
    let (id, feature) = args.source.resolve(model.config.raw_feature_dim)?;
    let pos = Lexicon::load(&args.pos)?;
    let neg = Lexicon::load(&args.neg)?;
    let report = sentiment_divergence(&model, &feature, &pos, &neg, &cfg)?;
    print_json(&SentimentOutput {
        feature_id: &id,
        report,
    })
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::PrepareData(a) => prepare(a)?,
        Command::Train(a) => train(a)?,
        Command::Gradcheck(a) => return run_gradcheck(a),
        Command::Generate(a) => run_generate(a)?,
        Command::EvalSentiment(a) => run_sentiment(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
