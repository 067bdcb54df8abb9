//! Tokenization, vocabulary, and ingestion of the review/feature files.
//!
//! Reviews are JSON Lines, one `{"product_id", "rating", "review"}` object
//! per line. Image features live in a little-endian binary file:
//!
//! ```text
//! "IMGF" | u32 count | u32 dim | count × (u16 id_len | id bytes | dim × f32)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{RatingEncoding, RatingGuidance};
use crate::numerics::Vector;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_RESERVED: usize = 4;
pub const RESERVED_TOKENS: [&str; NUM_RESERVED] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Default cap on review length, in tokens.
pub const DEFAULT_MAX_LEN: usize = 100;
pub const DEFAULT_MIN_COUNT: usize = 5;

const FEATURE_MAGIC: &[u8; 4] = b"IMGF";
const PUNCTUATION: [char; 6] = ['.', ',', '!', '?', ';', ':'];

fn is_punct(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Lowercases, splits on whitespace, and splits `.,!?;:` into their own
/// tokens. Apostrophes stay inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punct(c) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Joins tokens with spaces, attaching punctuation to the preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let attach = tok.chars().count() == 1 && tok.chars().all(is_punct);
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Token ↔ id table. Ids 0..4 are `<pad> <bos> <eos> <unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Counts tokens and keeps those seen at least `min_count` times,
    /// most frequent first, ties broken alphabetically.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in corpus {
            for tok in seq {
                let tok = tok.as_ref();
                if !RESERVED_TOKENS.contains(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Vocabulary from the non-reserved tokens, in id order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        Self::from_full_list(all)
    }

    /// Vocabulary from a complete id-ordered list, reserved tokens included.
    pub fn from_full_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED] != RESERVED_TOKENS {
            return Err(Error::Config(format!("vocabulary must start with {RESERVED_TOKENS:?}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[BOS, ids…, EOS]`
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(BOS);
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref())));
        ids.push(EOS);
        ids
    }

    /// Surface tokens for `ids`, skipping reserved control ids other than UNK.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id >= NUM_RESERVED || id == UNK)
            .filter_map(|&id| self.token(id).map(str::to_string))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for tok in &self.tokens {
            writeln!(w, "{tok}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_full_list(text.lines().map(str::to_string).collect()).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

pub fn encode_rating(rating: i64) -> Result<RatingGuidance> {
    RatingEncoding::OneHot.encode(rating)
}

/// One aligned training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewExample {
    pub product_id: String,
    pub rating: u8,
    /// `[BOS, …, EOS]`
    pub tokens: Vec<usize>,
    /// stored (unprojected) image feature
    pub feature: Vector,
}

/// Image features keyed by product id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    dim: usize,
    ids: Vec<String>,
    values: Vec<Vector>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, product_id: impl Into<String>, feature: Vector) -> Result<()> {
        let product_id = product_id.into();
        if feature.len() != self.dim {
            return Err(Error::shape(
                "FeatureTable::insert",
                format!("feature of length {}", feature.len()),
                format!("table dim {}", self.dim),
            ));
        }
        if product_id.len() > u16::MAX as usize {
            return Err(Error::Config(format!("product id longer than {} bytes", u16::MAX)));
        }
        if self.index.contains_key(&product_id) {
            return Err(Error::Config(format!("duplicate product id {product_id:?}")));
        }
        self.index.insert(product_id.clone(), self.ids.len());
        self.ids.push(product_id);
        self.values.push(feature);
        Ok(())
    }

    pub fn get(&self, product_id: &str) -> Option<&Vector> {
        self.index.get(product_id).map(|&i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector)> {
        self.ids.iter().map(String::as_str).zip(&self.values)
    }

    /// Reads a feature file; `expected_dim` rejects files of another width.
    pub fn read(path: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let fmt_err = |msg: String| Error::Format {
            path: path.to_path_buf(),
            msg,
        };
        let file = File::open(path).map_err(|e| fmt_err(format!("cannot open feature file: {e}")))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "header").map_err(fmt_err)?;
        if &magic != FEATURE_MAGIC {
            return Err(fmt_err("missing IMGF magic".into()));
        }
        let count = read_u32(&mut r, "header").map_err(fmt_err)? as usize;
        let dim = read_u32(&mut r, "header").map_err(fmt_err)? as usize;
        if let Some(want) = expected_dim {
            if want != dim {
                return Err(fmt_err(format!("feature dim {dim} does not match configured {want}")));
            }
        }
        let mut table = FeatureTable::new(dim);
        let mut buf = vec![0u8; dim * 4];
        for rec in 0..count {
            let what = format!("record {rec}");
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, &what).map_err(fmt_err)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut id, &what).map_err(fmt_err)?;
            let id = String::from_utf8(id).map_err(|_| fmt_err(format!("{what}: product id is not UTF-8")))?;
            read_exact(&mut r, &mut buf, &what).map_err(fmt_err)?;
            let values: Vector = buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            if !values.is_finite() {
                return Err(fmt_err(format!("{what}: non-finite feature value")));
            }
            table.insert(id, values).map_err(|e| fmt_err(format!("{what}: {e}")))?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(fmt_err(format!("trailing bytes after {count} records")));
        }
        Ok(table)
    }

    /// Writes the table; values are narrowed to `f32`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for (id, values) in self.iter() {
            w.write_all(&(id.len() as u16).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for &v in values.iter() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> std::result::Result<(), String> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format!("truncated in {what}"),
        _ => format!("{what}: {e}"),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// One line of the reviews file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub product_id: String,
    pub rating: f64,
    pub review: String,
}

/// Parses a rating, accepting integral floats such as `5.0`.
pub fn parse_rating(value: f64) -> std::result::Result<u8, String> {
    if value.fract() != 0.0 || !(1.0..=5.0).contains(&value) {
        return Err(format!("rating {value} is not an integer in 1..=5"));
    }
    Ok(value as u8)
}

/// Reads the reviews file; any malformed line is an error naming it.
pub fn read_reviews(path: &Path) -> Result<Vec<(usize, ReviewRecord)>> {
    let file = File::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: format!("cannot open reviews file: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |msg: String| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let rec: ReviewRecord = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        parse_rating(rec.rating).map_err(record_err)?;
        out.push((line_no, rec));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooLong,
    MissingFeature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub line: usize,
    pub product_id: String,
    pub reason: DropReason,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub kept: usize,
    pub dropped_too_long: usize,
    pub dropped_missing_feature: usize,
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub max_len: usize,
    pub min_count: usize,
    pub dropped: Vec<DroppedRecord>,
}

#[derive(Debug, Clone)]
pub struct DataConfig {
    /// Reviews with more tokens than this are dropped.
    pub max_len: usize,
    pub min_count: usize,
    /// Reject feature files whose width differs.
    pub feature_dim: Option<usize>,
    /// Use this vocabulary instead of building one.
    pub vocab: Option<Vocabulary>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            max_len: DEFAULT_MAX_LEN,
            min_count: DEFAULT_MIN_COUNT,
            feature_dim: None,
            vocab: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub examples: Vec<ReviewExample>,
    pub features: FeatureTable,
    pub stats: DatasetStats,
}

/// Loads, filters, and encodes reviews aligned with their image features.
pub fn load_dataset(reviews_path: &Path, features_path: &Path, config: &DataConfig) -> Result<Dataset> {
    let all_features = FeatureTable::read(features_path, config.feature_dim)?;
    let records = read_reviews(reviews_path)?;

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (line, rec) in &records {
        let tokens = tokenize(&rec.review);
        let reason = if tokens.len() > config.max_len {
            Some(DropReason::TooLong)
        } else if all_features.get(&rec.product_id).is_none() {
            Some(DropReason::MissingFeature)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                warn!(
                    "{}:{line}: dropping {:?} ({reason:?}, {} tokens)",
                    reviews_path.display(),
                    rec.product_id,
                    tokens.len()
                );
                dropped.push(DroppedRecord {
                    line: *line,
                    product_id: rec.product_id.clone(),
                    reason,
                    tokens: tokens.len(),
                });
            }
            None => kept.push((rec, tokens)),
        }
    }

    let vocab = match &config.vocab {
        Some(v) => v.clone(),
        None => {
            let corpus: Vec<Vec<String>> = kept.iter().map(|(_, t)| t.clone()).collect();
            Vocabulary::build(&corpus, config.min_count)?
        }
    };

    let mut features = FeatureTable::new(all_features.dim());
    let mut examples = Vec::with_capacity(kept.len());
    for (rec, tokens) in kept {
        let feature = all_features.get(&rec.product_id).cloned().unwrap_or_default();
        if features.get(&rec.product_id).is_none() {
            features.insert(rec.product_id.clone(), feature.clone())?;
        }
        examples.push(ReviewExample {
            product_id: rec.product_id.clone(),
            rating: parse_rating(rec.rating).map_err(Error::Config)?,
            tokens: vocab.encode(&tokens),
            feature,
        });
    }

    let count = |r: DropReason| dropped.iter().filter(|d| d.reason == r).count();
    let stats = DatasetStats {
        records: records.len(),
        kept: examples.len(),
        dropped_too_long: count(DropReason::TooLong),
        dropped_missing_feature: count(DropReason::MissingFeature),
        vocab_size: vocab.len(),
        feature_dim: all_features.dim(),
        max_len: config.max_len,
        min_count: config.min_count,
        dropped,
    };
    info!(
        "loaded {} of {} reviews ({} too long, {} without features), vocabulary {}",
        stats.kept, stats.records, stats.dropped_too_long, stats.dropped_missing_feature, stats.vocab_size
    );
    Ok(Dataset {
        vocab,
        examples,
        features,
        stats,
    })
}

/// File names inside a prepared data directory.
pub const VOCAB_FILE: &str = "vocab.txt";
pub const EXAMPLES_FILE: &str = "dataset.jsonl";
pub const FEATURES_FILE: &str = "features.bin";
pub const STATS_FILE: &str = "stats.json";

#[derive(Serialize, Deserialize)]
struct EncodedExample {
    product_id: String,
    rating: u8,
    tokens: Vec<usize>,
}

impl Dataset {
    /// Writes vocabulary, encoded examples, the kept features, and stats.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.vocab.write(&dir.join(VOCAB_FILE))?;
        self.features.write(&dir.join(FEATURES_FILE))?;
        let mut w = BufWriter::new(File::create(dir.join(EXAMPLES_FILE))?);
        for ex in &self.examples {
            let rec = EncodedExample {
                product_id: ex.product_id.clone(),
                rating: ex.rating,
                tokens: ex.tokens.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        fs::write(dir.join(STATS_FILE), serde_json::to_vec_pretty(&self.stats)?)?;
        Ok(())
    }

    /// Reads a directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = Vocabulary::read(&dir.join(VOCAB_FILE))?;
        let features = FeatureTable::read(&dir.join(FEATURES_FILE), None)?;
        let stats: DatasetStats = serde_json::from_slice(&fs::read(dir.join(STATS_FILE))?)?;
        let path: PathBuf = dir.join(EXAMPLES_FILE);
        let mut examples = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record_err = |msg: String| Error::Record {
                path: path.clone(),
                line: i + 1,
                msg,
            };
            let rec: EncodedExample = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
            parse_rating(rec.rating as f64).map_err(record_err)?;
            if let Some(&bad) = rec.tokens.iter().find(|&&t| t >= vocab.len()) {
                return Err(record_err(format!("token id {bad} outside vocabulary")));
            }
            let feature = features
                .get(&rec.product_id)
                .cloned()
                .ok_or_else(|| record_err(format!("no feature for product {:?}", rec.product_id)))?;
            examples.push(ReviewExample {
                product_id: rec.product_id,
                rating: rec.rating,
                tokens: rec.tokens,
                feature,
            });
        }
        Ok(Dataset {
            vocab,
            examples,
            features,
            stats,
        })
    }
}

/// Reads `token v1 v2 …` lines; returns `(id, vector)` for in-vocabulary
/// tokens.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize) -> Result<Vec<(usize, Vector)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let record_err = |msg: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|e| record_err(format!("{p:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(record_err(format!("expected {dim} values, found {}", values.len())));
        }
        if let Some(&id) = vocab.index.get(token) {
            out.push((id, values.into()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("I love it."), ["i", "love", "it", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Don't buy!!"), ["don't", "buy", "!", "!"]);
        assert_eq!(tokenize("  a,b;c:d?  "), ["a", ",", "b", ";", "c", ":", "d", "?"]);
    }

    #[test]
    fn detokenize_attaches_punctuation() {
        assert_eq!(
            detokenize(&["i", "love", "it", ".", "really", "!"]),
            "i love it. really!"
        );
        assert_eq!(detokenize::<&str>(&[]), "");
    }

    #[test]
    fn vocab_ordering() {
        let corpus = vec![vec!["a", "b", "a"]];
        let v = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        let v = Vocabulary::build(&corpus, 2).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.len(), 5);

        let ties = vec![vec!["z", "y", "x", "y"]];
        let v = Vocabulary::build(&ties, 1).unwrap();
        assert_eq!(&v.tokens()[4..], ["y", "x", "z"]);
    }

    #[test]
    fn empty_corpus_gives_reserved_only() {
        let v = Vocabulary::build::<&str>(&[], 1).unwrap();
        assert_eq!(v.len(), NUM_RESERVED);
        assert!(Vocabulary::build::<&str>(&[], 0).is_err());
    }

    #[test]
    fn reserved_strings_in_text_are_not_counted() {
        let v = Vocabulary::build(&[vec!["<unk>", "<eos>", "ok"]], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("<eos>"), EOS);
    }

    #[test]
    fn encode_and_decode() {
        let v = Vocabulary::from_tokens(["good".to_string(), "sock".to_string()]).unwrap();
        let ids = v.encode(&["good", "mystery", "sock"]);
        assert_eq!(ids, vec![BOS, 4, UNK, 5, EOS]);
        assert_eq!(v.decode(&ids), ["good", "<unk>", "sock"]);
    }

    #[test]
    fn rating_parse() {
        assert_eq!(parse_rating(5.0), Ok(5));
        assert_eq!(parse_rating(1.0), Ok(1));
        for bad in [0.0, 6.0, 4.5, -1.0, f64::NAN] {
            assert!(parse_rating(bad).is_err(), "{bad}");
        }
        assert_eq!(
            encode_rating(3).unwrap().vector().as_slice(),
            &[0.0, 0.0, 1.0, 0.0, 0.0]
        );
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(s in "[a-zA-Z' .,!?;:é\t\n-]{0,60}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn vocab_round_trip(words in proptest::collection::vec("[a-z]{1,4}", 0..30), min_count in 1usize..3) {
            let v = Vocabulary::build(std::slice::from_ref(&words), min_count).unwrap();
            for id in NUM_RESERVED..v.len() {
                let tok = v.token(id).unwrap();
                prop_assert_eq!(v.id(tok), id);
            }
            for (id, tok) in RESERVED_TOKENS.iter().enumerate() {
                prop_assert_eq!(v.id(tok), id);
            }
            for w in &words {
                let id = v.id(w);
                prop_assert!(id == UNK || v.token(id) == Some(w.as_str()));
            }
        }
    }
}
