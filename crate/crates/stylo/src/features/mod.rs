//! Feature extraction: n-gram families, summary statistics, sparse vectors.
//!
//! A [`FeatureSchema`] is fit on training texts only and then applied to any
//! text. Each family contributes a contiguous block of columns; within a
//! family, columns are sorted lexicographically by key so schemas and the
//! vectors they produce are reproducible. N-gram values are relative
//! frequencies (denominator: all n-grams of that order in the document,
//! in-vocabulary or not), and every family block is L2-normalized before
//! concatenation so no family dominates by raw scale.
//!
//! Character n-grams preserve case; the built-in token stream lowercases.

mod distort;
mod summary;
mod tokenize;

pub use distort::{distort, DistortionScheme, DistortionVariant};
pub use summary::{summary_stats, SummaryStats, SUMMARY_WIDTH, WORD_LENGTH_BUCKETS};
pub use tokenize::{word_spans, SpanToken, TokenKind, Tokenizer, TokenizerMode};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Sparse vector with an explicit dimension.
///
/// Entries are sorted by column and never hold an explicit zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: u32,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn zeros(dim: u32) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Build from (column, value) pairs. Zero values are dropped; duplicate
    /// or out-of-range columns are rejected.
    pub fn from_pairs(dim: u32, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut entries: Vec<(u32, f64)> = pairs.into_iter().filter(|&(_, v)| v != 0.0).collect();
        entries.sort_by_key(|&(i, _)| i);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invariant(format!(
                    "duplicate feature column {}",
                    w[0].0
                )));
            }
        }
        if let Some(&(last, _)) = entries.last() {
            if last >= dim {
                return Err(Error::invariant(format!(
                    "feature column {last} out of range for dim {dim}"
                )));
            }
        }
        Ok(FeatureVector { dim, entries })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, column: u32) -> f64 {
        match self.entries.binary_search_by_key(&column, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim as usize];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.entries.len() && j < other.entries.len() {
            let (ci, vi) = self.entries[i];
            let (cj, vj) = other.entries[j];
            match ci.cmp(&cj) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += vi * vj;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn squared_distance(&self, other: &FeatureVector) -> f64 {
        let mut acc = 0.0;
        merge_walk(&self.entries, &other.entries, |_, a, b| {
            let d = a - b;
            acc += d * d;
        });
        acc
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.squared_distance(other).sqrt()
    }

    /// Scale to unit L2 norm; the zero vector is returned unchanged.
    pub fn l2_normalized(&self) -> FeatureVector {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        FeatureVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, v / n)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> FeatureVector {
        if factor == 0.0 {
            return FeatureVector::zeros(self.dim);
        }
        FeatureVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, v * factor)).collect(),
        }
    }
}

/// Visit the union of two sorted entry lists with both values (absent = 0).
fn merge_walk(a: &[(u32, f64)], b: &[(u32, f64)], mut visit: impl FnMut(u32, f64, f64)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ca, va)), Some(&(cb, vb))) => match ca.cmp(&cb) {
                std::cmp::Ordering::Less => {
                    visit(ca, va, 0.0);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    visit(cb, 0.0, vb);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    visit(ca, va, vb);
                    i += 1;
                    j += 1;
                }
            },
            (Some(&(ca, va)), None) => {
                visit(ca, va, 0.0);
                i += 1;
            }
            (None, Some(&(cb, vb))) => {
                visit(cb, 0.0, vb);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

/// Componentwise absolute difference, used to turn a document pair into one
/// vector for same/different-author classification.
pub fn vector_diff(x: &FeatureVector, y: &FeatureVector) -> Result<FeatureVector> {
    if x.dim != y.dim {
        return Err(Error::data(format!(
            "vector dimension mismatch: {} vs {}",
            x.dim, y.dim
        )));
    }
    let mut entries = Vec::new();
    merge_walk(&x.entries, &y.entries, |c, a, b| {
        let d = (a - b).abs();
        if d != 0.0 {
            entries.push((c, d));
        }
    });
    Ok(FeatureVector {
        dim: x.dim,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    CharNgram,
    TokenNgram,
    SummaryStats,
}

/// One feature family to fit. `n` and `top_k` apply to n-gram kinds only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionScheme>,
    /// Named token stream from a [`StreamRegistry`]; None = built-in words.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<String>,
}

impl FamilySpec {
    pub fn char_ngram(n: usize, top_k: usize) -> Self {
        FamilySpec {
            kind: FamilyKind::CharNgram,
            n,
            top_k,
            distortion: None,
            stream: None,
        }
    }

    pub fn token_ngram(n: usize, top_k: usize) -> Self {
        FamilySpec {
            kind: FamilyKind::TokenNgram,
            n,
            top_k,
            distortion: None,
            stream: None,
        }
    }

    pub fn summary() -> Self {
        FamilySpec {
            kind: FamilyKind::SummaryStats,
            n: 0,
            top_k: 0,
            distortion: None,
            stream: None,
        }
    }

    pub fn with_distortion(mut self, scheme: DistortionScheme) -> Self {
        self.distortion = Some(scheme);
        self
    }

    pub fn with_stream(mut self, name: impl Into<String>) -> Self {
        self.stream = Some(name.into());
        self
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            FamilyKind::SummaryStats => Ok(()),
            FamilyKind::CharNgram | FamilyKind::TokenNgram => {
                if self.n == 0 {
                    return Err(Error::config("n-gram family requires n >= 1"));
                }
                if self.top_k == 0 {
                    return Err(Error::config("n-gram family requires top_k >= 1"));
                }
                if self.kind == FamilyKind::CharNgram && self.stream.is_some() {
                    return Err(Error::config("char_ngram does not take a token stream"));
                }
                Ok(())
            }
        }
    }

    /// Short label used in column names and reports, e.g. `char_3`.
    pub fn label(&self) -> String {
        match self.kind {
            FamilyKind::CharNgram => format!("char_{}", self.n),
            FamilyKind::TokenNgram => match &self.stream {
                Some(s) => format!("token_{}[{}]", self.n, s),
                None => format!("token_{}", self.n),
            },
            FamilyKind::SummaryStats => "summary".to_string(),
        }
    }
}

/// A source of tokens other than the built-in word tokenizer.
pub trait TokenStream: Send + Sync {
    fn tokens(&self, text: &str) -> Vec<String>;
}

impl<F> TokenStream for F
where
    F: Fn(&str) -> Vec<String> + Send + Sync,
{
    fn tokens(&self, text: &str) -> Vec<String> {
        self(text)
    }
}

/// Named token streams available to `token_ngram` families.
#[derive(Default)]
pub struct StreamRegistry {
    streams: HashMap<String, Box<dyn TokenStream>>,
}

impl StreamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, stream: impl TokenStream + 'static) {
        self.streams.insert(name.into(), Box::new(stream));
    }

    fn get(&self, name: &str) -> Result<&dyn TokenStream> {
        self.streams
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::config(format!("unknown token stream {name:?}")))
    }
}

/// One fitted family: its spec plus the selected vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFamily {
    pub spec: FamilySpec,
    /// First column of this family's block.
    pub offset: u32,
    /// Number of columns in the block.
    pub width: u32,
    /// Key -> column within the block; empty for summary_stats.
    vocab: BTreeMap<String, u32>,
}

/// A fitted feature extractor, reusable across documents and runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub families: Vec<FittedFamily>,
    pub dim: u32,
    /// Fit-time notes, e.g. a family with fewer distinct keys than top_k.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl FeatureSchema {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let schema: FeatureSchema = serde_json::from_reader(std::io::BufReader::new(file))?;
        if schema.version != SCHEMA_VERSION {
            return Err(Error::data(format!(
                "unsupported schema version {} (expected {})",
                schema.version, SCHEMA_VERSION
            )));
        }
        Ok(schema)
    }

    /// Column names in column order, `family_label:key`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim as usize];
        for fam in &self.families {
            let label = fam.spec.label();
            match fam.spec.kind {
                FamilyKind::SummaryStats => {
                    for (i, stat) in SummaryStats::value_names().into_iter().enumerate() {
                        names[fam.offset as usize + i] = format!("{label}:{stat}");
                    }
                }
                _ => {
                    for (key, &col) in &fam.vocab {
                        names[(fam.offset + col) as usize] = format!("{label}:{key}");
                    }
                }
            }
        }
        names
    }
}

/// Extract the n-gram keys of one document under a family spec.
fn ngram_keys(spec: &FamilySpec, text: &str, streams: &StreamRegistry) -> Result<Vec<String>> {
    let distorted;
    let text = match &spec.distortion {
        Some(scheme) => {
            distorted = distort(text, scheme);
            distorted.as_str()
        }
        None => text,
    };
    match spec.kind {
        FamilyKind::CharNgram => {
            let chars: Vec<char> = text.chars().collect();
            if chars.len() < spec.n {
                return Ok(Vec::new());
            }
            Ok(chars
                .windows(spec.n)
                .map(|w| w.iter().collect::<String>())
                .collect())
        }
        FamilyKind::TokenNgram => {
            let tokens = match &spec.stream {
                Some(name) => streams.get(name)?.tokens(text),
                None => Tokenizer::word_lowercase().tokenize(text),
            };
            if tokens.len() < spec.n {
                return Ok(Vec::new());
            }
            Ok(tokens.windows(spec.n).map(|w| w.join(" ")).collect())
        }
        FamilyKind::SummaryStats => unreachable!("summary_stats has no n-gram keys"),
    }
}

/// Fit a schema on training texts.
///
/// Vocabulary selection takes the `top_k` keys by corpus count, breaking
/// ties by lexicographic order, then lays the selected keys out in
/// lexicographic column order.
pub fn fit_schema<'a, I>(texts: I, specs: &[FamilySpec]) -> Result<FeatureSchema>
where
    I: IntoIterator<Item = &'a str>,
    I::IntoIter: Clone,
{
    fit_schema_with(texts, specs, &StreamRegistry::new())
}

pub fn fit_schema_with<'a, I>(
    texts: I,
    specs: &[FamilySpec],
    streams: &StreamRegistry,
) -> Result<FeatureSchema>
where
    I: IntoIterator<Item = &'a str>,
    I::IntoIter: Clone,
{
    if specs.is_empty() {
        return Err(Error::config("feature schema requires at least one family"));
    }
    let texts = texts.into_iter();
    let mut families = Vec::with_capacity(specs.len());
    let mut warnings = Vec::new();
    let mut offset: u32 = 0;

    for spec in specs {
        spec.validate()?;
        let (vocab, width) = match spec.kind {
            FamilyKind::SummaryStats => (BTreeMap::new(), SUMMARY_WIDTH as u32),
            _ => {
                let mut counts: HashMap<String, u64> = HashMap::new();
                for text in texts.clone() {
                    for key in ngram_keys(spec, text, streams)? {
                        *counts.entry(key).or_insert(0) += 1;
                    }
                }
                if counts.len() < spec.top_k {
                    warnings.push(format!(
                        "family {}: only {} distinct keys for top_k={}",
                        spec.label(),
                        counts.len(),
                        spec.top_k
                    ));
                }
                let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                ranked.truncate(spec.top_k);
                let mut keys: Vec<String> = ranked.into_iter().map(|(k, _)| k).collect();
                keys.sort();
                let width = keys.len() as u32;
                let vocab: BTreeMap<String, u32> = keys
                    .into_iter()
                    .enumerate()
                    .map(|(i, k)| (k, i as u32))
                    .collect();
                (vocab, width)
            }
        };
        families.push(FittedFamily {
            spec: spec.clone(),
            offset,
            width,
            vocab,
        });
        offset = offset
            .checked_add(width)
            .ok_or_else(|| Error::config("feature dimension overflow"))?;
    }

    Ok(FeatureSchema {
        version: SCHEMA_VERSION,
        families,
        dim: offset,
        warnings,
    })
}

/// Vectorize one text under a fitted schema.
///
/// Keys unseen at fit time are ignored (they still count toward the
/// relative-frequency denominator). An empty text maps to the zero vector.
pub fn vectorize(text: &str, schema: &FeatureSchema) -> Result<FeatureVector> {
    vectorize_with(text, schema, &StreamRegistry::new())
}

pub fn vectorize_with(
    text: &str,
    schema: &FeatureSchema,
    streams: &StreamRegistry,
) -> Result<FeatureVector> {
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for fam in &schema.families {
        let block: Vec<(u32, f64)> = match fam.spec.kind {
            FamilyKind::SummaryStats => {
                let stats = summary_stats(text, &Tokenizer::word_lowercase());
                stats
                    .to_values()
                    .iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0.0)
                    .map(|(i, &v)| (fam.offset + i as u32, v))
                    .collect()
            }
            _ => {
                let keys = ngram_keys(&fam.spec, text, streams)?;
                let total = keys.len() as f64;
                // Sorted iteration keeps the norm's summation order (and so
                // its last bits) identical across calls.
                let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
                for key in &keys {
                    if fam.vocab.contains_key(key.as_str()) {
                        *counts.entry(key.as_str()).or_insert(0) += 1;
                    }
                }
                counts
                    .into_iter()
                    .map(|(key, c)| (fam.offset + fam.vocab[key], c as f64 / total))
                    .collect()
            }
        };
        let norm = block.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.extend(block.into_iter().map(|(i, v)| (i, v / norm)));
        }
    }
    FeatureVector::from_pairs(schema.dim, entries)
}
