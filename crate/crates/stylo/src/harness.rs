//! Config-driven experiment runner tying corpus loading, splitting, feature
//! fitting, method training, and metric reporting together.
//!
//! Everything downstream of a config is deterministic: one global seed
//! expands through named substreams (split, pair sampling, model init), all
//! maps iterate in sorted order, and reruns of the same config produce
//! byte-identical prediction files.
//!
//! Fitting only ever sees train and validation documents. An audit records
//! every document id consumed for fitting or tuning and fails the run if a
//! test id appears among them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    dedup_exact, detect_format, load_corpus, make_split, Corpus, CorpusFormat, Document, Split,
    SplitKind,
};
use crate::features::{fit_schema, vector_diff, vectorize, FamilySpec, FeatureVector};
use crate::linear::{ensemble_predict, train_av_classifier, train_ensemble, TrainConfig};
use crate::metrics::{
    accuracy, macro_accuracy, pan_metrics, AaPredictions, AaRow, AbstainPolicy, AvPredictions,
    AvRow, EvalReport,
};
use crate::ppm::{ppm_attribute, ppm_train, ppm_verify_symmetric, PpmModel};
use crate::verify::{
    av_score as metric_av_score, build_profiles, imposters_attribute, profile_attribute,
    threshold_search, train_metric, train_unmask_meta, unmask, unmask_verify, DegradationCurve,
    MetricConfig, UnmaskingConfig,
};
use crate::{seeds, Error, Result, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Aa,
    Av,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Aa => "aa",
            Task::Av => "av",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NgramEnsemble,
    Ppm,
    ProfileMetric,
    Unmasking,
    Imposters,
}

impl Method {
    pub fn supports(&self, task: Task) -> bool {
        match self {
            Method::Imposters => task == Task::Aa,
            Method::Unmasking => task == Task::Av,
            _ => true,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::NgramEnsemble => "ngram_ensemble",
            Method::Ppm => "ppm",
            Method::ProfileMetric => "profile_metric",
            Method::Unmasking => "unmasking",
            Method::Imposters => "imposters",
        })
    }
}

/// One feature family in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyParam {
    /// "char", "token", or "summary".
    pub kind: String,
    pub n: usize,
    pub top_k: usize,
}

impl Default for FamilyParam {
    fn default() -> Self {
        FamilyParam {
            kind: "char".to_string(),
            n: 2,
            top_k: 300,
        }
    }
}

impl FamilyParam {
    pub fn to_spec(&self) -> Result<FamilySpec> {
        match self.kind.as_str() {
            "char" => Ok(FamilySpec::char_ngram(self.n, self.top_k)),
            "token" => Ok(FamilySpec::token_ngram(self.n, self.top_k)),
            "summary" => Ok(FamilySpec::summary()),
            other => Err(Error::config(format!(
                "unknown feature family kind {other:?} (expected char, token, or summary)"
            ))),
        }
    }
}

fn default_families() -> Vec<FamilyParam> {
    vec![
        FamilyParam {
            kind: "char".into(),
            n: 2,
            top_k: 300,
        },
        FamilyParam {
            kind: "char".into(),
            n: 3,
            top_k: 300,
        },
        FamilyParam {
            kind: "token".into(),
            n: 1,
            top_k: 300,
        },
    ]
}

/// Method hyperparameters; irrelevant sections are simply unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodParams {
    pub families: Vec<FamilyParam>,
    pub train: TrainConfig,
    pub ppm_order: usize,
    pub profile_size: usize,
    pub metric: MetricConfig,
    pub unmasking: UnmaskingConfig,
    pub pairs_per_class: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            families: default_families(),
            train: TrainConfig::default(),
            ppm_order: 5,
            profile_size: 10,
            metric: MetricConfig::default(),
            unmasking: UnmaskingConfig::default(),
            pairs_per_class: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    /// Inferred from the path when absent.
    #[serde(default)]
    pub format: Option<CorpusFormat>,
    #[serde(default)]
    pub dedup: bool,
}

/// Either a split file or a (kind, fractions) recipe, not both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub file: Option<PathBuf>,
    pub kind: Option<SplitKind>,
    pub fractions: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    pub seed: u64,
    /// Metric names to report; empty means the task's full default set.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Excludes abstained pairs from AUC, as the PAN evaluator does.
    #[serde(default)]
    pub pan_compat: bool,
    pub corpus: CorpusSection,
    pub split: SplitSection,
    #[serde(default)]
    pub params: MethodParams,
}

const AA_METRICS: &[&str] = &["accuracy", "macro_accuracy"];
const AV_METRICS: &[&str] = &["auc", "f1", "f05u", "c_at_1", "brier", "overall"];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.method.supports(self.task) {
            return Err(Error::config(format!(
                "method {} does not support task {}",
                self.method, self.task
            )));
        }
        if !self.corpus.path.exists() {
            return Err(Error::config(format!(
                "corpus path {} does not exist",
                self.corpus.path.display()
            )));
        }
        match (&self.split.file, self.split.kind) {
            (Some(file), None) => {
                if !file.exists() {
                    return Err(Error::config(format!(
                        "split file {} does not exist",
                        file.display()
                    )));
                }
                if self.split.fractions.is_some() {
                    return Err(Error::config(
                        "split.fractions is meaningless with split.file",
                    ));
                }
            }
            (None, Some(_)) => {
                if let Some(f) = self.split.fractions {
                    crate::corpus::check_fractions(f)?;
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "give either split.file or split.kind, not both",
                ))
            }
            (None, None) => return Err(Error::config("split needs a file or a kind")),
        }
        let known: &[&str] = match self.task {
            Task::Aa => AA_METRICS,
            Task::Av => AV_METRICS,
        };
        for name in &self.metrics {
            if !known.contains(&name.as_str()) {
                return Err(Error::config(format!(
                    "metric {name:?} unknown for task {} (known: {})",
                    self.task,
                    known.join(", ")
                )));
            }
        }
        if self.params.families.is_empty() {
            return Err(Error::config("params.families must not be empty"));
        }
        for family in &self.params.families {
            family.to_spec()?;
        }
        Ok(())
    }

    fn metric_names(&self) -> Vec<String> {
        if !self.metrics.is_empty() {
            return self.metrics.clone();
        }
        match self.task {
            Task::Aa => AA_METRICS.iter().map(|s| s.to_string()).collect(),
            Task::Av => AV_METRICS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Parse a TOML config; relative paths resolve against the file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::config(format!("bad config: {e}")))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&p);
        }
    };
    resolve(&mut config.corpus.path);
    if let Some(file) = config.split.file.as_mut() {
        resolve(file);
    }
    if let Some(out) = config.output_dir.as_mut() {
        resolve(out);
    }
    config.validate()?;
    Ok(config)
}

/// Hash of the canonical JSON form of a config.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canon = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Records which documents fed fitting/tuning versus prediction, and fails
/// if any test document leaked into the fitting side.
#[derive(Debug, Default, Clone)]
pub struct LeakageAudit {
    fitted: BTreeSet<String>,
    predicted: BTreeSet<String>,
}

impl LeakageAudit {
    pub fn record_fit(&mut self, id: &str) {
        self.fitted.insert(id.to_string());
    }

    pub fn record_predict(&mut self, id: &str) {
        self.predicted.insert(id.to_string());
    }

    pub fn fitted(&self) -> &BTreeSet<String> {
        &self.fitted
    }

    pub fn verify(&self, split: &Split) -> Result<()> {
        let leaked: Vec<&String> = self.fitted.intersection(&split.test).collect();
        if !leaked.is_empty() {
            return Err(Error::invariant(format!(
                "{} test document(s) consumed during fitting, first: {:?}",
                leaked.len(),
                leaked[0]
            )));
        }
        let stray: Vec<&String> = self
            .predicted
            .iter()
            .filter(|id| !split.test.contains(*id))
            .collect();
        if !stray.is_empty() {
            return Err(Error::invariant(format!(
                "{} prediction(s) on non-test document(s), first: {:?}",
                stray.len(),
                stray[0]
            )));
        }
        Ok(())
    }
}

/// An unordered verification pair; both documents live in one partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvPair {
    pub pair_id: String,
    pub a: String,
    pub b: String,
    pub same_author: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AvPairSet {
    pub train: Vec<AvPair>,
    pub validation: Vec<AvPair>,
    pub test: Vec<AvPair>,
    pub warnings: Vec<String>,
}

impl AvPairSet {
    /// CSV dump with columns pair_id,partition,a,b,label.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["pair_id", "partition", "a", "b", "label"])?;
        for (partition, pairs) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            for pair in pairs {
                w.write_record([
                    pair.pair_id.as_str(),
                    partition,
                    pair.a.as_str(),
                    pair.b.as_str(),
                    if pair.same_author { "1" } else { "0" },
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn partition_pairs(
    corpus: &Corpus,
    ids: &BTreeSet<String>,
    partition: &str,
    pairs_per_class: usize,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Vec<AvPair> {
    let mut by_author: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in ids {
        let doc = corpus.get(id).expect("split id exists in corpus");
        by_author.entry(doc.author.as_str()).or_default().push(id);
    }
    let mut same: Vec<(&str, &str)> = Vec::new();
    for ids in by_author.values() {
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                same.push((ids[i], ids[j]));
            }
        }
    }
    let authors: Vec<&&str> = by_author.keys().collect();
    let mut different: Vec<(&str, &str)> = Vec::new();
    for i in 0..authors.len() {
        for j in (i + 1)..authors.len() {
            for a in &by_author[*authors[i]] {
                for b in &by_author[*authors[j]] {
                    different.push((a, b));
                }
            }
        }
    }
    let mut rng = seeds::rng(seed, &format!("pairs:{partition}"));
    same.shuffle(&mut rng);
    different.shuffle(&mut rng);
    // Balanced by construction: both classes are cut to the same count.
    let take = pairs_per_class.min(same.len()).min(different.len());
    if take < pairs_per_class {
        warnings.push(format!(
            "partition {partition}: only {take} balanced pair(s) feasible of {pairs_per_class} requested"
        ));
    }
    let mut out = Vec::with_capacity(take * 2);
    for (i, &(a, b)) in same[..take].iter().chain(&different[..take]).enumerate() {
        out.push(AvPair {
            pair_id: format!("{partition}_{i:04}"),
            a: a.to_string(),
            b: b.to_string(),
            same_author: i < take,
        });
    }
    out
}

/// Samples balanced same/different author pairs within each split
/// partition. Pairs never straddle partitions, no unordered pair repeats,
/// and the result is deterministic per seed. When a partition cannot
/// furnish the requested count, the maximum balanced count is emitted with
/// a warning; train and test must support at least one pair of each label.
pub fn av_pairs_from_split(
    corpus: &Corpus,
    split: &Split,
    pairs_per_class: usize,
    seed: u64,
) -> Result<AvPairSet> {
    if pairs_per_class == 0 {
        return Err(Error::config("pairs_per_class must be at least 1"));
    }
    let mut set = AvPairSet::default();
    let mut warnings = Vec::new();
    set.train = partition_pairs(
        corpus,
        &split.train,
        "train",
        pairs_per_class,
        seed,
        &mut warnings,
    );
    set.validation = partition_pairs(
        corpus,
        &split.validation,
        "validation",
        pairs_per_class,
        seed,
        &mut warnings,
    );
    set.test = partition_pairs(
        corpus,
        &split.test,
        "test",
        pairs_per_class,
        seed,
        &mut warnings,
    );
    for (partition, pairs) in [("train", &set.train), ("test", &set.test)] {
        if pairs.is_empty() {
            return Err(Error::data(format!(
                "partition {partition} cannot form a same and a different author pair"
            )));
        }
    }
    set.warnings = warnings;
    Ok(set)
}

const SYNTH_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ";

fn random_stochastic_matrix(rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..SYNTH_ALPHABET.len())
        .map(|_| {
            let row: Vec<f64> = (0..SYNTH_ALPHABET.len())
                .map(|_| rng.gen::<f64>() + 1e-3)
                .collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

/// The transition matrix of one synthetic author: a convex blend between a
/// shared base (separation 0) and the author's own random matrix
/// (separation 1). Exposed so tests can oracle the separation semantics.
pub fn synth_transition_matrix(seed: u64, separation: f64, author: usize) -> Vec<Vec<f64>> {
    let base = random_stochastic_matrix(&mut seeds::rng(seed, "synth:base"));
    let own = random_stochastic_matrix(&mut seeds::rng(seed, &format!("synth:author:{author}")));
    base.iter()
        .zip(&own)
        .map(|(b_row, o_row)| {
            b_row
                .iter()
                .zip(o_row)
                .map(|(b, o)| (1.0 - separation) * b + separation * o)
                .collect()
        })
        .collect()
}

/// Generates a corpus of character-level order-1 Markov authors over 26
/// letters plus space. `separation` interpolates each author's transition
/// matrix between a shared base (0, all authors identical) and fully
/// independent matrices (1).
pub fn synth_corpus(
    n_authors: usize,
    docs_per_author: usize,
    doc_len: usize,
    separation: f64,
    seed: u64,
) -> Result<Corpus> {
    if n_authors == 0 || docs_per_author == 0 || doc_len == 0 {
        return Err(Error::config("synth counts must all be at least 1"));
    }
    if !(0.0..=1.0).contains(&separation) || !separation.is_finite() {
        return Err(Error::config("separation must lie in [0, 1]"));
    }
    let mut docs = Vec::with_capacity(n_authors * docs_per_author);
    for author in 0..n_authors {
        let matrix = synth_transition_matrix(seed, separation, author);
        for d in 0..docs_per_author {
            let mut rng = seeds::rng(seed, &format!("synth:doc:{author}:{d}"));
            let mut state = rng.gen_range(0..SYNTH_ALPHABET.len());
            let mut text = String::with_capacity(doc_len);
            for _ in 0..doc_len {
                text.push(SYNTH_ALPHABET[state] as char);
                let mut pick = rng.gen::<f64>();
                let row = &matrix[state];
                state = row.len() - 1;
                for (i, &p) in row.iter().enumerate() {
                    pick -= p;
                    if pick <= 0.0 {
                        state = i;
                        break;
                    }
                }
            }
            if text.trim().is_empty() {
                text.push('a');
            }
            docs.push(Document {
                id: format!("a{author:02}_d{d:03}"),
                author: format!("author{author:02}"),
                text,
                topic: None,
                genre: None,
            });
        }
    }
    Corpus::from_documents(docs)
}

/// Writes a corpus as one JSON document per line.
pub fn save_corpus_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    for doc in corpus.docs() {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_thread_cap(value: Option<String>) -> Option<usize> {
    value
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
}

/// Worker count: STYLO_THREADS when set to a positive integer, otherwise
/// the machine's available parallelism.
pub fn worker_count() -> usize {
    parse_thread_cap(std::env::var("STYLO_THREADS").ok()).unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn parallel_map_with<T, U, F>(workers: usize, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers.min(items.len()));
    let mut out: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slots, chunk_items) in out.chunks_mut(chunk).zip(items.chunks(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, item) in slots.iter_mut().zip(chunk_items) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter()
        .map(|slot| slot.expect("worker filled its slots"))
        .collect()
}

/// Applies `f` to every item, possibly across threads, preserving input
/// order in the output.
pub fn parallel_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    parallel_map_with(worker_count(), items, f)
}

/// Everything written by one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub split_hash: String,
    pub duration_secs: f64,
    pub report: EvalReport,
    pub toolkit_version: String,
    pub predictions_path: PathBuf,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let out = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(out), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

struct Prepared<'a> {
    corpus: &'a Corpus,
    split: &'a Split,
    params: &'a MethodParams,
    seed: u64,
}

impl<'a> Prepared<'a> {
    fn text(&self, id: &str) -> &'a str {
        &self.corpus.get(id).expect("split id exists in corpus").text
    }

    fn train_texts_and_authors(&self) -> (Vec<&'a str>, Vec<&'a str>) {
        let mut texts = Vec::with_capacity(self.split.train.len());
        let mut authors = Vec::with_capacity(self.split.train.len());
        for id in &self.split.train {
            let doc = self.corpus.get(id).expect("split id exists in corpus");
            texts.push(doc.text.as_str());
            authors.push(doc.author.as_str());
        }
        (texts, authors)
    }

    fn train_texts_by_author(&self) -> BTreeMap<String, Vec<String>> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for id in &self.split.train {
            let doc = self.corpus.get(id).expect("split id exists in corpus");
            map.entry(doc.author.clone())
                .or_default()
                .push(doc.text.clone());
        }
        map
    }

    fn family_specs(&self) -> Result<Vec<FamilySpec>> {
        self.params.families.iter().map(|f| f.to_spec()).collect()
    }
}

fn run_aa(prepared: &Prepared, method: Method, audit: &mut LeakageAudit) -> Result<AaPredictions> {
    for id in prepared.split.train.iter() {
        audit.record_fit(id);
    }
    let test_ids: Vec<&String> = prepared.split.test.iter().collect();
    if test_ids.is_empty() {
        return Err(Error::data("empty test partition"));
    }
    for id in &test_ids {
        audit.record_predict(id);
    }
    let rankings: Vec<Result<Vec<(String, f64)>>> = match method {
        Method::NgramEnsemble => {
            let (texts, authors) = prepared.train_texts_and_authors();
            let ensemble = train_ensemble(
                &texts,
                &authors,
                &prepared.family_specs()?,
                &prepared.params.train,
            )?;
            parallel_map(&test_ids, |id| {
                ensemble_predict(&ensemble, prepared.text(id))
            })
        }
        Method::Ppm => {
            let mut models: BTreeMap<String, PpmModel> = BTreeMap::new();
            for (author, texts) in prepared.train_texts_by_author() {
                models.insert(author, ppm_train(&texts, prepared.params.ppm_order)?);
            }
            parallel_map(&test_ids, |id| ppm_attribute(&models, prepared.text(id)))
        }
        Method::ProfileMetric => {
            let (texts, _) = prepared.train_texts_and_authors();
            let schema = fit_schema(texts.iter().copied(), &prepared.family_specs()?)?;
            let train_corpus = prepared.corpus.subset(&prepared.split.train)?;
            let metric_config = MetricConfig {
                seed: seeds::substream(prepared.seed, "metric:train"),
                ..prepared.params.metric.clone()
            };
            let model = train_metric(&train_corpus, &schema, &metric_config)?;
            let embed = |doc: &Document| {
                let dense = model.project(&vectorize(&doc.text, &schema)?)?;
                FeatureVector::from_pairs(
                    dense.len() as u32,
                    dense.iter().enumerate().map(|(i, &v)| (i as u32, v)),
                )
            };
            let profiles = build_profiles(
                &train_corpus,
                embed,
                prepared.params.profile_size,
                seeds::substream(prepared.seed, "profiles"),
            )?;
            parallel_map(&test_ids, |id| {
                let doc = prepared.corpus.get(id).expect("test id exists");
                profile_attribute(&profiles, &embed(doc)?)
            })
        }
        Method::Imposters => {
            let candidates = prepared.train_texts_by_author();
            parallel_map(&test_ids, |id| {
                imposters_attribute(&candidates, prepared.text(id), &prepared.params.unmasking)
            })
        }
        Method::Unmasking => unreachable!("validated as av-only"),
    };
    let mut rows = Vec::with_capacity(test_ids.len());
    for (id, ranking) in test_ids.iter().zip(rankings) {
        let ranking = ranking?;
        let doc = prepared.corpus.get(id).expect("test id exists");
        rows.push(AaRow {
            doc_id: doc.id.clone(),
            true_author: doc.author.clone(),
            predicted_author: ranking[0].0.clone(),
            ranking: Some(ranking.into_iter().map(|(author, _)| author).collect()),
        });
    }
    AaPredictions::new(rows)
}

/// Maps raw scores into [0, 1] so that the tuned threshold lands exactly on
/// 0.5: piecewise-linear on either side of theta, order preserving.
fn calibrate_scores(raw: &[f64], theta: f64) -> Vec<f64> {
    let lo = raw.iter().cloned().fold(theta, f64::min);
    let hi = raw.iter().cloned().fold(theta, f64::max);
    raw.iter()
        .map(|&s| {
            if s < theta {
                if theta > lo {
                    0.5 * (s - lo) / (theta - lo)
                } else {
                    0.5
                }
            } else if s > theta {
                if hi > theta {
                    0.5 + 0.5 * (s - theta) / (hi - theta)
                } else {
                    0.5
                }
            } else {
                0.5
            }
        })
        .collect()
}

fn run_av(
    prepared: &Prepared,
    method: Method,
    audit: &mut LeakageAudit,
    warnings: &mut Vec<String>,
) -> Result<(AvPredictions, AvPairSet)> {
    let pairs = av_pairs_from_split(
        prepared.corpus,
        prepared.split,
        prepared.params.pairs_per_class,
        prepared.seed,
    )?;
    warnings.extend(pairs.warnings.iter().cloned());
    for pair in pairs.train.iter().chain(&pairs.validation) {
        audit.record_fit(&pair.a);
        audit.record_fit(&pair.b);
    }
    for pair in &pairs.test {
        audit.record_predict(&pair.a);
        audit.record_predict(&pair.b);
    }

    // score_pairs yields one raw score per pair; higher = more alike.
    type Scorer<'s> = Box<dyn Fn(&[AvPair]) -> Result<Vec<f64>> + 's>;
    let (tuned_default, score_pairs): (bool, Scorer) = match method {
        Method::NgramEnsemble => {
            for id in prepared.split.train.iter() {
                audit.record_fit(id);
            }
            let (texts, _) = prepared.train_texts_and_authors();
            let schema = fit_schema(texts.iter().copied(), &prepared.family_specs()?)?;
            let training: Vec<(&str, &str, bool)> = pairs
                .train
                .iter()
                .map(|p| (prepared.text(&p.a), prepared.text(&p.b), p.same_author))
                .collect();
            let model = train_av_classifier(&training, &schema, &prepared.params.train)?;
            (
                true,
                Box::new(move |batch: &[AvPair]| {
                    let scored = parallel_map(batch, |pair| {
                        let va = vectorize(prepared.text(&pair.a), &schema)?;
                        let vb = vectorize(prepared.text(&pair.b), &schema)?;
                        crate::linear::av_score(&model, &vector_diff(&va, &vb)?)
                    });
                    scored.into_iter().collect()
                }),
            )
        }
        Method::Ppm => {
            let order = prepared.params.ppm_order;
            (
                false,
                Box::new(move |batch: &[AvPair]| {
                    let scored = parallel_map(batch, |pair| {
                        let bits = ppm_verify_symmetric(
                            prepared.text(&pair.a),
                            prepared.text(&pair.b),
                            order,
                        )?;
                        Ok(2f64.powf(-bits))
                    });
                    scored.into_iter().collect()
                }),
            )
        }
        Method::ProfileMetric => {
            for id in prepared.split.train.iter() {
                audit.record_fit(id);
            }
            let (texts, _) = prepared.train_texts_and_authors();
            let schema = fit_schema(texts.iter().copied(), &prepared.family_specs()?)?;
            let train_corpus = prepared.corpus.subset(&prepared.split.train)?;
            let metric_config = MetricConfig {
                seed: seeds::substream(prepared.seed, "metric:train"),
                ..prepared.params.metric.clone()
            };
            let model = train_metric(&train_corpus, &schema, &metric_config)?;
            (
                false,
                Box::new(move |batch: &[AvPair]| {
                    let scored = parallel_map(batch, |pair| {
                        let va = vectorize(prepared.text(&pair.a), &schema)?;
                        let vb = vectorize(prepared.text(&pair.b), &schema)?;
                        metric_av_score(&model, &va, &vb)
                    });
                    scored.into_iter().collect()
                }),
            )
        }
        Method::Unmasking => {
            let unmask_one = |pair: &AvPair| -> Result<DegradationCurve> {
                unmask(
                    &[prepared.text(&pair.a)],
                    &[prepared.text(&pair.b)],
                    &prepared.params.unmasking,
                )
            };
            let mut same = Vec::new();
            let mut different = Vec::new();
            let train_curves: Vec<Result<DegradationCurve>> =
                parallel_map(&pairs.train, unmask_one);
            for (pair, curve) in pairs.train.iter().zip(train_curves) {
                if pair.same_author {
                    same.push(curve?);
                } else {
                    different.push(curve?);
                }
            }
            let meta = train_unmask_meta(&same, &different, &prepared.params.train)?;
            (
                true,
                Box::new(move |batch: &[AvPair]| {
                    let scored = parallel_map(batch, |pair| {
                        Ok(unmask_verify(&unmask_one(pair)?, &meta, 0.5)?.score)
                    });
                    scored.into_iter().collect()
                }),
            )
        }
        Method::Imposters => unreachable!("validated as aa-only"),
    };

    // Decision threshold tunes on validation pairs, falling back to train
    // pairs (never test) when validation is empty or single-label.
    let theta = if tuned_default {
        0.5
    } else {
        let tune = |set: &[AvPair]| -> Result<Option<f64>> {
            if set.is_empty() {
                return Ok(None);
            }
            let labels: Vec<bool> = set.iter().map(|p| p.same_author).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                return Ok(None);
            }
            let scores = score_pairs(set)?;
            let grid = crate::verify::default_grid(&scores)?;
            Ok(Some(threshold_search(&scores, &labels, &grid)?))
        };
        match tune(&pairs.validation)? {
            Some(theta) => theta,
            None => {
                warnings
                    .push("no usable validation pairs; threshold tuned on train pairs".to_string());
                tune(&pairs.train)?
                    .ok_or_else(|| Error::data("cannot tune threshold: train pairs single-label"))?
            }
        }
    };

    let raw = score_pairs(&pairs.test)?;
    let calibrated = calibrate_scores(&raw, theta);
    let rows: Vec<AvRow> = pairs
        .test
        .iter()
        .zip(calibrated)
        .map(|(pair, score)| AvRow {
            pair_id: pair.pair_id.clone(),
            true_same: pair.same_author,
            score,
            abstain: false,
        })
        .collect();
    Ok((AvPredictions::new(rows)?, pairs))
}

/// Executes load, optional dedup, split, fit on train, tune on validation,
/// evaluate on test; writes predictions, the report, the split, and a run
/// record into the config's output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let started = Instant::now();
    config.validate()?;
    let out_dir = config
        .output_dir
        .as_ref()
        .ok_or_else(|| Error::config("config has no output_dir"))?;
    std::fs::create_dir_all(out_dir)?;
    let mut warnings = Vec::new();

    let format = match config.corpus.format {
        Some(f) => f,
        None => detect_format(&config.corpus.path)?,
    };
    let mut corpus = load_corpus(&config.corpus.path, format)?;
    if config.corpus.dedup {
        let (kept, removed) = dedup_exact(&corpus);
        if !removed.is_empty() {
            warnings.push(format!(
                "dedup removed {} duplicate document(s)",
                removed.len()
            ));
        }
        corpus = kept;
    }

    let split = match (&config.split.file, config.split.kind) {
        (Some(file), None) => {
            let split = Split::load(file)?;
            for id in split
                .train
                .iter()
                .chain(&split.validation)
                .chain(&split.test)
            {
                if !corpus.contains(id) {
                    return Err(Error::data(format!(
                        "split references unknown document {id:?}"
                    )));
                }
            }
            split
        }
        (None, Some(kind)) => {
            let fractions = config.split.fractions.unwrap_or((0.6, 0.2, 0.2));
            make_split(&corpus, kind, fractions, config.seed)?
        }
        _ => unreachable!("config validated"),
    };
    split.validate_disjoint()?;
    warnings.extend(split.warnings.iter().cloned());

    let prepared = Prepared {
        corpus: &corpus,
        split: &split,
        params: &config.params,
        seed: config.seed,
    };
    let mut audit = LeakageAudit::default();

    let metric_names = config.metric_names();
    let mut all_metrics: BTreeMap<String, f64> = BTreeMap::new();
    let n;
    let mut per_class_n: BTreeMap<String, u64> = BTreeMap::new();
    let predictions_path = out_dir.join("predictions.csv");

    match config.task {
        Task::Aa => {
            let preds = run_aa(&prepared, config.method, &mut audit)?;
            audit.verify(&split)?;
            n = preds.rows().len() as u64;
            for row in preds.rows() {
                *per_class_n.entry(row.true_author.clone()).or_insert(0) += 1;
            }
            all_metrics.insert("accuracy".to_string(), accuracy(&preds));
            all_metrics.insert("macro_accuracy".to_string(), macro_accuracy(&preds));
            preds.save_csv(&predictions_path)?;
        }
        Task::Av => {
            let (preds, pairs) = run_av(&prepared, config.method, &mut audit, &mut warnings)?;
            audit.verify(&split)?;
            n = preds.rows().len() as u64;
            for row in preds.rows() {
                let label = if row.true_same { "same" } else { "different" };
                *per_class_n.entry(label.to_string()).or_insert(0) += 1;
            }
            let policy = if config.pan_compat {
                AbstainPolicy::Exclude
            } else {
                AbstainPolicy::Include
            };
            let pan = pan_metrics(&preds, policy)?;
            all_metrics.extend(pan.as_map());
            preds.save_csv(&predictions_path)?;
            pairs.save_csv(out_dir.join("pairs.csv"))?;
        }
    }

    let metrics: BTreeMap<String, f64> = metric_names
        .iter()
        .map(|name| {
            all_metrics
                .get(name)
                .map(|&v| (name.clone(), v))
                .ok_or_else(|| Error::invariant(format!("metric {name} not computed")))
        })
        .collect::<Result<_>>()?;

    let report = EvalReport {
        task: config.task.to_string(),
        metrics,
        n,
        per_class_n,
        config_hash: config_hash(config),
        split_hash: split.hash(),
        toolkit_version: VERSION.to_string(),
    };
    report.save(out_dir.join("report.json"))?;
    split.save(out_dir.join("split.json"))?;

    let record = RunRecord {
        config: config.clone(),
        split_hash: split.hash(),
        duration_secs: started.elapsed().as_secs_f64(),
        report,
        toolkit_version: VERSION.to_string(),
        predictions_path,
        warnings,
    };
    record.save(out_dir.join("run.json"))?;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    MarkdownTable,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "markdown_table" | "md" => Ok(ReportFormat::MarkdownTable),
            other => Err(Error::config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Renders a run record to a file: full JSON, a metric,value CSV, or a
/// one-row markdown table with the split hash in a footer.
pub fn report_to_string(record: &RunRecord, format: ReportFormat) -> Result<String> {
    if record.report.metrics.is_empty() {
        return Err(Error::data("run record has no metrics to render"));
    }
    record.report.validate()?;
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(record)?),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["metric", "value"])?;
            for (name, value) in &record.report.metrics {
                w.write_record([name.as_str(), &value.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::MarkdownTable => {
            let dataset = record
                .config
                .corpus
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".to_string());
            let mut text = String::new();
            let names: Vec<&String> = record.report.metrics.keys().collect();
            text.push_str("| method | dataset | n |");
            for name in &names {
                text.push_str(&format!(" {name} |"));
            }
            text.push('\n');
            text.push_str("| --- | --- | --- |");
            for _ in &names {
                text.push_str(" --- |");
            }
            text.push('\n');
            text.push_str(&format!(
                "| {} | {} | {} |",
                record.config.method, dataset, record.report.n
            ));
            for name in &names {
                text.push_str(&format!(" {:.4} |", record.report.metrics[*name]));
            }
            text.push('\n');
            text.push_str(&format!("\nsplit hash: {}\n", record.split_hash));
            Ok(text)
        }
    }
}

pub fn report_render(
    record: &RunRecord,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, report_to_string(record, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_corpus() -> Corpus {
        // 4 authors x 8 docs with distinct letter habits; a 0.25 test
        // fraction leaves 2 docs per author, enough for same-author pairs.
        let mut docs = Vec::new();
        let styles = [
            (
                "ann",
                "aa bb aa cc aa dd aa ee aa ff aa gg aa hh aa ii aa jj",
            ),
            (
                "bob",
                "zz yy zz xx zz ww zz vv zz uu zz tt zz ss zz rr zz qq",
            ),
            (
                "cat",
                "mn op mn qr mn st mn uv mn wx mn yz mn ab mn cd mn ef",
            ),
            (
                "dan",
                "kk ll kk mm kk nn kk oo kk pp kk qq kk rr kk ss kk tt",
            ),
        ];
        for (author, base) in styles {
            for d in 0..8 {
                docs.push(Document {
                    id: format!("{author}_{d}"),
                    author: author.to_string(),
                    text: format!("{base} {d} {base}"),
                    topic: None,
                    genre: None,
                });
            }
        }
        Corpus::from_documents(docs).unwrap()
    }

    fn write_toy_jsonl(dir: &Path) -> PathBuf {
        let path = dir.join("toy.jsonl");
        save_corpus_jsonl(&toy_corpus(), &path).unwrap();
        path
    }

    fn base_config(corpus_path: &Path, out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            task: Task::Aa,
            method: Method::NgramEnsemble,
            seed: 7,
            metrics: vec![],
            output_dir: Some(out.to_path_buf()),
            pan_compat: false,
            corpus: CorpusSection {
                path: corpus_path.to_path_buf(),
                format: None,
                dedup: false,
            },
            split: SplitSection {
                file: None,
                kind: Some(SplitKind::Iid),
                fractions: Some((0.5, 0.25, 0.25)),
            },
            params: MethodParams {
                families: vec![
                    FamilyParam {
                        kind: "char".into(),
                        n: 2,
                        top_k: 60,
                    },
                    FamilyParam {
                        kind: "token".into(),
                        n: 1,
                        top_k: 60,
                    },
                ],
                train: TrainConfig {
                    epochs: 120,
                    ..TrainConfig::default()
                },
                ppm_order: 2,
                pairs_per_class: 4,
                ..MethodParams::default()
            },
        }
    }

    #[test]
    fn config_toml_roundtrip_and_unknown_key_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = write_toy_jsonl(dir.path());
        let config_path = dir.path().join("exp.toml");
        std::fs::write(
            &config_path,
            format!(
                r#"
task = "aa"
method = "ppm"
seed = 3

[corpus]
path = "{}"

[split]
kind = "iid"
fractions = [0.6, 0.2, 0.2]

[params]
ppm_order = 3
"#,
                corpus_path.file_name().unwrap().to_str().unwrap()
            ),
        )
        .unwrap();
        let config = load_config(&config_path).unwrap();
        assert_eq!(config.method, Method::Ppm);
        assert_eq!(config.params.ppm_order, 3);
        // Relative corpus path resolved against the config directory.
        assert!(config.corpus.path.exists());

        std::fs::write(
            &config_path,
            r#"
task = "aa"
method = "ppm"
seed = 3
surprise = true

[corpus]
path = "toy.jsonl"

[split]
kind = "iid"
"#,
        )
        .unwrap();
        let err = load_config(&config_path).unwrap_err();
        assert!(err.to_string().contains("surprise"), "{err}");
    }

    #[test]
    fn config_rejects_method_task_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = write_toy_jsonl(dir.path());
        let mut config = base_config(&corpus_path, dir.path());
        config.method = Method::Unmasking; // av-only
        assert!(config.validate().is_err());
        config.method = Method::Imposters;
        config.task = Task::Av;
        assert!(config.validate().is_err());
        config.task = Task::Aa;
        assert!(config.validate().is_ok());
        config.metrics = vec!["auc".to_string()]; // av metric under aa
        assert!(config.validate().is_err());
    }

    #[test]
    fn synth_is_deterministic_and_validated() {
        let a = synth_corpus(3, 2, 120, 1.0, 9).unwrap();
        let b = synth_corpus(3, 2, 120, 1.0, 9).unwrap();
        assert_eq!(a.docs(), b.docs());
        assert_eq!(a.len(), 6);
        assert!(synth_corpus(0, 2, 120, 1.0, 9).is_err());
        assert!(synth_corpus(3, 2, 120, 1.5, 9).is_err());
    }

    /// Mean per-row KL divergence in bits between two authors' transition
    /// matrices: zero at separation 0, substantial at separation 1.
    fn mean_row_kl(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
        let rows = p.len() as f64;
        p.iter()
            .zip(q)
            .map(|(pr, qr)| {
                pr.iter()
                    .zip(qr)
                    .map(|(&a, &b)| if a > 0.0 { a * (a / b).log2() } else { 0.0 })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / rows
    }

    #[test]
    fn synth_separation_controls_author_divergence() {
        let shared_a = synth_transition_matrix(4, 0.0, 0);
        let shared_b = synth_transition_matrix(4, 0.0, 1);
        assert_eq!(shared_a, shared_b);
        assert_eq!(mean_row_kl(&shared_a, &shared_b), 0.0);

        let own_a = synth_transition_matrix(4, 1.0, 0);
        let own_b = synth_transition_matrix(4, 1.0, 1);
        let kl = mean_row_kl(&own_a, &own_b);
        assert!(kl >= 0.5, "mean KL {kl} bits");
    }

    #[test]
    fn pair_sampling_respects_partitions_and_balance() {
        let corpus = toy_corpus();
        let split = make_split(&corpus, SplitKind::Iid, (0.5, 0.25, 0.25), 11).unwrap();
        let pairs = av_pairs_from_split(&corpus, &split, 3, 11).unwrap();

        let partitions = [
            (&pairs.train, &split.train),
            (&pairs.validation, &split.validation),
            (&pairs.test, &split.test),
        ];
        for (pairs, members) in partitions {
            let mut seen = BTreeSet::new();
            let mut same = 0;
            let mut different = 0;
            for pair in pairs {
                assert!(members.contains(&pair.a) && members.contains(&pair.b));
                assert_ne!(pair.a, pair.b);
                let key = if pair.a < pair.b {
                    (pair.a.clone(), pair.b.clone())
                } else {
                    (pair.b.clone(), pair.a.clone())
                };
                assert!(seen.insert(key), "duplicate unordered pair");
                let (da, db) = (corpus.get(&pair.a).unwrap(), corpus.get(&pair.b).unwrap());
                assert_eq!(pair.same_author, da.author == db.author);
                if pair.same_author {
                    same += 1;
                } else {
                    different += 1;
                }
            }
            assert_eq!(same, different, "balanced per partition");
        }
        let again = av_pairs_from_split(&corpus, &split, 3, 11).unwrap();
        assert_eq!(pairs, again);
    }

    #[test]
    fn minimal_pair_sampling() {
        let docs = vec![
            Document {
                id: "a1".into(),
                author: "ann".into(),
                text: "x".into(),
                topic: None,
                genre: None,
            },
            Document {
                id: "a2".into(),
                author: "ann".into(),
                text: "x".into(),
                topic: None,
                genre: None,
            },
            Document {
                id: "b1".into(),
                author: "bob".into(),
                text: "x".into(),
                topic: None,
                genre: None,
            },
            Document {
                id: "b2".into(),
                author: "bob".into(),
                text: "x".into(),
                topic: None,
                genre: None,
            },
        ];
        let corpus = Corpus::from_documents(docs).unwrap();
        let split = Split {
            kind: SplitKind::Iid,
            train: ["a1", "a2", "b1", "b2"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            validation: BTreeSet::new(),
            test: ["a1", "a2", "b1", "b2"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            warnings: vec![],
        };
        // Overlapping train/test here only exercises pair construction.
        let pairs = av_pairs_from_split(&corpus, &split, 1, 0).unwrap();
        assert_eq!(pairs.train.len(), 2);
        assert_eq!(pairs.train.iter().filter(|p| p.same_author).count(), 1);
        assert!(!pairs.warnings.is_empty(), "validation emptiness warned");
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u64> = (0..103).collect();
        let expected: Vec<u64> = items.iter().map(|x| x * x).collect();
        for workers in [1, 2, 3, 8, 200] {
            assert_eq!(parallel_map_with(workers, &items, |&x| x * x), expected);
        }
        assert_eq!(parse_thread_cap(Some("4".into())), Some(4));
        assert_eq!(parse_thread_cap(Some("0".into())), None);
        assert_eq!(parse_thread_cap(Some("many".into())), None);
        assert_eq!(parse_thread_cap(None), None);
    }

    #[test]
    fn leakage_audit_catches_test_consumption() {
        let corpus = toy_corpus();
        let split = make_split(&corpus, SplitKind::Iid, (0.5, 0.25, 0.25), 1).unwrap();
        let mut audit = LeakageAudit::default();
        for id in &split.train {
            audit.record_fit(id);
        }
        assert!(audit.verify(&split).is_ok());
        audit.record_fit(split.test.iter().next().unwrap());
        let err = audit.verify(&split).unwrap_err();
        assert!(err.to_string().contains("test document"), "{err}");

        let mut audit = LeakageAudit::default();
        audit.record_predict(split.train.iter().next().unwrap());
        assert!(audit.verify(&split).is_err());
    }

    #[test]
    fn aa_experiment_runs_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = write_toy_jsonl(dir.path());
        let out = dir.path().join("run1");
        let config = base_config(&corpus_path, &out);
        let record = run_experiment(&config).unwrap();
        assert!(record.report.metrics.contains_key("macro_accuracy"));
        assert_eq!(record.report.task, "aa");
        assert_eq!(record.toolkit_version, VERSION);
        assert!(record.predictions_path.exists());
        assert_eq!(record.split_hash, record.report.split_hash);

        let bytes1 = std::fs::read(out.join("predictions.csv")).unwrap();
        let report1 = std::fs::read(out.join("report.json")).unwrap();
        run_experiment(&config).unwrap();
        let bytes2 = std::fs::read(out.join("predictions.csv")).unwrap();
        let report2 = std::fs::read(out.join("report.json")).unwrap();
        assert_eq!(bytes1, bytes2, "byte-identical predictions across runs");
        assert_eq!(report1, report2);
    }

    #[test]
    fn av_ppm_experiment_reports_auc_in_range() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = write_toy_jsonl(dir.path());
        let out = dir.path().join("run");
        let mut config = base_config(&corpus_path, &out);
        config.task = Task::Av;
        config.method = Method::Ppm;
        let record = run_experiment(&config).unwrap();
        let auc = record.report.metrics["auc"];
        assert!((0.0..=1.0).contains(&auc));
        assert!(out.join("pairs.csv").exists());
        // Abstentions aside, c_at_1 is also a [0,1] rate.
        assert!((0.0..=1.0).contains(&record.report.metrics["c_at_1"]));
    }

    #[test]
    fn calibration_pins_threshold_to_half_and_preserves_order() {
        let raw = [-3.0, -1.0, -0.5, 0.0];
        let theta = -1.0;
        let cal = calibrate_scores(&raw, theta);
        assert_eq!(cal[1], 0.5);
        assert!(cal[0] < 0.5 && cal[2] > 0.5);
        for w in cal.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(cal.iter().all(|&s| (0.0..=1.0).contains(&s)));
        // Degenerate range: everything collapses to the abstention point.
        assert_eq!(calibrate_scores(&[2.0, 2.0], 2.0), vec![0.5, 0.5]);
    }

    #[test]
    fn report_render_formats() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = write_toy_jsonl(dir.path());
        let out = dir.path().join("run");
        let record = run_experiment(&base_config(&corpus_path, &out)).unwrap();

        let json_path = dir.path().join("report.json");
        report_render(&record, ReportFormat::Json, &json_path).unwrap();
        let reloaded = RunRecord::load(&json_path).unwrap();
        assert_eq!(reloaded.report, record.report);
        assert_eq!(reloaded.config, record.config);

        let csv_path = dir.path().join("report.csv");
        report_render(&record, ReportFormat::Csv, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        // Header plus one row per metric.
        assert_eq!(text.lines().count(), 1 + record.report.metrics.len());

        let md_path = dir.path().join("report.md");
        report_render(&record, ReportFormat::MarkdownTable, &md_path).unwrap();
        let text = std::fs::read_to_string(&md_path).unwrap();
        assert!(text.contains("| ngram_ensemble | toy |"));
        assert!(text.contains(&format!("split hash: {}", record.split_hash)));
    }

    #[test]
    fn split_file_configs_load_and_run() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = write_toy_jsonl(dir.path());
        let corpus = toy_corpus();
        let split = make_split(&corpus, SplitKind::Iid, (0.5, 0.25, 0.25), 7).unwrap();
        let split_path = dir.path().join("split.json");
        split.save(&split_path).unwrap();

        let mut config = base_config(&corpus_path, &dir.path().join("run"));
        config.split = SplitSection {
            file: Some(split_path),
            kind: None,
            fractions: None,
        };
        let record = run_experiment(&config).unwrap();
        assert_eq!(record.split_hash, split.hash());
    }
}
