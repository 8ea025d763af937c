//! Corpus loading, deduplication, statistics, and train/val/test splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::features::{word_spans, TokenKind};
use crate::seeds;
use crate::{Error, Result};

/// One document with its author label and optional metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub author: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
}

/// An ordered document collection with unique ids and non-empty texts.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut index = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(Error::data("document with empty id"));
            }
            if doc.author.is_empty() {
                return Err(Error::data(format!(
                    "document {:?} has empty author",
                    doc.id
                )));
            }
            if doc.text.trim().is_empty() {
                return Err(Error::data(format!("document {:?} has empty text", doc.id)));
            }
            if index.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { docs, index })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    /// Distinct authors, sorted.
    pub fn authors(&self) -> BTreeSet<&str> {
        self.docs.iter().map(|d| d.author.as_str()).collect()
    }

    /// Documents grouped by author, in corpus order within each group.
    pub fn docs_by_author(&self) -> BTreeMap<&str, Vec<&Document>> {
        let mut groups: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
        for doc in &self.docs {
            groups.entry(doc.author.as_str()).or_default().push(doc);
        }
        groups
    }

    /// The sub-corpus containing exactly `ids`, in corpus order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> Result<Corpus> {
        let docs: Vec<Document> = self
            .docs
            .iter()
            .filter(|d| ids.contains(&d.id))
            .cloned()
            .collect();
        if docs.len() != ids.len() {
            let missing: Vec<&String> = ids.iter().filter(|id| !self.contains(id)).collect();
            return Err(Error::data(format!(
                "{} unknown document id(s), first: {:?}",
                missing.len(),
                missing.first().map(|s| s.as_str()).unwrap_or("")
            )));
        }
        Corpus::from_documents(docs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
    DirectoryTree,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            "directory_tree" | "dir" => Ok(CorpusFormat::DirectoryTree),
            other => Err(Error::config(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Guess the format from the path: directories are trees, otherwise the
/// extension decides.
pub fn detect_format(path: &Path) -> Result<CorpusFormat> {
    if path.is_dir() {
        return Ok(CorpusFormat::DirectoryTree);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => Ok(CorpusFormat::Jsonl),
        Some("csv") => Ok(CorpusFormat::Csv),
        _ => Err(Error::config(format!(
            "cannot infer corpus format of {}; pass one explicitly",
            path.display()
        ))),
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let docs = match format {
        CorpusFormat::Jsonl => load_jsonl(path)?,
        CorpusFormat::Csv => load_csv(path)?,
        CorpusFormat::DirectoryTree => load_tree(path)?,
    };
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::from_documents(docs)
}

fn check_record(doc: &Document, line: u64) -> Result<()> {
    if doc.id.is_empty() || doc.author.is_empty() {
        return Err(Error::MalformedRecord {
            line,
            message: "id and author must be non-empty".to_string(),
        });
    }
    if doc.text.trim().is_empty() {
        return Err(Error::MalformedRecord {
            line,
            message: format!("document {:?} has empty text", doc.id),
        });
    }
    Ok(())
}

fn load_jsonl(path: &Path) -> Result<Vec<Document>> {
    let content = std::fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = (i + 1) as u64;
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        check_record(&doc, line_no)?;
        docs.push(doc);
    }
    Ok(docs)
}

fn load_csv(path: &Path) -> Result<Vec<Document>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, author_col, text_col) = match (col("id"), col("author"), col("text")) {
        (Some(i), Some(a), Some(t)) => (i, a, t),
        _ => {
            return Err(Error::config(
                "csv corpus requires header columns id, author, text",
            ))
        }
    };
    let topic_col = col("topic");
    let genre_col = col("genre");
    // Empty cells in optional columns mean "no label".
    let optional = |record: &csv::StringRecord, col: Option<usize>| {
        col.and_then(|c| record.get(c))
            .filter(|s| !s.is_empty())
            .map(String::from)
    };

    let mut docs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize| {
            record
                .get(c)
                .map(String::from)
                .ok_or(Error::MalformedRecord {
                    line,
                    message: format!("missing column {c}"),
                })
        };
        let doc = Document {
            id: field(id_col)?,
            author: field(author_col)?,
            text: field(text_col)?,
            topic: optional(&record, topic_col),
            genre: optional(&record, genre_col),
        };
        check_record(&doc, line)?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Layout: `<root>/<author>/<doc_id>.txt`. Non-directories under the root
/// and non-`.txt` files are ignored; entries are visited in sorted order so
/// loading does not depend on filesystem order.
fn load_tree(root: &Path) -> Result<Vec<Document>> {
    let mut author_dirs: Vec<std::path::PathBuf> = std::fs::read_dir(root)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    author_dirs.sort();

    let mut docs = Vec::new();
    for dir in author_dirs {
        let author = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| {
                Error::data(format!(
                    "non-UTF-8 author directory under {}",
                    root.display()
                ))
            })?
            .to_string();
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(&dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some("txt"))
            .collect();
        files.sort();
        for file in files {
            let id = file
                .file_stem()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::data(format!("non-UTF-8 file name {}", file.display())))?
                .to_string();
            let text = std::fs::read_to_string(&file)
                .map_err(|e| Error::data(format!("{}: {e}", file.display())))?;
            if text.trim().is_empty() {
                return Err(Error::data(format!("{}: empty text", file.display())));
            }
            docs.push(Document {
                id,
                author: author.clone(),
                text,
                topic: None,
                genre: None,
            });
        }
    }
    Ok(docs)
}

/// Remove exact duplicates (byte equality after Unicode NFC normalization),
/// keeping the first occurrence. Returns the kept corpus and, per removed
/// document, `(removed_id, kept_id)`.
pub fn dedup_exact(corpus: &Corpus) -> (Corpus, Vec<(String, String)>) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for doc in corpus.docs() {
        let normalized: String = doc.text.nfc().collect();
        match seen.get(&normalized) {
            Some(&first) => removed.push((doc.id.clone(), corpus.docs()[first].id.clone())),
            None => {
                seen.insert(normalized, kept.len());
                kept.push(doc.clone());
            }
        }
    }
    let index = kept
        .iter()
        .enumerate()
        .map(|(i, d): (usize, &Document)| (d.id.clone(), i))
        .collect();
    (Corpus { docs: kept, index }, removed)
}

/// Corpus-level counts. Integers are stored exactly; ratios are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub documents: u64,
    pub authors: u64,
    /// Word tokens over all documents (punctuation and apostrophe suffixes
    /// are not words).
    pub words: u64,
    /// Population standard deviation of per-author document counts.
    pub imbalance: f64,
}

impl DatasetStats {
    pub fn docs_per_author(&self) -> f64 {
        self.documents as f64 / self.authors as f64
    }

    pub fn words_per_doc(&self) -> f64 {
        self.words as f64 / self.documents as f64
    }
}

pub fn compute_stats(corpus: &Corpus) -> DatasetStats {
    let mut author_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut words: u64 = 0;
    for doc in corpus.docs() {
        *author_counts.entry(doc.author.as_str()).or_insert(0) += 1;
        words += word_spans(&doc.text)
            .iter()
            .filter(|t| t.kind == TokenKind::Word)
            .count() as u64;
    }
    let documents = corpus.len() as u64;
    let authors = author_counts.len() as u64;
    let mean = documents as f64 / authors as f64;
    let variance = author_counts
        .values()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / authors as f64;
    DatasetStats {
        documents,
        authors,
        words,
        imbalance: variance.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Stratified per author; test authors always appear in train.
    Iid,
    /// Partition by topic label; no test topic appears in train.
    CrossTopic,
    /// Partition by genre label; no test genre appears in train.
    CrossGenre,
    /// Partition by author; no test author appears in train.
    UniqueAuthor,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitKind::Iid => "iid",
            SplitKind::CrossTopic => "cross_topic",
            SplitKind::CrossGenre => "cross_genre",
            SplitKind::UniqueAuthor => "unique_author",
        };
        f.write_str(s)
    }
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(SplitKind::Iid),
            "cross_topic" => Ok(SplitKind::CrossTopic),
            "cross_genre" => Ok(SplitKind::CrossGenre),
            "unique_author" => Ok(SplitKind::UniqueAuthor),
            other => Err(Error::config(format!("unknown split kind {other:?}"))),
        }
    }
}

/// A train/validation/test partition of document ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub kind: SplitKind,
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub warnings: Vec<String>,
}

/// On-disk form of a split; `hash` guards against hand edits.
#[derive(Serialize, Deserialize)]
struct SplitFile {
    kind: SplitKind,
    hash: String,
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

impl Split {
    /// Content hash over the kind and the three sorted id lists.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.to_string().as_bytes());
        for (name, set) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            h.update(name.as_bytes());
            h.update((set.len() as u64).to_le_bytes());
            for id in set {
                h.update((id.len() as u64).to_le_bytes());
                h.update(id.as_bytes());
            }
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = SplitFile {
            kind: self.kind,
            hash: self.hash(),
            train: self.train.iter().cloned().collect(),
            validation: self.validation.iter().cloned().collect(),
            test: self.test.iter().cloned().collect(),
        };
        let out = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Split> {
        let file = std::fs::File::open(path.as_ref())?;
        let parsed: SplitFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        let split = Split {
            kind: parsed.kind,
            train: parsed.train.into_iter().collect(),
            validation: parsed.validation.into_iter().collect(),
            test: parsed.test.into_iter().collect(),
            warnings: Vec::new(),
        };
        if split.hash() != parsed.hash {
            return Err(Error::data(format!(
                "split hash mismatch in {}",
                path.as_ref().display()
            )));
        }
        Ok(split)
    }

    /// All ids across the three sets, which are pairwise disjoint.
    pub fn validate_disjoint(&self) -> Result<()> {
        for id in &self.train {
            if self.validation.contains(id) || self.test.contains(id) {
                return Err(Error::invariant(format!(
                    "id {id:?} in multiple split sets"
                )));
            }
        }
        for id in &self.validation {
            if self.test.contains(id) {
                return Err(Error::invariant(format!(
                    "id {id:?} in multiple split sets"
                )));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

pub fn check_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let (tr, va, te) = fractions;
    for f in [tr, va, te] {
        if !(0.0..=1.0).contains(&f) || !f.is_finite() {
            return Err(Error::config(format!("split fraction {f} out of [0, 1]")));
        }
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must sum to 1, got {}",
            tr + va + te
        )));
    }
    Ok(())
}

/// Deterministically split a corpus.
///
/// The result is a pure function of the corpus content, the kind, the
/// fractions `(train, validation, test)`, and the seed; it does not depend
/// on document order.
pub fn make_split(
    corpus: &Corpus,
    kind: SplitKind,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Split> {
    check_fractions(fractions)?;
    match kind {
        SplitKind::Iid => split_iid(corpus, fractions, seed),
        SplitKind::CrossTopic => split_by_label(corpus, kind, fractions, seed, |d| {
            d.topic
                .as_deref()
                .ok_or_else(|| Error::data(format!("document {:?} has no topic label", d.id)))
        }),
        SplitKind::CrossGenre => split_by_label(corpus, kind, fractions, seed, |d| {
            d.genre
                .as_deref()
                .ok_or_else(|| Error::data(format!("document {:?} has no genre label", d.id)))
        }),
        SplitKind::UniqueAuthor => {
            split_by_label(corpus, kind, fractions, seed, |d| Ok(d.author.as_str()))
        }
    }
}

fn split_iid(corpus: &Corpus, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (f_train, f_val, f_test) = fractions;
    if f_train <= 0.0 {
        return Err(Error::config(
            "iid split requires a positive train fraction",
        ));
    }
    let mut split = Split {
        kind: SplitKind::Iid,
        train: BTreeSet::new(),
        validation: BTreeSet::new(),
        test: BTreeSet::new(),
        warnings: Vec::new(),
    };
    for (author, docs) in corpus.docs_by_author() {
        let mut ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
        ids.sort();
        let n = ids.len();
        if n < 3 {
            split.warnings.push(format!(
                "author {author:?} has only {n} document(s); all assigned to train"
            ));
            split.train.extend(ids);
            continue;
        }
        let mut rng = seeds::rng(seed, &format!("split:iid:{author}"));
        ids.shuffle(&mut rng);
        // Floor allocations, at least one per requested set, remainder to
        // train; train keeps at least one document.
        let mut n_val = if f_val > 0.0 {
            ((f_val * n as f64).floor() as usize).max(1)
        } else {
            0
        };
        let mut n_test = if f_test > 0.0 {
            ((f_test * n as f64).floor() as usize).max(1)
        } else {
            0
        };
        while n_val + n_test >= n {
            if n_val >= n_test {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        let (test_ids, rest) = ids.split_at(n_test);
        let (val_ids, train_ids) = rest.split_at(n_val);
        split.test.extend(test_ids.iter().cloned());
        split.validation.extend(val_ids.iter().cloned());
        split.train.extend(train_ids.iter().cloned());
    }
    Ok(split)
}

/// Greedy label partition: whole label groups are dealt to test until its
/// document target is met, then to validation, then to train. The last
/// unassigned label is forced to train so train is never empty.
fn split_by_label<'a, F>(
    corpus: &'a Corpus,
    kind: SplitKind,
    fractions: (f64, f64, f64),
    seed: u64,
    label_of: F,
) -> Result<Split>
where
    F: Fn(&'a Document) -> Result<&'a str>,
{
    let (_, f_val, f_test) = fractions;
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for doc in corpus.docs() {
        groups
            .entry(label_of(doc)?)
            .or_default()
            .push(doc.id.as_str());
    }
    if groups.len() < 2 {
        return Err(Error::data(format!(
            "{kind} split requires documents from at least 2 labels, found {}",
            groups.len()
        )));
    }
    let mut labels: Vec<&str> = groups.keys().copied().collect();
    let mut rng = seeds::rng(seed, &format!("split:{kind}"));
    labels.shuffle(&mut rng);

    let total = corpus.len() as f64;
    let target_test = f_test * total;
    let target_val = f_val * total;

    let mut split = Split {
        kind,
        train: BTreeSet::new(),
        validation: BTreeSet::new(),
        test: BTreeSet::new(),
        warnings: Vec::new(),
    };
    let mut train_labels = 0usize;
    for (i, label) in labels.iter().enumerate() {
        let ids = groups[label].iter().map(|s| s.to_string());
        let last = i == labels.len() - 1;
        if last && train_labels == 0 {
            split.train.extend(ids);
            train_labels += 1;
        } else if (split.test.len() as f64) < target_test {
            split.test.extend(ids);
        } else if (split.validation.len() as f64) < target_val {
            split.validation.extend(ids);
        } else {
            split.train.extend(ids);
            train_labels += 1;
        }
    }
    if f_val > 0.0 && split.validation.is_empty() {
        split
            .warnings
            .push("too few labels to populate a validation set".to_string());
    }
    Ok(split)
}
