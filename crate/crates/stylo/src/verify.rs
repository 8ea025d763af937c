//! Attribution and verification strategies built on feature vectors:
//! profile-based nearest-centroid attribution, threshold verification,
//! unmasking, round-win imposter attribution, and a linear metric model
//! trained with triplet loss.
//!
//! The unmasking meta-classifier is logistic regression; for linearly
//! separable curve features the decision boundary family is the same as a
//! linear SVM's and training stays deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Document};
use crate::features::{vector_diff, FeatureSchema, FeatureVector, TokenKind};
use crate::linear::{
    predict_proba, predict_ranked, train_logreg, LinearModel, TrainConfig, DIFFERENT_LABEL,
    SAME_LABEL,
};
use crate::{seeds, Error, Result};

/// An author represented by the mean of sampled member embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorProfile {
    pub author_id: String,
    pub centroid: FeatureVector,
    pub member_ids: Vec<String>,
}

/// Exact arithmetic mean; no renormalization afterwards.
fn mean_vectors(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    let dim = vectors[0].dim();
    let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::config("member vectors disagree on dimension"));
        }
        for (col, value) in v.iter() {
            *sums.entry(col).or_insert(0.0) += value;
        }
    }
    let n = vectors.len() as f64;
    FeatureVector::from_pairs(dim, sums.into_iter().map(|(c, s)| (c, s / n)))
}

/// Builds one profile per author by sampling up to `profile_size` documents
/// without replacement and averaging their embeddings. Sampling shuffles the
/// sorted document ids of each author under a per-author substream, so the
/// result does not depend on corpus insertion order.
pub fn build_profiles<F>(
    corpus: &Corpus,
    embed: F,
    profile_size: usize,
    seed: u64,
) -> Result<BTreeMap<String, AuthorProfile>>
where
    F: Fn(&Document) -> Result<FeatureVector>,
{
    if profile_size == 0 {
        return Err(Error::config("profile_size must be at least 1"));
    }
    let mut profiles = BTreeMap::new();
    for (author, docs) in corpus.docs_by_author() {
        let mut ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        let mut rng = seeds::rng(seed, &format!("profile:{author}"));
        ids.shuffle(&mut rng);
        let member_ids: Vec<String> = ids[..profile_size.min(ids.len())]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let vectors = member_ids
            .iter()
            .map(|id| embed(corpus.get(id).expect("member id from corpus")))
            .collect::<Result<Vec<_>>>()?;
        profiles.insert(
            author.to_string(),
            AuthorProfile {
                author_id: author.to_string(),
                centroid: mean_vectors(&vectors)?,
                member_ids,
            },
        );
    }
    Ok(profiles)
}

/// Nearest-centroid attribution: authors ranked by ascending Euclidean
/// distance from `x`, ties broken lexicographically.
pub fn profile_attribute(
    profiles: &BTreeMap<String, AuthorProfile>,
    x: &FeatureVector,
) -> Result<Vec<(String, f64)>> {
    if profiles.is_empty() {
        return Err(Error::config("no author profiles"));
    }
    let mut ranked = Vec::with_capacity(profiles.len());
    for (author, profile) in profiles {
        if profile.centroid.dim() != x.dim() {
            return Err(Error::config(format!(
                "profile {author:?} has dimension {}, query has {}",
                profile.centroid.dim(),
                x.dim()
            )));
        }
        ranked.push((author.clone(), profile.centroid.distance(x)));
    }
    ranked.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("finite distances")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// A thresholded verification verdict: same author iff score ≥ threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationDecision {
    pub score: f64,
    pub threshold: f64,
    pub same_author: bool,
}

impl VerificationDecision {
    pub fn new(score: f64, threshold: f64) -> Self {
        VerificationDecision {
            score,
            threshold,
            same_author: score >= threshold,
        }
    }
}

/// 101 evenly spaced candidate thresholds spanning the observed scores.
pub fn default_grid(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::data("grid requires non-empty finite scores"));
    }
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![min]);
    }
    Ok((0..=100)
        .map(|i| min + (max - min) * i as f64 / 100.0)
        .collect())
}

/// Grid point maximizing accuracy of the rule (score ≥ θ → same); among
/// equally accurate points the smallest θ wins.
pub fn threshold_search(scores: &[f64], labels: &[bool], grid: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::config(
            "scores and labels must be equal-length and non-empty",
        ));
    }
    if scores.iter().chain(grid).any(|s| !s.is_finite()) {
        return Err(Error::data("scores and grid must be finite"));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::data("threshold search requires both labels"));
    }
    if grid.is_empty() {
        return Err(Error::config("empty threshold grid"));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &theta in &grid {
        let correct = scores
            .iter()
            .zip(labels)
            .filter(|&(&s, &l)| (s >= theta) == l)
            .count();
        let acc = correct as f64 / scores.len() as f64;
        if acc > best.0 {
            best = (acc, theta);
        }
    }
    Ok(best.1)
}

/// Accuracy trace of repeatedly retrained classifiers as their strongest
/// features are eliminated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationCurve {
    pub accuracies: Vec<f64>,
    pub rounds: usize,
    pub features_removed_per_round: usize,
}

impl DegradationCurve {
    /// Meta-classifier input: the raw accuracies, their first differences,
    /// and the largest decline from any earlier round to any later one.
    pub fn feature_vector(&self) -> Vec<f64> {
        let mut out = self.accuracies.clone();
        out.extend(self.accuracies.windows(2).map(|w| w[1] - w[0]));
        let mut peak = f64::NEG_INFINITY;
        let mut max_drop: f64 = 0.0;
        for &a in &self.accuracies {
            peak = peak.max(a);
            max_drop = max_drop.max(peak - a);
        }
        out.push(max_drop);
        out
    }

    pub fn total_drop(&self) -> f64 {
        match (self.accuracies.first(), self.accuracies.last()) {
            (Some(first), Some(last)) => first - last,
            _ => 0.0,
        }
    }

    /// CSV dump with columns round,accuracy for plotting.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["round", "accuracy"])?;
        for (round, acc) in self.accuracies.iter().enumerate() {
            w.write_record([round.to_string(), acc.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnmaskingConfig {
    pub rounds: usize,
    /// Features eliminated per weight sign each round (so 2x this in total).
    pub k_remove: usize,
    pub chunk_words: usize,
    pub vocab_size: usize,
    pub folds: usize,
    pub train: TrainConfig,
}

impl Default for UnmaskingConfig {
    fn default() -> Self {
        UnmaskingConfig {
            rounds: 10,
            k_remove: 3,
            chunk_words: 500,
            vocab_size: 250,
            folds: 5,
            train: TrainConfig::default(),
        }
    }
}

impl UnmaskingConfig {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.k_remove == 0 || self.chunk_words == 0 || self.folds < 2 {
            return Err(Error::config(
                "unmasking needs rounds ≥ 1, k_remove ≥ 1, chunk_words ≥ 1, folds ≥ 2",
            ));
        }
        Ok(())
    }
}

/// Lowercased word tokens of several texts, concatenated in order.
fn side_words<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    let mut words = Vec::new();
    for text in texts {
        let text = text.as_ref();
        for span in crate::features::word_spans(text) {
            if span.kind == TokenKind::Word {
                words.push(span.text(text).to_lowercase());
            }
        }
    }
    words
}

/// Consecutive full chunks; a trailing partial chunk is dropped.
fn chunk_list(words: &[String], chunk_words: usize) -> Vec<&[String]> {
    words.chunks_exact(chunk_words).collect()
}

/// Most frequent words across all inputs: count descending, then
/// lexicographic. The returned vocabulary is sorted for stable indexing.
fn top_words<'a>(sides: &[&'a [String]], vocab_size: usize) -> Vec<&'a str> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for side in sides {
        for word in *side {
            *counts.entry(word.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab: Vec<&str> = ranked
        .into_iter()
        .take(vocab_size)
        .map(|(w, _)| w)
        .collect();
    vocab.sort_unstable();
    vocab
}

/// Relative frequencies of vocabulary words within one chunk.
fn chunk_row(chunk: &[String], index: &BTreeMap<&str, usize>, dim: usize) -> Vec<f64> {
    let mut row = vec![0.0; dim];
    for word in chunk {
        if let Some(&col) = index.get(word.as_str()) {
            row[col] += 1.0;
        }
    }
    let n = chunk.len() as f64;
    for v in &mut row {
        *v /= n;
    }
    row
}

fn masked_vector(row: &[f64], active: &[bool]) -> FeatureVector {
    FeatureVector::from_pairs(
        row.len() as u32,
        row.iter()
            .enumerate()
            .filter(|&(c, _)| active[c])
            .map(|(c, &v)| (c as u32, v)),
    )
    .expect("indices are strictly increasing and in range")
}

/// Deactivates the `k` active features with the largest `high` score, then
/// the `k` remaining active features with the smallest `low` score. Ties go
/// to the smaller index.
fn remove_extreme(active: &mut [bool], high: &[f64], low: &[f64], k: usize) {
    for (scores, largest) in [(high, true), (low, false)] {
        let mut candidates: Vec<usize> = (0..active.len()).filter(|&c| active[c]).collect();
        candidates.sort_by(|&a, &b| {
            let ord = scores[a].partial_cmp(&scores[b]).expect("finite weights");
            if largest { ord.reverse() } else { ord }.then(a.cmp(&b))
        });
        for &c in candidates.iter().take(k) {
            active[c] = false;
        }
    }
}

/// Stratified cross-validated accuracy: within each class, chunk i goes to
/// fold i mod folds; folds with empty test sets are skipped.
fn cross_validated_accuracy(
    rows: &[FeatureVector],
    labels: &[&str],
    folds: usize,
    train: &TrainConfig,
) -> Result<f64> {
    let mut fold_of = vec![0usize; rows.len()];
    let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let seen = per_class.entry(label).or_insert(0);
        fold_of[i] = *seen % folds;
        *seen += 1;
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] != fold).collect();
        let test_idx: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] == fold).collect();
        if test_idx.is_empty() {
            continue;
        }
        let xs: Vec<FeatureVector> = train_idx.iter().map(|&i| rows[i].clone()).collect();
        let ys: Vec<&str> = train_idx.iter().map(|&i| labels[i]).collect();
        let model = train_logreg(&xs, &ys, train)?;
        for &i in &test_idx {
            let top = predict_ranked(&model, &rows[i])?;
            if top[0].0 == labels[i] {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Unmasking: chunk both sides, keep the most frequent words as features,
/// and repeatedly record cross-validated A-vs-B accuracy while eliminating
/// the strongest positive and negative classifier weights. Same-author
/// sides lean on a few superficial discriminators, so their curves collapse
/// faster than different-author curves.
pub fn unmask<S: AsRef<str>>(
    texts_a: &[S],
    texts_b: &[S],
    config: &UnmaskingConfig,
) -> Result<DegradationCurve> {
    config.validate()?;
    let words_a = side_words(texts_a);
    let words_b = side_words(texts_b);
    let chunks_a = chunk_list(&words_a, config.chunk_words);
    let chunks_b = chunk_list(&words_b, config.chunk_words);
    for (side, chunks) in [("a", &chunks_a), ("b", &chunks_b)] {
        if chunks.len() < 4 {
            return Err(Error::data(format!(
                "side {side} yields {} chunks of {} words; at least 4 needed",
                chunks.len(),
                config.chunk_words
            )));
        }
    }
    let vocab = top_words(&[&words_a, &words_b], config.vocab_size);
    let dim = vocab.len();
    if dim <= config.rounds * config.k_remove * 2 {
        return Err(Error::config(format!(
            "{dim} features cannot survive {} rounds removing {} each",
            config.rounds,
            config.k_remove * 2
        )));
    }
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for chunk in &chunks_a {
        rows.push(chunk_row(chunk, &index, dim));
        labels.push("a");
    }
    for chunk in &chunks_b {
        rows.push(chunk_row(chunk, &index, dim));
        labels.push("b");
    }

    let mut active = vec![true; dim];
    let mut accuracies = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let masked: Vec<FeatureVector> = rows.iter().map(|r| masked_vector(r, &active)).collect();
        accuracies.push(cross_validated_accuracy(
            &masked,
            &labels,
            config.folds,
            &config.train,
        )?);
        let model = train_logreg(&masked, &labels, &config.train)?;
        // Classes sort to [a, b]; one discriminant row tells both stories.
        let w: Vec<f64> = (0..dim)
            .map(|c| model.weights()[1][c] - model.weights()[0][c])
            .collect();
        remove_extreme(&mut active, &w, &w, config.k_remove);
    }
    Ok(DegradationCurve {
        accuracies,
        rounds: config.rounds,
        features_removed_per_round: config.k_remove * 2,
    })
}

/// Trains the curve meta-classifier from labeled example curves.
pub fn train_unmask_meta(
    same: &[DegradationCurve],
    different: &[DegradationCurve],
    config: &TrainConfig,
) -> Result<LinearModel> {
    if same.is_empty() || different.is_empty() {
        return Err(Error::data("need curves of both classes"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let width = same[0].feature_vector().len();
    for (curves, label) in [(same, SAME_LABEL), (different, DIFFERENT_LABEL)] {
        for curve in curves {
            let features = curve.feature_vector();
            if features.len() != width {
                return Err(Error::config("curves disagree on length"));
            }
            xs.push(FeatureVector::from_pairs(
                width as u32,
                features.iter().enumerate().map(|(i, &v)| (i as u32, v)),
            )?);
            ys.push(label);
        }
    }
    train_logreg(&xs, &ys, config)
}

/// Scores a degradation curve with the meta-classifier; the decision
/// thresholds the same-author probability.
pub fn unmask_verify(
    curve: &DegradationCurve,
    meta: &LinearModel,
    threshold: f64,
) -> Result<VerificationDecision> {
    let features = curve.feature_vector();
    if meta.n_features() as usize != features.len() {
        return Err(Error::config(format!(
            "meta-classifier expects {} curve features, got {}",
            meta.n_features(),
            features.len()
        )));
    }
    let same_idx = meta
        .classes()
        .iter()
        .position(|c| c == SAME_LABEL)
        .ok_or_else(|| Error::config("meta-classifier lacks a same-author class"))?;
    let x = FeatureVector::from_pairs(
        features.len() as u32,
        features.iter().enumerate().map(|(i, &v)| (i as u32, v)),
    )?;
    let score = predict_proba(meta, &x)?[same_idx];
    Ok(VerificationDecision::new(score, threshold))
}

/// Round-win attribution: retrain a multinomial classifier over candidate
/// chunks each round, record which author it picks for the query, eliminate
/// extreme weights, repeat. Scores are win fractions over rounds.
pub fn imposters_attribute(
    candidates: &BTreeMap<String, Vec<String>>,
    query: &str,
    config: &UnmaskingConfig,
) -> Result<Vec<(String, f64)>> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::data("no candidate authors"));
    }
    if candidates.len() == 1 {
        let author = candidates.keys().next().expect("one candidate").clone();
        return Ok(vec![(author, 1.0)]);
    }
    let mut side_store: Vec<(String, Vec<String>)> = Vec::new();
    for (author, texts) in candidates {
        side_store.push((author.clone(), side_words(texts)));
    }
    let query_words = side_words(&[query]);
    if query_words.is_empty() {
        return Err(Error::data("query has no words"));
    }
    let mut sides: Vec<&[String]> = side_store.iter().map(|(_, w)| w.as_slice()).collect();
    sides.push(&query_words);
    let vocab = top_words(&sides, config.vocab_size);
    let dim = vocab.len();
    if dim <= config.rounds * config.k_remove * 2 {
        return Err(Error::config(format!(
            "{dim} features cannot survive {} rounds removing {} each",
            config.rounds,
            config.k_remove * 2
        )));
    }
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, &w)| (w, i)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for (author, words) in &side_store {
        let chunks = chunk_list(words, config.chunk_words);
        if chunks.is_empty() {
            return Err(Error::data(format!(
                "candidate {author:?} has fewer than {} words",
                config.chunk_words
            )));
        }
        for chunk in chunks {
            rows.push(chunk_row(chunk, &index, dim));
            labels.push(author);
        }
    }
    let query_row = chunk_row(&query_words, &index, dim);

    let mut active = vec![true; dim];
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    for _ in 0..config.rounds {
        let masked: Vec<FeatureVector> = rows.iter().map(|r| masked_vector(r, &active)).collect();
        let model = train_logreg(&masked, &labels, &config.train)?;
        let ranked = predict_ranked(&model, &masked_vector(&query_row, &active))?;
        *wins
            .entry(match labels.iter().find(|&&l| l == ranked[0].0) {
                Some(&l) => l,
                None => unreachable!("predicted class comes from training labels"),
            })
            .or_insert(0) += 1;
        // Per feature, the extremes of the class-weight column stand in for
        // the binary discriminant.
        let high: Vec<f64> = (0..dim)
            .map(|c| {
                model
                    .weights()
                    .iter()
                    .map(|row| row[c])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let low: Vec<f64> = (0..dim)
            .map(|c| {
                model
                    .weights()
                    .iter()
                    .map(|row| row[c])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        remove_extreme(&mut active, &high, &low, config.k_remove);
    }
    let mut ranked: Vec<(String, f64)> = side_store
        .iter()
        .map(|(author, _)| {
            let w = wins.get(author.as_str()).copied().unwrap_or(0);
            (author.clone(), w as f64 / config.rounds as f64)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite win fractions")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// How triplets are chosen inside a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mining {
    /// Random valid positive and negative per anchor.
    None,
    /// Hardest in-batch positive (farthest) and negative (closest).
    BatchHard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub embed_dim: usize,
    pub margin: f64,
    pub authors_per_batch: usize,
    pub docs_per_author: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub mining: Mining,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            embed_dim: 64,
            margin: 1.0,
            authors_per_batch: 4,
            docs_per_author: 4,
            epochs: 50,
            lr: 0.1,
            seed: 0,
            mining: Mining::BatchHard,
        }
    }
}

/// A linear projection into a space where Euclidean distance encodes
/// authorship similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricModel {
    projection: Vec<Vec<f64>>,
    margin: f64,
}

impl MetricModel {
    pub fn from_parts(projection: Vec<Vec<f64>>, margin: f64) -> Result<Self> {
        if projection.is_empty() || projection[0].is_empty() {
            return Err(Error::config("projection must be at least 1x1"));
        }
        let width = projection[0].len();
        for row in &projection {
            if row.len() != width || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("projection rows must be uniform and finite"));
            }
        }
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::config("margin must be positive"));
        }
        Ok(MetricModel { projection, margin })
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.projection[0].len()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn project(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim() as usize != self.feature_dim() {
            return Err(Error::config(format!(
                "projection expects dimension {}, got {}",
                self.feature_dim(),
                x.dim()
            )));
        }
        Ok(project(&self.projection, x))
    }

    pub fn distance(&self, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
        let (ex, ey) = (self.project(x)?, self.project(y)?);
        Ok(euclidean(&ex, &ey))
    }
}

fn project(projection: &[Vec<f64>], x: &FeatureVector) -> Vec<f64> {
    projection
        .iter()
        .map(|row| x.iter().map(|(c, v)| row[c as usize] * v).sum())
        .collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Negated projected distance, so higher means more alike; 0 is the maximum.
pub fn av_score(model: &MetricModel, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
    Ok(-model.distance(x, y)?)
}

/// Batch-hard mining: per anchor, the same-author in-batch document at
/// maximal distance and the other-author document at minimal distance.
/// Ties go to the smaller batch index. Anchors without a positive are
/// skipped.
fn mine_batch_hard(dist: &[Vec<f64>], authors: &[usize]) -> Vec<(usize, usize, usize)> {
    let n = authors.len();
    let mut triplets = Vec::new();
    for a in 0..n {
        let mut pos: Option<usize> = None;
        let mut neg: Option<usize> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            if authors[j] == authors[a] {
                if pos.is_none_or(|p| dist[a][j] > dist[a][p]) {
                    pos = Some(j);
                }
            } else if neg.is_none_or(|m| dist[a][j] < dist[a][m]) {
                neg = Some(j);
            }
        }
        if let (Some(p), Some(m)) = (pos, neg) {
            triplets.push((a, p, m));
        }
    }
    triplets
}

/// Loss and gradient of the mean triplet hinge over fixed triplets.
fn triplet_loss_and_grad(
    projection: &[Vec<f64>],
    xs: &[FeatureVector],
    triplets: &[(usize, usize, usize)],
    margin: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let embed_dim = projection.len();
    let feature_dim = projection[0].len();
    let mut grad = vec![vec![0.0; feature_dim]; embed_dim];
    if triplets.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut loss = 0.0;
    for &(a, p, n) in triplets {
        let diff_ap = vector_diff(&xs[a], &xs[p])?;
        let diff_an = vector_diff(&xs[a], &xs[n])?;
        let u_ap = project(projection, &diff_ap);
        let u_an = project(projection, &diff_an);
        let d_ap = u_ap.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d_an = u_an.iter().map(|v| v * v).sum::<f64>().sqrt();
        let hinge = d_ap - d_an + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge * scale;
        for (sign, u, d, diff) in [(1.0, &u_ap, d_ap, &diff_ap), (-1.0, &u_an, d_an, &diff_an)] {
            if d == 0.0 {
                continue;
            }
            for r in 0..embed_dim {
                let coeff = sign * scale * u[r] / d;
                for (c, v) in diff.iter() {
                    grad[r][c as usize] += coeff * v;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// The batch-hard triplet objective at a fixed projection, with its
/// gradient. Mining runs inside, so the value is a pure function of the
/// projection for a given batch (`authors[i]` labels `xs[i]`). Useful for
/// convergence monitoring and for auditing the analytic gradient.
pub fn batch_hard_loss_grad(
    projection: &[Vec<f64>],
    xs: &[FeatureVector],
    authors: &[usize],
    margin: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if projection.is_empty() || projection[0].is_empty() {
        return Err(Error::config("projection must be non-empty"));
    }
    if xs.len() != authors.len() {
        return Err(Error::data(format!(
            "{} vectors but {} author labels",
            xs.len(),
            authors.len()
        )));
    }
    let feature_dim = projection[0].len();
    for x in xs {
        if x.dim() as usize != feature_dim {
            return Err(Error::data(format!(
                "vector dimension {} does not match projection width {feature_dim}",
                x.dim()
            )));
        }
    }
    let embeds: Vec<Vec<f64>> = xs.iter().map(|x| project(projection, x)).collect();
    let dist: Vec<Vec<f64>> = embeds
        .iter()
        .map(|a| embeds.iter().map(|b| euclidean(a, b)).collect())
        .collect();
    let triplets = mine_batch_hard(&dist, authors);
    triplet_loss_and_grad(projection, xs, &triplets, margin)
}

/// Batch-hard loss as a pure function of the projection (re-mining inside),
/// used by the finite-difference oracle.
#[cfg(test)]
fn batch_hard_loss(
    projection: &[Vec<f64>],
    xs: &[FeatureVector],
    authors: &[usize],
    margin: f64,
) -> Result<f64> {
    Ok(batch_hard_loss_grad(projection, xs, authors, margin)?.0)
}

/// Trains the projection by SGD on the triplet hinge, one step per batch of
/// `authors_per_batch` x `docs_per_author` documents. Only authors with at
/// least two documents can anchor triplets; the corpus must contain two
/// such authors. Deterministic for a given seed.
pub fn train_metric(
    corpus: &Corpus,
    schema: &FeatureSchema,
    config: &MetricConfig,
) -> Result<MetricModel> {
    if config.embed_dim == 0 || config.authors_per_batch < 2 || config.docs_per_author < 2 {
        return Err(Error::config(
            "metric training needs embed_dim ≥ 1 and batches of ≥ 2 authors x ≥ 2 documents",
        ));
    }
    if !(config.margin.is_finite() && config.margin > 0.0) {
        return Err(Error::config("margin must be positive"));
    }
    let by_author = corpus.docs_by_author();
    let mut eligible: Vec<(&str, Vec<&str>)> = Vec::new();
    for (author, docs) in &by_author {
        if docs.len() >= 2 {
            let mut ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            ids.sort_unstable();
            eligible.push((author, ids));
        }
    }
    if eligible.len() < 2 {
        return Err(Error::data(
            "metric training needs at least two authors with two documents each",
        ));
    }
    let mut vectors: BTreeMap<&str, FeatureVector> = BTreeMap::new();
    for (_, ids) in &eligible {
        for id in ids {
            let doc = corpus.get(id).expect("id from corpus");
            vectors.insert(id, crate::features::vectorize(&doc.text, schema)?);
        }
    }

    let feature_dim = schema.dim as usize;
    let bound = 1.0 / (feature_dim as f64).sqrt();
    let mut init_rng = seeds::rng(config.seed, "metric:init");
    let mut projection: Vec<Vec<f64>> = (0..config.embed_dim)
        .map(|_| {
            (0..feature_dim)
                .map(|_| init_rng.gen_range(-bound..bound))
                .collect()
        })
        .collect();

    for epoch in 0..config.epochs {
        let mut rng = seeds::rng(config.seed, &format!("metric:epoch:{epoch}"));
        let mut order: Vec<usize> = (0..eligible.len()).collect();
        order.shuffle(&mut rng);
        for group in order.chunks(config.authors_per_batch) {
            if group.len() < 2 {
                continue;
            }
            let mut xs: Vec<FeatureVector> = Vec::new();
            let mut authors: Vec<usize> = Vec::new();
            for &author_idx in group {
                let mut ids = eligible[author_idx].1.clone();
                ids.shuffle(&mut rng);
                for id in ids.into_iter().take(config.docs_per_author) {
                    xs.push(vectors[id].clone());
                    authors.push(author_idx);
                }
            }
            let triplets = match config.mining {
                Mining::BatchHard => {
                    let embeds: Vec<Vec<f64>> =
                        xs.iter().map(|x| project(&projection, x)).collect();
                    let dist: Vec<Vec<f64>> = embeds
                        .iter()
                        .map(|a| embeds.iter().map(|b| euclidean(a, b)).collect())
                        .collect();
                    mine_batch_hard(&dist, &authors)
                }
                Mining::None => {
                    let mut triplets = Vec::new();
                    for a in 0..xs.len() {
                        let positives: Vec<usize> = (0..xs.len())
                            .filter(|&j| j != a && authors[j] == authors[a])
                            .collect();
                        let negatives: Vec<usize> = (0..xs.len())
                            .filter(|&j| authors[j] != authors[a])
                            .collect();
                        if positives.is_empty() || negatives.is_empty() {
                            continue;
                        }
                        triplets.push((
                            a,
                            positives[rng.gen_range(0..positives.len())],
                            negatives[rng.gen_range(0..negatives.len())],
                        ));
                    }
                    triplets
                }
            };
            let (_, grad) = triplet_loss_and_grad(&projection, &xs, &triplets, config.margin)?;
            for (row, grad_row) in projection.iter_mut().zip(&grad) {
                for (w, g) in row.iter_mut().zip(grad_row) {
                    *w -= config.lr * g;
                }
            }
        }
    }
    MetricModel::from_parts(projection, config.margin)
}

#[derive(Serialize, Deserialize)]
struct MetricFile {
    version: u32,
    embed_dim: usize,
    feature_dim: usize,
    margin: f64,
    hash: String,
    projection: Vec<Vec<f64>>,
}

fn metric_hash(projection: &[Vec<f64>], margin: f64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(margin.to_le_bytes());
    for row in projection {
        for v in row {
            hasher.update(v.to_le_bytes());
        }
    }
    format!("{:x}", hasher.finalize())
}

impl MetricModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = MetricFile {
            version: 1,
            embed_dim: self.embed_dim(),
            feature_dim: self.feature_dim(),
            margin: self.margin,
            hash: metric_hash(&self.projection, self.margin),
            projection: self.projection.clone(),
        };
        let out = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let parsed: MetricFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if parsed.version != 1 {
            return Err(Error::data(format!(
                "unsupported metric model version {}",
                parsed.version
            )));
        }
        if metric_hash(&parsed.projection, parsed.margin) != parsed.hash {
            return Err(Error::data("metric model hash mismatch"));
        }
        let model = MetricModel::from_parts(parsed.projection, parsed.margin)?;
        if model.embed_dim() != parsed.embed_dim || model.feature_dim() != parsed.feature_dim {
            return Err(Error::data("metric model dimensions disagree with header"));
        }
        Ok(model)
    }
}
