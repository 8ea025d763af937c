//! Evaluation metrics for attribution and verification.
//!
//! Attribution reports accuracy and macro-accuracy (the unweighted mean of
//! per-class accuracies, so prolific authors cannot dominate the number).
//! Verification reports AUC plus the PAN-competition metrics F1, F0.5u,
//! C@1, and Brier. A score of exactly 0.5, or an explicit abstain flag,
//! marks a pair as unanswered. By default abstained pairs still enter the
//! AUC with their raw scores; [`AbstainPolicy::Exclude`] reproduces the
//! PAN evaluator's behavior of dropping them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One attribution prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaRow {
    pub doc_id: String,
    pub true_author: String,
    pub predicted_author: String,
    /// Full candidate ranking, best first, when the method produces one.
    pub ranking: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AaPredictions {
    rows: Vec<AaRow>,
}

impl AaPredictions {
    pub fn new(rows: Vec<AaRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("no attribution predictions"));
        }
        Ok(AaPredictions { rows })
    }

    pub fn rows(&self) -> &[AaRow] {
        &self.rows
    }

    /// CSV columns: doc_id,true,pred,rank1,rank2,... (rank columns sized to
    /// the longest ranking; shorter rows leave cells empty).
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let max_rank = self
            .rows
            .iter()
            .filter_map(|r| r.ranking.as_ref().map(|v| v.len()))
            .max()
            .unwrap_or(0);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["doc_id".to_string(), "true".to_string(), "pred".to_string()];
        header.extend((1..=max_rank).map(|i| format!("rank{i}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![
                row.doc_id.clone(),
                row.true_author.clone(),
                row.predicted_author.clone(),
            ];
            let ranking = row.ranking.as_deref().unwrap_or(&[]);
            record.extend(ranking.iter().cloned());
            record.extend(std::iter::repeat_n(String::new(), max_rank - ranking.len()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let get = |i: usize| {
                record
                    .get(i)
                    .map(String::from)
                    .ok_or(Error::MalformedRecord {
                        line,
                        message: format!("missing column {i}"),
                    })
            };
            let ranking: Vec<String> = (3..record.len())
                .filter_map(|i| record.get(i))
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            rows.push(AaRow {
                doc_id: get(0)?,
                true_author: get(1)?,
                predicted_author: get(2)?,
                ranking: if ranking.is_empty() {
                    None
                } else {
                    Some(ranking)
                },
            });
        }
        AaPredictions::new(rows)
    }
}

/// One verification prediction; `score` is P(same author).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvRow {
    pub pair_id: String,
    pub true_same: bool,
    pub score: f64,
    pub abstain: bool,
}

impl AvRow {
    /// Unanswered per PAN convention: flagged, or scored exactly 0.5.
    pub fn is_abstained(&self) -> bool {
        self.abstain || self.score == 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvPredictions {
    rows: Vec<AvRow>,
}

impl AvPredictions {
    pub fn new(rows: Vec<AvRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("no verification predictions"));
        }
        for row in &rows {
            if !row.score.is_finite() || !(0.0..=1.0).contains(&row.score) {
                return Err(Error::data(format!(
                    "pair {:?}: score {} outside [0, 1]",
                    row.pair_id, row.score
                )));
            }
        }
        Ok(AvPredictions { rows })
    }

    pub fn rows(&self) -> &[AvRow] {
        &self.rows
    }

    /// CSV columns: pair_id,true,score,abstain with booleans as 0/1.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["pair_id", "true", "score", "abstain"])?;
        for row in &self.rows {
            w.write_record([
                row.pair_id.as_str(),
                if row.true_same { "1" } else { "0" },
                &format!("{}", row.score),
                if row.abstain { "1" } else { "0" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let has_abstain = reader.headers()?.iter().any(|h| h == "abstain");
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let malformed = |message: String| Error::MalformedRecord { line, message };
            let get = |i: usize| {
                record
                    .get(i)
                    .ok_or_else(|| malformed(format!("missing column {i}")))
            };
            let parse_bool = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(malformed(format!("expected 0/1, got {other:?}"))),
            };
            rows.push(AvRow {
                pair_id: get(0)?.to_string(),
                true_same: parse_bool(get(1)?)?,
                score: get(2)?
                    .parse::<f64>()
                    .map_err(|e| malformed(format!("bad score: {e}")))?,
                abstain: if has_abstain {
                    parse_bool(get(3)?)?
                } else {
                    false
                },
            });
        }
        AvPredictions::new(rows)
    }
}

/// Fraction of documents attributed to the correct author.
pub fn accuracy(preds: &AaPredictions) -> f64 {
    let correct = preds
        .rows
        .iter()
        .filter(|r| r.predicted_author == r.true_author)
        .count();
    correct as f64 / preds.rows.len() as f64
}

/// Unweighted mean of per-class accuracy over classes present in the
/// evaluation set.
pub fn macro_accuracy(preds: &AaPredictions) -> f64 {
    let mut per_class: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for row in &preds.rows {
        let entry = per_class.entry(row.true_author.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if row.predicted_author == row.true_author {
            entry.0 += 1;
        }
    }
    let sum: f64 = per_class
        .values()
        .map(|&(correct, total)| correct as f64 / total as f64)
        .sum();
    sum / per_class.len() as f64
}

/// Whether abstained pairs take part in ranking metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainPolicy {
    /// Score abstained pairs like any other (the default; an abstention is
    /// still a statement of maximal uncertainty).
    Include,
    /// Drop abstained pairs, as the PAN evaluator does.
    Exclude,
}

/// Midranks (1-based; ties get the mean of their positions).
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the rank (i+1 + j+1) / 2.
        let rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC: P(positive score > negative score) + half the tie
/// probability, including abstained rows.
pub fn auc(preds: &AvPredictions) -> Result<f64> {
    auc_with(preds, AbstainPolicy::Include)
}

pub fn auc_with(preds: &AvPredictions, policy: AbstainPolicy) -> Result<f64> {
    let rows: Vec<&AvRow> = match policy {
        AbstainPolicy::Include => preds.rows.iter().collect(),
        AbstainPolicy::Exclude => preds.rows.iter().filter(|r| !r.is_abstained()).collect(),
    };
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let n_pos = rows.iter().filter(|r| r.true_same).count();
    let n_neg = rows.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data(
            "auc requires both same and different pairs (after abstain policy)",
        ));
    }
    let ranks = midranks(&scores);
    let r_pos: f64 = rows
        .iter()
        .zip(&ranks)
        .filter(|(r, _)| r.true_same)
        .map(|(_, &rank)| rank)
        .sum();
    Ok((r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// The PAN verification metric bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanMetrics {
    pub auc: f64,
    pub f1: f64,
    pub f05u: f64,
    pub c_at_1: f64,
    pub brier: f64,
    /// Unweighted mean of auc, f1, f05u, c_at_1.
    pub overall: f64,
}

impl PanMetrics {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        [
            ("auc", self.auc),
            ("f1", self.f1),
            ("f05u", self.f05u),
            ("c_at_1", self.c_at_1),
            ("brier", self.brier),
            ("overall", self.overall),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Binarize at 0.5 (exactly 0.5 or flagged = unanswered) and compute the
/// PAN metrics. `policy` affects only the AUC term.
pub fn pan_metrics(preds: &AvPredictions, policy: AbstainPolicy) -> Result<PanMetrics> {
    let n = preds.rows.len() as f64;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut tn = 0.0;
    let mut fn_ = 0.0;
    let mut unanswered = 0.0;
    let mut brier_sum = 0.0;
    for row in &preds.rows {
        let target = if row.true_same { 1.0 } else { 0.0 };
        brier_sum += (row.score - target).powi(2);
        if row.is_abstained() {
            unanswered += 1.0;
            continue;
        }
        let predicted_same = row.score > 0.5;
        match (row.true_same, predicted_same) {
            (true, true) => tp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, true) => fp += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let correct = tp + tn;
    let c_at_1 = (correct + unanswered * correct / n) / n;
    let f1_denom = 2.0 * tp + fp + fn_;
    let f1 = if f1_denom == 0.0 {
        0.0
    } else {
        2.0 * tp / f1_denom
    };
    let f05u_denom = 1.25 * tp + 0.25 * (fn_ + unanswered) + fp;
    let f05u = if f05u_denom == 0.0 {
        0.0
    } else {
        1.25 * tp / f05u_denom
    };
    let brier = brier_sum / n;
    let auc = auc_with(preds, policy)?;
    Ok(PanMetrics {
        auc,
        f1,
        f05u,
        c_at_1,
        brier,
        overall: (auc + f1 + f05u + c_at_1) / 4.0,
    })
}

/// Seeded percentile-bootstrap 95% confidence interval of `metric` over
/// resamples of `rows`. Resamples on which the metric is undefined (e.g. a
/// single-class AUC draw) are skipped; more than half failing is an error.
pub fn bootstrap_ci<T: Clone, F>(
    rows: &[T],
    metric: F,
    iterations: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[T]) -> Result<f64>,
{
    use rand::Rng;
    if rows.len() < 10 {
        return Err(Error::data(format!(
            "bootstrap requires at least 10 rows, got {}",
            rows.len()
        )));
    }
    if iterations == 0 {
        return Err(Error::config("bootstrap requires at least 1 iteration"));
    }
    let mut rng = crate::seeds::rng(seed, "bootstrap");
    let mut values = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let sample: Vec<T> = (0..rows.len())
            .map(|_| rows[rng.gen_range(0..rows.len())].clone())
            .collect();
        if let Ok(v) = metric(&sample) {
            values.push(v);
        }
    }
    if values.len() * 2 < iterations {
        return Err(Error::data("metric undefined on most bootstrap resamples"));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let hi_idx = ((values.len() - 1) as f64 * 0.975).ceil() as usize;
    let lo_idx = ((values.len() - 1) as f64 * 0.025).floor() as usize;
    Ok((values[lo_idx], values[hi_idx]))
}

/// Evaluation summary written next to predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// "aa" or "av".
    pub task: String,
    pub metrics: BTreeMap<String, f64>,
    pub n: u64,
    pub per_class_n: BTreeMap<String, u64>,
    pub config_hash: String,
    pub split_hash: String,
    pub toolkit_version: String,
}

impl EvalReport {
    /// All metrics here live in [0, 1]; reject anything outside its range.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in &self.metrics {
            if !value.is_finite() || !(0.0..=1.0).contains(value) {
                return Err(Error::invariant(format!(
                    "metric {name} = {value} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let out = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(out), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let report: EvalReport = serde_json::from_reader(std::io::BufReader::new(file))?;
        report.validate()?;
        Ok(report)
    }
}
