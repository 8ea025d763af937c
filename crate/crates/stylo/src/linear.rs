//! L2-regularized logistic regression and the per-family ensemble.
//!
//! Training is full-batch gradient descent from zero initialization with
//! learning-rate halving whenever a step would increase the loss, so a run
//! is exactly reproducible: no shuffling, no stochastic minibatches, and
//! the training loss never increases across epochs. The bias is not
//! regularized.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::{vector_diff, vectorize, FeatureSchema, FeatureVector};
use crate::{Error, Result};

const FORMAT_VERSION: u32 = 1;

/// Label used for the positive class of verification models.
pub const SAME_LABEL: &str = "same";
/// Label used for the negative class of verification models.
pub const DIFFERENT_LABEL: &str = "different";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// Every example weighs 1.
    None,
    /// Example weight N / (C * count(class)), balancing class influence.
    InverseFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Reserved for stochastic variants; the default full-batch optimizer
    /// starts from zero weights and never draws randomness.
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1e-4,
            epochs: 500,
            lr: 1.0,
            seed: 0,
            class_weighting: ClassWeighting::None,
        }
    }
}

/// A softmax linear classifier over sparse feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    class_labels: Vec<String>,
    n_features: u32,
    /// One row per class label, in label order.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    l2_lambda: f64,
}

impl LinearModel {
    /// Assemble a model from explicit parameters (used by deserialization
    /// and tests). Labels must be sorted and unique; shapes must agree.
    pub fn from_parts(
        class_labels: Vec<String>,
        n_features: u32,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if class_labels.len() < 2 {
            return Err(Error::data("a linear model needs at least 2 classes"));
        }
        if class_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::data("class labels must be sorted and unique"));
        }
        if weights.len() != class_labels.len() || bias.len() != class_labels.len() {
            return Err(Error::data("weight/bias row count must equal class count"));
        }
        for row in &weights {
            if row.len() != n_features as usize {
                return Err(Error::data("weight row length must equal feature count"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::data("non-finite weight"));
            }
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite bias"));
        }
        Ok(LinearModel {
            class_labels,
            n_features,
            weights,
            bias,
            l2_lambda: 0.0,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.class_labels
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn scores(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim() != self.n_features {
            return Err(Error::data(format!(
                "feature dimension {} does not match model dimension {}",
                x.dim(),
                self.n_features
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + x.iter().map(|(j, v)| row[j as usize] * v).sum::<f64>())
            .collect())
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Class probabilities for one example; sums to 1.
pub fn predict_proba(model: &LinearModel, x: &FeatureVector) -> Result<Vec<f64>> {
    Ok(softmax(&model.scores(x)?))
}

/// Classes ranked by probability, descending, ties broken by label.
pub fn predict_ranked(model: &LinearModel, x: &FeatureVector) -> Result<Vec<(String, f64)>> {
    let probs = predict_proba(model, x)?;
    let mut ranked: Vec<(String, f64)> = model.class_labels.iter().cloned().zip(probs).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("probabilities are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

struct Problem<'a> {
    x: &'a [FeatureVector],
    y: Vec<usize>,
    example_weights: Vec<f64>,
    n_classes: usize,
    dim: usize,
}

/// Weighted negative log-likelihood plus L2 penalty, and its gradient.
/// Examples are accumulated in index order so results are bit-reproducible.
fn loss_and_gradient(
    p: &Problem,
    weights: &[Vec<f64>],
    bias: &[f64],
    lambda: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = p.x.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![vec![0.0; p.dim]; p.n_classes];
    let mut grad_b = vec![0.0; p.n_classes];

    for (i, x) in p.x.iter().enumerate() {
        let scores: Vec<f64> = weights
            .iter()
            .zip(bias)
            .map(|(row, b)| b + x.iter().map(|(j, v)| row[j as usize] * v).sum::<f64>())
            .collect();
        let probs = softmax(&scores);
        let wi = p.example_weights[i];
        loss -= wi * probs[p.y[i]].max(f64::MIN_POSITIVE).ln();
        for c in 0..p.n_classes {
            let coeff = wi * (probs[c] - if c == p.y[i] { 1.0 } else { 0.0 }) / n;
            grad_b[c] += coeff;
            for (j, v) in x.iter() {
                grad_w[c][j as usize] += coeff * v;
            }
        }
    }
    loss /= n;
    for c in 0..p.n_classes {
        for j in 0..p.dim {
            loss += 0.5 * lambda * weights[c][j] * weights[c][j];
            grad_w[c][j] += lambda * weights[c][j];
        }
    }
    (loss, grad_w, grad_b)
}

fn build_problem<'a, S: AsRef<str>>(
    x: &'a [FeatureVector],
    y: &[S],
    weighting: ClassWeighting,
) -> Result<(Problem<'a>, Vec<String>)> {
    if x.len() != y.len() {
        return Err(Error::data(format!(
            "{} feature vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::data("training requires at least 2 examples"));
    }
    let dim = x[0].dim();
    for v in x {
        if v.dim() != dim {
            return Err(Error::data("training vectors have mixed dimensions"));
        }
        if v.iter().any(|(_, val)| !val.is_finite()) {
            return Err(Error::data("non-finite feature value"));
        }
    }
    let mut labels: Vec<String> = y.iter().map(|s| s.as_ref().to_string()).collect();
    labels.sort();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::data("training labels contain a single class"));
    }
    let y_idx: Vec<usize> = y
        .iter()
        .map(|s| {
            labels
                .binary_search_by(|l| l.as_str().cmp(s.as_ref()))
                .unwrap()
        })
        .collect();
    let example_weights = match weighting {
        ClassWeighting::None => vec![1.0; y_idx.len()],
        ClassWeighting::InverseFrequency => {
            let mut counts = vec![0usize; labels.len()];
            for &c in &y_idx {
                counts[c] += 1;
            }
            let n = y_idx.len() as f64;
            let k = labels.len() as f64;
            y_idx.iter().map(|&c| n / (k * counts[c] as f64)).collect()
        }
    };
    Ok((
        Problem {
            x,
            y: y_idx,
            example_weights,
            n_classes: labels.len(),
            dim: dim as usize,
        },
        labels,
    ))
}

/// Train a multinomial (or binary) logistic regression.
pub fn train_logreg<S: AsRef<str>>(
    x: &[FeatureVector],
    y: &[S],
    config: &TrainConfig,
) -> Result<LinearModel> {
    let (problem, labels) = build_problem(x, y, config.class_weighting)?;
    let mut weights = vec![vec![0.0; problem.dim]; problem.n_classes];
    let mut bias = vec![0.0; problem.n_classes];
    let mut lr = config.lr;
    let (mut loss, mut grad_w, mut grad_b) =
        loss_and_gradient(&problem, &weights, &bias, config.l2_lambda);

    for _ in 0..config.epochs {
        let cand_w: Vec<Vec<f64>> = weights
            .iter()
            .zip(&grad_w)
            .map(|(row, g)| row.iter().zip(g).map(|(w, gw)| w - lr * gw).collect())
            .collect();
        let cand_b: Vec<f64> = bias.iter().zip(&grad_b).map(|(b, g)| b - lr * g).collect();
        let (cand_loss, cand_gw, cand_gb) =
            loss_and_gradient(&problem, &cand_w, &cand_b, config.l2_lambda);
        // NaN counts as an increase, so a wild step just halves the rate.
        if cand_loss <= loss {
            weights = cand_w;
            bias = cand_b;
            loss = cand_loss;
            grad_w = cand_gw;
            grad_b = cand_gb;
        } else {
            lr /= 2.0;
        }
    }

    Ok(LinearModel {
        class_labels: labels,
        n_features: x[0].dim(),
        weights,
        bias,
        l2_lambda: config.l2_lambda,
    })
}

/// The objective train_logreg minimizes, evaluated at the model's current
/// parameters, with its gradient: (loss, d/dweights, d/dbias). Weighting
/// and the L2 strength come from `config`. Useful for convergence
/// monitoring and for auditing the analytic gradient.
pub fn logreg_loss_grad<S: AsRef<str>>(
    model: &LinearModel,
    x: &[FeatureVector],
    y: &[S],
    config: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
    let (problem, labels) = build_problem(x, y, config.class_weighting)?;
    if labels != model.class_labels {
        return Err(Error::data(format!(
            "label set {labels:?} does not match model classes {:?}",
            model.class_labels
        )));
    }
    if problem.dim != model.n_features as usize {
        return Err(Error::data(format!(
            "feature dimension {} does not match model dimension {}",
            problem.dim, model.n_features
        )));
    }
    Ok(loss_and_gradient(
        &problem,
        &model.weights,
        &model.bias,
        config.l2_lambda,
    ))
}

/// One ensemble member: a single-family schema and the model trained on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub schema: FeatureSchema,
    pub model: LinearModel,
}

/// An ensemble of per-family classifiers combined by mean probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
}

impl Ensemble {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::data("ensemble requires at least one member"));
        };
        let labels = first.model.classes();
        for m in &members[1..] {
            if m.model.classes() != labels {
                return Err(Error::data("ensemble members disagree on class labels"));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn classes(&self) -> &[String] {
        self.members[0].model.classes()
    }
}

/// Train one logistic regression per feature family.
///
/// Each member gets its own single-family schema fit on the same texts, so
/// families are combined by probability averaging rather than weight
/// sharing.
pub fn train_ensemble<S: AsRef<str>>(
    texts: &[S],
    labels: &[S],
    specs: &[crate::features::FamilySpec],
    config: &TrainConfig,
) -> Result<Ensemble> {
    if specs.is_empty() {
        return Err(Error::config(
            "ensemble requires at least one feature family",
        ));
    }
    let mut members = Vec::with_capacity(specs.len());
    for spec in specs {
        let schema = crate::features::fit_schema(
            texts.iter().map(|t| t.as_ref()),
            std::slice::from_ref(spec),
        )?;
        let x: Vec<FeatureVector> = texts
            .iter()
            .map(|t| vectorize(t.as_ref(), &schema))
            .collect::<Result<_>>()?;
        let model = train_logreg(&x, labels, config)?;
        members.push(EnsembleMember { schema, model });
    }
    Ensemble::new(members)
}

/// Mean of member probability vectors, renormalized; descending, with
/// lexicographic tie-break.
pub fn ensemble_predict(ensemble: &Ensemble, text: &str) -> Result<Vec<(String, f64)>> {
    let labels = ensemble.classes();
    let mut mean = vec![0.0; labels.len()];
    for member in &ensemble.members {
        let x = vectorize(text, &member.schema)?;
        let probs = predict_proba(&member.model, &x)?;
        for (m, p) in mean.iter_mut().zip(probs) {
            *m += p;
        }
    }
    let total: f64 = mean.iter().sum();
    for m in mean.iter_mut() {
        *m /= total;
    }
    let mut ranked: Vec<(String, f64)> = labels.iter().cloned().zip(mean).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("probabilities are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// Train a same/different-author classifier on absolute feature
/// differences of document pairs.
pub fn train_av_classifier<S: AsRef<str>>(
    pairs: &[(S, S, bool)],
    schema: &FeatureSchema,
    config: &TrainConfig,
) -> Result<LinearModel> {
    if pairs.len() < 2 {
        return Err(Error::data("av training requires at least 2 pairs"));
    }
    let mut x = Vec::with_capacity(pairs.len());
    let mut y = Vec::with_capacity(pairs.len());
    for (a, b, same) in pairs {
        let va = vectorize(a.as_ref(), schema)?;
        let vb = vectorize(b.as_ref(), schema)?;
        x.push(vector_diff(&va, &vb)?);
        y.push(if *same { SAME_LABEL } else { DIFFERENT_LABEL });
    }
    train_logreg(&x, &y, config)
}

/// P(same author) for a pair's difference vector.
pub fn av_score(model: &LinearModel, diff: &FeatureVector) -> Result<f64> {
    let idx = model
        .class_labels
        .iter()
        .position(|l| l == SAME_LABEL)
        .ok_or_else(|| Error::data("model has no 'same' class"))?;
    Ok(predict_proba(model, diff)?[idx])
}

#[derive(Serialize, Deserialize)]
struct LinearFile {
    version: u32,
    hash: String,
    model: LinearModel,
}

fn model_hash(model: &LinearModel) -> String {
    let mut h = Sha256::new();
    for label in &model.class_labels {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
    }
    h.update((model.n_features as u64).to_le_bytes());
    for row in &model.weights {
        for v in row {
            h.update(v.to_le_bytes());
        }
    }
    for v in &model.bias {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl LinearModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = LinearFile {
            version: FORMAT_VERSION,
            hash: model_hash(self),
            model: self.clone(),
        };
        let out = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let parsed: LinearFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if parsed.version != FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported linear model version {} (expected {FORMAT_VERSION})",
                parsed.version
            )));
        }
        if model_hash(&parsed.model) != parsed.hash {
            return Err(Error::data(format!(
                "linear model hash mismatch in {}",
                path.as_ref().display()
            )));
        }
        Ok(parsed.model)
    }
}
