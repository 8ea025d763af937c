//! Order-k prediction-by-partial-matching (PPM-C) language models.
//!
//! Models operate on UTF-8 bytes, so the base alphabet is the 256 byte
//! values and never grows with exotic input. Escape probabilities use
//! method C: at a context with `total` counted occurrences of `distinct`
//! symbols, a seen symbol costs `count / (total + distinct)` and escaping
//! to the next shorter context costs `distinct / (total + distinct)`.
//! Symbols already seen at a longer context are excluded from shorter ones
//! (full exclusion), and contexts that are unstored or fully excluded are
//! skipped at no cost, which keeps every conditional distribution summing
//! to one. Scoring is static: the model does not adapt to the text it
//! scores, so author models are reusable and scoring parallelizes.
//!
//! "Char" in this module means one byte; for ASCII text the two coincide.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Largest supported context length.
pub const MAX_ORDER: usize = 8;

/// Default context length, the common choice in compression-based
/// attribution.
pub const DEFAULT_ORDER: usize = 5;

const FORMAT_VERSION: u32 = 1;

/// A trained PPM model: count tables for every context up to length k.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmModel {
    order: usize,
    trained_chars: u64,
    alphabet: BTreeSet<u8>,
    contexts: HashMap<Vec<u8>, BTreeMap<u8, u64>>,
}

/// Result of scoring a text against a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyScore {
    pub bits_per_char: f64,
    pub chars_scored: u64,
}

impl PpmModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Total bytes consumed during training.
    pub fn trained_chars(&self) -> u64 {
        self.trained_chars
    }

    /// Distinct byte values observed in training text.
    pub fn alphabet(&self) -> &BTreeSet<u8> {
        &self.alphabet
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    /// Follow-symbol counts stored for exactly this context, if any.
    pub fn context_counts(&self, context: &[u8]) -> Option<&BTreeMap<u8, u64>> {
        self.contexts.get(context)
    }

    #[cfg(test)]
    fn counts(&self, context: &[u8]) -> Option<&BTreeMap<u8, u64>> {
        self.context_counts(context)
    }

    /// P(symbol | context) for one byte, walking from the longest stored
    /// context down to the uniform floor over 256 bytes.
    pub fn byte_prob(&self, context: &[u8], symbol: u8) -> f64 {
        let start = context.len().saturating_sub(self.order);
        let context = &context[start..];
        let mut excluded = [false; 256];
        let mut n_excluded = 0usize;
        let mut p = 1.0;

        for l in (0..=context.len()).rev() {
            let Some(table) = self.contexts.get(&context[context.len() - l..]) else {
                continue;
            };
            let mut total = 0u64;
            let mut distinct = 0u64;
            let mut symbol_count = 0u64;
            for (&s, &c) in table {
                if !excluded[s as usize] {
                    total += c;
                    distinct += 1;
                    if s == symbol {
                        symbol_count = c;
                    }
                }
            }
            if distinct == 0 {
                continue;
            }
            let denom = (total + distinct) as f64;
            if symbol_count > 0 {
                return p * symbol_count as f64 / denom;
            }
            p *= distinct as f64 / denom;
            for &s in table.keys() {
                if !excluded[s as usize] {
                    excluded[s as usize] = true;
                    n_excluded += 1;
                }
            }
        }
        debug_assert!(
            !excluded[symbol as usize],
            "excluded symbol reached the floor"
        );
        p / (256 - n_excluded) as f64
    }
}

/// Train one model over `texts`. Contexts never span two texts.
pub fn ppm_train<S: AsRef<str>>(texts: &[S], order: usize) -> Result<PpmModel> {
    if order > MAX_ORDER {
        return Err(Error::config(format!(
            "ppm order {order} exceeds maximum {MAX_ORDER}"
        )));
    }
    let mut model = PpmModel {
        order,
        trained_chars: 0,
        alphabet: BTreeSet::new(),
        contexts: HashMap::new(),
    };
    for text in texts {
        let bytes = text.as_ref().as_bytes();
        for i in 0..bytes.len() {
            let symbol = bytes[i];
            model.alphabet.insert(symbol);
            for l in 0..=order.min(i) {
                *model
                    .contexts
                    .entry(bytes[i - l..i].to_vec())
                    .or_default()
                    .entry(symbol)
                    .or_insert(0) += 1;
            }
        }
        model.trained_chars += bytes.len() as u64;
    }
    if model.trained_chars == 0 {
        return Err(Error::data("ppm training material is empty"));
    }
    Ok(model)
}

/// P(symbol | context) where `symbol` may be any scalar value; multi-byte
/// characters are scored as the product over their UTF-8 bytes.
pub fn ppm_prob(model: &PpmModel, context: &str, symbol: char) -> f64 {
    let mut buf = [0u8; 4];
    let sym_bytes = symbol.encode_utf8(&mut buf).as_bytes();
    let mut ctx: Vec<u8> = context.as_bytes().to_vec();
    let mut p = 1.0;
    for &b in sym_bytes {
        p *= model.byte_prob(&ctx, b);
        ctx.push(b);
    }
    p
}

/// Average code length of `text` under `model`, in bits per byte.
///
/// Contexts come from the scored text itself; the model is not updated.
pub fn cross_entropy(model: &PpmModel, text: &str) -> Result<CrossEntropyScore> {
    let bytes = text.as_bytes();
    if bytes.is_empty() {
        return Err(Error::data("cannot score an empty text"));
    }
    let mut bits = 0.0;
    for i in 0..bytes.len() {
        let start = i.saturating_sub(model.order);
        let p = model.byte_prob(&bytes[start..i], bytes[i]);
        bits -= p.log2();
    }
    Ok(CrossEntropyScore {
        bits_per_char: bits / bytes.len() as f64,
        chars_scored: bytes.len() as u64,
    })
}

/// Rank authors by how cheaply their model encodes `text`, ascending;
/// ties break lexicographically by author id. The first entry is the
/// attribution.
pub fn ppm_attribute(
    author_models: &BTreeMap<String, PpmModel>,
    text: &str,
) -> Result<Vec<(String, f64)>> {
    if author_models.is_empty() {
        return Err(Error::data("no author models to attribute against"));
    }
    let mut ranked: Vec<(String, f64)> = author_models
        .iter()
        .map(|(author, model)| {
            cross_entropy(model, text).map(|s| (author.clone(), s.bits_per_char))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("cross-entropy is finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// Directed verification score: train on `text_a`, score `text_b`.
pub fn ppm_verify(text_a: &str, text_b: &str, order: usize) -> Result<f64> {
    let model = ppm_train(&[text_a], order)?;
    Ok(cross_entropy(&model, text_b)?.bits_per_char)
}

/// Mean of the two directed scores; the default for verification, where
/// the pair is unordered.
pub fn ppm_verify_symmetric(text_a: &str, text_b: &str, order: usize) -> Result<f64> {
    Ok((ppm_verify(text_a, text_b, order)? + ppm_verify(text_b, text_a, order)?) / 2.0)
}

/// On-disk row: context bytes with its (symbol, count) table.
type StoredContext = (Vec<u8>, Vec<(u8, u64)>);

#[derive(Serialize, Deserialize)]
struct PpmFile {
    version: u32,
    order: usize,
    trained_chars: u64,
    hash: String,
    /// Sorted by context bytes; counts sorted by symbol.
    contexts: Vec<StoredContext>,
}

fn content_hash(order: usize, contexts: &[StoredContext]) -> String {
    let mut h = Sha256::new();
    h.update((order as u64).to_le_bytes());
    for (ctx, counts) in contexts {
        h.update((ctx.len() as u64).to_le_bytes());
        h.update(ctx);
        h.update((counts.len() as u64).to_le_bytes());
        for &(s, c) in counts {
            h.update([s]);
            h.update(c.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl PpmModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut contexts: Vec<StoredContext> = self
            .contexts
            .iter()
            .map(|(ctx, table)| (ctx.clone(), table.iter().map(|(&s, &c)| (s, c)).collect()))
            .collect();
        contexts.sort();
        let file = PpmFile {
            version: FORMAT_VERSION,
            order: self.order,
            trained_chars: self.trained_chars,
            hash: content_hash(self.order, &contexts),
            contexts,
        };
        let out = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let parsed: PpmFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if parsed.version != FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported ppm model version {} (expected {FORMAT_VERSION})",
                parsed.version
            )));
        }
        if content_hash(parsed.order, &parsed.contexts) != parsed.hash {
            return Err(Error::data(format!(
                "ppm model hash mismatch in {}",
                path.as_ref().display()
            )));
        }
        let mut alphabet = BTreeSet::new();
        if let Some((_, root)) = parsed.contexts.iter().find(|(ctx, _)| ctx.is_empty()) {
            alphabet.extend(root.iter().map(|&(s, _)| s));
        }
        Ok(PpmModel {
            order: parsed.order,
            trained_chars: parsed.trained_chars,
            alphabet,
            contexts: parsed
                .contexts
                .into_iter()
                .map(|(ctx, counts)| (ctx, counts.into_iter().collect()))
                .collect(),
        })
    }
}
