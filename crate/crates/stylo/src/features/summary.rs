//! Document-level stylometric summary statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::{word_spans, TokenKind, Tokenizer};

/// Buckets in the word-length histogram; lengths >= 21 share the last bucket.
pub const WORD_LENGTH_BUCKETS: usize = 21;

/// Values exposed by [`SummaryStats::to_values`].
pub const SUMMARY_WIDTH: usize = WORD_LENGTH_BUCKETS + 6;

/// Fixed-width numeric summary of one document.
///
/// Word-level statistics tokenize in word mode regardless of the supplied
/// tokenizer's mode; only its `lowercase` flag is honored. Apostrophe
/// suffixes count as neither words nor punctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Relative frequency of word lengths 1..=21+, in characters.
    pub word_length_histogram: [f64; WORD_LENGTH_BUCKETS],
    /// Fraction of vocabulary types occurring exactly once.
    pub hapax_legomena_rate: f64,
    /// Types over tokens.
    pub type_token_ratio: f64,
    /// Maas a^2 = (ln N - ln V) / (ln N)^2; 0 when N <= 1.
    pub maas_a2: f64,
    /// Herdan Vm = sqrt(sum_i i^2 V_i / N^2 - 1/V), clamped at 0.
    pub herdan_vm: f64,
    /// Punctuation tokens over all tokens.
    pub punctuation_frequency: f64,
    /// Mean words per sentence; terminators are `.`, `!`, `?`.
    pub mean_sentence_length_words: f64,
    /// True when the text has no tokens at all.
    pub empty: bool,
}

impl SummaryStats {
    /// Flatten into the fixed column order used by feature vectors.
    pub fn to_values(&self) -> [f64; SUMMARY_WIDTH] {
        let mut out = [0.0; SUMMARY_WIDTH];
        out[..WORD_LENGTH_BUCKETS].copy_from_slice(&self.word_length_histogram);
        out[WORD_LENGTH_BUCKETS] = self.hapax_legomena_rate;
        out[WORD_LENGTH_BUCKETS + 1] = self.type_token_ratio;
        out[WORD_LENGTH_BUCKETS + 2] = self.maas_a2;
        out[WORD_LENGTH_BUCKETS + 3] = self.herdan_vm;
        out[WORD_LENGTH_BUCKETS + 4] = self.punctuation_frequency;
        out[WORD_LENGTH_BUCKETS + 5] = self.mean_sentence_length_words;
        out
    }

    /// Human-readable names matching [`Self::to_values`] order.
    pub fn value_names() -> Vec<String> {
        let mut names: Vec<String> = (1..=WORD_LENGTH_BUCKETS)
            .map(|i| {
                if i == WORD_LENGTH_BUCKETS {
                    format!("word_len_{i}+")
                } else {
                    format!("word_len_{i}")
                }
            })
            .collect();
        names.extend(
            [
                "hapax_rate",
                "type_token_ratio",
                "maas_a2",
                "herdan_vm",
                "punct_freq",
                "mean_sentence_len",
            ]
            .map(String::from),
        );
        names
    }
}

fn is_sentence_terminator(s: &str) -> bool {
    matches!(s, "." | "!" | "?")
}

/// Compute all summary statistics in one pass over the tokens.
pub fn summary_stats(text: &str, tokenizer: &Tokenizer) -> SummaryStats {
    let spans = word_spans(text);

    let mut histogram = [0.0; WORD_LENGTH_BUCKETS];
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    let mut n_words: u64 = 0;
    let mut n_punct: u64 = 0;
    let mut sentences: u64 = 0;
    let mut words_in_sentence: u64 = 0;

    for t in &spans {
        let raw = t.text(text);
        match t.kind {
            TokenKind::Word => {
                n_words += 1;
                words_in_sentence += 1;
                let len = raw.chars().count().min(WORD_LENGTH_BUCKETS);
                histogram[len - 1] += 1.0;
                let key = if tokenizer.lowercase {
                    raw.to_lowercase()
                } else {
                    raw.to_string()
                };
                *word_counts.entry(key).or_insert(0) += 1;
            }
            TokenKind::Punctuation => {
                n_punct += 1;
                if is_sentence_terminator(raw) && words_in_sentence > 0 {
                    sentences += 1;
                    words_in_sentence = 0;
                }
            }
            TokenKind::ApostropheSuffix => {}
        }
    }
    // Trailing words without a terminator form a final sentence.
    if words_in_sentence > 0 {
        sentences += 1;
    }

    let n_tokens = spans.len() as f64;
    let n = n_words as f64;
    let v = word_counts.len() as f64;

    if n_words > 0 {
        for h in histogram.iter_mut() {
            *h /= n;
        }
    }

    let hapaxes = word_counts.values().filter(|&&c| c == 1).count() as f64;
    let hapax_legomena_rate = if v > 0.0 { hapaxes / v } else { 0.0 };
    let type_token_ratio = if n > 0.0 { v / n } else { 0.0 };

    let maas_a2 = if n_words <= 1 {
        0.0
    } else {
        (n.ln() - v.ln()) / n.ln().powi(2)
    };

    let herdan_vm = if n_words == 0 {
        0.0
    } else {
        // Frequency spectrum: V_i = number of types occurring exactly i times.
        let mut spectrum: HashMap<u64, u64> = HashMap::new();
        for &c in word_counts.values() {
            *spectrum.entry(c).or_insert(0) += 1;
        }
        let sum: f64 = spectrum
            .iter()
            .map(|(&i, &vi)| (i as f64).powi(2) * vi as f64)
            .sum();
        (sum / n.powi(2) - 1.0 / v).max(0.0).sqrt()
    };

    let punctuation_frequency = if n_tokens > 0.0 {
        n_punct as f64 / n_tokens
    } else {
        0.0
    };

    let mean_sentence_length_words = if sentences > 0 {
        n / sentences as f64
    } else {
        0.0
    };

    SummaryStats {
        word_length_histogram: histogram,
        hapax_legomena_rate,
        type_token_ratio,
        maas_a2,
        herdan_vm,
        punctuation_frequency,
        mean_sentence_length_words,
        empty: spans.is_empty(),
    }
}
