//! Vocabulary-keyed text distortion.
//!
//! Words outside a kept vocabulary are replaced by masks that preserve the
//! text's rhythm while hiding topical content. Matching is case-insensitive
//! and ignores apostrophe suffixes, so `Cat's` matches a vocabulary entry
//! `cat` and keeps its `'s`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::tokenize::{word_spans, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionVariant {
    /// Replace the whole word with `*`.
    SingleAsterisk,
    /// Replace each character with `*`, keeping word length.
    MultipleAsterisk,
    /// Keep the first and last characters; words of length <= 2 unchanged.
    ExteriorChars,
    /// Keep the last two characters; words of length <= 2 unchanged.
    LastTwoChars,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionScheme {
    pub variant: DistortionVariant,
    // Stored lowercased; sorted so serialized schemas are stable.
    vocabulary: BTreeSet<String>,
}

impl DistortionScheme {
    pub fn new<I, S>(variant: DistortionVariant, vocabulary: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DistortionScheme {
            variant,
            vocabulary: vocabulary
                .into_iter()
                .map(|w| w.into().to_lowercase())
                .collect(),
        }
    }

    /// Case-insensitive membership test against the kept vocabulary.
    pub fn keeps(&self, word: &str) -> bool {
        self.vocabulary.contains(&word.to_lowercase())
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }
}

fn mask(word: &str, variant: DistortionVariant) -> String {
    let chars: Vec<char> = word.chars().collect();
    let len = chars.len();
    match variant {
        DistortionVariant::SingleAsterisk => "*".to_string(),
        DistortionVariant::MultipleAsterisk => "*".repeat(len),
        DistortionVariant::ExteriorChars => {
            if len <= 2 {
                word.to_string()
            } else {
                let mut out = String::new();
                out.push(chars[0]);
                out.extend(std::iter::repeat_n('*', len - 2));
                out.push(chars[len - 1]);
                out
            }
        }
        DistortionVariant::LastTwoChars => {
            if len <= 2 {
                word.to_string()
            } else {
                let mut out = "*".repeat(len - 2);
                out.push(chars[len - 2]);
                out.push(chars[len - 1]);
                out
            }
        }
    }
}

/// Replace every word not in the scheme's vocabulary with its mask.
///
/// Whitespace, punctuation, and apostrophe suffixes pass through untouched,
/// so the token count of the output equals the token count of the input.
pub fn distort(text: &str, scheme: &DistortionScheme) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for t in word_spans(text) {
        out.push_str(&text[last..t.start]);
        let token = t.text(text);
        if t.kind == TokenKind::Word && !scheme.keeps(token) {
            out.push_str(&mask(token, scheme.variant));
        } else {
            out.push_str(token);
        }
        last = t.end;
    }
    out.push_str(&text[last..]);
    out
}
