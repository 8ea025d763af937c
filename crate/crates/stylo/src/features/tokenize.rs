//! Word and character tokenization.
//!
//! Word mode splits on Unicode whitespace and emits punctuation as standalone
//! tokens, with one exception: an apostrophe that directly follows a word
//! starts its own suffix token (`dog's` -> `dog`, `'s`). The asterisk counts
//! as a word character so masked words round-trip through the tokenizer as
//! single tokens (`h***e` stays one token).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    Word,
    Char,
}

/// Tokenizer configuration. `lowercase` folds tokens after splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
    pub lowercase: bool,
}

impl Tokenizer {
    pub fn word() -> Self {
        Tokenizer {
            mode: TokenizerMode::Word,
            lowercase: false,
        }
    }

    pub fn word_lowercase() -> Self {
        Tokenizer {
            mode: TokenizerMode::Word,
            lowercase: true,
        }
    }

    pub fn char() -> Self {
        Tokenizer {
            mode: TokenizerMode::Char,
            lowercase: false,
        }
    }

    /// Tokenize `text` into owned strings.
    ///
    /// Char mode yields every scalar value, whitespace included, so character
    /// n-grams can see spacing habits.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self.mode {
            TokenizerMode::Char => text
                .chars()
                .map(|c| {
                    if self.lowercase {
                        c.to_lowercase().collect()
                    } else {
                        c.to_string()
                    }
                })
                .collect(),
            TokenizerMode::Word => word_spans(text)
                .into_iter()
                .map(|t| {
                    let s = &text[t.start..t.end];
                    if self.lowercase {
                        s.to_lowercase()
                    } else {
                        s.to_string()
                    }
                })
                .collect(),
        }
    }
}

impl Default for Tokenizer {
    /// The toolkit default: word mode, case preserved.
    fn default() -> Self {
        Tokenizer::word()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    /// An apostrophe plus the letters that follow it (`'s`, `'t`, a bare `'`).
    ApostropheSuffix,
    Punctuation,
}

/// A token located by byte offsets into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanToken {
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

impl SpanToken {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '*'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Word-mode tokenization with byte spans, so callers can rebuild the
/// original text around replaced tokens.
pub fn word_spans(text: &str) -> Vec<SpanToken> {
    let mut tokens = Vec::new();
    // (start, kind) of the token being accumulated
    let mut current: Option<(usize, TokenKind)> = None;

    let flush = |current: &mut Option<(usize, TokenKind)>, end: usize, out: &mut Vec<SpanToken>| {
        if let Some((start, kind)) = current.take() {
            out.push(SpanToken { start, end, kind });
        }
    };

    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut current, i, &mut tokens);
        } else if is_word_char(c) {
            if current.is_none() {
                current = Some((i, TokenKind::Word));
            }
        } else if is_apostrophe(c) {
            match current {
                Some(_) => {
                    flush(&mut current, i, &mut tokens);
                    current = Some((i, TokenKind::ApostropheSuffix));
                }
                // Not attached to a word: a plain quote mark.
                None => tokens.push(SpanToken {
                    start: i,
                    end: i + c.len_utf8(),
                    kind: TokenKind::Punctuation,
                }),
            }
        } else {
            flush(&mut current, i, &mut tokens);
            tokens.push(SpanToken {
                start: i,
                end: i + c.len_utf8(),
                kind: TokenKind::Punctuation,
            });
        }
    }
    flush(&mut current, text.len(), &mut tokens);
    tokens
}
