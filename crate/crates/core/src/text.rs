//! Text normalization and tokenization shared by dedup and every set-based
//! metric, so that all of them agree on what "the same word" means.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub lowercase: bool,
    pub unicode_normalize: bool,
    pub collapse_whitespace: bool,
    /// Drop punctuation-only tokens when building token sets.
    pub strip_punct_for_sets: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            lowercase: true,
            unicode_normalize: true,
            collapse_whitespace: true,
            strip_punct_for_sets: true,
        }
    }
}

impl NormalizationPolicy {
    /// Case-sensitive variant, otherwise identical to the default.
    pub fn case_sensitive() -> Self {
        Self {
            lowercase: false,
            ..Self::default()
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        let mut out = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_owned()
        };
        if self.unicode_normalize {
            out = out.nfc().collect();
        }
        if self.collapse_whitespace {
            out = out.split_whitespace().collect::<Vec<_>>().join(" ");
        }
        out
    }

    /// Normalizes, then splits on whitespace with every punctuation
    /// character broken out as its own token.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let normalized = self.normalize(text);
        let mut tokens = Vec::new();
        for word in normalized.split_whitespace() {
            let mut current = String::new();
            for ch in word.chars() {
                if is_punct(ch) {
                    if !current.is_empty() {
                        tokens.push(std::mem::take(&mut current));
                    }
                    tokens.push(ch.to_string());
                } else {
                    current.push(ch);
                }
            }
            if !current.is_empty() {
                tokens.push(current);
            }
        }
        tokens
    }

    pub fn token_set(&self, text: &str) -> BTreeSet<String> {
        self.tokens(text)
            .into_iter()
            .filter(|t| !(self.strip_punct_for_sets && t.chars().all(is_punct)))
            .collect()
    }
}

fn is_punct(ch: char) -> bool {
    !ch.is_alphanumeric() && !ch.is_whitespace()
}
