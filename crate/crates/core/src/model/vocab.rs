use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::text::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const EOA: usize = 4;
pub const BOS: usize = 5;
pub const EOS: usize = 6;

/// Reserved tokens, in index order.
pub const RESERVED: [&str; 7] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[EOA]", "[BOS]", "[EOS]"];

/// Token ↔ index map. Reserved tokens occupy the first indices; the rest are
/// sorted, so the same texts always give the same vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn build<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = texts.into_iter().flat_map(|t| tokenize(t.as_ref())).collect();
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).chain(words))
            .expect("reserved tokens are present")
    }

    /// Rebuilds from a token list (e.g. a vocab file). The list must start
    /// with [`RESERVED`] and contain no duplicates.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Option<Self> {
        let tokens: Vec<String> = tokens.into_iter().collect();
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return None;
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return None;
            }
        }
        Some(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Joins tokens with spaces up to the first `[EOS]`, skipping reserved ids.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i >= RESERVED.len())
            .map(|&i| self.tokens[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}
