//! Word-level text handling shared by page cleaning, metrics and the model.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// A token carrying no letter or digit, e.g. `"!!!"` or `"--"`.
pub fn is_punctuation_only(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Whitespace split, lowercase, drop punctuation-only tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter(|t| !is_punctuation_only(t))
        .map(str::to_lowercase)
        .collect()
}

/// Boilerplate terms removed from page word lists.
///
/// Entries are matched case-insensitively. A multi-word entry such as
/// `"sign in"` removes the whole run of consecutive tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist {
    words: BTreeSet<String>,
    phrases: Vec<Vec<String>>,
}

impl Stoplist {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = Stoplist::default();
        for entry in entries {
            list.insert(entry.as_ref());
        }
        list
    }

    /// One entry per non-empty line; `#` starts a comment line.
    pub fn parse(source: &str) -> Self {
        Self::new(
            source
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn insert(&mut self, entry: &str) {
        let parts: Vec<String> = entry.split_whitespace().map(str::to_lowercase).collect();
        match parts.len() {
            0 => {}
            1 => {
                self.words.insert(parts[0].clone());
            }
            _ => {
                if !self.phrases.contains(&parts) {
                    self.phrases.push(parts);
                }
            }
        }
    }

    pub fn contains_word(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty() && self.phrases.is_empty()
    }

    pub fn entries(&self) -> Vec<String> {
        let mut out: Vec<String> = self.words.iter().cloned().collect();
        out.extend(self.phrases.iter().map(|p| p.join(" ")));
        out
    }

    /// True if any single-word entry or phrase occurs in the tokens.
    pub fn matches_any(&self, tokens: &[String]) -> bool {
        tokens.iter().any(|t| self.words.contains(t))
            || self
                .phrases
                .iter()
                .any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
    }
}

/// Lowercases, removes stoplist members and punctuation-only tokens.
/// Relative order of the surviving tokens is preserved.
pub fn clean_text<S: AsRef<str>>(raw_words: &[S], stoplist: &Stoplist) -> Vec<String> {
    let lowered: Vec<String> = raw_words
        .iter()
        .flat_map(|w| w.as_ref().split_whitespace())
        .map(str::to_lowercase)
        .collect();
    let mut drop = alloc::vec![false; lowered.len()];
    for phrase in &stoplist.phrases {
        let n = phrase.len();
        let mut i = 0;
        while i + n <= lowered.len() {
            if lowered[i..i + n] == phrase[..] {
                drop[i..i + n].iter_mut().for_each(|d| *d = true);
                i += n;
            } else {
                i += 1;
            }
        }
    }
    lowered
        .into_iter()
        .zip(drop)
        .filter(|(w, dropped)| !dropped && !is_punctuation_only(w) && !stoplist.words.contains(w))
        .map(|(w, _)| w)
        .collect()
}

/// Lowercased tokens joined by single spaces; used for exact-match answers.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

pub fn split_sentences(words: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for w in words {
        cur.push(w.to_string());
        if w.ends_with(['.', '!', '?']) {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
