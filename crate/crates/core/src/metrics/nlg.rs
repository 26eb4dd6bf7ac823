//! BLEU and ROUGE-L over lowercased whitespace tokens.

use alloc::collections::BTreeMap;
use alloc::string::String;

use num_traits::Float;

use crate::text::tokenize;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over `(candidate, reference)` pairs with clipped n-gram
/// precisions up to `max_n`, uniform weights and the brevity penalty.
/// Any zero precision makes the score zero (no smoothing).
pub fn corpus_bleu<S: AsRef<str>>(pairs: &[(S, S)], max_n: usize) -> f64 {
    let max_n = max_n.max(1);
    let mut matched = alloc::vec![0usize; max_n];
    let mut total = alloc::vec![0usize; max_n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in pairs {
        let c = tokenize(c.as_ref());
        let r = tokenize(r.as_ref());
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let rc = ngram_counts(&r, n);
            for (gram, count) in ngram_counts(&c, n) {
                matched[n - 1] += count.min(rc.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if cand_len == 0 || matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return 0.0;
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| Float::ln(m as f64 / t as f64))
        .sum::<f64>()
        / max_n as f64;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        Float::exp(1.0 - ref_len as f64 / cand_len as f64)
    };
    bp * Float::exp(log_p)
}

pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> f64 {
    corpus_bleu(&[(candidate, reference)], max_n)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence of tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return if c.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / c.len() as f64;
    let rec = lcs / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sentences() {
        let s = "the price of the socks is $12";
        assert!((bleu(s, s, 1) - 1.0).abs() < 1e-12);
        assert!((bleu(s, s, 4) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l(s, s), 1.0);
    }

    #[test]
    fn disjoint_vocabularies() {
        assert_eq!(bleu("red wool", "blue cotton", 1), 0.0);
        assert_eq!(rouge_l("red wool", "blue cotton"), 0.0);
    }

    #[test]
    fn brevity_penalty_fixture() {
        // p1 = 4/4, BP = exp(1 - 5/4)
        let b1 = bleu("the price is twelve", "the price is twelve dollars", 1);
        assert!((b1 - (-0.25f64).exp()).abs() < 1e-12);
        assert!((b1 - 0.7788).abs() < 1e-4);
    }

    #[test]
    fn clipping_limits_repeated_words() {
        // "the the the" vs "the cat": clipped p1 = 1/3; c=3 > r=2 so BP = 1
        assert!((bleu("the the the", "the cat", 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_partial() {
        // lcs("a b c d", "a c e") = 2; P = 1/2, R = 2/3
        let f = rouge_l("a b c d", "a c e");
        assert!((f - 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn corpus_bleu_pools_counts() {
        let pairs = [("a b", "a b"), ("c", "d")];
        // pooled p1 = 2/3, equal lengths
        assert!((corpus_bleu(&pairs, 1) - 2.0 / 3.0).abs() < 1e-12);
    }
}
