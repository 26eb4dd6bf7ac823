use alloc::string::String;

use crate::text::tokenize;

use super::Taxonomy;

/// Factor applied to word similarities below the WUPS threshold.
pub const WUPS_SCALE: f64 = 0.1;

/// Best Wu-Palmer similarity over the synsets of two words. Words outside
/// the taxonomy only match themselves.
pub fn word_similarity(tax: &Taxonomy, a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let sa = tax.synsets_for(a);
    let sb = tax.synsets_for(b);
    let mut best = 0.0f64;
    for x in sa {
        for y in sb {
            if let Ok(w) = tax.wup(x, y) {
                best = best.max(w);
            }
        }
    }
    best
}

fn thresholded(tax: &Taxonomy, a: &str, b: &str, threshold: f64) -> f64 {
    let s = word_similarity(tax, a, b);
    if s < threshold {
        s * WUPS_SCALE
    } else {
        s
    }
}

fn directed(tax: &Taxonomy, from: &[String], to: &[String], threshold: f64) -> f64 {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|t| thresholded(tax, a, t, threshold))
                .fold(0.0f64, f64::max)
        })
        .product()
}

/// WUPS of a candidate answer against a reference at a threshold.
///
/// Per word pair, similarities under the threshold are scaled by
/// [`WUPS_SCALE`]; the score is the minimum of the two directed products of
/// best matches. Two empty answers score 1, one empty answer scores 0.
pub fn wups_score(candidate: &str, reference: &str, tax: &Taxonomy, threshold: f64) -> f64 {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    match (cand.is_empty(), refs.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    directed(tax, &cand, &refs, threshold).min(directed(tax, &refs, &cand, threshold))
}
