//! Closed-form losses over explicit probability / logit values.
//!
//! Training builds the same quantities on the autodiff tape; these functions
//! are the reference values the tape is tested against.

use alloc::vec::Vec;

use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LossError {
    #[error("index {index} out of range for step {step} with {len} entries")]
    IndexOutOfRange { step: usize, index: usize, len: usize },
    #[error("{0} steps given but {1} actions")]
    LengthMismatch(usize, usize),
}

/// `−Σ_t log p_t[a_t] − η · Σ_t log p_t[a*_t]` over per-step distributions.
pub fn nav_loss(probs: &[Vec<f64>], sampled: &[usize], teacher: &[usize], eta: f64) -> Result<f64, LossError> {
    if probs.len() != sampled.len() || probs.len() != teacher.len() {
        return Err(LossError::LengthMismatch(probs.len(), sampled.len().min(teacher.len())));
    }
    let mut total = 0.0;
    for (step, ((p, &a), &t)) in probs.iter().zip(sampled).zip(teacher).enumerate() {
        for &i in &[a, t] {
            if i >= p.len() {
                return Err(LossError::IndexOutOfRange { step, index: i, len: p.len() });
            }
        }
        total -= Float::ln(p[a]);
        if eta != 0.0 {
            total -= eta * Float::ln(p[t]);
        }
    }
    Ok(total)
}

/// Teacher-forced answer loss `Σ_l −log softmax(logits_l)[gold_l]`.
pub fn ans_loss(logits: &[Vec<f64>], gold: &[usize]) -> Result<f64, LossError> {
    if logits.len() != gold.len() {
        return Err(LossError::LengthMismatch(logits.len(), gold.len()));
    }
    let mut total = 0.0;
    for (step, (row, &g)) in logits.iter().zip(gold).enumerate() {
        if g >= row.len() {
            return Err(LossError::IndexOutOfRange { step, index: g, len: row.len() });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + Float::ln(row.iter().map(|&x| Float::exp(x - max)).sum::<f64>());
        total += lse - row[g];
    }
    Ok(total)
}

/// `L = L_nav + λ · L_ans`
pub fn total_loss(l_nav: f64, l_ans: f64, lambda: f64) -> f64 {
    l_nav + lambda * l_ans
}
