//! Minimal reverse-mode differentiation substrate.
//!
//! Networks in this crate are at most a few dense layers wide, so the tape
//! works on whole vectors and matrices: one node per layer-level operation.
//! Forward passes build a [`Tape`]; [`Tape::backward`] accumulates gradients
//! into the tape, and [`Tape::accumulate_param_grads`] moves them into a
//! [`GradAccum`] keyed by parameter id for the Adam update in [`ParamStore`].

mod checkpoint;
mod params;
mod tape;

pub mod check;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CheckpointError};
pub use params::{AdamConfig, GradAccum, Init, ParamId, ParamStore};
pub use tape::{Mode, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("distribution does not sum to 1 (got {0})")]
    NonNormalizedDistribution(f64),
}

/// Numerically stable softmax of a logit slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Log-probabilities of a logit slice (stable log-softmax).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let logsum = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&x| x - logsum).collect()
}

/// Smallest probability the KL denominator is allowed to take.
pub const KL_EPS: f64 = 1e-8;

/// KL divergence between two finite distributions over the same support.
///
/// Terms with `p[i] = 0` contribute zero; denominator entries are clamped at
/// [`KL_EPS`] so a sparse marginal cannot produce an infinity. Identical
/// inputs give exactly 0. The result is floored at 0 to absorb the clamp's
/// rounding at the 1e-8 scale.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, DiffError> {
    if p.len() != q.len() {
        return Err(DiffError::ShapeMismatch {
            op: "kl_divergence",
            detail: format!("{} vs {}", p.len(), q.len()),
        });
    }
    for (label, dist) in [("p", p), ("q", q)] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            let _ = label;
            return Err(DiffError::NonNormalizedDistribution(sum));
        }
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            kl += pi * (pi.ln() - qi.max(KL_EPS).ln());
        }
    }
    Ok(kl.max(0.0))
}
