//! Per-instance losses and their derivatives with respect to the score.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Scores are clamped to `[CE_EPS, 1 - CE_EPS]` inside the cross-entropy.
pub const CE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("margin must be non-negative, got {0}")]
    NegativeMargin(f64),
    #[error("instance weight must be non-negative, got {0}")]
    NegativeWeight(f64),
    #[error("unknown loss kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropy,
    WeightedCrossEntropy,
    HingeWithMargin,
}

impl LossKind {
    /// Hinge consumes triples; both cross-entropy forms consume labeled pairs.
    pub fn is_pairwise(self) -> bool {
        matches!(self, LossKind::HingeWithMargin)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::WeightedCrossEntropy => "weighted_cross_entropy",
            LossKind::HingeWithMargin => "hinge_with_margin",
        })
    }
}

impl FromStr for LossKind {
    type Err = LossError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross_entropy" => Ok(LossKind::CrossEntropy),
            "weighted_cross_entropy" => Ok(LossKind::WeightedCrossEntropy),
            "hinge_with_margin" => Ok(LossKind::HingeWithMargin),
            _ => Err(LossError::UnknownKind(s.to_string())),
        }
    }
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(CE_EPS, 1.0 - CE_EPS)
}

/// `-y ln s - (1 - y) ln(1 - s)` with `s` clamped to `[ε, 1 - ε]`.
pub fn cross_entropy(label: u8, score: f64) -> f64 {
    let s = clamp_score(score);
    if label == 1 {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

/// Derivative of [`cross_entropy`] with respect to the raw score. Zero where
/// the clamp is active.
pub fn cross_entropy_dscore(label: u8, score: f64) -> f64 {
    if !(CE_EPS..=1.0 - CE_EPS).contains(&score) {
        return 0.0;
    }
    if label == 1 {
        -1.0 / score
    } else {
        1.0 / (1.0 - score)
    }
}

/// `max(0, Δ - s⁺ + s⁻)`.
pub fn hinge_with_margin(s_pos: f64, s_neg: f64, margin: f64) -> Result<f64, LossError> {
    if margin < 0.0 || margin.is_nan() {
        return Err(LossError::NegativeMargin(margin));
    }
    Ok((margin - s_pos + s_neg).max(0.0))
}

/// Whether the hinge is in its linear region (the gradient is `-1` for
/// `s_pos` and `+1` for `s_neg` there, zero elsewhere).
pub fn hinge_active(s_pos: f64, s_neg: f64, margin: f64) -> bool {
    margin - s_pos + s_neg > 0.0
}

/// `Σ w_i · CE(y_i, s_i)` over `(weight, label, score)` instances.
pub fn weighted_ce_sum(instances: &[(f64, u8, f64)]) -> Result<f64, LossError> {
    instances.iter().try_fold(0.0, |acc, &(w, y, s)| {
        if w < 0.0 || w.is_nan() {
            return Err(LossError::NegativeWeight(w));
        }
        Ok(acc + w * cross_entropy(y, s))
    })
}
