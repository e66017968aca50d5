//! Teaching strategies.
//!
//! Each strategy takes a frozen teacher model and the student's sub-batch and
//! returns the [`LearningProtocol`] the student trains on: the instances it
//! sees plus the loss applied to them. Teacher scores enter the protocol as
//! constants.

use thiserror::Error;

use crate::corpus::{PairwiseTriple, PointwiseExample};
use crate::losses::{cross_entropy, LossKind};
use crate::matcher::{check_pairing, MatcherError, ModelState};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("lambda must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("sub-batch is empty")]
    EmptySubBatch,
    #[error(transparent)]
    Matcher(#[from] MatcherError),
}

/// Training instances plus the loss one peer hands to the other.
///
/// Exactly one of the two instance lists is populated: hinge protocols carry
/// `(triple, margin)` pairs, cross-entropy protocols carry
/// `(example, weight)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningProtocol {
    pub loss_kind: LossKind,
    pub pairwise: Vec<(PairwiseTriple, f64)>,
    pub pointwise: Vec<(PointwiseExample, f64)>,
}

impl LearningProtocol {
    pub fn with_margins(instances: Vec<(PairwiseTriple, f64)>) -> Self {
        Self {
            loss_kind: LossKind::HingeWithMargin,
            pairwise: instances,
            pointwise: Vec::new(),
        }
    }

    pub fn with_weights(loss_kind: LossKind, instances: Vec<(PointwiseExample, f64)>) -> Self {
        Self {
            loss_kind,
            pairwise: Vec::new(),
            pointwise: instances,
        }
    }

    pub fn len(&self) -> usize {
        self.pairwise.len() + self.pointwise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the structural invariants: one non-empty view matching the loss
    /// kind, margins ≥ 0, weights in [0, 1].
    pub fn validate(&self) -> Result<(), MatcherError> {
        match (self.pairwise.is_empty(), self.pointwise.is_empty()) {
            (true, true) => return Err(MatcherError::EmptyProtocol),
            (false, false) => {
                return Err(MatcherError::IncompatibleProtocol(
                    "both pairwise and pointwise instances are present".into(),
                ))
            }
            (pw_empty, _) => check_pairing(self.loss_kind, !pw_empty)?,
        }
        if let Some((_, m)) = self.pairwise.iter().find(|(_, m)| !(*m >= 0.0 && m.is_finite())) {
            return Err(MatcherError::IncompatibleProtocol(format!("invalid margin {m}")));
        }
        if let Some((_, w)) = self.pointwise.iter().find(|(_, w)| !(0.0..=1.0).contains(w)) {
            return Err(MatcherError::IncompatibleProtocol(format!("invalid weight {w}")));
        }
        Ok(())
    }
}

/// Dynamic margins: `Δᵢ = max(0, λ (s_T(c, r⁺) - s_T(c, r⁻)))`.
pub fn margin_protocol(
    teacher: &ModelState,
    sub_batch: &[PairwiseTriple],
    lambda: f64,
) -> Result<LearningProtocol, StrategyError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(StrategyError::InvalidLambda(lambda));
    }
    let instances = sub_batch
        .iter()
        .map(|t| {
            let s_pos = teacher.score_pair(&t.context, &t.pos_response)?;
            let s_neg = teacher.score_pair(&t.context, &t.neg_response)?;
            Ok((t.clone(), dynamic_margin(s_pos, s_neg, lambda)))
        })
        .collect::<Result<Vec<_>, MatcherError>>()?;
    Ok(LearningProtocol::with_margins(instances))
}

pub fn dynamic_margin(s_pos: f64, s_neg: f64, lambda: f64) -> f64 {
    (lambda * (s_pos - s_neg)).max(0.0)
}

/// Instance weight: 1 for positives, `1 - s_T(c, r)` for negatives.
pub fn instance_weight(label: u8, teacher_score: f64) -> f64 {
    if label == 1 {
        1.0
    } else {
        1.0 - teacher_score
    }
}

/// Dynamic instance weighting with a weighted cross-entropy loss.
pub fn weighting_protocol(
    teacher: &ModelState,
    sub_batch: &[PointwiseExample],
) -> Result<LearningProtocol, StrategyError> {
    let instances = sub_batch
        .iter()
        .map(|e| {
            let w = if e.label == 1 {
                1.0
            } else {
                instance_weight(0, teacher.score(&e.dialogue)?)
            };
            Ok((e.clone(), w))
        })
        .collect::<Result<Vec<_>, MatcherError>>()?;
    Ok(LearningProtocol::with_weights(
        LossKind::WeightedCrossEntropy,
        instances,
    ))
}

/// Number of instances kept by the curriculum: `⌈δ·n⌉`.
///
/// A `1e-9` slack absorbs floating-point error in `δ·n` so that, for example,
/// `0.3 · 10` keeps 3 instances rather than 4.
pub fn curriculum_size(n: usize, delta: f64) -> usize {
    let k = (delta * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}

/// Indices of the `⌈δ·n⌉` smallest losses, returned in ascending index order.
/// Equal losses keep the earlier instance first.
pub fn curriculum_select(losses: &[f64], delta: f64) -> Result<Vec<usize>, StrategyError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(StrategyError::InvalidDelta(delta));
    }
    if losses.is_empty() {
        return Err(StrategyError::EmptySubBatch);
    }
    let k = curriculum_size(losses.len(), delta);
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Dynamic data curriculum: keep the small-loss fraction `δ` of the
/// sub-batch as judged by the teacher's cross-entropy.
pub fn curriculum_protocol(
    teacher: &ModelState,
    sub_batch: &[PointwiseExample],
    delta: f64,
) -> Result<LearningProtocol, StrategyError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(StrategyError::InvalidDelta(delta));
    }
    if sub_batch.is_empty() {
        return Err(StrategyError::EmptySubBatch);
    }
    let losses = sub_batch
        .iter()
        .map(|e| Ok(cross_entropy(e.label, teacher.score(&e.dialogue)?)))
        .collect::<Result<Vec<_>, MatcherError>>()?;
    let keep = curriculum_select(&losses, delta)?;
    let instances = keep.into_iter().map(|i| (sub_batch[i].clone(), 1.0)).collect();
    Ok(LearningProtocol::with_weights(LossKind::CrossEntropy, instances))
}

/// Plain cross-entropy over the whole sub-batch; no teacher involved.
pub fn plain_protocol(sub_batch: &[PointwiseExample]) -> LearningProtocol {
    LearningProtocol::with_weights(
        LossKind::CrossEntropy,
        sub_batch.iter().map(|e| (e.clone(), 1.0)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{to_pointwise, TokenizedDialogue};
    use crate::matcher::{init_params_scaled, MatcherKind, MatcherSpec};
    use proptest::prelude::*;

    /// Bilinear model with d = 1 whose score on a single-token context and
    /// single-token response is `σ(e_c · w · e_r)`.
    fn toy_teacher() -> ModelState {
        let spec = MatcherSpec {
            kind: MatcherKind::MeanEmbeddingBilinear,
            vocab_size: 4,
            embedding_dim: 1,
            hidden_dim: 0,
        };
        ModelState::from_params(spec, vec![1.0, 2.0, -1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    fn toy_triple(pos: u32, neg: u32) -> PairwiseTriple {
        PairwiseTriple {
            context: vec![vec![0]],
            pos_response: vec![pos],
            neg_response: vec![neg],
            noise_flag: None,
        }
    }

    fn sig(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn margin_formula() {
        assert!((dynamic_margin(0.9, 0.1, 0.5) - 0.4).abs() < 1e-15);
        assert_eq!(dynamic_margin(0.2, 0.7, 0.5), 0.0);
        assert_eq!(dynamic_margin(0.4, 0.4, 3.0), 0.0);
    }

    #[test]
    fn margin_protocol_uses_teacher_scores() {
        let t = toy_teacher();
        let p = margin_protocol(&t, &[toy_triple(1, 2), toy_triple(2, 1)], 0.5).unwrap();
        assert_eq!(p.loss_kind, LossKind::HingeWithMargin);
        assert!(p.pointwise.is_empty());
        let expected = 0.5 * (sig(2.0) - sig(-1.0));
        assert!((p.pairwise[0].1 - expected).abs() < 1e-15);
        assert_eq!(p.pairwise[1].1, 0.0);
        assert_eq!(p.pairwise[0].0, toy_triple(1, 2));
        assert!(matches!(
            margin_protocol(&t, &[toy_triple(1, 2)], 0.0),
            Err(StrategyError::InvalidLambda(_))
        ));
    }

    #[test]
    fn weighting_formula() {
        assert_eq!(instance_weight(1, 0.01), 1.0);
        assert_eq!(instance_weight(1, 0.99), 1.0);
        assert!((instance_weight(0, 0.7) - 0.3).abs() < 1e-15);
        assert!(instance_weight(0, 1.0 - 1e-12) < 1e-11);
    }

    #[test]
    fn weighting_protocol_uses_teacher_scores() {
        let t = toy_teacher();
        let p = weighting_protocol(&t, &to_pointwise(&[toy_triple(2, 1)])).unwrap();
        assert_eq!(p.loss_kind, LossKind::WeightedCrossEntropy);
        assert_eq!(p.pointwise[0].1, 1.0);
        assert!((p.pointwise[1].1 - (1.0 - sig(2.0))).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn curriculum_examples() {
        assert_eq!(curriculum_select(&[0.2, 0.9, 0.1, 0.5], 0.5).unwrap(), vec![0, 2]);
        assert_eq!(curriculum_select(&[0.2, 0.9, 0.1, 0.5], 1.0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(curriculum_select(&[0.3, 0.3, 0.3], 0.5).unwrap(), vec![0, 1]);
        assert_eq!(curriculum_size(10, 0.3), 3);
        assert_eq!(curriculum_size(10, 0.9), 9);
        assert_eq!(curriculum_size(7, 0.01), 1);
        assert!(matches!(curriculum_select(&[], 0.5), Err(StrategyError::EmptySubBatch)));
        assert!(matches!(curriculum_select(&[1.0], 0.0), Err(StrategyError::InvalidDelta(_))));
        assert!(matches!(curriculum_select(&[1.0], 1.5), Err(StrategyError::InvalidDelta(_))));
    }

    #[test]
    fn curriculum_full_delta_keeps_original_order() {
        let t = toy_teacher();
        let batch = to_pointwise(&[toy_triple(1, 2), toy_triple(2, 1), toy_triple(3, 1)]);
        let p = curriculum_protocol(&t, &batch, 1.0).unwrap();
        assert_eq!(p.loss_kind, LossKind::CrossEntropy);
        let kept: Vec<_> = p.pointwise.iter().map(|(e, _)| e.clone()).collect();
        assert_eq!(kept, batch);
        assert!(p.pointwise.iter().all(|(_, w)| *w == 1.0));
    }

    #[test]
    fn protocol_validation() {
        let e = PointwiseExample {
            label: 1,
            dialogue: TokenizedDialogue::new(vec![vec![0]], vec![1]),
        };
        let empty = LearningProtocol::with_weights(LossKind::CrossEntropy, vec![]);
        assert!(matches!(empty.validate(), Err(MatcherError::EmptyProtocol)));
        let wrong = LearningProtocol::with_weights(LossKind::HingeWithMargin, vec![(e.clone(), 1.0)]);
        assert!(matches!(wrong.validate(), Err(MatcherError::IncompatibleProtocol(_))));
        let heavy = LearningProtocol::with_weights(LossKind::WeightedCrossEntropy, vec![(e, 1.5)]);
        assert!(heavy.validate().is_err());
    }

    fn random_teacher(seed: u64) -> ModelState {
        let spec = MatcherSpec {
            kind: MatcherKind::MeanEmbeddingBilinear,
            vocab_size: 4,
            embedding_dim: 3,
            hidden_dim: 0,
        };
        init_params_scaled(&spec, seed, 2.0).unwrap()
    }

    proptest! {
        #[test]
        fn margin_is_homogeneous_in_lambda(sp in 0.0f64..1.0, sn in 0.0f64..1.0, l in 0.01f64..5.0, k in 0.1f64..10.0) {
            let m1 = dynamic_margin(sp, sn, l);
            let mk = dynamic_margin(sp, sn, k * l);
            if sp > sn {
                prop_assert!((mk - k * m1).abs() < 1e-12);
            } else {
                prop_assert_eq!(m1, 0.0);
            }
        }

        #[test]
        fn weights_bounded_and_positives_unit(seed in 0u64..500, pos in 0u32..4, neg in 0u32..4) {
            prop_assume!(pos != neg);
            let t = random_teacher(seed);
            let p = weighting_protocol(&t, &to_pointwise(&[toy_triple(pos, neg)])).unwrap();
            for (e, w) in &p.pointwise {
                prop_assert!((0.0..=1.0).contains(w));
                if e.label == 1 {
                    prop_assert_eq!(*w, 1.0);
                }
            }
        }

        #[test]
        fn curriculum_cardinality_and_order(losses in prop::collection::vec(0.0f64..3.0, 1..40), delta in 0.01f64..=1.0) {
            let keep = curriculum_select(&losses, delta).unwrap();
            prop_assert_eq!(keep.len(), curriculum_size(losses.len(), delta));
            prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
            let dropped: Vec<usize> = (0..losses.len()).filter(|i| !keep.contains(i)).collect();
            for &k in &keep {
                for &d in &dropped {
                    prop_assert!(losses[k] < losses[d] || (losses[k] == losses[d] && k < d));
                }
            }
        }

        #[test]
        fn strategies_are_pure(seed in 0u64..200, delta in 0.1f64..=1.0) {
            let t = random_teacher(seed);
            let triples = [toy_triple(1, 2), toy_triple(3, 0), toy_triple(0, 2)];
            let pw = to_pointwise(&triples);
            prop_assert_eq!(margin_protocol(&t, &triples, 0.5).unwrap(), margin_protocol(&t, &triples, 0.5).unwrap());
            prop_assert_eq!(weighting_protocol(&t, &pw).unwrap(), weighting_protocol(&t, &pw).unwrap());
            prop_assert_eq!(curriculum_protocol(&t, &pw, delta).unwrap(), curriculum_protocol(&t, &pw, delta).unwrap());
        }
    }
}
