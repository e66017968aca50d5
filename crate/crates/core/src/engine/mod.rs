//! Pre-training, the co-teaching loop and the optimizers.

mod history;
mod optim;
mod train;

pub use history::{IterationRecord, RunHistory, HISTORY_HEADER};
pub use optim::{adam_update, AdamParams, AdamState, OptimizerKind, OptimizerState};
pub use train::{
    build_protocol, coteach_step, coteach_train, pretrain, select_model, split_batch, CoTeachOutcome, Peer, Peers,
    PretrainOutcome, StepLosses,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::eval::EvalError;
use crate::matcher::MatcherError;
use crate::strategies::StrategyError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("batch of {0} instances cannot be split into two equal halves")]
    OddBatch(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("strategy {strategy} requires hyperparameter {name}")]
    MissingHyperparameter {
        strategy: TeachingStrategy,
        name: &'static str,
    },
    #[error("non-finite gradient entry at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("parameter and gradient lengths differ ({params} vs {grad})")]
    LengthMismatch { params: usize, grad: usize },
    #[error("peers disagree on vocabulary size ({0} vs {1})")]
    VocabMismatch(usize, usize),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TeachingStrategy {
    Margin,
    Weighting,
    Curriculum,
    /// Each peer trains on its own sub-batch with plain cross-entropy.
    None,
}

impl TeachingStrategy {
    pub const ALL: [TeachingStrategy; 4] = [
        TeachingStrategy::Margin,
        TeachingStrategy::Weighting,
        TeachingStrategy::Curriculum,
        TeachingStrategy::None,
    ];

    /// Learning rates used in co-teaching: 1e-3 for dynamic margins, 1e-4
    /// for instance weighting and data curriculum.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            TeachingStrategy::Margin => 1e-3,
            TeachingStrategy::Weighting | TeachingStrategy::Curriculum | TeachingStrategy::None => 1e-4,
        }
    }
}

impl fmt::Display for TeachingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TeachingStrategy::Margin => "margin",
            TeachingStrategy::Weighting => "weighting",
            TeachingStrategy::Curriculum => "curriculum",
            TeachingStrategy::None => "none",
        })
    }
}

impl FromStr for TeachingStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "margin" => Ok(TeachingStrategy::Margin),
            "weighting" => Ok(TeachingStrategy::Weighting),
            "curriculum" => Ok(TeachingStrategy::Curriculum),
            "none" => Ok(TeachingStrategy::None),
            _ => Err(format!("unknown strategy {s:?} (expected margin|weighting|curriculum|none)")),
        }
    }
}

/// Which peer is updated first inside a co-teaching step. Both orders give
/// identical results; the switch exists so that can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    #[default]
    AThenB,
    BThenA,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: TeachingStrategy,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub learning_rate: f64,
    /// Number of triples per batch. Must be even and at least 2.
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub adam: AdamParams,
    pub seed: u64,
    /// Iterations between validation evaluations and checkpoints.
    pub eval_every: usize,
    pub update_order: UpdateOrder,
    /// Fill the `wall_ms` history column. Off by default so history files
    /// are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: TeachingStrategy::None,
            lambda: None,
            delta: None,
            learning_rate: 1e-3,
            batch_size: 50,
            epochs: 3,
            optimizer: OptimizerKind::Adam,
            adam: AdamParams::default(),
            seed: 1,
            eval_every: 20,
            update_order: UpdateOrder::AThenB,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    /// Config for `strategy` with its default learning rate and λ = 0.5,
    /// δ = 0.9.
    pub fn for_strategy(strategy: TeachingStrategy) -> Self {
        Self {
            strategy,
            lambda: Some(0.5),
            delta: Some(0.9),
            learning_rate: strategy.default_learning_rate(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a non-negative finite number");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(TrainError::OddBatch(self.batch_size));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam requires 0 <= beta1, beta2 < 1 and eps > 0");
        }
        match self.strategy {
            TeachingStrategy::Margin if self.lambda.is_none() => Err(TrainError::MissingHyperparameter {
                strategy: self.strategy,
                name: "lambda",
            }),
            TeachingStrategy::Curriculum if self.delta.is_none() => Err(TrainError::MissingHyperparameter {
                strategy: self.strategy,
                name: "delta",
            }),
            _ => Ok(()),
        }
    }
}
