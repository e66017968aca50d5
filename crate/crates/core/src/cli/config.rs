//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so a
//! typo never silently falls back to a default.
//!
//! ```text
//! # corpus
//! vocab_size = 1000
//! false_negative_rate = 0.3
//! # models
//! spec_a.kind = mean-embedding-bilinear
//! spec_b.kind = interaction-mlp     # two-network mode
//! # co-teaching
//! strategy = curriculum
//! delta = 0.9
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{GenConfig, DEFAULT_MAX_TOKENS, DEFAULT_MAX_TURNS};
use crate::engine::{OptimizerKind, TeachingStrategy, TrainConfig};
use crate::matcher::{MatcherKind, MatcherSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}:{line}: {msg}")]
    Line { origin: String, line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Delta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Delta => "delta",
        }
    }

    /// The strategy whose hyperparameter is swept.
    pub fn strategy(self) -> TeachingStrategy {
        match self {
            SweepParam::Lambda => TeachingStrategy::Margin,
            SweepParam::Delta => TeachingStrategy::Curriculum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 50,
        }
    }
}

/// Everything a pipeline command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub spec_a: MatcherSpec,
    /// Set only in two-network mode.
    pub spec_b: Option<MatcherSpec>,
    pub train: TrainConfig,
    /// `None` means the strategy's default learning rate.
    pub learning_rate: Option<f64>,
    pub pretrain: PretrainSettings,
    pub corpus_dir: PathBuf,
    pub run_dir: PathBuf,
    pub max_turns: usize,
    pub max_tokens: usize,
    pub ema_alpha: f64,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gen = GenConfig::default();
        Self {
            spec_a: MatcherSpec::new(MatcherKind::MeanEmbeddingBilinear, gen.vocab_size),
            spec_b: None,
            train: TrainConfig::for_strategy(TeachingStrategy::Margin),
            learning_rate: None,
            pretrain: PretrainSettings::default(),
            corpus_dir: PathBuf::from("corpus"),
            run_dir: PathBuf::from("run"),
            max_turns: DEFAULT_MAX_TURNS,
            max_tokens: DEFAULT_MAX_TOKENS,
            ema_alpha: 0.3,
            sweep_param: SweepParam::Delta,
            sweep_values: (1..=10).map(|i| i as f64 / 10.0).collect(),
            gen,
        }
    }
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("invalid value {v:?}: {e}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean {v:?}")),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn parse_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut spec_b_kind: Option<MatcherKind> = None;
        let mut spec_b_dims = (None, None);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line {
                origin: origin.to_string(),
                line: idx + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value, &mut spec_b_kind, &mut spec_b_dims).map_err(err)?;
        }
        cfg.spec_a.vocab_size = cfg.gen.vocab_size;
        if let Some(kind) = spec_b_kind {
            let mut b = MatcherSpec::new(kind, cfg.gen.vocab_size);
            b.embedding_dim = spec_b_dims.0.unwrap_or(cfg.spec_a.embedding_dim);
            b.hidden_dim = spec_b_dims.1.unwrap_or(cfg.spec_a.hidden_dim);
            cfg.spec_b = Some(b);
        }
        cfg.train.seed = cfg.gen.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(
        &mut self,
        key: &str,
        v: &str,
        spec_b_kind: &mut Option<MatcherKind>,
        spec_b_dims: &mut (Option<usize>, Option<usize>),
    ) -> Result<(), String> {
        let g = &mut self.gen;
        let t = &mut self.train;
        match key {
            "vocab_size" => g.vocab_size = parse(v)?,
            "n_topics" => g.n_topics = parse(v)?,
            "n_train" => g.n_train = parse(v)?,
            "n_valid" => g.n_valid = parse(v)?,
            "n_test_contexts" => g.n_test_contexts = parse(v)?,
            "n_candidates" => g.n_candidates = parse(v)?,
            "turns_per_context" => g.turns_per_context = parse(v)?,
            "tokens_per_utterance" => g.tokens_per_utterance = parse(v)?,
            "false_negative_rate" => g.false_negative_rate = parse(v)?,
            "topic_purity" => g.topic_purity = parse(v)?,
            "test_positive_rate" => g.test_positive_rate = parse(v)?,
            "seed" => g.seed = parse(v)?,
            "spec_a.kind" => self.spec_a.kind = parse(v)?,
            "spec_a.embedding_dim" => self.spec_a.embedding_dim = parse(v)?,
            "spec_a.hidden_dim" => self.spec_a.hidden_dim = parse(v)?,
            "spec_b.kind" => *spec_b_kind = Some(parse(v)?),
            "spec_b.embedding_dim" => spec_b_dims.0 = Some(parse(v)?),
            "spec_b.hidden_dim" => spec_b_dims.1 = Some(parse(v)?),
            "strategy" => t.strategy = parse(v)?,
            "lambda" => t.lambda = Some(parse(v)?),
            "delta" => t.delta = Some(parse(v)?),
            "learning_rate" => self.learning_rate = Some(parse(v)?),
            "batch_size" => t.batch_size = parse(v)?,
            "epochs" => t.epochs = parse(v)?,
            "optimizer" => t.optimizer = parse::<OptimizerKind>(v)?,
            "adam.beta1" => t.adam.beta1 = parse(v)?,
            "adam.beta2" => t.adam.beta2 = parse(v)?,
            "adam.eps" => t.adam.eps = parse(v)?,
            "eval_every" => t.eval_every = parse(v)?,
            "record_wall_time" => t.record_wall_time = parse_bool(v)?,
            "pretrain.epochs" => self.pretrain.epochs = parse(v)?,
            "pretrain.learning_rate" => self.pretrain.learning_rate = parse(v)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse(v)?,
            "corpus_dir" => self.corpus_dir = PathBuf::from(v),
            "run_dir" => self.run_dir = PathBuf::from(v),
            "max_turns" => self.max_turns = parse(v)?,
            "max_tokens" => self.max_tokens = parse(v)?,
            "ema_alpha" => self.ema_alpha = parse(v)?,
            "sweep.param" => {
                self.sweep_param = match v {
                    "lambda" => SweepParam::Lambda,
                    "delta" => SweepParam::Delta,
                    _ => return Err(format!("sweep.param must be lambda or delta, found {v:?}")),
                }
            }
            "sweep.values" => {
                self.sweep_values = v
                    .split(',')
                    .map(|s| parse::<f64>(s.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.gen.validate().or_else(|e| bad(e.to_string()))?;
        self.spec_a.validate().or_else(|e| bad(e.to_string()))?;
        if let Some(b) = &self.spec_b {
            b.validate().or_else(|e| bad(e.to_string()))?;
        }
        self.coteach_config().validate().or_else(|e| bad(e.to_string()))?;
        self.pretrain_config().validate().or_else(|e| bad(e.to_string()))?;
        if self.max_turns == 0 || self.max_tokens == 0 {
            return bad("max_turns and max_tokens must be positive".into());
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad(format!("ema_alpha must lie in (0, 1], got {}", self.ema_alpha));
        }
        if self.sweep_values.is_empty() {
            return bad("sweep.values is empty".into());
        }
        Ok(())
    }

    /// Co-teaching settings with the learning rate resolved.
    pub fn coteach_config(&self) -> TrainConfig {
        self.coteach_config_for(self.train.strategy)
    }

    pub fn coteach_config_for(&self, strategy: TeachingStrategy) -> TrainConfig {
        TrainConfig {
            strategy,
            learning_rate: self.learning_rate.unwrap_or(strategy.default_learning_rate()),
            ..self.train.clone()
        }
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            strategy: TeachingStrategy::None,
            learning_rate: self.pretrain.learning_rate,
            batch_size: self.pretrain.batch_size,
            epochs: self.pretrain.epochs,
            ..self.train.clone()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gen.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn with_strategy(mut self, strategy: TeachingStrategy) -> Self {
        self.train.strategy = strategy;
        self
    }
}
