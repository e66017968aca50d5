//! Matching models `s(c, r) ∈ (0, 1)`.
//!
//! Both reference architectures pool token embeddings the same way: the
//! context vector `u` is the mean over utterances of each utterance's mean
//! token embedding, and the response vector `v` is the mean of the response's
//! token embeddings. The heads differ:
//!
//! * `mean-embedding-bilinear`: `s = σ(uᵀ W v + b)`
//! * `interaction-mlp`: `s = σ(w₂ᵀ tanh(W₁ [u; v; u⊙v] + b₁) + b₂)`
//!
//! Parameters live in one flat `f64` vector. The embedding table `E`
//! (`vocab_size × d`, row-major) comes first, followed by the head:
//!
//! | kind | head layout |
//! |------|-------------|
//! | bilinear | `W` (`d × d`, row-major), `b` |
//! | interaction-mlp | `W₁` (`h × 3d`, row-major), `b₁` (`h`), `w₂` (`h`), `b₂` |

mod checkpoint;
mod forward;
mod grad;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use grad::{finite_diff_check, loss_and_grad, max_relative_error, numeric_gradient, protocol_loss};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{TokenId, TokenizedDialogue, Utterance};
use crate::losses::LossKind;
use crate::rng::{self, Concern};

/// Logit clamp applied before the logistic function.
pub const LOGIT_CLAMP: f64 = 30.0;
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("token id {token} is out of range for vocab size {vocab_size}")]
    TokenOutOfRange { token: TokenId, vocab_size: usize },
    #[error("dialogue has an empty context, utterance or response")]
    EmptyDialogue,
    #[error("invalid matcher spec: {0}")]
    InvalidSpec(String),
    #[error("parameter vector has length {found}, layout requires {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("parameter {index} is not finite")]
    NonFiniteParam { index: usize },
    #[error("learning protocol has no instances")]
    EmptyProtocol,
    #[error("learning protocol is malformed: {0}")]
    IncompatibleProtocol(String),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatcherKind {
    MeanEmbeddingBilinear,
    InteractionMlp,
}

impl fmt::Display for MatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatcherKind::MeanEmbeddingBilinear => "mean-embedding-bilinear",
            MatcherKind::InteractionMlp => "interaction-mlp",
        })
    }
}

impl FromStr for MatcherKind {
    type Err = MatcherError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-embedding-bilinear" | "bilinear" => Ok(MatcherKind::MeanEmbeddingBilinear),
            "interaction-mlp" | "mlp" => Ok(MatcherKind::InteractionMlp),
            _ => Err(MatcherError::InvalidSpec(format!("unknown matcher kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatcherSpec {
    pub kind: MatcherKind,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Only used by the interaction MLP.
    pub hidden_dim: usize,
}

impl MatcherSpec {
    pub fn new(kind: MatcherKind, vocab_size: usize) -> Self {
        Self {
            kind,
            vocab_size,
            embedding_dim: 32,
            hidden_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<(), MatcherError> {
        if self.vocab_size == 0 || self.embedding_dim == 0 {
            return Err(MatcherError::InvalidSpec(
                "vocab_size and embedding_dim must be positive".into(),
            ));
        }
        if self.kind == MatcherKind::InteractionMlp && self.hidden_dim == 0 {
            return Err(MatcherError::InvalidSpec("hidden_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub h: usize,
    pub embeddings: usize,
    /// `W` for the bilinear head, `W₁` for the MLP.
    pub weight: usize,
    /// `b` for the bilinear head, `b₁` for the MLP.
    pub bias: usize,
    /// `w₂` (MLP only).
    pub out_weight: usize,
    /// `b₂` (MLP only).
    pub out_bias: usize,
    pub len: usize,
}

impl Layout {
    fn new(spec: &MatcherSpec) -> Self {
        let d = spec.embedding_dim;
        let weight = spec.vocab_size * d;
        match spec.kind {
            MatcherKind::MeanEmbeddingBilinear => {
                let bias = weight + d * d;
                Layout {
                    d,
                    h: 0,
                    embeddings: 0,
                    weight,
                    bias,
                    out_weight: bias + 1,
                    out_bias: bias + 1,
                    len: bias + 1,
                }
            }
            MatcherKind::InteractionMlp => {
                let h = spec.hidden_dim;
                let bias = weight + h * 3 * d;
                let out_weight = bias + h;
                let out_bias = out_weight + h;
                Layout {
                    d,
                    h,
                    embeddings: 0,
                    weight,
                    bias,
                    out_weight,
                    out_bias,
                    len: out_bias + 1,
                }
            }
        }
    }

    /// Index ranges that hold biases; they are initialized to zero.
    pub fn bias_ranges(&self, kind: MatcherKind) -> Vec<std::ops::Range<usize>> {
        match kind {
            MatcherKind::MeanEmbeddingBilinear => vec![self.bias..self.bias + 1],
            MatcherKind::InteractionMlp => {
                vec![self.bias..self.bias + self.h, self.out_bias..self.out_bias + 1]
            }
        }
    }
}

/// A matcher's architecture plus its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    spec: MatcherSpec,
    params: Vec<f64>,
}

impl ModelState {
    pub fn from_params(spec: MatcherSpec, params: Vec<f64>) -> Result<Self, MatcherError> {
        spec.validate()?;
        let expected = spec.param_count();
        if params.len() != expected {
            return Err(MatcherError::ParamLength {
                expected,
                found: params.len(),
            });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(MatcherError::NonFiniteParam { index });
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MatcherSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layout(&self) -> Layout {
        self.spec.layout()
    }

    pub fn score(&self, dialogue: &TokenizedDialogue) -> Result<f64, MatcherError> {
        self.score_pair(&dialogue.context, &dialogue.response)
    }

    /// Scores `response` against `context` without building a dialogue.
    pub fn score_pair(&self, context: &[Utterance], response: &[TokenId]) -> Result<f64, MatcherError> {
        self.check_tokens(context, response)?;
        Ok(self.forward(context, response).score)
    }

    pub(crate) fn check_tokens(&self, context: &[Utterance], response: &[TokenId]) -> Result<(), MatcherError> {
        if context.is_empty() || response.is_empty() || context.iter().any(|u| u.is_empty()) {
            return Err(MatcherError::EmptyDialogue);
        }
        let vocab_size = self.spec.vocab_size;
        match context
            .iter()
            .flatten()
            .chain(response)
            .find(|&&t| t as usize >= vocab_size)
        {
            Some(&token) => Err(MatcherError::TokenOutOfRange { token, vocab_size }),
            None => Ok(()),
        }
    }
}

/// Draws embeddings and weights from `uniform(-0.1, 0.1)`; biases are zero.
pub fn init_params(spec: &MatcherSpec, seed: u64) -> Result<ModelState, MatcherError> {
    init_params_scaled(spec, seed, INIT_SCALE)
}

/// [`init_params`] with a custom range `uniform(-scale, scale)`.
pub fn init_params_scaled(spec: &MatcherSpec, seed: u64, scale: f64) -> Result<ModelState, MatcherError> {
    spec.validate()?;
    let layout = spec.layout();
    let mut rng = rng::stream(seed, Concern::Init, 0);
    let mut params: Vec<f64> = (0..layout.len)
        .map(|_| rng.gen_range(-scale..=scale))
        .collect();
    for range in layout.bias_ranges(spec.kind) {
        params[range].fill(0.0);
    }
    ModelState::from_params(*spec, params)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// Which loss kinds a protocol with the given instance view may carry.
pub(crate) fn check_pairing(kind: LossKind, pairwise: bool) -> Result<(), MatcherError> {
    if kind.is_pairwise() != pairwise {
        return Err(MatcherError::IncompatibleProtocol(format!(
            "{kind} cannot be applied to {} instances",
            if pairwise { "pairwise" } else { "pointwise" }
        )));
    }
    Ok(())
}
