//! Dialogue data model, synthetic corpus generation and corpus files.
//!
//! Training and validation data are stored as triples `(c, r+, r-)`. The
//! pointwise view `(y, c, r)` used by the cross-entropy based strategies is
//! derived with [`to_pointwise`]. Synthetic corpora carry a ground-truth
//! false-negative marker on each triple; it is never copied into either
//! training view.

mod io;
mod synth;

pub use io::{load_corpus, save_corpus, CORPUS_FILES};
pub use synth::{generate_synthetic_corpus, GenConfig};

use thiserror::Error;

pub type TokenId = u32;

/// A single utterance or response as token IDs.
pub type Utterance = Vec<TokenId>;

pub const DEFAULT_MAX_TURNS: usize = 10;
pub const DEFAULT_MAX_TOKENS: usize = 50;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{file}:{line}: token id {token} is out of range for vocab size {vocab_size}")]
    TokenOutOfRange {
        file: String,
        line: usize,
        token: TokenId,
        vocab_size: usize,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A context (utterances, oldest first) paired with one response candidate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenizedDialogue {
    pub context: Vec<Utterance>,
    pub response: Utterance,
}

impl TokenizedDialogue {
    pub fn new(context: Vec<Utterance>, response: Utterance) -> Self {
        Self { context, response }
    }

    pub fn max_token(&self) -> Option<TokenId> {
        self.context
            .iter()
            .flatten()
            .chain(self.response.iter())
            .copied()
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointwiseExample {
    /// 1 for an appropriate response, 0 otherwise.
    pub label: u8,
    pub dialogue: TokenizedDialogue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseTriple {
    pub context: Vec<Utterance>,
    pub pos_response: Utterance,
    pub neg_response: Utterance,
    /// Ground-truth false-negative marker. Only synthetic corpora set it.
    pub noise_flag: Option<bool>,
}

impl PairwiseTriple {
    pub fn positive(&self) -> TokenizedDialogue {
        TokenizedDialogue::new(self.context.clone(), self.pos_response.clone())
    }

    pub fn negative(&self) -> TokenizedDialogue {
        TokenizedDialogue::new(self.context.clone(), self.neg_response.clone())
    }
}

/// A judged test context with its candidate responses and human labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestGroup {
    pub context: Vec<Utterance>,
    pub candidates: Vec<(Utterance, u8)>,
}

impl TestGroup {
    pub fn labels(&self) -> impl Iterator<Item = u8> + '_ {
        self.candidates.iter().map(|(_, y)| *y)
    }
}

/// Generation metadata recorded for synthetic corpora.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationMeta {
    pub seed: u64,
    pub false_negative_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<PairwiseTriple>,
    pub valid: Vec<PairwiseTriple>,
    pub test: Vec<TestGroup>,
    pub vocab_size: usize,
    pub n_candidates: usize,
    pub meta: Option<GenerationMeta>,
}

impl Corpus {
    /// Applies [`truncate`] to every dialogue in the corpus.
    pub fn truncated(&self, max_turns: usize, max_tokens: usize) -> Corpus {
        let ctx = |c: &[Utterance]| truncate_context(c, max_turns, max_tokens);
        let resp = |r: &[TokenId]| r[..r.len().min(max_tokens)].to_vec();
        let triples = |ts: &[PairwiseTriple]| {
            ts.iter()
                .map(|t| PairwiseTriple {
                    context: ctx(&t.context),
                    pos_response: resp(&t.pos_response),
                    neg_response: resp(&t.neg_response),
                    noise_flag: t.noise_flag,
                })
                .collect()
        };
        Corpus {
            train: triples(&self.train),
            valid: triples(&self.valid),
            test: self
                .test
                .iter()
                .map(|g| TestGroup {
                    context: ctx(&g.context),
                    candidates: g.candidates.iter().map(|(r, y)| (resp(r), *y)).collect(),
                })
                .collect(),
            vocab_size: self.vocab_size,
            n_candidates: self.n_candidates,
            meta: self.meta,
        }
    }

    /// Fraction of training triples whose negative is a false negative, if known.
    pub fn realized_noise_fraction(&self) -> Option<f64> {
        if self.train.is_empty() {
            return None;
        }
        let mut noisy = 0usize;
        for t in &self.train {
            noisy += usize::from(t.noise_flag?);
        }
        Some(noisy as f64 / self.train.len() as f64)
    }
}

/// Expands each triple into `(1, c, r+)` followed by `(0, c, r-)`.
pub fn to_pointwise(triples: &[PairwiseTriple]) -> Vec<PointwiseExample> {
    let mut out = Vec::with_capacity(2 * triples.len());
    for t in triples {
        out.push(PointwiseExample {
            label: 1,
            dialogue: t.positive(),
        });
        out.push(PointwiseExample {
            label: 0,
            dialogue: t.negative(),
        });
    }
    out
}

fn truncate_context(context: &[Utterance], max_turns: usize, max_tokens: usize) -> Vec<Utterance> {
    let start = context.len().saturating_sub(max_turns);
    context[start..]
        .iter()
        .map(|u| u[..u.len().min(max_tokens)].to_vec())
        .collect()
}

/// Keeps the most recent `max_turns` utterances and the first `max_tokens`
/// tokens of every utterance and of the response.
pub fn truncate(dialogue: &TokenizedDialogue, max_turns: usize, max_tokens: usize) -> TokenizedDialogue {
    TokenizedDialogue {
        context: truncate_context(&dialogue.context, max_turns, max_tokens),
        response: dialogue.response[..dialogue.response.len().min(max_tokens)].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple(seed: u32) -> PairwiseTriple {
        PairwiseTriple {
            context: vec![vec![seed, seed + 1], vec![seed + 2]],
            pos_response: vec![seed + 3],
            neg_response: vec![seed + 4, seed + 5],
            noise_flag: None,
        }
    }

    #[test]
    fn pointwise_of_empty_is_empty() {
        assert!(to_pointwise(&[]).is_empty());
    }

    #[test]
    fn pointwise_labels_alternate() {
        let one = to_pointwise(&[triple(0)]);
        assert_eq!(one.iter().map(|e| e.label).collect::<Vec<_>>(), [1, 0]);
        assert_eq!(one[0].dialogue.response, vec![3]);
        assert_eq!(one[1].dialogue.response, vec![4, 5]);

        let three = to_pointwise(&[triple(0), triple(10), triple(20)]);
        assert_eq!(three.len(), 6);
        assert_eq!(
            three.iter().map(|e| e.label).collect::<Vec<_>>(),
            [1, 0, 1, 0, 1, 0]
        );
        assert_eq!(three[2].dialogue.context, triple(10).context);
    }

    #[test]
    fn truncate_keeps_last_turns() {
        let context: Vec<Utterance> = (0..12).map(|i| vec![i]).collect();
        let d = TokenizedDialogue::new(context, vec![1]);
        let t = truncate(&d, DEFAULT_MAX_TURNS, DEFAULT_MAX_TOKENS);
        assert_eq!(t.context.len(), 10);
        assert_eq!(t.context[0], vec![2]);
        assert_eq!(t.context[9], vec![11]);
    }

    #[test]
    fn truncate_under_limit_is_identity() {
        let d = TokenizedDialogue::new(vec![vec![1, 2], vec![3], vec![4]], vec![5, 6]);
        assert_eq!(truncate(&d, 10, 50), d);
    }

    #[test]
    fn truncate_keeps_first_tokens() {
        let d = TokenizedDialogue::new(vec![vec![1]], (0..60).collect());
        let t = truncate(&d, 10, 50);
        assert_eq!(t.response, (0..50).collect::<Vec<_>>());
    }

    fn dialogue_strategy() -> impl Strategy<Value = TokenizedDialogue> {
        (
            prop::collection::vec(prop::collection::vec(0u32..100, 1..70), 1..15),
            prop::collection::vec(0u32..100, 1..70),
        )
            .prop_map(|(c, r)| TokenizedDialogue::new(c, r))
    }

    proptest! {
        #[test]
        fn truncate_is_idempotent(d in dialogue_strategy(), turns in 1usize..12, tokens in 1usize..60) {
            let once = truncate(&d, turns, tokens);
            prop_assert_eq!(truncate(&once, turns, tokens), once.clone());
            prop_assert!(once.context.len() <= turns && !once.context.is_empty());
            prop_assert!(once.context.iter().all(|u| !u.is_empty() && u.len() <= tokens));
        }

        #[test]
        fn pointwise_is_balanced(n in 0usize..20) {
            let ts: Vec<_> = (0..n as u32).map(triple).collect();
            let pw = to_pointwise(&ts);
            let pos = pw.iter().filter(|e| e.label == 1).count();
            prop_assert_eq!(pw.len(), 2 * n);
            prop_assert_eq!(pos, n);
        }
    }
}
