use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, GenerationMeta, PairwiseTriple, TestGroup, TokenId, Utterance};
use crate::rng::{self, Concern};

/// Parameters of the synthetic topic corpus.
///
/// The vocabulary is cut into `n_topics + 1` equal ranges: range 0 holds
/// background tokens shared by every topic, range `t + 1` belongs to topic
/// `t`. Each token of an utterance comes from the utterance's topic range with
/// probability `topic_purity` and from the background range otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub vocab_size: usize,
    pub n_topics: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test_contexts: usize,
    pub n_candidates: usize,
    /// Upper bound on context length; each context has 1..=this many turns.
    pub turns_per_context: usize,
    /// Upper bound on utterance length; lengths are drawn from `ceil(L/2)..=L`.
    pub tokens_per_utterance: usize,
    /// Probability that a sampled negative comes from the context's own topic.
    pub false_negative_rate: f64,
    pub topic_purity: f64,
    /// Probability that a test candidate is drawn from the context's topic.
    pub test_positive_rate: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1000,
            n_topics: 10,
            n_train: 5000,
            n_valid: 500,
            n_test_contexts: 2000,
            n_candidates: 10,
            turns_per_context: 3,
            tokens_per_utterance: 8,
            false_negative_rate: 0.3,
            topic_purity: 0.85,
            test_positive_rate: 0.2,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidConfig(m.to_string()));
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.false_negative_rate) {
            return bad("false_negative_rate must lie in [0, 1]");
        }
        if !in_unit(self.topic_purity) || !in_unit(self.test_positive_rate) {
            return bad("topic_purity and test_positive_rate must lie in [0, 1]");
        }
        if self.n_topics < 2 {
            return bad("at least two topics are required to draw cross-topic negatives");
        }
        if self.vocab_size / (self.n_topics + 1) < 2 {
            return bad("vocab_size too small for the requested number of disjoint topic ranges");
        }
        if self.vocab_size > TokenId::MAX as usize {
            return bad("vocab_size exceeds the token id range");
        }
        if self.n_train == 0
            || self.n_valid == 0
            || self.n_test_contexts == 0
            || self.turns_per_context == 0
            || self.tokens_per_utterance == 0
        {
            return bad("all counts must be positive");
        }
        if self.n_candidates < 2 {
            return bad("n_candidates must be at least 2");
        }
        if self.test_positive_rate == 0.0 || self.test_positive_rate == 1.0 {
            return bad("test_positive_rate must lie strictly inside (0, 1)");
        }
        Ok(())
    }

    fn range_width(&self) -> usize {
        self.vocab_size / (self.n_topics + 1)
    }

    /// Token range `[lo, hi)` owned by `topic`.
    pub fn topic_range(&self, topic: usize) -> (TokenId, TokenId) {
        let w = self.range_width();
        (((topic + 1) * w) as TokenId, ((topic + 2) * w) as TokenId)
    }

    pub fn background_range(&self) -> (TokenId, TokenId) {
        (0, self.range_width() as TokenId)
    }
}

struct Sampler<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn utterance(&mut self, topic: usize) -> Utterance {
        let max = self.cfg.tokens_per_utterance;
        let len = self.rng.gen_range(max.div_ceil(2)..=max);
        let (tlo, thi) = self.cfg.topic_range(topic);
        let (blo, bhi) = self.cfg.background_range();
        (0..len)
            .map(|_| {
                if self.rng.gen_bool(self.cfg.topic_purity) {
                    self.rng.gen_range(tlo..thi)
                } else {
                    self.rng.gen_range(blo..bhi)
                }
            })
            .collect()
    }

    fn context(&mut self, topic: usize) -> Vec<Utterance> {
        let turns = self.rng.gen_range(1..=self.cfg.turns_per_context);
        (0..turns).map(|_| self.utterance(topic)).collect()
    }

    fn topic(&mut self) -> usize {
        self.rng.gen_range(0..self.cfg.n_topics)
    }

    fn other_topic(&mut self, topic: usize) -> usize {
        let t = self.rng.gen_range(0..self.cfg.n_topics - 1);
        if t >= topic {
            t + 1
        } else {
            t
        }
    }

    fn triple(&mut self) -> PairwiseTriple {
        let topic = self.topic();
        let context = self.context(topic);
        let pos_response = self.utterance(topic);
        let noisy = self.rng.gen_bool(self.cfg.false_negative_rate);
        let neg_topic = if noisy { topic } else { self.other_topic(topic) };
        let mut neg_response = self.utterance(neg_topic);
        while neg_response == pos_response {
            neg_response = self.utterance(neg_topic);
        }
        PairwiseTriple {
            context,
            pos_response,
            neg_response,
            noise_flag: Some(noisy),
        }
    }

    fn test_group(&mut self) -> TestGroup {
        let topic = self.topic();
        let context = self.context(topic);
        loop {
            let candidates: Vec<(Utterance, u8)> = (0..self.cfg.n_candidates)
                .map(|_| {
                    if self.rng.gen_bool(self.cfg.test_positive_rate) {
                        (self.utterance(topic), 1)
                    } else {
                        let other = self.other_topic(topic);
                        (self.utterance(other), 0)
                    }
                })
                .collect();
            let positives = candidates.iter().filter(|(_, y)| *y == 1).count();
            if positives >= 1 && positives < candidates.len() {
                return TestGroup {
                    context,
                    candidates,
                };
            }
        }
    }
}

/// Generates a synthetic corpus with a controlled false-negative rate.
///
/// Train, validation and test splits each draw from their own seeded stream,
/// so the test set does not change when only `n_train` changes.
pub fn generate_synthetic_corpus(cfg: &GenConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let sampler = |split: u64| Sampler {
        cfg,
        rng: rng::stream(cfg.seed, Concern::Generate, split),
    };

    let mut s = sampler(0);
    let train = (0..cfg.n_train).map(|_| s.triple()).collect();
    let mut s = sampler(1);
    let valid = (0..cfg.n_valid).map(|_| s.triple()).collect();
    let mut s = sampler(2);
    let test = (0..cfg.n_test_contexts).map(|_| s.test_group()).collect();

    Ok(Corpus {
        train,
        valid,
        test,
        vocab_size: cfg.vocab_size,
        n_candidates: cfg.n_candidates,
        meta: Some(GenerationMeta {
            seed: cfg.seed,
            false_negative_rate: cfg.false_negative_rate,
        }),
    })
}
