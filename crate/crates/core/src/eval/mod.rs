//! Ranking evaluation over judged candidate lists.
//!
//! Per-context definitions, with candidates ranked by descending score:
//!
//! * AP: mean over positive ranks `k` of `(#positives at rank ≤ k) / k`
//! * RR: `1 / rank of the first positive`
//! * P@1: label of the top-ranked candidate
//! * R_n@k: `(#positives in top k) / (#positives in the group)`
//!
//! Reported values are means over contexts. Contexts whose candidates are
//! all positive or all negative carry no ranking signal and are removed with
//! [`filter_degenerate`] before scoring.

mod stats;

pub use stats::{ema, paired_t_test, TTest};

use std::fmt;

use thiserror::Error;

use crate::corpus::{PairwiseTriple, TestGroup, Utterance};
use crate::matcher::{MatcherError, ModelState};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("context {context_id} has no positive candidate; filter degenerate groups first")]
    NoPositive { context_id: usize },
    #[error("context {0} has no candidates")]
    NoCandidates(usize),
    #[error("nothing to evaluate: {0}")]
    Empty(&'static str),
    #[error("paired samples must have equal length >= 2 (got {0} and {1})")]
    SampleSize(usize, usize),
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
}

/// Anything made of labeled candidates.
pub trait Judged {
    fn judgements(&self) -> Vec<u8>;
}

impl Judged for TestGroup {
    fn judgements(&self) -> Vec<u8> {
        self.labels().collect()
    }
}

impl Judged for RankedGroup {
    fn judgements(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

/// Drops groups whose labels are all equal. Returns the kept groups and the
/// number removed.
pub fn filter_degenerate<G: Judged>(groups: Vec<G>) -> (Vec<G>, usize) {
    let before = groups.len();
    let kept: Vec<G> = groups
        .into_iter()
        .filter(|g| {
            let labels = g.judgements();
            labels.iter().any(|&y| y == 1) && labels.iter().any(|&y| y == 0)
        })
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    /// Position of the candidate in the original list.
    pub candidate: usize,
    pub score: f64,
    pub label: u8,
}

/// Candidates of one context sorted by descending score; ties keep the lower
/// original index first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGroup {
    pub context_id: usize,
    pub entries: Vec<RankedEntry>,
}

impl RankedGroup {
    pub fn from_scores(context_id: usize, scores: &[f64], labels: &[u8]) -> Self {
        assert_eq!(scores.len(), labels.len(), "one label per score");
        let mut entries: Vec<RankedEntry> = scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(candidate, (&score, &label))| RankedEntry {
                candidate,
                score,
                label,
            })
            .collect();
        // Stable sort keeps the original order among equal scores.
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Self { context_id, entries }
    }

    pub fn permutation(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.candidate).collect()
    }
}

/// Scores every candidate with `model` and ranks them.
pub fn rank_group(
    model: &ModelState,
    context_id: usize,
    context: &[Utterance],
    candidates: &[(Utterance, u8)],
) -> Result<RankedGroup, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::NoCandidates(context_id));
    }
    let scores = candidates
        .iter()
        .map(|(r, _)| model.score_pair(context, r))
        .collect::<Result<Vec<f64>, _>>()?;
    let labels: Vec<u8> = candidates.iter().map(|(_, y)| *y).collect();
    Ok(RankedGroup::from_scores(context_id, &scores, &labels))
}

/// Metric values of a single context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMetrics {
    pub ap: f64,
    pub rr: f64,
    pub p_at_1: f64,
    pub r_at_1: f64,
    pub r_at_2: f64,
    pub r_at_5: f64,
}

impl GroupMetrics {
    pub const NAMES: [&'static str; 6] = ["MAP", "MRR", "P@1", "R10@1", "R10@2", "R10@5"];

    pub fn values(&self) -> [f64; 6] {
        [self.ap, self.rr, self.p_at_1, self.r_at_1, self.r_at_2, self.r_at_5]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            ap: v[0],
            rr: v[1],
            p_at_1: v[2],
            r_at_1: v[3],
            r_at_2: v[4],
            r_at_5: v[5],
        }
    }
}

pub fn group_metrics(group: &RankedGroup) -> Result<GroupMetrics, EvalError> {
    let total = group.entries.iter().filter(|e| e.label == 1).count();
    if total == 0 {
        return Err(EvalError::NoPositive {
            context_id: group.context_id,
        });
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    let mut rr = 0.0;
    for (i, e) in group.entries.iter().enumerate() {
        if e.label == 1 {
            hits += 1;
            let rank = (i + 1) as f64;
            ap += hits as f64 / rank;
            if rr == 0.0 {
                rr = 1.0 / rank;
            }
        }
    }
    let total = total as f64;
    let recall_at = |k: usize| {
        let top = &group.entries[..k.min(group.entries.len())];
        top.iter().filter(|e| e.label == 1).count() as f64 / total
    };
    Ok(GroupMetrics {
        ap: ap / total,
        rr,
        p_at_1: f64::from(group.entries[0].label),
        r_at_1: recall_at(1),
        r_at_2: recall_at(2),
        r_at_5: recall_at(5),
    })
}

pub fn per_group_metrics(groups: &[RankedGroup]) -> Result<Vec<GroupMetrics>, EvalError> {
    groups.iter().map(group_metrics).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub map: f64,
    pub mrr: f64,
    pub p_at_1: f64,
    pub r10_at_1: f64,
    pub r10_at_2: f64,
    pub r10_at_5: f64,
    pub n_contexts: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "run,strategy,MAP,MRR,P@1,R10@1,R10@2,R10@5,n_contexts";

    pub fn from_groups(per_group: &[GroupMetrics]) -> Result<Self, EvalError> {
        if per_group.is_empty() {
            return Err(EvalError::Empty("no groups to average"));
        }
        let n = per_group.len() as f64;
        let mut sums = [0.0; 6];
        for g in per_group {
            for (s, v) in sums.iter_mut().zip(g.values()) {
                *s += v;
            }
        }
        let m = sums.map(|s| s / n);
        Ok(Self {
            map: m[0],
            mrr: m[1],
            p_at_1: m[2],
            r10_at_1: m[3],
            r10_at_2: m[4],
            r10_at_5: m[5],
            n_contexts: per_group.len(),
        })
    }

    pub fn csv_row(&self, run: &str, strategy: &str) -> String {
        format!(
            "{run},{strategy},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.map, self.mrr, self.p_at_1, self.r10_at_1, self.r10_at_2, self.r10_at_5, self.n_contexts
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MAP {:.4}  MRR {:.4}  P@1 {:.4}  R10@1 {:.4}  R10@2 {:.4}  R10@5 {:.4}  ({} contexts)",
            self.map, self.mrr, self.p_at_1, self.r10_at_1, self.r10_at_2, self.r10_at_5, self.n_contexts
        )
    }
}

pub fn compute_metrics(groups: &[RankedGroup]) -> Result<MetricsReport, EvalError> {
    MetricsReport::from_groups(&per_group_metrics(groups)?)
}

/// Result of evaluating one model on a judged test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub per_group: Vec<GroupMetrics>,
    pub removed: usize,
}

/// Filters degenerate contexts, ranks every remaining context and averages.
pub fn evaluate_test_set(model: &ModelState, test: &[TestGroup]) -> Result<Evaluation, EvalError> {
    let (kept, removed) = filter_degenerate(test.to_vec());
    let ranked = kept
        .iter()
        .enumerate()
        .map(|(i, g)| rank_group(model, i, &g.context, &g.candidates))
        .collect::<Result<Vec<_>, _>>()?;
    let per_group = per_group_metrics(&ranked)?;
    Ok(Evaluation {
        report: MetricsReport::from_groups(&per_group)?,
        per_group,
        removed,
    })
}

/// P@1 over validation triples framed as two-candidate rankings. A tie counts
/// as a miss, so a constant scorer gets 0 rather than 1.
pub fn pairwise_p_at_1(model: &ModelState, triples: &[PairwiseTriple]) -> Result<f64, EvalError> {
    if triples.is_empty() {
        return Err(EvalError::Empty("validation set is empty"));
    }
    let mut hits = 0usize;
    for t in triples {
        let sp = model.score_pair(&t.context, &t.pos_response)?;
        let sn = model.score_pair(&t.context, &t.neg_response)?;
        hits += usize::from(sp > sn);
    }
    Ok(hits as f64 / triples.len() as f64)
}
