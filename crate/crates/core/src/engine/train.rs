use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{OptimizerState, RunHistory, IterationRecord, TeachingStrategy, TrainConfig, TrainError, UpdateOrder};
use crate::corpus::{to_pointwise, Corpus, PairwiseTriple};
use crate::eval::pairwise_p_at_1;
use crate::matcher::{init_params, loss_and_grad, save_checkpoint, MatcherSpec, ModelState};
use crate::rng::{self, Concern};
use crate::strategies::{curriculum_protocol, margin_protocol, plain_protocol, weighting_protocol, LearningProtocol};

/// Result of [`pretrain`].
#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Checkpoint with the best validation P@1 (the initial model included).
    pub model: ModelState,
    pub valid_p_at_1: f64,
    /// Epoch the returned checkpoint comes from; 0 means the initial model.
    pub best_epoch: usize,
    /// `(epoch, summed training loss, validation P@1)` per epoch.
    pub epochs: Vec<(usize, f64, f64)>,
}

/// Trains a single matcher with cross-entropy on the full training set.
///
/// Each epoch shuffles the triples, expands every batch into its pointwise
/// view and takes one optimizer step per batch. Validation P@1 is measured
/// after every epoch and the best checkpoint is returned.
pub fn pretrain(spec: &MatcherSpec, corpus: &Corpus, config: &TrainConfig) -> Result<PretrainOutcome, TrainError> {
    if config.strategy != TeachingStrategy::None {
        return Err(TrainError::InvalidConfig("pre-training uses strategy none".into()));
    }
    config.validate()?;
    if corpus.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if corpus.valid.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let mut model = init_params(spec, config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer, model.params().len());
    let mut best = (model.clone(), pairwise_p_at_1(&model, &corpus.valid)?, 0usize);
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..corpus.train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(config.seed, Concern::Shuffle, epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PairwiseTriple> = chunk.iter().map(|&i| corpus.train[i].clone()).collect();
            let protocol = plain_protocol(&to_pointwise(&batch));
            let (loss, grad) = loss_and_grad(&model, &protocol)?;
            epoch_loss += loss;
            opt.step(model.params_mut(), &grad, config.learning_rate, &config.adam)?;
        }
        let p1 = pairwise_p_at_1(&model, &corpus.valid)?;
        log.push((epoch, epoch_loss, p1));
        if p1 > best.1 {
            best = (model.clone(), p1, epoch);
        }
    }
    Ok(PretrainOutcome {
        model: best.0,
        valid_p_at_1: best.1,
        best_epoch: best.2,
        epochs: log,
    })
}

/// Randomly permutes `batch` and cuts it into two disjoint halves.
pub fn split_batch<T: Clone, R: Rng + ?Sized>(batch: &[T], rng: &mut R) -> Result<(Vec<T>, Vec<T>), TrainError> {
    if batch.is_empty() || batch.len() % 2 != 0 {
        return Err(TrainError::OddBatch(batch.len()));
    }
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    idx.shuffle(rng);
    let half = batch.len() / 2;
    let pick = |ids: &[usize]| ids.iter().map(|&i| batch[i].clone()).collect::<Vec<T>>();
    Ok((pick(&idx[..half]), pick(&idx[half..])))
}

/// The learning protocol `teacher` prepares for the peer that owns `sub_batch`.
pub fn build_protocol(
    config: &TrainConfig,
    teacher: &ModelState,
    sub_batch: &[PairwiseTriple],
) -> Result<LearningProtocol, TrainError> {
    let missing = |name| TrainError::MissingHyperparameter {
        strategy: config.strategy,
        name,
    };
    Ok(match config.strategy {
        TeachingStrategy::Margin => {
            margin_protocol(teacher, sub_batch, config.lambda.ok_or_else(|| missing("lambda"))?)?
        }
        TeachingStrategy::Weighting => weighting_protocol(teacher, &to_pointwise(sub_batch))?,
        TeachingStrategy::Curriculum => curriculum_protocol(
            teacher,
            &to_pointwise(sub_batch),
            config.delta.ok_or_else(|| missing("delta"))?,
        )?,
        TeachingStrategy::None => plain_protocol(&to_pointwise(sub_batch)),
    })
}

/// Two peers and their optimizer states.
#[derive(Debug, Clone, PartialEq)]
pub struct Peers {
    pub a: ModelState,
    pub b: ModelState,
    pub opt_a: OptimizerState,
    pub opt_b: OptimizerState,
}

impl Peers {
    pub fn new(a: ModelState, b: ModelState, config: &TrainConfig) -> Result<Self, TrainError> {
        if a.spec().vocab_size != b.spec().vocab_size {
            return Err(TrainError::VocabMismatch(a.spec().vocab_size, b.spec().vocab_size));
        }
        let opt_a = OptimizerState::new(config.optimizer, a.params().len());
        let opt_b = OptimizerState::new(config.optimizer, b.params().len());
        Ok(Self { a, b, opt_a, opt_b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss_a: f64,
    pub loss_b: f64,
}

/// One co-teaching iteration.
///
/// The batch is split into `D̄_A` and `D̄_B`. Model A, as it stands at step
/// entry, builds B's protocol from `D̄_B`; model B builds A's protocol from
/// `D̄_A`. Both gradients are taken before either model moves, so the order
/// of the two updates does not matter.
pub fn coteach_step<R: Rng + ?Sized>(
    peers: &mut Peers,
    batch: &[PairwiseTriple],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<StepLosses, TrainError> {
    let (sub_a, sub_b) = split_batch(batch, rng)?;
    let protocol_b = build_protocol(config, &peers.a, &sub_b)?;
    let protocol_a = build_protocol(config, &peers.b, &sub_a)?;
    let (loss_a, grad_a) = loss_and_grad(&peers.a, &protocol_a)?;
    let (loss_b, grad_b) = loss_and_grad(&peers.b, &protocol_b)?;

    let lr = config.learning_rate;
    let hp = config.adam;
    let update_a = |p: &mut Peers| p.opt_a.step(p.a.params_mut(), &grad_a, lr, &hp);
    let update_b = |p: &mut Peers| p.opt_b.step(p.b.params_mut(), &grad_b, lr, &hp);
    match config.update_order {
        UpdateOrder::AThenB => {
            update_a(peers)?;
            update_b(peers)?;
        }
        UpdateOrder::BThenA => {
            update_b(peers)?;
            update_a(peers)?;
        }
    }
    Ok(StepLosses { loss_a, loss_b })
}

#[derive(Debug, Clone)]
pub struct CoTeachOutcome {
    pub a: ModelState,
    pub b: ModelState,
    pub history: RunHistory,
}

fn write_checkpoints(dir: &Path, iter: usize, peers: &Peers) -> Result<(), TrainError> {
    save_checkpoint(&peers.a, &dir.join(format!("A_{iter}.ckpt")))?;
    save_checkpoint(&peers.b, &dir.join(format!("B_{iter}.ckpt")))?;
    Ok(())
}

/// Full co-teaching run over `config.epochs` epochs of `⌊N / batch⌋`
/// iterations each.
///
/// Every `eval_every` iterations both peers are scored on the validation set
/// and, when `checkpoint_dir` is given, written to `A_<iter>.ckpt` and
/// `B_<iter>.ckpt`. The final peers are always checkpointed, and
/// `history.csv` is written next to them.
pub fn coteach_train(
    init_a: &ModelState,
    init_b: &ModelState,
    corpus: &Corpus,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<CoTeachOutcome, TrainError> {
    config.validate()?;
    if corpus.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if corpus.valid.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let n_iters = corpus.train.len() / config.batch_size;
    if n_iters == 0 {
        return Err(TrainError::InvalidConfig(format!(
            "batch size {} exceeds the {} training triples",
            config.batch_size,
            corpus.train.len()
        )));
    }
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut peers = Peers::new(init_a.clone(), init_b.clone(), config)?;
    let mut history = RunHistory::new();
    let mut order: Vec<usize> = (0..corpus.train.len()).collect();
    let mut iter = 0usize;
    let mut last_checkpoint = None;
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(config.seed, Concern::Shuffle, epoch as u64));
        let mut split_rng = rng::stream(config.seed, Concern::Split, epoch as u64);
        for k in 0..n_iters {
            iter += 1;
            let batch: Vec<PairwiseTriple> = order[k * config.batch_size..(k + 1) * config.batch_size]
                .iter()
                .map(|&i| corpus.train[i].clone())
                .collect();
            let losses = coteach_step(&mut peers, &batch, config, &mut split_rng)?;
            let valid = if iter % config.eval_every == 0 {
                let pa = pairwise_p_at_1(&peers.a, &corpus.valid)?;
                let pb = pairwise_p_at_1(&peers.b, &corpus.valid)?;
                if let Some(dir) = checkpoint_dir {
                    write_checkpoints(dir, iter, &peers)?;
                    last_checkpoint = Some(iter);
                }
                Some((pa, pb))
            } else {
                None
            };
            history.push(IterationRecord {
                iter,
                loss_a: losses.loss_a,
                loss_b: losses.loss_b,
                valid_p_at_1: valid,
                wall_ms: config.record_wall_time.then(|| started.elapsed().as_millis() as u64),
            });
        }
    }

    if let Some(dir) = checkpoint_dir {
        if last_checkpoint != Some(iter) {
            write_checkpoints(dir, iter, &peers)?;
        }
        std::fs::write(dir.join("history.csv"), history.to_csv())?;
    }
    Ok(CoTeachOutcome {
        a: peers.a,
        b: peers.b,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Peer {
    A,
    B,
}

/// Picks the peer with the higher validation P@1; a tie goes to A.
pub fn select_model<'m>(
    a: &'m ModelState,
    b: &'m ModelState,
    valid: &[PairwiseTriple],
) -> Result<(Peer, &'m ModelState, f64), TrainError> {
    if valid.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let pa = pairwise_p_at_1(a, valid)?;
    let pb = pairwise_p_at_1(b, valid)?;
    Ok(if pb > pa { (Peer::B, b, pb) } else { (Peer::A, a, pa) })
}
