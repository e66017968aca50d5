use std::collections::HashSet;

use coteach::corpus::{generate_synthetic_corpus, Corpus, GenConfig};
use coteach::engine::{
    coteach_step, coteach_train, pretrain, select_model, split_batch, Peer, Peers, TeachingStrategy, TrainConfig,
    TrainError,
};
use coteach::matcher::{init_params, MatcherKind, MatcherSpec, ModelState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(seed: u64, n_train: usize, rho: f64) -> Corpus {
    generate_synthetic_corpus(&GenConfig {
        vocab_size: 200,
        n_train,
        n_valid: 100,
        n_test_contexts: 20,
        false_negative_rate: rho,
        seed,
        ..GenConfig::default()
    })
    .unwrap()
}

fn bilinear(vocab: usize, seed: u64) -> ModelState {
    init_params(&MatcherSpec::new(MatcherKind::MeanEmbeddingBilinear, vocab), seed).unwrap()
}

#[test]
fn split_is_a_disjoint_equal_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in (2..=200).step_by(2).cycle().take(1000) {
        let batch: Vec<usize> = (0..n).collect();
        let (a, b) = split_batch(&batch, &mut rng).unwrap();
        assert_eq!(a.len(), n / 2);
        assert_eq!(b.len(), n / 2);
        let sa: HashSet<_> = a.iter().collect();
        let sb: HashSet<_> = b.iter().collect();
        assert!(sa.is_disjoint(&sb));
        assert_eq!(sa.len() + sb.len(), n);
    }
    let (a, b) = split_batch(&(0..200).collect::<Vec<_>>(), &mut rng).unwrap();
    assert_eq!((a.len(), b.len()), (100, 100));
    let (a, b) = split_batch(&[7, 9], &mut rng).unwrap();
    assert_eq!(a.len() + b.len(), 2);
    assert!(matches!(split_batch(&[1, 2, 3], &mut rng), Err(TrainError::OddBatch(3))));
    assert!(matches!(split_batch::<u8, _>(&[], &mut rng), Err(TrainError::OddBatch(0))));
}

#[test]
fn zero_learning_rate_leaves_peers_unchanged_but_reports_losses() {
    let c = corpus(1, 40, 0.3);
    for strategy in TeachingStrategy::ALL {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 20,
            ..TrainConfig::for_strategy(strategy)
        };
        let a = bilinear(200, 1);
        let b = bilinear(200, 2);
        let mut peers = Peers::new(a.clone(), b.clone(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let losses = coteach_step(&mut peers, &c.train[..20], &cfg, &mut rng).unwrap();
        assert_eq!(peers.a, a);
        assert_eq!(peers.b, b);
        assert!(losses.loss_a.is_finite() && losses.loss_b.is_finite());
        if strategy != TeachingStrategy::Margin {
            assert!(losses.loss_a > 0.0 && losses.loss_b > 0.0);
        }
    }
}

#[test]
fn full_curriculum_equals_plain_cross_entropy() {
    let c = corpus(2, 200, 0.3);
    let a = bilinear(200, 1);
    let b = bilinear(200, 2);
    let base = TrainConfig {
        batch_size: 20,
        epochs: 1,
        eval_every: 5,
        ..TrainConfig::default()
    };
    let curriculum = TrainConfig {
        strategy: TeachingStrategy::Curriculum,
        delta: Some(1.0),
        ..base.clone()
    };
    let x = coteach_train(&a, &b, &c, &base, None).unwrap();
    let y = coteach_train(&a, &b, &c, &curriculum, None).unwrap();
    assert_eq!(x.a, y.a);
    assert_eq!(x.b, y.b);
    assert_eq!(x.history, y.history);
}

#[test]
fn single_batch_epoch_runs_one_iteration() {
    let c = corpus(3, 60, 0.3);
    let m = bilinear(200, 1);
    let cfg = TrainConfig {
        batch_size: 60,
        epochs: 1,
        ..TrainConfig::for_strategy(TeachingStrategy::Weighting)
    };
    let out = coteach_train(&m, &m, &c, &cfg, None).unwrap();
    assert_eq!(out.history.len(), 1);
    let too_big = TrainConfig { batch_size: 62, ..cfg };
    assert!(matches!(
        coteach_train(&m, &m, &c, &too_big, None),
        Err(TrainError::InvalidConfig(_))
    ));
}

#[test]
fn validation_and_checkpoints_every_eval_every_iterations() {
    let c = corpus(4, 230, 0.3);
    let m = bilinear(200, 1);
    let cfg = TrainConfig {
        batch_size: 20,
        epochs: 2,
        eval_every: 4,
        ..TrainConfig::for_strategy(TeachingStrategy::Margin)
    };
    let dir = tempfile::tempdir().unwrap();
    let out = coteach_train(&m, &m, &c, &cfg, Some(dir.path())).unwrap();
    // ⌊230 / 20⌋ = 11 iterations per epoch.
    assert_eq!(out.history.len(), 22);
    let evaluated: Vec<usize> = out.history.validation_curve().iter().map(|v| v.0).collect();
    assert_eq!(evaluated, vec![4, 8, 12, 16, 20]);
    for r in out.history.records() {
        assert_eq!(r.valid_p_at_1.is_some(), r.iter % 4 == 0);
        assert!(r.wall_ms.is_none());
    }
    for iter in [4, 8, 12, 16, 20, 22] {
        assert!(dir.path().join(format!("A_{iter}.ckpt")).exists(), "A_{iter}");
        assert!(dir.path().join(format!("B_{iter}.ckpt")).exists(), "B_{iter}");
    }
    assert!(!dir.path().join("A_2.ckpt").exists());
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(csv, out.history.to_csv());
}

#[test]
fn missing_hyperparameter_is_reported() {
    let c = corpus(5, 40, 0.3);
    let m = bilinear(200, 1);
    let cfg = TrainConfig {
        strategy: TeachingStrategy::Curriculum,
        delta: None,
        batch_size: 20,
        ..TrainConfig::default()
    };
    let err = coteach_train(&m, &m, &c, &cfg, None).unwrap_err();
    assert!(matches!(err, TrainError::MissingHyperparameter { name: "delta", .. }), "{err}");
}

#[test]
fn select_model_prefers_better_and_breaks_ties_to_a() {
    let c = corpus(6, 500, 0.0);
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let trained = pretrain(&MatcherSpec::new(MatcherKind::MeanEmbeddingBilinear, 200), &c, &cfg)
        .unwrap()
        .model;
    let untrained = bilinear(200, 9);
    let (peer, _, p) = select_model(&untrained, &trained, &c.valid).unwrap();
    assert_eq!(peer, Peer::B);
    assert!(p > 0.5);
    let (peer, _, _) = select_model(&trained, &untrained, &c.valid).unwrap();
    assert_eq!(peer, Peer::A);
    let (peer, _, _) = select_model(&trained, &trained.clone(), &c.valid).unwrap();
    assert_eq!(peer, Peer::A);
    assert!(matches!(
        select_model(&trained, &trained, &[]),
        Err(TrainError::EmptyValidationSet)
    ));
}

#[test]
fn baseline_peers_diverge_on_disjoint_halves() {
    let c = corpus(7, 200, 0.3);
    let m = bilinear(200, 1);
    let cfg = TrainConfig {
        batch_size: 20,
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = coteach_train(&m, &m, &c, &cfg, None).unwrap();
    assert_ne!(out.a.params(), out.b.params());
}

#[test]
fn pretraining_edge_cases() {
    let spec = MatcherSpec::new(MatcherKind::MeanEmbeddingBilinear, 1000);
    let clean = generate_synthetic_corpus(&GenConfig {
        false_negative_rate: 0.0,
        n_test_contexts: 10,
        ..GenConfig::default()
    })
    .unwrap();
    let none = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = pretrain(&spec, &clean, &none).unwrap();
    assert_eq!(out.model, init_params(&spec, none.seed).unwrap());
    assert_eq!(out.best_epoch, 0);

    let five = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = pretrain(&spec, &clean, &five).unwrap();
    assert!(out.valid_p_at_1 > 0.9, "clean valid P@1 {}", out.valid_p_at_1);
    assert_eq!(out.epochs.len(), 5);
    assert_eq!(pretrain(&spec, &clean, &five).unwrap().model, out.model);

    let wrong = TrainConfig::for_strategy(TeachingStrategy::Margin);
    assert!(matches!(pretrain(&spec, &clean, &wrong), Err(TrainError::InvalidConfig(_))));
    let empty = Corpus {
        train: vec![],
        ..clean
    };
    assert!(matches!(pretrain(&spec, &empty, &five), Err(TrainError::EmptyTrainingSet)));
}

#[test]
fn training_is_deterministic_in_seed() {
    let c = corpus(8, 200, 0.3);
    let a = bilinear(200, 1);
    let b = init_params(&MatcherSpec::new(MatcherKind::InteractionMlp, 200), 2).unwrap();
    let cfg = TrainConfig {
        batch_size: 20,
        epochs: 2,
        eval_every: 3,
        ..TrainConfig::for_strategy(TeachingStrategy::Curriculum)
    };
    let x = coteach_train(&a, &b, &c, &cfg, None).unwrap();
    let y = coteach_train(&a, &b, &c, &cfg, None).unwrap();
    assert_eq!(x.history.to_csv(), y.history.to_csv());
    assert_eq!(x.a, y.a);
    let other = coteach_train(&a, &b, &c, &TrainConfig { seed: 2, ..cfg }, None).unwrap();
    assert_ne!(other.a, x.a);
}

#[test]
fn mismatched_vocabularies_are_rejected() {
    let cfg = TrainConfig::default();
    assert!(matches!(
        Peers::new(bilinear(200, 1), bilinear(300, 1), &cfg),
        Err(TrainError::VocabMismatch(200, 300))
    ));
}
