//! Co-teaching for context–response matching models trained on noisy data.
//!
//! Two peer matchers are trained together. Every iteration the batch is split
//! in half, each peer builds a learning protocol (instances plus loss) for the
//! other from its half, and both peers are updated on the protocol they
//! received. Three teaching strategies are provided: dynamic margins, dynamic
//! instance weighting and a small-loss data curriculum.
//!
//! Modules:
//!
//! * [`corpus`]: dialogue data model, synthetic noisy corpora, corpus files
//! * [`matcher`]: reference matching models with analytic gradients
//! * [`losses`]: cross-entropy, weighted cross-entropy, margin hinge
//! * [`strategies`]: the three teaching strategies
//! * [`engine`]: pre-training, the co-teaching loop, Adam
//! * [`eval`]: ranking metrics, significance tests, curve smoothing
//! * [`cli`]: the `coteach` command-line pipeline

pub mod cli;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod losses;
pub mod matcher;
pub mod rng;
pub mod strategies;
