//! Evolutionary generative merging.
//!
//! Searches merging coefficients `λ` for `θ(λ) = θ_pre + Σᵢ λᵢτᵢ` with a learned
//! proposal operator: a pair of small generator networks trained on
//! winner/loser pairs from the search history replaces random mutation, and
//! the best merged models of each round become the next round's expert basis.
//!
//! The crate is organised bottom-up:
//!
//! - [`merge`]: task vectors, merging and the basis shift
//! - [`fitness`]: evaluators (quadratic landscape, toy expert merging) and the cache
//! - [`archive`]: the search history with winner/loser splits
//! - [`generator`]: the dual generator networks and their trainer
//! - [`evolution`]: the multi-round driver, ablations and checkpointing
//! - [`baselines`]: equal-budget reference searchers and Welch comparisons

pub mod archive;
pub mod baselines;
pub mod error;
pub mod evolution;
pub mod fitness;
pub mod generator;
pub mod merge;
pub mod rng;

pub use archive::{Archive, EvalRecord, PairBatch, RecordMeta, Scope, Source, WinnerLoserSplit};
pub use error::{Error, Result};
pub use evolution::{run, run_ablation, RunConfig, RunResult, Search, Variant};
pub use fitness::{
    make_quadratic, make_toy_merge, Evaluator, EvaluatorSpec, FitnessCache, ToyMergeSpec,
};
pub use generator::{GeneratorPair, LossReport, LossTerms, TrainHyper, TrainMode};
pub use merge::{compute_task_vectors, CoefficientVector, ExpertPool, ParameterVector, TaskVector};
