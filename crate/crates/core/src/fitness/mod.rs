//! Fitness evaluation `f(θ(λ))` with a quantized-key cache.
//!
//! Every evaluator scores *merged parameters*; coefficients are first pushed
//! through an [`ExpertPool`]. The quadratic landscape uses the identity pool
//! (zero base, `τᵢ = eᵢ`) so that after a basis shift the same objective is
//! still measured in the original coefficient space.

mod toy;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::{CoefficientVector, ExpertPool, ParameterVector};

pub use toy::{Dataset, LinearClassifier, ToyMerge, ToyMergeSpec};

/// Serializable description of an evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    Quadratic { lambda_star: Vec<f64> },
    ToyMerge { spec: ToyMergeSpec, seed: u64 },
}

impl EvaluatorSpec {
    pub fn num_experts(&self) -> usize {
        match self {
            EvaluatorSpec::Quadratic { lambda_star } => lambda_star.len(),
            EvaluatorSpec::ToyMerge { spec, .. } => spec.num_experts,
        }
    }

    pub fn build(&self) -> Result<Evaluator> {
        match self {
            EvaluatorSpec::Quadratic { lambda_star } => {
                make_quadratic(&CoefficientVector::new(lambda_star.clone())?)
            }
            EvaluatorSpec::ToyMerge { spec, seed } => make_toy_merge(spec, *seed),
        }
    }
}

#[derive(Debug, Clone)]
enum Objective {
    Quadratic { target: Vec<f64> },
    ToyMerge(Box<ToyMerge>),
}

/// An immutable fitness function together with its initial expert pool.
#[derive(Debug, Clone)]
pub struct Evaluator {
    spec: EvaluatorSpec,
    objective: Objective,
    pool: ExpertPool,
}

/// `f(λ) = −‖λ − λ*‖²`, maximum 0 at `λ*`.
pub fn make_quadratic(lambda_star: &CoefficientVector) -> Result<Evaluator> {
    if lambda_star.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("lambda_star"));
    }
    Ok(Evaluator {
        spec: EvaluatorSpec::Quadratic {
            lambda_star: lambda_star.as_slice().to_vec(),
        },
        objective: Objective::Quadratic {
            target: lambda_star.as_slice().to_vec(),
        },
        pool: ExpertPool::identity(lambda_star.len())?,
    })
}

/// Builds the toy classification problem and its expert pool; fitness is
/// validation accuracy of the merged classifier.
pub fn make_toy_merge(spec: &ToyMergeSpec, seed: u64) -> Result<Evaluator> {
    let toy = ToyMerge::build(spec, seed)?;
    let pool = toy.pool()?;
    Ok(Evaluator {
        spec: EvaluatorSpec::ToyMerge {
            spec: spec.clone(),
            seed,
        },
        objective: Objective::ToyMerge(Box::new(toy)),
        pool,
    })
}

impl Evaluator {
    pub fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    pub fn initial_pool(&self) -> &ExpertPool {
        &self.pool
    }

    pub fn num_experts(&self) -> usize {
        self.pool.num_experts()
    }

    pub fn toy(&self) -> Option<&ToyMerge> {
        match &self.objective {
            Objective::ToyMerge(t) => Some(t),
            Objective::Quadratic { .. } => None,
        }
    }

    /// Known optimum value, if the landscape has one.
    pub fn optimum(&self) -> Option<f64> {
        match self.objective {
            Objective::Quadratic { .. } => Some(0.0),
            Objective::ToyMerge(_) => None,
        }
    }

    /// Scores merged parameters directly, bypassing the cache.
    pub fn score_params(&self, params: &ParameterVector) -> f64 {
        match &self.objective {
            Objective::Quadratic { target } => -params
                .as_slice()
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
            Objective::ToyMerge(toy) => toy.score(params),
        }
    }

    fn check(&self, pool: &ExpertPool, lambda: &CoefficientVector) -> Result<()> {
        if lambda.len() != pool.num_experts() {
            return Err(Error::DimensionMismatch {
                expected: pool.num_experts(),
                found: lambda.len(),
            });
        }
        if lambda.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("evaluation coefficients"));
        }
        Ok(())
    }

    fn score_fresh(&self, pool: &ExpertPool, lambda: &CoefficientVector) -> Result<f64> {
        let score = self.score_params(&pool.merge(lambda)?);
        if !score.is_finite() {
            return Err(Error::NonFiniteInput("fitness"));
        }
        Ok(score)
    }

    /// Evaluates `λ` in the initial expert basis.
    pub fn evaluate(&self, cache: &FitnessCache, lambda: &CoefficientVector) -> Result<f64> {
        self.evaluate_in(&self.pool, cache, lambda)
    }

    /// Evaluates `λ` in an arbitrary (possibly shifted) basis.
    pub fn evaluate_in(
        &self,
        pool: &ExpertPool,
        cache: &FitnessCache,
        lambda: &CoefficientVector,
    ) -> Result<f64> {
        self.check(pool, lambda)?;
        let key = CacheKey::new(pool.round(), lambda);
        if let Some(score) = cache.lookup(&key) {
            return Ok(score);
        }
        let score = self.score_fresh(pool, lambda)?;
        cache.insert_miss(key, score);
        Ok(score)
    }

    pub fn batch_evaluate(
        &self,
        cache: &FitnessCache,
        lambdas: &[CoefficientVector],
    ) -> Result<Vec<f64>> {
        self.batch_evaluate_in(&self.pool, cache, lambdas)
    }

    /// Order-preserving batch evaluation. Distinct uncached keys are scored in
    /// parallel; duplicates inside the batch share one evaluation.
    pub fn batch_evaluate_in(
        &self,
        pool: &ExpertPool,
        cache: &FitnessCache,
        lambdas: &[CoefficientVector],
    ) -> Result<Vec<f64>> {
        for (index, l) in lambdas.iter().enumerate() {
            self.check(pool, l).map_err(|e| Error::Batch {
                index,
                source: Box::new(e),
            })?;
        }
        let keys: Vec<CacheKey> = lambdas
            .iter()
            .map(|l| CacheKey::new(pool.round(), l))
            .collect();

        let mut pending: Vec<usize> = Vec::new();
        let mut slot: HashMap<&CacheKey, usize> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if cache.peek(key).is_none() && !slot.contains_key(key) {
                slot.insert(key, pending.len());
                pending.push(i);
            }
        }
        let fresh: Vec<Result<f64>> = pending
            .par_iter()
            .map(|&i| self.score_fresh(pool, &lambdas[i]))
            .collect();
        let mut fresh_scores = Vec::with_capacity(fresh.len());
        for (&i, r) in pending.iter().zip(fresh) {
            let score = r.map_err(|e| Error::Batch {
                index: i,
                source: Box::new(e),
            })?;
            fresh_scores.push(score);
        }
        for (&i, &score) in pending.iter().zip(&fresh_scores) {
            cache.insert_miss(keys[i].clone(), score);
        }
        let mut out = Vec::with_capacity(lambdas.len());
        for (i, key) in keys.iter().enumerate() {
            match slot.get(key) {
                Some(&s) if pending[s] == i => out.push(fresh_scores[s]),
                _ => out.push(cache.lookup(key).expect("cached after insert")),
            }
        }
        Ok(out)
    }
}

const KEY_QUANTUM: f64 = 1e-9;

/// Cache key: basis round plus every coefficient rounded to 1e-9.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    round: usize,
    coords: Vec<i64>,
}

impl CacheKey {
    pub fn new(round: usize, lambda: &CoefficientVector) -> Self {
        Self {
            round,
            coords: lambda
                .as_slice()
                .iter()
                .map(|v| (v / KEY_QUANTUM).round() as i64)
                .collect(),
        }
    }
}

/// Memoizes fitness by quantized coefficients. A miss is one unit of
/// evaluation budget.
#[derive(Debug, Default)]
pub struct FitnessCache {
    map: Mutex<HashMap<CacheKey, f64>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FitnessCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn peek(&self, key: &CacheKey) -> Option<f64> {
        self.map.lock().expect("cache lock").get(key).copied()
    }

    fn lookup(&self, key: &CacheKey) -> Option<f64> {
        let hit = self.peek(key);
        if hit.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        hit
    }

    fn insert_miss(&self, key: CacheKey, score: f64) {
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.map.lock().expect("cache lock").insert(key, score);
    }

    /// Seeds the cache without touching the counters (used on resume).
    pub fn prime(&self, round: usize, lambda: &CoefficientVector, score: f64) {
        self.map
            .lock()
            .expect("cache lock")
            .insert(CacheKey::new(round, lambda), score);
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
