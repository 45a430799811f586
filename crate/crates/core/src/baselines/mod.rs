//! Equal-budget reference searchers: uniform random search, a Gaussian
//! mutation EA and a global-best particle swarm, plus the multi-seed
//! comparison harness.
//!
//! Every method spends exactly `budget` evaluation requests. Requests are what
//! the loop counts; cache misses are reported separately in `evals_used` and
//! equal the request count unless a method proposes an exact repeat.

mod compare;
mod stats;

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::fmt_f64;
use crate::error::{Error, Result};
use crate::evolution::init_population;
use crate::fitness::{Evaluator, FitnessCache};
use crate::merge::CoefficientVector;

pub use compare::{
    compare, summarize, CompareSpec, Comparison, Method, MethodRun, SummaryRow, EVOGM,
};
pub use stats::{mean_std, welch, WelchOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub eval_index: usize,
    pub lambda: CoefficientVector,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineTrace {
    pub method: String,
    pub entries: Vec<TraceEntry>,
    pub best_so_far: Vec<f64>,
    /// Cache misses.
    pub evals_used: usize,
}

impl BaselineTrace {
    fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            entries: Vec::new(),
            best_so_far: Vec::new(),
            evals_used: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&TraceEntry> {
        let mut best: Option<&TraceEntry> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.fitness > b.fitness) {
                best = Some(e);
            }
        }
        best
    }

    pub fn final_best(&self) -> f64 {
        self.best_so_far
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn push(&mut self, lambda: CoefficientVector, fitness: f64) {
        let prev = self.final_best();
        self.entries.push(TraceEntry {
            eval_index: self.entries.len() + 1,
            lambda,
            fitness,
        });
        self.best_so_far.push(prev.max(fitness));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eval_index,fitness,best_so_far\n");
        for (e, b) in self.entries.iter().zip(&self.best_so_far) {
            s.push_str(&format!(
                "{},{},{}\n",
                e.eval_index,
                fmt_f64(e.fitness),
                fmt_f64(*b)
            ));
        }
        s
    }
}

/// Evaluates up to the remaining budget and appends to the trace.
fn spend(
    evaluator: &Evaluator,
    cache: &FitnessCache,
    trace: &mut BaselineTrace,
    budget: usize,
    lambdas: Vec<CoefficientVector>,
) -> Result<Vec<f64>> {
    let room = budget.saturating_sub(trace.len());
    let lambdas: Vec<CoefficientVector> = lambdas.into_iter().take(room).collect();
    let before = cache.misses();
    let scores = evaluator.batch_evaluate(cache, &lambdas)?;
    trace.evals_used += cache.misses() - before;
    for (l, f) in lambdas.into_iter().zip(&scores) {
        trace.push(l, *f);
    }
    Ok(scores)
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidConfig("budget must be >= 1".into()));
    }
    Ok(())
}

/// `budget` i.i.d. uniform samples over `bounds` in every coordinate.
pub fn random_search(
    evaluator: &Evaluator,
    budget: usize,
    bounds: (f64, f64),
    rng: &mut impl rand::Rng,
) -> Result<BaselineTrace> {
    check_budget(budget)?;
    let (lo, hi) = bounds;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidConfig(format!("empty bounds [{lo}, {hi}]")));
    }
    let n = evaluator.num_experts();
    let cache = FitnessCache::new();
    let mut trace = BaselineTrace::new("random_search");
    let lambdas = (0..budget)
        .map(|_| {
            CoefficientVector::from_vec_unchecked(
                (0..n).map(|_| rng.random_range(lo..hi)).collect(),
            )
        })
        .collect();
    spend(evaluator, &cache, &mut trace, budget, lambdas)?;
    Ok(trace)
}

/// Default EA mutation scale: a tenth of the `[−1, 1]` box width.
pub const DEFAULT_EA_SIGMA: f64 = 0.2;

/// `(pop, pop)`-truncation EA seeded with the hybrid initial population. Each
/// survivor spawns one Gaussian child per generation; the best `pop` of
/// parents and children survive (ties keep parents).
pub fn mutation_ea(
    evaluator: &Evaluator,
    budget: usize,
    pop: usize,
    sigma: f64,
    rng: &mut impl rand::Rng,
) -> Result<BaselineTrace> {
    check_budget(budget)?;
    if pop < 2 {
        return Err(Error::InvalidConfig("EA population must be >= 2".into()));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidConfig("EA sigma must be > 0".into()));
    }
    let n = evaluator.num_experts();
    let cache = FitnessCache::new();
    let mut trace = BaselineTrace::new("mutation_ea");
    let init: Vec<CoefficientVector> = init_population(n, pop, rng)?
        .into_iter()
        .map(|(l, _)| l)
        .collect();
    let scores = spend(evaluator, &cache, &mut trace, budget, init.clone())?;
    let mut survivors: Vec<(CoefficientVector, f64)> = init.into_iter().zip(scores).collect();
    while trace.len() < budget {
        let children: Vec<CoefficientVector> = survivors
            .iter()
            .map(|(p, _)| {
                CoefficientVector::from_vec_unchecked(
                    p.as_slice()
                        .iter()
                        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                )
            })
            .collect();
        let scores = spend(evaluator, &cache, &mut trace, budget, children.clone())?;
        survivors.extend(children.into_iter().zip(scores));
        // stable sort keeps parents ahead of equally fit children
        survivors.sort_by(|a, b| b.1.total_cmp(&a.1));
        survivors.truncate(pop);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoParams {
    pub swarm: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            swarm: 10,
            inertia: 0.72,
            c1: 1.49,
            c2: 1.49,
        }
    }
}

const PSO_BOUND: f64 = 1.0;

/// Canonical global-best PSO with positions clamped to `[−1, 1]ⁿ`. Particles
/// start at the hybrid initial population with zero velocity and move
/// synchronously.
pub fn simple_pso(
    evaluator: &Evaluator,
    budget: usize,
    params: PsoParams,
    rng: &mut impl rand::Rng,
) -> Result<BaselineTrace> {
    check_budget(budget)?;
    if params.swarm < 2 {
        return Err(Error::InvalidConfig("swarm must be >= 2".into()));
    }
    let n = evaluator.num_experts();
    let cache = FitnessCache::new();
    let mut trace = BaselineTrace::new("pso");
    let mut pos: Vec<Vec<f64>> = init_population(n, params.swarm, rng)?
        .into_iter()
        .map(|(l, _)| l.into_inner())
        .collect();
    let mut vel = vec![vec![0.0; n]; params.swarm];
    let as_cv = |x: &[f64]| CoefficientVector::from_vec_unchecked(x.to_vec());

    let scores = spend(
        evaluator,
        &cache,
        &mut trace,
        budget,
        pos.iter().map(|x| as_cv(x)).collect(),
    )?;
    let mut pbest: Vec<(Vec<f64>, f64)> = pos.iter().cloned().zip(scores).collect();
    let mut gbest = pbest
        .iter()
        .fold(None::<&(Vec<f64>, f64)>, |b, p| match b {
            Some(b) if b.1 >= p.1 => Some(b),
            _ => Some(p),
        })
        .cloned()
        .expect("non-empty swarm");

    while trace.len() < budget {
        for i in 0..params.swarm {
            for d in 0..n {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                vel[i][d] = params.inertia * vel[i][d]
                    + params.c1 * r1 * (pbest[i].0[d] - pos[i][d])
                    + params.c2 * r2 * (gbest.0[d] - pos[i][d]);
                pos[i][d] = (pos[i][d] + vel[i][d]).clamp(-PSO_BOUND, PSO_BOUND);
            }
        }
        let scores = spend(
            evaluator,
            &cache,
            &mut trace,
            budget,
            pos.iter().map(|x| as_cv(x)).collect(),
        )?;
        for (i, f) in scores.into_iter().enumerate() {
            if f > pbest[i].1 {
                pbest[i] = (pos[i].clone(), f);
            }
            if f > gbest.1 {
                gbest = (pos[i].clone(), f);
            }
        }
    }
    Ok(trace)
}
