//! The multi-round search driver: hybrid initialization, generative
//! iterations with top-P selection, and the basis shift between rounds.

mod driver;
pub mod report;

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::{Archive, EvalRecord, Scope, Source};
use crate::error::{Error, Result};
use crate::fitness::EvaluatorSpec;
use crate::generator::{default_hidden, TrainHyper, TrainMode};
use crate::merge::CoefficientVector;

pub use driver::{
    run, run_ablation, Checkpoint, Phase, RunResult, Search, SearchState, StepOutcome,
};

/// Which history the winner/loser split and the elite queries see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryScope {
    /// Only records of the current round (coefficients share one basis).
    Round,
    /// Every record ever evaluated.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub num_experts: usize,
    pub population: usize,
    pub rounds: usize,
    pub iters_per_round: usize,
    pub rho: f64,
    pub train: TrainHyper,
    pub train_mode: TrainMode,
    pub hidden: usize,
    pub jitter_sigma: f64,
    pub dup_tolerance: f64,
    pub warm_start: bool,
    pub history_scope: HistoryScope,
    pub master_seed: u64,
    pub evaluator: EvaluatorSpec,
}

impl RunConfig {
    /// Defaults: `P = 2N`, two rounds of three iterations, `ρ = 0.3`.
    pub fn new(evaluator: EvaluatorSpec, master_seed: u64) -> Self {
        let n = evaluator.num_experts();
        Self {
            num_experts: n,
            population: 2 * n,
            rounds: 2,
            iters_per_round: 3,
            rho: 0.3,
            train: TrainHyper::default(),
            train_mode: TrainMode::Dual,
            hidden: default_hidden(n),
            jitter_sigma: 0.05,
            dup_tolerance: 1e-6,
            warm_start: false,
            history_scope: HistoryScope::Round,
            master_seed,
            evaluator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_experts != self.evaluator.num_experts() {
            return bad(format!(
                "num_experts = {} but the evaluator has {} experts",
                self.num_experts,
                self.evaluator.num_experts()
            ));
        }
        if self.num_experts < 2 {
            return bad("num_experts must be >= 2".into());
        }
        if self.population < 2 {
            return bad("population must be >= 2".into());
        }
        if self.rounds < 1 || self.iters_per_round < 1 {
            return bad("rounds and iters_per_round must be >= 1".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        if !(self.jitter_sigma >= 0.0 && self.dup_tolerance >= 0.0) {
            return bad("jitter_sigma and dup_tolerance must be >= 0".into());
        }
        // the basis shift draws N elites from one round's records
        if self.rounds > 1 && self.population * (1 + self.iters_per_round) < self.num_experts {
            return bad("too few evaluations per round to select N elites".into());
        }
        self.train.validate()
    }

    /// Closed-form evaluation budget `R·(P + T·P)`.
    pub fn budget(&self) -> usize {
        self.rounds * (self.population + self.iters_per_round * self.population)
    }

    pub(crate) fn scope(&self, round: usize) -> Scope {
        match self.history_scope {
            HistoryScope::Round => Scope::Round(round),
            HistoryScope::Global => Scope::Global,
        }
    }
}

/// Ablation variants of the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    SingleGenerator,
    NoRounds,
    NoCycle,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::SingleGenerator,
        Variant::NoRounds,
        Variant::NoCycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SingleGenerator => "single_generator",
            Variant::NoRounds => "no_rounds",
            Variant::NoCycle => "no_cycle",
        }
    }

    /// The budget-matched configuration this variant runs with.
    pub fn apply(self, config: &RunConfig) -> RunConfig {
        let mut c = config.clone();
        match self {
            Variant::Full => {}
            Variant::SingleGenerator => {
                c.train.alpha_c = 0.0;
                c.train_mode = TrainMode::ForwardOnly;
            }
            Variant::NoRounds => {
                c.iters_per_round = c.rounds * c.iters_per_round + (c.rounds - 1);
                c.rounds = 1;
            }
            Variant::NoCycle => {
                c.train.alpha_c = 0.0;
                c.train_mode = TrainMode::Dual;
            }
        }
        c
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation variant {s:?}")))
    }
}

/// Hybrid population: the uniform average, then up to `p − 1` one-hot
/// vectors, then uniform samples from `[0, 1]ⁿ`.
pub fn init_population(
    n: usize,
    p: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<(CoefficientVector, Source)>> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be >= 1".into()));
    }
    if p < 2 {
        return Err(Error::InvalidDimension(format!(
            "population must be >= 2, got {p}"
        )));
    }
    let mut out = Vec::with_capacity(p);
    out.push((CoefficientVector::uniform_average(n), Source::InitAverage));
    for i in 0..n.min(p - 1) {
        out.push((CoefficientVector::one_hot(n, i), Source::InitOnehot));
    }
    while out.len() < p {
        let v = (0..n).map(|_| rng.random::<f64>()).collect();
        out.push((CoefficientVector::from_vec_unchecked(v), Source::InitRandom));
    }
    Ok(out)
}

/// The top-`p` records of `scope`, descending by fitness.
pub fn select_population(archive: &Archive, scope: Scope, p: usize) -> Result<Vec<EvalRecord>> {
    archive.top_k(p, scope)
}

const JITTER_ATTEMPTS: usize = 5;

/// Replaces candidates that sit within `tol` (L∞) of an archived or earlier
/// candidate by Gaussian-perturbed copies, retrying up to five times before
/// accepting the last value. Perturbed candidates are tagged [`Source::Jitter`].
pub fn dedup_jitter<'a>(
    candidates: Vec<CoefficientVector>,
    archived: impl IntoIterator<Item = &'a CoefficientVector>,
    sigma: f64,
    tol: f64,
    rng: &mut impl rand::Rng,
) -> Vec<(CoefficientVector, Source)> {
    let mut seen: Vec<CoefficientVector> = archived.into_iter().cloned().collect();
    let mut out = Vec::with_capacity(candidates.len());
    for mut cand in candidates {
        let clashes = |c: &CoefficientVector, seen: &[CoefficientVector]| {
            seen.iter().any(|s| s.linf_distance(c) <= tol)
        };
        let mut source = Source::Generated;
        let mut attempts = 0;
        while attempts < JITTER_ATTEMPTS && clashes(&cand, &seen) {
            source = Source::Jitter;
            let v = cand
                .as_slice()
                .iter()
                .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            cand = CoefficientVector::from_vec_unchecked(v);
            attempts += 1;
        }
        seen.push(cand.clone());
        out.push((cand, source));
    }
    out
}
