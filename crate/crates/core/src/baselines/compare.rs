use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stats::{mean_std, welch, WelchOutcome};
use super::{mutation_ea, random_search, simple_pso, PsoParams};
use crate::archive::fmt_f64;
use crate::error::{Error, Result};
use crate::evolution::{run, RunConfig};
use crate::fitness::Evaluator;
use crate::rng::{stream, Stream};

pub const EVOGM: &str = "evogm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    RandomSearch {
        low: f64,
        high: f64,
        budget: Option<usize>,
    },
    MutationEa {
        pop: usize,
        sigma: f64,
        budget: Option<usize>,
    },
    Pso {
        #[serde(flatten)]
        params: PsoParams,
        budget: Option<usize>,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::RandomSearch { .. } => "random_search",
            Method::MutationEa { .. } => "mutation_ea",
            Method::Pso { .. } => "pso",
        }
    }

    fn budget(&self) -> Option<usize> {
        match self {
            Method::RandomSearch { budget, .. }
            | Method::MutationEa { budget, .. }
            | Method::Pso { budget, .. } => *budget,
        }
    }

    /// Runs the baseline for one seed and returns `(final_best, evals_used)`.
    pub fn run(&self, evaluator: &Evaluator, budget: usize, seed: u64) -> Result<(f64, usize)> {
        let mut rng = stream(seed, Stream::Baseline);
        let trace = match self {
            Method::RandomSearch { low, high, .. } => {
                random_search(evaluator, budget, (*low, *high), &mut rng)?
            }
            Method::MutationEa { pop, sigma, .. } => {
                mutation_ea(evaluator, budget, *pop, *sigma, &mut rng)?
            }
            Method::Pso { params, .. } => simple_pso(evaluator, budget, *params, &mut rng)?,
        };
        Ok((trace.final_best(), trace.evals_used))
    }
}

/// An EvoGM configuration template (its seed is replaced per run), the
/// baselines to compare against and the seeds shared by every method.
#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub run: RunConfig,
    pub baselines: Vec<Method>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: String,
    pub seed: u64,
    pub final_best: f64,
    pub evals_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub mean: f64,
    pub std: f64,
    /// `None` for EvoGM itself.
    pub versus_evogm: Option<WelchOutcome>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub budget: usize,
    pub runs: Vec<MethodRun>,
    pub summary: Vec<SummaryRow>,
}

impl CompareSpec {
    /// Fails if fewer than two methods or seeds are given, or if any baseline
    /// pins a budget that differs from EvoGM's.
    pub fn validate(&self) -> Result<usize> {
        self.run.validate()?;
        if self.baselines.is_empty() {
            return Err(Error::InvalidConfig(
                "comparison needs at least one baseline".into(),
            ));
        }
        if self.seeds.len() < 2 {
            return Err(Error::InsufficientSeeds {
                needed: 2,
                got: self.seeds.len(),
            });
        }
        let budget = self.run.budget();
        for m in &self.baselines {
            if let Some(b) = m.budget() {
                if b != budget {
                    return Err(Error::InvalidConfig(format!(
                        "budget mismatch: {} requests {b} evaluations, evogm uses {budget}",
                        m.name()
                    )));
                }
            }
        }
        Ok(budget)
    }
}

/// Runs EvoGM and every baseline over all seeds at the same evaluation budget
/// and tests each baseline against EvoGM.
pub fn compare(spec: &CompareSpec, evaluator: Arc<Evaluator>) -> Result<Comparison> {
    let budget = spec.validate()?;
    let mut runs = Vec::new();
    for &seed in &spec.seeds {
        let mut cfg = spec.run.clone();
        cfg.master_seed = seed;
        let res = run(&cfg, evaluator.clone())?;
        runs.push(MethodRun {
            method: EVOGM.into(),
            seed,
            final_best: res.best.fitness,
            evals_used: res.evaluations,
        });
    }
    for m in &spec.baselines {
        for &seed in &spec.seeds {
            let (final_best, evals_used) = m.run(&evaluator, budget, seed)?;
            runs.push(MethodRun {
                method: m.name().into(),
                seed,
                final_best,
                evals_used,
            });
        }
    }
    let summary = summarize(&runs);
    Ok(Comparison {
        budget,
        runs,
        summary,
    })
}

/// Per-method mean/std and Welch tests against EvoGM, in first-seen order.
pub fn summarize(runs: &[MethodRun]) -> Vec<SummaryRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in runs {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let scores = |m: &str| -> Vec<f64> {
        runs.iter()
            .filter(|r| r.method == m)
            .map(|r| r.final_best)
            .collect()
    };
    let reference = scores(EVOGM);
    methods
        .into_iter()
        .map(|m| {
            let s = scores(m);
            let (mean, std) = mean_std(&s);
            let versus_evogm =
                (m != EVOGM && reference.len() >= 2 && s.len() >= 2).then(|| welch(&s, &reference));
            SummaryRow {
                method: m.to_string(),
                mean,
                std,
                versus_evogm,
            }
        })
        .collect()
}

impl Comparison {
    /// `method,seed,final_best,evals_used`
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("method,seed,final_best,evals_used\n");
        for r in &self.runs {
            writeln!(
                s,
                "{},{},{},{}",
                r.method,
                r.seed,
                fmt_f64(r.final_best),
                r.evals_used
            )
            .expect("string write");
        }
        s
    }

    /// `method,mean,std,p_vs_evogm`; the p column is empty for EvoGM itself
    /// and `n/a` when the test is undefined.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,mean,std,p_vs_evogm\n");
        for r in &self.summary {
            let p = match r.versus_evogm {
                None => String::new(),
                Some(WelchOutcome::Identical) => "n/a".into(),
                Some(w) => fmt_f64(w.p_value()),
            };
            writeln!(
                s,
                "{},{},{},{}",
                r.method,
                fmt_f64(r.mean),
                fmt_f64(r.std),
                p
            )
            .expect("string write");
        }
        s
    }
}
