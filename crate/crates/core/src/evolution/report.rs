//! Convergence summaries computed from the archive alone, so every exported
//! number can be recomputed from `archive.jsonl`.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::archive::{fmt_f64, Archive, EvalRecord, Source};
use crate::fitness::CacheKey;

/// How many top records the `mean_top5*` columns average.
pub const TOP: usize = 5;

/// One row per `(round, iteration)` group, in archive order. Iteration 0 of a
/// round is its (re-)initialized population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    /// Distinct evaluations (cache misses) so far, initial populations included.
    pub eval_index: usize,
    /// Same count without initial-population evaluations.
    pub evals_excl_init: usize,
    pub round: usize,
    pub iteration: usize,
    /// Best fitness over the whole archive so far.
    pub best_so_far: f64,
    /// Mean of the best five fitnesses of the whole archive so far.
    pub mean_top5: f64,
    /// Mean of the best five fitnesses of the current round so far.
    pub mean_top5_round: f64,
    /// Mean of the best five fitnesses among this iteration's evaluations.
    pub mean_top5_iteration: f64,
}

pub fn is_init(source: Source) -> bool {
    matches!(
        source,
        Source::InitAverage | Source::InitOnehot | Source::InitRandom | Source::BasisElite
    )
}

/// Mean of the `TOP` largest values (or of all values if fewer).
pub fn mean_top(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| b.total_cmp(a));
    let k = v.len().min(TOP);
    v[..k].iter().sum::<f64>() / k as f64
}

pub fn convergence(archive: &Archive) -> Vec<ConvergenceRow> {
    let recs = archive.records();
    let mut rows = Vec::new();
    let mut keys = HashSet::new();
    let mut non_init = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut start = 0;
    while start < recs.len() {
        let (round, iteration) = (recs[start].round, recs[start].iteration);
        let mut end = start;
        while end < recs.len() && recs[end].round == round && recs[end].iteration == iteration {
            end += 1;
        }
        for r in &recs[start..end] {
            if keys.insert(CacheKey::new(r.round, &r.lambda)) && !is_init(r.source) {
                non_init += 1;
            }
            best = best.max(r.fitness);
        }
        let upto = &recs[..end];
        rows.push(ConvergenceRow {
            eval_index: keys.len(),
            evals_excl_init: non_init,
            round,
            iteration,
            best_so_far: best,
            mean_top5: mean_top(upto.iter().map(|r| r.fitness)),
            mean_top5_round: mean_top(upto.iter().filter(|r| r.round == round).map(|r| r.fitness)),
            mean_top5_iteration: mean_top(recs[start..end].iter().map(|r| r.fitness)),
        });
        start = end;
    }
    rows
}

pub const CONVERGENCE_HEADER: &str =
    "eval_index,evals_excl_init,round,iteration,best_so_far,mean_top5,mean_top5_round,mean_top5_iteration";

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from(CONVERGENCE_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.eval_index,
            r.evals_excl_init,
            r.round,
            r.iteration,
            fmt_f64(r.best_so_far),
            fmt_f64(r.mean_top5),
            fmt_f64(r.mean_top5_round),
            fmt_f64(r.mean_top5_iteration)
        )
        .expect("string write");
    }
    s
}

/// `best.json` body: `{lambda, fitness, round, iteration}`.
pub fn best_json(best: &EvalRecord) -> String {
    let lambda: Vec<String> = best.lambda.as_slice().iter().map(|v| fmt_f64(*v)).collect();
    format!(
        "{{\"lambda\":[{}],\"fitness\":{},\"round\":{},\"iteration\":{}}}\n",
        lambda.join(","),
        fmt_f64(best.fitness),
        best.round,
        best.iteration
    )
}
