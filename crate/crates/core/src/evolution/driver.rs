use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::report::{convergence, ConvergenceRow};
use super::{dedup_jitter, init_population, select_population, RunConfig, Variant};
use crate::archive::{Archive, EvalRecord, RecordMeta, Source};
use crate::error::{Error, Result};
use crate::fitness::{Evaluator, FitnessCache};
use crate::generator::{GeneratorPair, LossReport};
use crate::merge::{CoefficientVector, ExpertPool};
use crate::rng::SearchRngs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// The current round's population has not been created yet.
    Init,
    Iterating,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Initialized { round: usize },
    Iterated { round: usize, iteration: usize },
    Shifted { round: usize },
    Finished,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub phase: Phase,
    pub round: usize,
    /// Completed generative iterations in the current round.
    pub iteration: usize,
    pub pool: ExpertPool,
    /// Sequence numbers of the current population, best first.
    pub population: Vec<u64>,
    pub archive: Archive,
    pub generator: Option<GeneratorPair>,
    pub rngs: SearchRngs,
    pub evaluations: usize,
    pub loss_reports: Vec<LossReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: SearchState,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: EvalRecord,
    pub archive: Archive,
    pub trace: Vec<ConvergenceRow>,
    /// Cache-miss evaluations.
    pub evaluations: usize,
    pub wall_time: Duration,
    /// One report per generative iteration.
    pub loss_reports: Vec<LossReport>,
    pub final_pool: ExpertPool,
}

/// The stepwise search driver. Each [`Search::step`] performs one unit of
/// work: initializing a round, one generative iteration, or a basis shift.
pub struct Search {
    config: RunConfig,
    evaluator: Arc<Evaluator>,
    cache: FitnessCache,
    state: SearchState,
    started: Instant,
}

impl Search {
    pub fn new(config: RunConfig, evaluator: Arc<Evaluator>) -> Result<Self> {
        config.validate()?;
        if evaluator.spec() != &config.evaluator {
            return Err(Error::InvalidConfig(
                "evaluator does not match the configured evaluator spec".into(),
            ));
        }
        let state = SearchState {
            phase: Phase::Init,
            round: 0,
            iteration: 0,
            pool: evaluator.initial_pool().clone(),
            population: Vec::new(),
            archive: Archive::new(),
            generator: None,
            rngs: SearchRngs::from_master(config.master_seed),
            evaluations: 0,
            loss_reports: Vec::new(),
        };
        Ok(Self {
            config,
            evaluator,
            cache: FitnessCache::new(),
            state,
            started: Instant::now(),
        })
    }

    /// Restores a run from a checkpoint, re-priming the cache from the archive.
    pub fn resume(checkpoint: Checkpoint, evaluator: Arc<Evaluator>) -> Result<Self> {
        let Checkpoint { config, state } = checkpoint;
        let mut search = Self::new(config, evaluator)?;
        if state.pool.num_experts() != search.config.num_experts {
            return Err(Error::CorruptCheckpoint(
                "pool size differs from config".into(),
            ));
        }
        for seq in &state.population {
            if !state.archive.records().iter().any(|r| r.seq == *seq) {
                return Err(Error::CorruptCheckpoint(format!(
                    "population member {seq} missing from archive"
                )));
            }
        }
        for r in state.archive.records() {
            search.cache.prime(r.round, &r.lambda, r.fitness);
        }
        search.state = state;
        Ok(search)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn archive(&self) -> &Archive {
        &self.state.archive
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase == Phase::Finished
    }

    /// Current population, best first.
    pub fn population(&self) -> Vec<&EvalRecord> {
        self.state
            .population
            .iter()
            .filter_map(|s| self.state.archive.records().iter().find(|r| r.seq == *s))
            .collect()
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        match self.state.phase {
            Phase::Finished => Ok(StepOutcome::Finished),
            Phase::Init => {
                self.initialize_round()?;
                Ok(StepOutcome::Initialized {
                    round: self.state.round,
                })
            }
            Phase::Iterating if self.state.iteration < self.config.iters_per_round => {
                self.run_iteration()?;
                Ok(StepOutcome::Iterated {
                    round: self.state.round,
                    iteration: self.state.iteration,
                })
            }
            Phase::Iterating if self.state.round + 1 < self.config.rounds => {
                self.shift_basis()?;
                Ok(StepOutcome::Shifted {
                    round: self.state.round,
                })
            }
            Phase::Iterating => {
                self.state.phase = Phase::Finished;
                Ok(StepOutcome::Finished)
            }
        }
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    fn evaluate_and_record(
        &mut self,
        candidates: Vec<(CoefficientVector, Source)>,
        iteration: usize,
    ) -> Result<()> {
        let lambdas: Vec<CoefficientVector> = candidates.iter().map(|c| c.0.clone()).collect();
        let before = self.cache.misses();
        let scores = self
            .evaluator
            .batch_evaluate_in(&self.state.pool, &self.cache, &lambdas)?;
        self.state.evaluations += self.cache.misses() - before;
        for ((lambda, source), fitness) in candidates.into_iter().zip(scores) {
            self.state.archive.record(
                lambda,
                fitness,
                RecordMeta {
                    round: self.state.round,
                    iteration,
                    source,
                },
            )?;
        }
        Ok(())
    }

    fn select(&mut self) -> Result<()> {
        let scope = self.config.scope(self.state.round);
        let pop = select_population(&self.state.archive, scope, self.config.population)?;
        self.state.population = pop.iter().map(|r| r.seq).collect();
        Ok(())
    }

    fn initialize_round(&mut self) -> Result<()> {
        let n = self.config.num_experts;
        let mut pop = init_population(n, self.config.population, &mut self.state.rngs.population)?;
        if self.state.round > 0 {
            // one-hots of a shifted basis are the carried-over elites
            for entry in pop.iter_mut() {
                if entry.1 == Source::InitOnehot {
                    entry.1 = Source::BasisElite;
                }
            }
        }
        self.evaluate_and_record(pop, 0)?;
        self.select()?;
        self.state.iteration = 0;
        self.state.phase = Phase::Iterating;
        Ok(())
    }

    fn run_iteration(&mut self) -> Result<()> {
        let iteration = self.state.iteration + 1;
        let scope = self.config.scope(self.state.round);
        let split = self.state.archive.split(self.config.rho, scope)?;

        let mut pair = match (self.config.warm_start, self.state.generator.take()) {
            (true, Some(pair)) if self.state.iteration > 0 => pair,
            _ => GeneratorPair::new(
                self.config.num_experts,
                self.config.hidden,
                &mut self.state.rngs.networks,
            )?,
        };
        let report = pair.train(
            &split,
            &self.config.train,
            self.config.train_mode,
            &mut self.state.rngs.pairs,
        )?;
        log::debug!(
            "round {} iteration {iteration}: loss {:?}",
            self.state.round,
            report.last()
        );

        let parents: Vec<CoefficientVector> =
            self.population().iter().map(|r| r.lambda.clone()).collect();
        let proposals = pair.propose(&parents)?;
        let archived: Vec<CoefficientVector> = self
            .state
            .archive
            .view(scope)
            .map(|r| r.lambda.clone())
            .collect();
        let candidates = dedup_jitter(
            proposals,
            &archived,
            self.config.jitter_sigma,
            self.config.dup_tolerance,
            &mut self.state.rngs.jitter,
        );
        self.evaluate_and_record(candidates, iteration)?;
        self.select()?;

        self.state.generator = Some(pair);
        self.state.loss_reports.push(report);
        self.state.iteration = iteration;
        Ok(())
    }

    fn shift_basis(&mut self) -> Result<()> {
        let scope = self.config.scope(self.state.round);
        let elites: Vec<CoefficientVector> = self
            .state
            .archive
            .top_k(self.config.num_experts, scope)?
            .into_iter()
            .map(|r| r.lambda)
            .collect();
        let shifted = self.state.pool.shift_basis(&elites)?;
        self.state.pool = shifted.pool;
        self.state.round += 1;
        self.state.iteration = 0;
        self.state.generator = None;
        self.state.phase = Phase::Init;
        self.initialize_round()
    }

    pub fn result(&self) -> Result<RunResult> {
        let best = self
            .state
            .archive
            .best(crate::archive::Scope::Global)
            .cloned()
            .ok_or(Error::ArchiveTooSmall {
                needed: 1,
                available: 0,
            })?;
        Ok(RunResult {
            best,
            archive: self.state.archive.clone(),
            trace: convergence(&self.state.archive),
            evaluations: self.state.evaluations,
            wall_time: self.started.elapsed(),
            loss_reports: self.state.loss_reports.clone(),
            final_pool: self.state.pool.clone(),
        })
    }
}

/// Runs the full search described by `config`.
pub fn run(config: &RunConfig, evaluator: Arc<Evaluator>) -> Result<RunResult> {
    let mut search = Search::new(config.clone(), evaluator)?;
    search.run_to_end()?;
    search.result()
}

/// Runs one budget-matched ablation variant.
pub fn run_ablation(
    config: &RunConfig,
    evaluator: Arc<Evaluator>,
    variant: Variant,
) -> Result<RunResult> {
    run(&variant.apply(config), evaluator)
}
