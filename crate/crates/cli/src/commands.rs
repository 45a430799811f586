use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use evogm::baselines::{compare, CompareSpec};
use evogm::evolution::report::{best_json, convergence, convergence_csv, ConvergenceRow};
use evogm::evolution::{Checkpoint, StepOutcome};
use evogm::{Archive, Evaluator, Scope, Search};
use rayon::prelude::*;

use crate::config::{self, Experiment};

pub const EFFECTIVE_CONFIG: &str = "effective-config.toml";
pub const ARCHIVE: &str = "archive.jsonl";
pub const CONVERGENCE: &str = "convergence.csv";
pub const BEST: &str = "best.json";
pub const CHECKPOINT: &str = "checkpoint.json";

/// Options shared by `run` and `compare`.
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub parallel_seeds: bool,
    /// Stop each seed after this many driver steps, leaving a resumable
    /// checkpoint behind.
    pub max_steps: Option<usize>,
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn prepare(experiment: &mut Experiment, opts: &RunOptions) -> Result<()> {
    if let Some(out) = &opts.out {
        experiment.out = out.clone();
        experiment.effective.out = Some(out.clone());
    }
    if !opts.seeds.is_empty() {
        experiment.seeds = opts.seeds.clone();
        experiment.effective.seeds = Some(opts.seeds.clone());
    }
    fs::create_dir_all(&experiment.out)
        .with_context(|| format!("creating {}", experiment.out.display()))?;
    write_atomic(
        &experiment.out.join(EFFECTIVE_CONFIG),
        experiment.effective_toml().as_bytes(),
    )
}

fn save_checkpoint(dir: &Path, search: &Search) -> Result<()> {
    let text = serde_json::to_string(&search.checkpoint()).context("serializing checkpoint")?;
    write_atomic(&dir.join(CHECKPOINT), text.as_bytes())
}

fn write_archive(dir: &Path, archive: &Archive) -> Result<()> {
    let mut bytes = Vec::new();
    archive
        .write_jsonl(&mut bytes)
        .context("serializing archive")?;
    write_atomic(&dir.join(ARCHIVE), &bytes)
}

/// Steps `search` to completion (or `max_steps`), checkpointing after every
/// step; the archive so far is flushed even when a step fails.
fn drive(dir: &Path, search: &mut Search, max_steps: Option<usize>) -> Result<bool> {
    let mut steps = 0;
    while !search.is_finished() {
        if max_steps.is_some_and(|m| steps >= m) {
            write_archive(dir, search.archive())?;
            log::info!("{}: stopped after {steps} steps", dir.display());
            return Ok(false);
        }
        match search.step() {
            Ok(outcome) => {
                steps += 1;
                if let StepOutcome::Iterated { round, iteration } = outcome {
                    let best = search
                        .archive()
                        .best(Scope::Global)
                        .map_or(f64::NAN, |r| r.fitness);
                    log::info!(
                        "{}: round {round} iteration {iteration} best {best:.6}",
                        dir.display()
                    );
                }
                save_checkpoint(dir, search)?;
            }
            Err(e) => {
                write_archive(dir, search.archive())?;
                return Err(e).context(format!(
                    "{}: search failed, partial archive flushed",
                    dir.display()
                ));
            }
        }
    }
    let result = search.result()?;
    write_archive(dir, &result.archive)?;
    write_atomic(
        &dir.join(CONVERGENCE),
        convergence_csv(&result.trace).as_bytes(),
    )?;
    write_atomic(&dir.join(BEST), best_json(&result.best).as_bytes())?;
    log::info!(
        "{}: finished, {} evaluations, best {:.6}",
        dir.display(),
        result.evaluations,
        result.best.fitness
    );
    Ok(true)
}

fn run_seed(
    experiment: &Experiment,
    evaluator: Arc<Evaluator>,
    seed: u64,
    max_steps: Option<usize>,
) -> Result<()> {
    let dir = experiment.out.join(seed.to_string());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(
        &dir.join(EFFECTIVE_CONFIG),
        experiment.effective_toml_for(seed).as_bytes(),
    )?;
    let mut search = Search::new(experiment.run_for(seed), evaluator)?;
    drive(&dir, &mut search, max_steps)?;
    Ok(())
}

pub fn run(mut experiment: Experiment, opts: &RunOptions) -> Result<()> {
    prepare(&mut experiment, opts)?;
    let evaluator = Arc::new(experiment.run.evaluator.build()?);
    let job = |seed: &u64| run_seed(&experiment, evaluator.clone(), *seed, opts.max_steps);
    if opts.parallel_seeds {
        experiment.seeds.par_iter().try_for_each(job)
    } else {
        experiment.seeds.iter().try_for_each(job)
    }
}

pub fn compare_cmd(mut experiment: Experiment, opts: &RunOptions) -> Result<()> {
    prepare(&mut experiment, opts)?;
    if experiment.baselines.is_empty() {
        bail!(config::ConfigError::Schema {
            path: experiment.out.join(EFFECTIVE_CONFIG),
            key: "baselines".into(),
            message: "compare needs at least one [[baselines]] entry".into(),
        });
    }
    let spec = CompareSpec {
        run: experiment.variant.apply(&experiment.run),
        baselines: experiment.baselines.clone(),
        seeds: experiment.seeds.clone(),
    };
    let evaluator = Arc::new(experiment.run.evaluator.build()?);
    let result = compare(&spec, evaluator)?;
    write_atomic(
        &experiment.out.join("comparison.csv"),
        result.runs_csv().as_bytes(),
    )?;
    write_atomic(
        &experiment.out.join("summary.csv"),
        result.summary_csv().as_bytes(),
    )?;
    for row in &result.summary {
        log::info!("{}: mean {:.6} std {:.6}", row.method, row.mean, row.std);
    }
    Ok(())
}

pub fn resume(dir: &Path) -> Result<()> {
    let experiment = config::load(&dir.join(EFFECTIVE_CONFIG))?;
    let path = dir.join(CHECKPOINT);
    let text = fs::read_to_string(&path).map_err(|e| {
        evogm::Error::CorruptCheckpoint(format!("cannot read {}: {e}", path.display()))
    })?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| evogm::Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
    let seed = checkpoint.config.master_seed;
    if experiment.seeds != [seed] || checkpoint.config != experiment.run_for(seed) {
        return Err(evogm::Error::CorruptCheckpoint(format!(
            "{} does not match {EFFECTIVE_CONFIG}",
            path.display()
        ))
        .into());
    }
    let evaluator = Arc::new(checkpoint.config.evaluator.build()?);
    let mut search = Search::resume(checkpoint, evaluator)?;
    if search.is_finished() {
        log::info!("{}: run already complete", dir.display());
        return Ok(());
    }
    drive(dir, &mut search, None)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Csv,
    Tsv,
}

const EXPORT_COLUMNS: [&str; 8] = [
    "round",
    "iteration",
    "eval_index",
    "evals_excl_init",
    "best_so_far",
    "mean_top5",
    "mean_top5_round",
    "mean_top5_iteration",
];

fn export_table(rows: &[ConvergenceRow], sep: char) -> String {
    let mut s = EXPORT_COLUMNS.join(&sep.to_string());
    s.push('\n');
    for r in rows {
        let cells = [
            r.round.to_string(),
            r.iteration.to_string(),
            r.eval_index.to_string(),
            r.evals_excl_init.to_string(),
            evogm::archive::fmt_f64(r.best_so_far),
            evogm::archive::fmt_f64(r.mean_top5),
            evogm::archive::fmt_f64(r.mean_top5_round),
            evogm::archive::fmt_f64(r.mean_top5_iteration),
        ];
        s.push_str(&cells.join(&sep.to_string()));
        s.push('\n');
    }
    s
}

fn summary_text(archive: &Archive, rows: &[ConvergenceRow]) -> String {
    let mut s = String::new();
    let best = archive.best(Scope::Global).expect("non-empty archive");
    let last = rows.last().expect("non-empty archive");
    let _ = writeln!(s, "records           {}", archive.len());
    let _ = writeln!(s, "evaluations       {}", last.eval_index);
    let _ = writeln!(s, "excluding init    {}", last.evals_excl_init);
    let _ = writeln!(s, "best fitness      {:.6}", best.fitness);
    let _ = writeln!(
        s,
        "best found at     round {} iteration {}",
        best.round, best.iteration
    );
    let lambda: Vec<String> = best
        .lambda
        .as_slice()
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect();
    let _ = writeln!(s, "best lambda       [{}]", lambda.join(", "));
    let _ = writeln!(s, "final mean top 5  {:.6}", last.mean_top5);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>5} {:>9} {:>6} {:>12} {:>12} {:>12}",
        "round", "iteration", "evals", "best", "top5", "top5_round"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>6} {:>12.6} {:>12.6} {:>12.6}",
            r.round, r.iteration, r.eval_index, r.best_so_far, r.mean_top5, r.mean_top5_round
        );
    }
    s
}

pub fn export(dir: &Path, format: ExportFormat, out: Option<&Path>) -> Result<()> {
    let archive = Archive::import_jsonl(dir.join(ARCHIVE))?;
    if archive.is_empty() {
        bail!("{}: archive is empty, nothing to export", dir.display());
    }
    let rows = convergence(&archive);
    let out = out.unwrap_or(dir);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (name, sep) = match format {
        ExportFormat::Csv => ("mean_top5.csv", ','),
        ExportFormat::Tsv => ("mean_top5.tsv", '\t'),
    };
    write_atomic(&out.join(name), export_table(&rows, sep).as_bytes())?;
    let summary = summary_text(&archive, &rows);
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}
