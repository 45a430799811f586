//! Experiment config files (TOML). Every field is optional on input; after
//! resolution all defaults are filled in, and the echoed file parses back to
//! the same experiment.

use std::path::{Path, PathBuf};

use evogm::baselines::{Method, PsoParams, DEFAULT_EA_SIGMA};
use evogm::evolution::HistoryScope;
use evogm::rng::{stream, Stream};
use evogm::{EvaluatorSpec, RunConfig, ToyMergeSpec, TrainHyper, TrainMode, Variant};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A config problem reported to the user as a usage error (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: key `{key}`: {message}")]
    Schema {
        path: PathBuf,
        key: String,
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub evaluator: EvaluatorSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Quadratic,
    ToyMerge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSection {
    pub kind: EvaluatorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_experts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Quadratic only; drawn uniformly from `[−1, 1]ᴺ` with `seed` if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_fraction: Option<f64>,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        Self {
            kind: EvaluatorKind::Quadratic,
            num_experts: None,
            seed: None,
            lambda_star: None,
            feature_dim: None,
            num_classes: None,
            samples_per_class: None,
            val_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters_per_round: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dup_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history_scope: Option<HistoryScope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_mode: Option<TrainMode>,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_o: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    RandomSearch,
    MutationEa,
    Pso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub method: BaselineKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pop: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swarm: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub variant: Variant,
    /// Template run config; `master_seed` is replaced per seed.
    pub run: RunConfig,
    pub baselines: Vec<Method>,
    /// The resolved file, every default written out.
    pub effective: ConfigFile,
}

impl Experiment {
    /// The run config actually executed for `seed` (variant applied).
    pub fn run_for(&self, seed: u64) -> RunConfig {
        let mut c = self.run.clone();
        c.master_seed = seed;
        self.variant.apply(&c)
    }

    pub fn effective_toml(&self) -> String {
        toml::to_string(&self.effective).expect("config serializes")
    }

    /// Effective config restricted to one seed, for a per-seed run directory.
    pub fn effective_toml_for(&self, seed: u64) -> String {
        let mut e = self.effective.clone();
        e.seeds = Some(vec![seed]);
        toml::to_string(&e).expect("config serializes")
    }
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<Experiment, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    resolve(file, path)
}

struct Checker<'a> {
    path: &'a Path,
}

impl Checker<'_> {
    fn fail<T>(&self, key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError::Schema {
            path: self.path.to_path_buf(),
            key: key.into(),
            message: message.into(),
        })
    }

    fn at_least(&self, key: &str, v: usize, min: usize) -> Result<usize, ConfigError> {
        if v < min {
            return self.fail(key, format!("must be >= {min}, got {v}"));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if !(v > 0.0 && v.is_finite()) {
            return self.fail(key, format!("must be a finite number > 0, got {v}"));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if !(v >= 0.0 && v.is_finite()) {
            return self.fail(key, format!("must be a finite number >= 0, got {v}"));
        }
        Ok(v)
    }
}

fn resolve(mut file: ConfigFile, path: &Path) -> Result<Experiment, ConfigError> {
    let ck = Checker { path };
    let ev = &mut file.evaluator;
    let eval_seed = *ev.seed.get_or_insert(0);
    let toy_keys = [
        ("feature_dim", ev.feature_dim.is_some()),
        ("num_classes", ev.num_classes.is_some()),
        ("samples_per_class", ev.samples_per_class.is_some()),
        ("val_fraction", ev.val_fraction.is_some()),
    ];
    let spec = match ev.kind {
        EvaluatorKind::Quadratic => {
            if let Some((k, _)) = toy_keys.iter().find(|(_, set)| *set) {
                return ck.fail(
                    &format!("evaluator.{k}"),
                    "only valid for kind = \"toy_merge\"",
                );
            }
            let star = match (&ev.lambda_star, ev.num_experts) {
                (Some(s), Some(n)) if s.len() != n => {
                    return ck.fail(
                        "evaluator.lambda_star",
                        format!("has {} entries but num_experts = {n}", s.len()),
                    )
                }
                (Some(s), _) => s.clone(),
                (None, Some(n)) => {
                    let mut rng = stream(eval_seed, Stream::Dataset);
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
                }
                (None, None) => {
                    return ck.fail("evaluator.num_experts", "required (or give lambda_star)")
                }
            };
            if star.iter().any(|v| !v.is_finite()) {
                return ck.fail("evaluator.lambda_star", "entries must be finite");
            }
            ck.at_least("evaluator.num_experts", star.len(), 2)?;
            ev.num_experts = Some(star.len());
            ev.lambda_star = Some(star.clone());
            EvaluatorSpec::Quadratic { lambda_star: star }
        }
        EvaluatorKind::ToyMerge => {
            if ev.lambda_star.is_some() {
                return ck.fail(
                    "evaluator.lambda_star",
                    "only valid for kind = \"quadratic\"",
                );
            }
            let d = ToyMergeSpec::default();
            let spec = ToyMergeSpec {
                num_experts: *ev.num_experts.get_or_insert(d.num_experts),
                feature_dim: *ev.feature_dim.get_or_insert(d.feature_dim),
                num_classes: *ev.num_classes.get_or_insert(d.num_classes),
                samples_per_class: *ev.samples_per_class.get_or_insert(d.samples_per_class),
                val_fraction: *ev.val_fraction.get_or_insert(d.val_fraction),
            };
            if let Err(e) = spec.validate() {
                return ck.fail("evaluator", e.to_string());
            }
            EvaluatorSpec::ToyMerge {
                spec,
                seed: eval_seed,
            }
        }
    };

    let mut run = RunConfig::new(spec, 0);
    let alg = &mut file.algorithm;
    let variant = *alg.variant.get_or_insert(Variant::Full);
    run.population = ck.at_least(
        "algorithm.population",
        *alg.population.get_or_insert(run.population),
        2,
    )?;
    run.rounds = ck.at_least("algorithm.rounds", *alg.rounds.get_or_insert(run.rounds), 1)?;
    run.iters_per_round = ck.at_least(
        "algorithm.iters_per_round",
        *alg.iters_per_round.get_or_insert(run.iters_per_round),
        1,
    )?;
    run.rho = *alg.rho.get_or_insert(run.rho);
    if !(run.rho > 0.0 && run.rho < 1.0) {
        return ck.fail(
            "algorithm.rho",
            format!("must lie in (0, 1), got {}", run.rho),
        );
    }
    run.hidden = ck.at_least("algorithm.hidden", *alg.hidden.get_or_insert(run.hidden), 1)?;
    run.jitter_sigma = ck.non_negative(
        "algorithm.jitter_sigma",
        *alg.jitter_sigma.get_or_insert(run.jitter_sigma),
    )?;
    run.dup_tolerance = ck.non_negative(
        "algorithm.dup_tolerance",
        *alg.dup_tolerance.get_or_insert(run.dup_tolerance),
    )?;
    run.warm_start = *alg.warm_start.get_or_insert(run.warm_start);
    run.history_scope = *alg.history_scope.get_or_insert(run.history_scope);
    run.train_mode = *alg.train_mode.get_or_insert(run.train_mode);

    let t = &mut alg.train;
    let d = TrainHyper::default();
    run.train = TrainHyper {
        epochs: ck.at_least(
            "algorithm.train.epochs",
            *t.epochs.get_or_insert(d.epochs),
            1,
        )?,
        learning_rate: ck.positive(
            "algorithm.train.learning_rate",
            *t.learning_rate.get_or_insert(d.learning_rate),
        )?,
        batch_size: ck.at_least(
            "algorithm.train.batch_size",
            *t.batch_size.get_or_insert(d.batch_size),
            1,
        )?,
        alpha_c: ck.non_negative(
            "algorithm.train.alpha_c",
            *t.alpha_c.get_or_insert(d.alpha_c),
        )?,
        alpha_o: ck.non_negative(
            "algorithm.train.alpha_o",
            *t.alpha_o.get_or_insert(d.alpha_o),
        )?,
    };
    if let Err(e) = variant.apply(&run).validate() {
        return ck.fail("algorithm", e.to_string());
    }

    let population = run.population;
    let mut baselines = Vec::new();
    for (i, b) in file.baselines.iter_mut().enumerate() {
        let key = |k: &str| format!("baselines[{i}].{k}");
        let allowed: &[&str] = match b.method {
            BaselineKind::RandomSearch => &["low", "high"],
            BaselineKind::MutationEa => &["pop", "sigma"],
            BaselineKind::Pso => &["swarm", "inertia", "c1", "c2"],
        };
        let given = [
            ("low", b.low.is_some()),
            ("high", b.high.is_some()),
            ("pop", b.pop.is_some()),
            ("sigma", b.sigma.is_some()),
            ("swarm", b.swarm.is_some()),
            ("inertia", b.inertia.is_some()),
            ("c1", b.c1.is_some()),
            ("c2", b.c2.is_some()),
        ];
        if let Some((k, _)) = given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
            return ck.fail(&key(k), "not a parameter of this method");
        }
        if let Some(budget) = b.budget {
            ck.at_least(&key("budget"), budget, 1)?;
        }
        let method = match b.method {
            BaselineKind::RandomSearch => {
                let (low, high) = (*b.low.get_or_insert(-1.0), *b.high.get_or_insert(1.0));
                if low.is_nan() || high.is_nan() || low >= high {
                    return ck.fail(&key("low"), format!("must be below high ({low} >= {high})"));
                }
                Method::RandomSearch {
                    low,
                    high,
                    budget: b.budget,
                }
            }
            BaselineKind::MutationEa => Method::MutationEa {
                pop: ck.at_least(&key("pop"), *b.pop.get_or_insert(population), 2)?,
                sigma: ck.positive(&key("sigma"), *b.sigma.get_or_insert(DEFAULT_EA_SIGMA))?,
                budget: b.budget,
            },
            BaselineKind::Pso => {
                let d = PsoParams::default();
                Method::Pso {
                    params: PsoParams {
                        swarm: ck.at_least(&key("swarm"), *b.swarm.get_or_insert(d.swarm), 2)?,
                        inertia: ck
                            .non_negative(&key("inertia"), *b.inertia.get_or_insert(d.inertia))?,
                        c1: ck.non_negative(&key("c1"), *b.c1.get_or_insert(d.c1))?,
                        c2: ck.non_negative(&key("c2"), *b.c2.get_or_insert(d.c2))?,
                    },
                    budget: b.budget,
                }
            }
        };
        baselines.push(method);
    }

    let name = file.name.get_or_insert_with(|| "evogm".into()).clone();
    let out = file
        .out
        .get_or_insert_with(|| PathBuf::from("runs").join(&name))
        .clone();
    let seeds = file.seeds.get_or_insert_with(|| vec![0]).clone();
    if seeds.is_empty() {
        return ck.fail("seeds", "must list at least one seed");
    }
    Ok(Experiment {
        name,
        out,
        seeds,
        variant,
        run,
        baselines,
        effective: file,
    })
}
