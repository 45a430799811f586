//! The search-history archive: every evaluated configuration, winner/loser
//! splits, pair sampling and elite queries.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::CoefficientVector;

/// How a configuration entered the archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    InitAverage,
    InitOnehot,
    InitRandom,
    Generated,
    Jitter,
    BasisElite,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::InitAverage => "init_average",
            Source::InitOnehot => "init_onehot",
            Source::InitRandom => "init_random",
            Source::Generated => "generated",
            Source::Jitter => "jitter",
            Source::BasisElite => "basis_elite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub seq: u64,
    pub round: usize,
    #[serde(rename = "iter")]
    pub iteration: usize,
    pub source: Source,
    pub lambda: CoefficientVector,
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordMeta {
    pub round: usize,
    pub iteration: usize,
    pub source: Source,
}

/// Which records a query sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    Round(usize),
}

impl Scope {
    fn admits(self, rec: &EvalRecord) -> bool {
        match self {
            Scope::Global => true,
            Scope::Round(r) => rec.round == r,
        }
    }
}

/// Fitness descending, then earlier discovery first.
fn rank_order(a: &EvalRecord, b: &EvalRecord) -> std::cmp::Ordering {
    b.fitness
        .total_cmp(&a.fitness)
        .then_with(|| a.seq.cmp(&b.seq))
}

/// Append-only multiset of evaluations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    records: Vec<EvalRecord>,
    next_seq: u64,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn view(&self, scope: Scope) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(move |r| scope.admits(r))
    }

    pub fn count(&self, scope: Scope) -> usize {
        self.view(scope).count()
    }

    pub fn record(
        &mut self,
        lambda: CoefficientVector,
        fitness: f64,
        meta: RecordMeta,
    ) -> Result<&EvalRecord> {
        if lambda.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("archived coefficients"));
        }
        if !fitness.is_finite() {
            return Err(Error::NonFiniteInput("archived fitness"));
        }
        let rec = EvalRecord {
            seq: self.next_seq,
            round: meta.round,
            iteration: meta.iteration,
            source: meta.source,
            lambda,
            fitness,
        };
        self.next_seq += 1;
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Best record by fitness, earliest on ties.
    pub fn best(&self, scope: Scope) -> Option<&EvalRecord> {
        self.view(scope).min_by(|a, b| rank_order(a, b))
    }

    /// The `k` highest-fitness records in descending order, ties by lower seq.
    pub fn top_k(&self, k: usize, scope: Scope) -> Result<Vec<EvalRecord>> {
        let mut pool: Vec<&EvalRecord> = self.view(scope).collect();
        if k == 0 || k > pool.len() {
            return Err(Error::ArchiveTooSmall {
                needed: k.max(1),
                available: pool.len(),
            });
        }
        pool.sort_by(|a, b| rank_order(a, b));
        Ok(pool.into_iter().take(k).cloned().collect())
    }

    /// Splits the scoped view into the top `clamp(round(ρ·|H|), 1, |H|−1)`
    /// winners and the remaining losers.
    pub fn split(&self, rho: f64, scope: Scope) -> Result<WinnerLoserSplit> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {rho}"
            )));
        }
        let mut pool: Vec<&EvalRecord> = self.view(scope).collect();
        let h = pool.len();
        if h < 2 {
            return Err(Error::ArchiveTooSmall {
                needed: 2,
                available: h,
            });
        }
        pool.sort_by(|a, b| rank_order(a, b));
        let k = winner_count(rho, h);
        let losers = pool.split_off(k).into_iter().cloned().collect();
        let winners = pool.into_iter().cloned().collect();
        Ok(WinnerLoserSplit {
            winners,
            losers,
            rho,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in &self.records {
            writeln!(w, "{}", record_line(rec))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut archive = Archive::new();
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Format {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
                line: lineno,
                message: e.to_string(),
            })?;
            let rec = raw.into_record().map_err(|message| Error::Format {
                line: lineno,
                message,
            })?;
            if rec.seq < archive.next_seq {
                return Err(Error::Format {
                    line: lineno,
                    message: format!("seq {} is not increasing", rec.seq),
                });
            }
            archive.next_seq = rec.seq + 1;
            archive.records.push(rec);
        }
        Ok(archive)
    }

    pub fn export_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn import_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

/// Number of winners for an archive of `h ≥ 2` records.
pub fn winner_count(rho: f64, h: usize) -> usize {
    ((rho * h as f64).round() as usize).clamp(1, h - 1)
}

/// 17 significant digits, valid as a JSON number and lossless for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One JSONL line with the fixed field order
/// `seq, round, iter, source, lambda, fitness`.
pub fn record_line(rec: &EvalRecord) -> String {
    let mut s = String::with_capacity(64 + 24 * rec.lambda.len());
    write!(
        s,
        "{{\"seq\":{},\"round\":{},\"iter\":{},\"source\":\"{}\",\"lambda\":[",
        rec.seq,
        rec.round,
        rec.iteration,
        rec.source.as_str()
    )
    .expect("string write");
    for (i, v) in rec.lambda.as_slice().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_f64(*v));
    }
    write!(s, "],\"fitness\":{}}}", fmt_f64(rec.fitness)).expect("string write");
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    seq: u64,
    round: usize,
    iter: usize,
    source: Source,
    lambda: Vec<f64>,
    fitness: f64,
}

impl RawRecord {
    fn into_record(self) -> Result<EvalRecord, String> {
        let lambda = CoefficientVector::new(self.lambda).map_err(|e| e.to_string())?;
        if !self.fitness.is_finite() {
            return Err("non-finite fitness".into());
        }
        Ok(EvalRecord {
            seq: self.seq,
            round: self.round,
            iteration: self.iter,
            source: self.source,
            lambda,
            fitness: self.fitness,
        })
    }
}

/// Winners `H⁺` and losers `H⁻` of one split.
#[derive(Debug, Clone)]
pub struct WinnerLoserSplit {
    pub winners: Vec<EvalRecord>,
    pub losers: Vec<EvalRecord>,
    pub rho: f64,
}

/// Loser/winner pairs drawn from `H⁻ × H⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<(CoefficientVector, CoefficientVector)>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn losers(&self) -> impl Iterator<Item = &CoefficientVector> {
        self.pairs.iter().map(|(l, _)| l)
    }

    pub fn winners(&self) -> impl Iterator<Item = &CoefficientVector> {
        self.pairs.iter().map(|(_, w)| w)
    }
}

impl WinnerLoserSplit {
    /// Coordinatewise mean `μ⁺` of the winners.
    pub fn winner_centroid(&self) -> Result<CoefficientVector> {
        let first = self.winners.first().ok_or(Error::EmptySet("winner"))?;
        let n = first.lambda.len();
        let mut acc = vec![0.0; n];
        for w in &self.winners {
            if w.lambda.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: w.lambda.len(),
                });
            }
            for (a, v) in acc.iter_mut().zip(w.lambda.as_slice()) {
                *a += v;
            }
        }
        let m = self.winners.len() as f64;
        CoefficientVector::new(acc.into_iter().map(|a| a / m).collect())
    }

    /// Draws `batch_size` pairs, each side uniformly with replacement.
    pub fn sample_pairs(&self, batch_size: usize, rng: &mut impl rand::Rng) -> Result<PairBatch> {
        if self.losers.is_empty() {
            return Err(Error::EmptySet("loser"));
        }
        if self.winners.is_empty() {
            return Err(Error::EmptySet("winner"));
        }
        if batch_size == 0 {
            return Err(Error::EmptyBatch);
        }
        let pairs = (0..batch_size)
            .map(|_| {
                let l = &self.losers[rng.random_range(0..self.losers.len())];
                let w = &self.winners[rng.random_range(0..self.winners.len())];
                (l.lambda.clone(), w.lambda.clone())
            })
            .collect();
        Ok(PairBatch { pairs })
    }
}
