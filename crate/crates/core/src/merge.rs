//! Parameter-space algebra: task vectors, coefficient-weighted merging and the
//! inter-round basis shift.
//!
//! A merged model is `base + Σᵢ λᵢ·τᵢ` where `τᵢ = expertᵢ − base`. The sum is
//! always accumulated in expert order `0..N` so that runs are byte-reproducible.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat dense model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("parameter vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A point in the merging-coefficient search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("coefficient vector"));
        }
        Ok(Self(coeffs))
    }

    /// Builds a vector without the finiteness check. Callers guarantee finite input.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn uniform_average(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for CoefficientVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskVector {
    pub expert_id: usize,
    pub delta: ParameterVector,
}

/// Computes `τᵢ = expertᵢ − base` for every expert.
pub fn compute_task_vectors(
    experts: &[ParameterVector],
    base: &ParameterVector,
) -> Result<Vec<TaskVector>> {
    experts
        .iter()
        .enumerate()
        .map(|(expert_id, expert)| {
            if expert.dim() != base.dim() {
                return Err(Error::DimensionMismatch {
                    expected: base.dim(),
                    found: expert.dim(),
                });
            }
            let delta = expert
                .as_slice()
                .iter()
                .zip(base.as_slice())
                .map(|(e, b)| e - b)
                .collect();
            Ok(TaskVector {
                expert_id,
                delta: ParameterVector(delta),
            })
        })
        .collect()
}

/// The expert basis of one search round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPool {
    round: usize,
    base: ParameterVector,
    task_vectors: Vec<TaskVector>,
}

/// Result of a basis shift. `degenerate` lists elite index pairs that were equal
/// within 1e-9 in L∞, which makes the new basis rank-deficient.
#[derive(Debug, Clone)]
pub struct BasisShift {
    pub pool: ExpertPool,
    pub degenerate: Vec<(usize, usize)>,
}

const DEGENERATE_TOL: f64 = 1e-9;

impl ExpertPool {
    pub fn new(base: ParameterVector, task_vectors: Vec<TaskVector>, round: usize) -> Result<Self> {
        let n = task_vectors.len();
        if n < 2 {
            return Err(Error::InvalidDimension(format!(
                "an expert pool needs at least 2 experts, got {n}"
            )));
        }
        let mut seen = vec![false; n];
        for tv in &task_vectors {
            if tv.delta.dim() != base.dim() {
                return Err(Error::DimensionMismatch {
                    expected: base.dim(),
                    found: tv.delta.dim(),
                });
            }
            if tv.expert_id >= n || seen[tv.expert_id] {
                return Err(Error::InvalidDimension(format!(
                    "expert ids must be a permutation of 0..{n}"
                )));
            }
            seen[tv.expert_id] = true;
        }
        let mut task_vectors = task_vectors;
        task_vectors.sort_by_key(|tv| tv.expert_id);
        Ok(Self {
            round,
            base,
            task_vectors,
        })
    }

    pub fn from_experts(base: ParameterVector, experts: &[ParameterVector]) -> Result<Self> {
        let tvs = compute_task_vectors(experts, &base)?;
        Self::new(base, tvs, 0)
    }

    /// Pool whose merge is the identity on coefficients: zero base, `τᵢ = eᵢ`.
    pub fn identity(n: usize) -> Result<Self> {
        let tvs = (0..n)
            .map(|i| TaskVector {
                expert_id: i,
                delta: ParameterVector(CoefficientVector::one_hot(n, i).into_inner()),
            })
            .collect();
        Self::new(ParameterVector::zeros(n), tvs, 0)
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn num_experts(&self) -> usize {
        self.task_vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &ParameterVector {
        &self.base
    }

    pub fn task_vectors(&self) -> &[TaskVector] {
        &self.task_vectors
    }

    /// `base + Σᵢ λᵢ·τᵢ`, accumulated in expert order. Any finite λ is accepted.
    pub fn merge(&self, lambda: &CoefficientVector) -> Result<ParameterVector> {
        if lambda.len() != self.num_experts() {
            return Err(Error::DimensionMismatch {
                expected: self.num_experts(),
                found: lambda.len(),
            });
        }
        if lambda.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("merge coefficients"));
        }
        let mut out = self.base.0.clone();
        for (coef, tv) in lambda.as_slice().iter().zip(&self.task_vectors) {
            for (o, d) in out.iter_mut().zip(tv.delta.as_slice()) {
                *o += coef * d;
            }
        }
        Ok(ParameterVector(out))
    }

    /// Replaces the experts with the merged models of `elites` and recomputes the
    /// task vectors against the original base.
    pub fn shift_basis(&self, elites: &[CoefficientVector]) -> Result<BasisShift> {
        let n = self.num_experts();
        if elites.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: elites.len(),
            });
        }
        let mut degenerate = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if elites[i].len() == elites[j].len()
                    && elites[i].linf_distance(&elites[j]) <= DEGENERATE_TOL
                {
                    degenerate.push((i, j));
                }
            }
        }
        if !degenerate.is_empty() {
            log::warn!("degenerate basis shift: equal elite pairs {degenerate:?}");
        }
        let experts = elites
            .iter()
            .map(|l| self.merge(l))
            .collect::<Result<Vec<_>>>()?;
        let tvs = compute_task_vectors(&experts, &self.base)?;
        let pool = Self::new(self.base.clone(), tvs, self.round + 1)?;
        Ok(BasisShift { pool, degenerate })
    }

    /// Writes the binary archive: magic `EVOGMPOOL1`, `d` and `N` as u64, then the
    /// base and the `N` deltas, all little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(POOL_MAGIC)?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.num_experts() as u64).to_le_bytes())?;
        for v in self.base.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        for tv in &self.task_vectors {
            for v in tv.delta.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the binary archive. The format carries no round counter; the pool
    /// comes back as round 0.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Format {
            line: 0,
            message: m.to_string(),
        };
        let mut magic = [0u8; 10];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != POOL_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|_| bad("truncated pool data"))?;
            Ok(word)
        };
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let mut read_vec = |r: &mut R| -> Result<ParameterVector> {
            let mut v = Vec::with_capacity(d);
            for _ in 0..d {
                v.push(f64::from_le_bytes(next(r)?));
            }
            ParameterVector::new(v)
        };
        let base = read_vec(&mut r)?;
        let tvs = (0..n)
            .map(|expert_id| {
                Ok(TaskVector {
                    expert_id,
                    delta: read_vec(&mut r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(base, tvs, 0)
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// Human-readable form for tiny pools (`d ≤ 64`).
    pub fn to_json(&self) -> Result<String> {
        if self.dim() > MAX_JSON_DIM {
            return Err(Error::InvalidDimension(format!(
                "JSON pool form is limited to d <= {MAX_JSON_DIM}, got {}",
                self.dim()
            )));
        }
        let doc = PoolJson {
            round: self.round,
            base: self.base.as_slice().to_vec(),
            task_vectors: self
                .task_vectors
                .iter()
                .map(|tv| tv.delta.as_slice().to_vec())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc).expect("pool json"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PoolJson = serde_json::from_str(text).map_err(|e| Error::Format {
            line: e.line(),
            message: e.to_string(),
        })?;
        let base = ParameterVector::new(doc.base)?;
        let tvs = doc
            .task_vectors
            .into_iter()
            .enumerate()
            .map(|(expert_id, d)| {
                Ok(TaskVector {
                    expert_id,
                    delta: ParameterVector::new(d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(base, tvs, doc.round)
    }
}

const POOL_MAGIC: &[u8; 10] = b"EVOGMPOOL1";
const MAX_JSON_DIM: usize = 64;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolJson {
    round: usize,
    base: Vec<f64>,
    task_vectors: Vec<Vec<f64>>,
}
