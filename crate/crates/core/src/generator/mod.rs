//! Dual generators: a forward net mapping losers toward winners and a backward
//! net mapping winners toward losers, trained jointly on
//!
//! ```text
//! L_total = α_c·L_cyc + α_o·L_opt
//! L_cyc   = E⁻‖B(F(λ⁻)) − λ⁻‖² + E⁺‖F(B(λ⁺)) − λ⁺‖²
//! L_opt   = E⁻‖F(λ⁻) − μ⁺‖²
//! ```
//!
//! with exact hand-derived gradients. The cycle term couples the two nets: each
//! receives gradient through the other's output.

mod adam;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::archive::{PairBatch, WinnerLoserSplit};
use crate::error::{Error, Result};
use crate::merge::CoefficientVector;
use crate::rng::Rng;

pub use adam::Adam;
pub use mlp::{Layer, Perceptron, DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub alpha_c: f64,
    pub alpha_o: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-4,
            batch_size: 32,
            alpha_c: 1.0,
            alpha_o: 1.0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.alpha_c >= 0.0 && self.alpha_o >= 0.0) {
            return Err(Error::InvalidConfig(
                "alpha_c and alpha_o must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Default hidden width for `n` experts.
pub fn default_hidden(n: usize) -> usize {
    (8 * n).max(32)
}

/// Which networks take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Both nets, cycle and optimization terms.
    Dual,
    /// Forward net only on the optimization term; the backward net is frozen
    /// and the cycle term is not computed.
    ForwardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub cyc: f64,
    pub opt: f64,
}

/// Per-epoch losses, measured before each epoch's update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epochs: Vec<LossTerms>,
}

impl LossReport {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&LossTerms> {
        self.epochs.last()
    }
}

/// Gradient with the same layout as the pair itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub forward: Perceptron,
    pub backward: Perceptron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorPair {
    pub forward: Perceptron,
    pub backward: Perceptron,
}

pub fn init_pair(n: usize, hidden: usize, seed: u64) -> Result<GeneratorPair> {
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Networks);
    GeneratorPair::new(n, hidden, &mut rng)
}

impl GeneratorPair {
    pub fn new(n: usize, hidden: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        Ok(Self {
            forward: Perceptron::new(n, hidden, rng)?,
            backward: Perceptron::new(n, hidden, rng)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.forward.input_dim()
    }

    /// Applies the forward (loser → winner) generator.
    pub fn apply(&self, lambda: &CoefficientVector) -> Result<CoefficientVector> {
        apply(&self.forward, lambda)
    }

    /// Maps every population member through the forward generator.
    pub fn propose(&self, population: &[CoefficientVector]) -> Result<Vec<CoefficientVector>> {
        if population.is_empty() {
            return Err(Error::EmptySet("population"));
        }
        population.iter().map(|l| self.apply(l)).collect()
    }

    pub fn losses(
        &self,
        batch: &PairBatch,
        mu_plus: &CoefficientVector,
        hp: &TrainHyper,
    ) -> Result<LossTerms> {
        Ok(self.evaluate(batch, mu_plus, hp, TrainMode::Dual, false)?.0)
    }

    pub fn grads(
        &self,
        batch: &PairBatch,
        mu_plus: &CoefficientVector,
        hp: &TrainHyper,
    ) -> Result<(LossTerms, PairGrad)> {
        let (terms, grad) = self.evaluate(batch, mu_plus, hp, TrainMode::Dual, true)?;
        Ok((terms, grad.expect("gradient requested")))
    }

    fn check(&self, batch: &PairBatch, mu_plus: &CoefficientVector) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.dim();
        let bad = std::iter::once(mu_plus)
            .chain(batch.losers())
            .chain(batch.winners())
            .find(|v| v.len() != n);
        if let Some(v) = bad {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        Ok(())
    }

    fn evaluate(
        &self,
        batch: &PairBatch,
        mu_plus: &CoefficientVector,
        hp: &TrainHyper,
        mode: TrainMode,
        want_grad: bool,
    ) -> Result<(LossTerms, Option<PairGrad>)> {
        self.check(batch, mu_plus)?;
        let m = batch.len() as f64;
        let mu = mu_plus.as_slice();
        let mut grad = want_grad.then(|| PairGrad {
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
        });
        let dual = mode == TrainMode::Dual;
        let n = self.dim();
        let rows = batch.len();
        let stack = |vs: &mut dyn Iterator<Item = &CoefficientVector>| -> Vec<f64> {
            vs.flat_map(|v| v.as_slice().iter().copied()).collect()
        };
        let losers = stack(&mut batch.losers());
        let mut cyc = 0.0;
        let mut opt = 0.0;
        // squared residuals summed into `acc`; returns the matching output gradient
        let residual =
            |out: &[f64], target: &dyn Fn(usize) -> f64, weight: f64, acc: &mut f64| -> Vec<f64> {
                out.iter()
                    .enumerate()
                    .map(|(k, y)| {
                        let r = y - target(k);
                        *acc += r * r / m;
                        weight * 2.0 * r / m
                    })
                    .collect()
            };

        // loser path: y = F(l), opt on y, cycle on B(y)
        let f_trace = self.forward.trace(&losers, rows);
        let mut d_y = residual(&f_trace.output, &|k| mu[k % n], hp.alpha_o, &mut opt);
        if dual {
            let b_trace = self.backward.trace(&f_trace.output, rows);
            let d_z = residual(&b_trace.output, &|k| losers[k], hp.alpha_c, &mut cyc);
            if let Some(g) = grad.as_mut() {
                let back = self.backward.backward(&b_trace, &d_z, &mut g.backward);
                d_y.iter_mut().zip(back).for_each(|(d, b)| *d += b);
            }
        }
        if let Some(g) = grad.as_mut() {
            self.forward.backward(&f_trace, &d_y, &mut g.forward);
        }

        // winner path: u = B(w), cycle on F(u)
        if dual {
            let winners = stack(&mut batch.winners());
            let b_trace = self.backward.trace(&winners, rows);
            let f_trace = self.forward.trace(&b_trace.output, rows);
            let d_v = residual(&f_trace.output, &|k| winners[k], hp.alpha_c, &mut cyc);
            if let Some(g) = grad.as_mut() {
                let d_u = self.forward.backward(&f_trace, &d_v, &mut g.forward);
                self.backward.backward(&b_trace, &d_u, &mut g.backward);
            }
        }

        let terms = LossTerms {
            total: hp.alpha_c * cyc + hp.alpha_o * opt,
            cyc,
            opt,
        };
        Ok((terms, grad))
    }

    /// Runs `hp.epochs` epochs; each draws one pair batch and takes one Adam
    /// step. Reported losses are measured before each step.
    pub fn train(
        &mut self,
        split: &WinnerLoserSplit,
        hp: &TrainHyper,
        mode: TrainMode,
        rng: &mut Rng,
    ) -> Result<LossReport> {
        hp.validate()?;
        let mu_plus = split.winner_centroid()?;
        let mut opt_f = Adam::new(self.forward.num_params(), hp.learning_rate);
        let mut opt_b = Adam::new(self.backward.num_params(), hp.learning_rate);
        let mut report = LossReport::default();
        for _ in 0..hp.epochs {
            let batch = split.sample_pairs(hp.batch_size, rng)?;
            let (terms, grad) = self.evaluate(&batch, &mu_plus, hp, mode, true)?;
            let grad = grad.expect("gradient requested");
            opt_f.update(&mut self.forward, &grad.forward);
            if mode == TrainMode::Dual {
                opt_b.update(&mut self.backward, &grad.backward);
            }
            report.epochs.push(terms);
        }
        if !(self.forward.is_finite() && self.backward.is_finite()) {
            return Err(Error::NonFiniteInput("generator weights after training"));
        }
        Ok(report)
    }

    /// Flat JSON dump of both networks for debugging. Not a stable format.
    pub fn dump_json(&self) -> String {
        serde_json::to_string(self).expect("generator json")
    }
}

/// Applies one network to a coefficient vector. Output lies in `(−1, 1)`.
pub fn apply(net: &Perceptron, lambda: &CoefficientVector) -> Result<CoefficientVector> {
    let out = net.forward(lambda.as_slice())?;
    CoefficientVector::new(out)
}

/// Trains `pair` on `split` with both generators.
pub fn train_dual(
    pair: &mut GeneratorPair,
    split: &WinnerLoserSplit,
    hp: &TrainHyper,
    rng: &mut Rng,
) -> Result<LossReport> {
    pair.train(split, hp, TrainMode::Dual, rng)
}
