//! Desk-scale expert merging: a Gaussian-blob classification problem, a weak
//! generalist base classifier, and experts fine-tuned on disjoint class subsets.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::{ExpertPool, ParameterVector};
use crate::rng::{stream, Stream};

const CLASS_MEAN_SCALE: f64 = 0.7;
const STEP_SIZE: f64 = 0.1;
const BASE_STEPS: usize = 50;
const BASE_SUBSAMPLE: f64 = 0.25;
const EXPERT_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyMergeSpec {
    pub num_experts: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub val_fraction: f64,
}

impl Default for ToyMergeSpec {
    fn default() -> Self {
        Self {
            num_experts: 4,
            feature_dim: 8,
            num_classes: 8,
            samples_per_class: 50,
            val_fraction: 0.3,
        }
    }
}

impl ToyMergeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts < 2 {
            return Err(Error::InvalidSpec("num_experts must be >= 2".into()));
        }
        if self.num_classes < self.num_experts {
            return Err(Error::InvalidSpec(format!(
                "num_classes ({}) must be >= num_experts ({})",
                self.num_classes, self.num_experts
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidSpec("val_fraction must lie in (0, 1)".into()));
        }
        let n_val = self.val_per_class();
        if n_val == 0 || n_val >= self.samples_per_class {
            return Err(Error::InvalidSpec(format!(
                "empty split: {} of {} samples per class go to validation",
                n_val, self.samples_per_class
            )));
        }
        Ok(())
    }

    fn val_per_class(&self) -> usize {
        (self.val_fraction * self.samples_per_class as f64).round() as usize
    }

    /// Expert owning class `c` (round-robin).
    pub fn owner_of(&self, class: usize) -> usize {
        class % self.num_experts
    }

    /// Length of the flattened classifier: `C·D` weights then `C` biases.
    pub fn param_dim(&self) -> usize {
        self.num_classes * (self.feature_dim + 1)
    }
}

/// Row-major features with one label per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            feature_dim: self.feature_dim,
            features,
            labels,
        }
    }
}

/// Multinomial linear classifier viewed through a flat parameter slice.
#[derive(Debug, Clone, Copy)]
pub struct LinearClassifier<'a> {
    params: &'a [f64],
    num_classes: usize,
    feature_dim: usize,
}

impl<'a> LinearClassifier<'a> {
    pub fn new(params: &'a [f64], num_classes: usize, feature_dim: usize) -> Self {
        debug_assert_eq!(params.len(), num_classes * (feature_dim + 1));
        Self {
            params,
            num_classes,
            feature_dim,
        }
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        let bias = &self.params[self.num_classes * self.feature_dim..];
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.params[c * self.feature_dim..(c + 1) * self.feature_dim];
            *o = bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut logits = vec![0.0; self.num_classes];
        self.logits_into(x, &mut logits);
        let mut best = 0;
        for c in 1..self.num_classes {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        best
    }

    /// Accuracy over the rows whose label passes `keep`.
    pub fn accuracy_where(&self, data: &Dataset, keep: impl Fn(usize) -> bool) -> f64 {
        let mut total = 0usize;
        let mut correct = 0usize;
        for i in 0..data.len() {
            if keep(data.labels[i]) {
                total += 1;
                if self.predict(data.row(i)) == data.labels[i] {
                    correct += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        self.accuracy_where(data, |_| true)
    }
}

/// Full-batch gradient descent on mean softmax cross-entropy.
fn train_softmax(params: &mut [f64], data: &Dataset, num_classes: usize, steps: usize) {
    let d = data.feature_dim;
    let m = data.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut probs = vec![0.0; num_classes];
    for _ in 0..steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        {
            let clf = LinearClassifier::new(params, num_classes, d);
            for i in 0..data.len() {
                let x = data.row(i);
                clf.logits_into(x, &mut probs);
                let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for p in probs.iter_mut() {
                    *p = (*p - max).exp();
                    z += *p;
                }
                for (c, p) in probs.iter().enumerate() {
                    let g = (p / z - if c == data.labels[i] { 1.0 } else { 0.0 }) / m;
                    for (gw, xj) in grad[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *gw += g * xj;
                    }
                    grad[num_classes * d + c] += g;
                }
            }
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= STEP_SIZE * g;
        }
    }
}

/// The constructed toy-merge problem. Datasets are regenerated from the seed
/// and never persisted.
#[derive(Debug, Clone)]
pub struct ToyMerge {
    spec: ToyMergeSpec,
    train: Dataset,
    validation: Dataset,
    base: ParameterVector,
    experts: Vec<ParameterVector>,
}

impl ToyMerge {
    pub fn build(spec: &ToyMergeSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream(seed, Stream::Dataset);
        let (c_n, d) = (spec.num_classes, spec.feature_dim);

        let means: Vec<f64> = (0..c_n * d)
            .map(|_| CLASS_MEAN_SCALE * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n_val = spec.val_per_class();
        let mut train_idx = Vec::new();
        let mut val_idx = Vec::new();
        let mut all = Dataset {
            feature_dim: d,
            features: Vec::with_capacity(c_n * spec.samples_per_class * d),
            labels: Vec::with_capacity(c_n * spec.samples_per_class),
        };
        for c in 0..c_n {
            let start = all.len();
            for _ in 0..spec.samples_per_class {
                for j in 0..d {
                    let noise: f64 = rng.sample(StandardNormal);
                    all.features.push(means[c * d + j] + noise);
                }
                all.labels.push(c);
            }
            let mut idx: Vec<usize> = (start..all.len()).collect();
            idx.shuffle(&mut rng);
            val_idx.extend_from_slice(&idx[..n_val]);
            train_idx.extend_from_slice(&idx[n_val..]);
        }
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        let train = all.subset(&train_idx);
        let validation = all.subset(&val_idx);

        let mut sub: Vec<usize> = (0..train.len()).collect();
        sub.shuffle(&mut rng);
        let take = ((BASE_SUBSAMPLE * train.len() as f64).ceil() as usize).max(1);
        let mut sub = sub[..take].to_vec();
        sub.sort_unstable();
        let mut base = vec![0.0; spec.param_dim()];
        train_softmax(&mut base, &train.subset(&sub), c_n, BASE_STEPS);

        let experts = (0..spec.num_experts)
            .map(|e| {
                let own: Vec<usize> = (0..train.len())
                    .filter(|&i| spec.owner_of(train.labels[i]) == e)
                    .collect();
                let mut params = base.clone();
                train_softmax(&mut params, &train.subset(&own), c_n, EXPERT_STEPS);
                ParameterVector::new(params)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            spec: spec.clone(),
            train,
            validation,
            base: ParameterVector::new(base)?,
            experts,
        })
    }

    pub fn spec(&self) -> &ToyMergeSpec {
        &self.spec
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn validation(&self) -> &Dataset {
        &self.validation
    }

    pub fn base_params(&self) -> &ParameterVector {
        &self.base
    }

    pub fn expert_params(&self) -> &[ParameterVector] {
        &self.experts
    }

    pub fn pool(&self) -> Result<ExpertPool> {
        ExpertPool::from_experts(self.base.clone(), &self.experts)
    }

    pub fn classifier<'a>(&self, params: &'a ParameterVector) -> LinearClassifier<'a> {
        LinearClassifier::new(
            params.as_slice(),
            self.spec.num_classes,
            self.spec.feature_dim,
        )
    }

    /// Validation accuracy of arbitrary classifier parameters.
    pub fn score(&self, params: &ParameterVector) -> f64 {
        self.classifier(params).accuracy(&self.validation)
    }

    /// Validation accuracy restricted to the classes owned by `expert`.
    pub fn own_slice_accuracy(&self, params: &ParameterVector, expert: usize) -> f64 {
        self.classifier(params)
            .accuracy_where(&self.validation, |c| self.spec.owner_of(c) == expert)
    }
}
