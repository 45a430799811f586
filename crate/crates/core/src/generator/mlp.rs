use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of affine maps in every generator network.
pub const DEPTH: usize = 5;

/// Dense affine map, weights stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut layer = Self::zeros(fan_in, fan_out);
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }
}

/// Five-layer perceptron: rectifier hidden units, `tanh` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perceptron {
    layers: Vec<Layer>,
}

impl Perceptron {
    /// `n → hidden ×4 → n`, scaled-uniform weights, zero biases.
    pub fn new(n: usize, hidden: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        if n == 0 || hidden == 0 {
            return Err(Error::InvalidDimension(format!(
                "generator needs n >= 1 and hidden >= 1, got n={n}, hidden={hidden}"
            )));
        }
        let dims = Self::dims(n, hidden);
        let layers = dims
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    fn dims(n: usize, hidden: usize) -> [usize; DEPTH + 1] {
        [n, hidden, hidden, hidden, hidden, n]
    }

    /// Same shapes, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[DEPTH - 1].fan_out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params());
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(self.trace(x, 1).output)
    }
}

/// Activations of a forward pass over a whole batch, stored row-major
/// (`rows × width` per layer).
pub(crate) struct Trace {
    rows: usize,
    inputs: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

/// `acc += a · x`, elementwise.
fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

impl Perceptron {
    /// Forward pass over `rows` inputs laid out row-major in `xs`.
    pub(crate) fn trace(&self, xs: &[f64], rows: usize) -> Trace {
        let mut inputs = Vec::with_capacity(DEPTH);
        let mut cur = xs.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            // transposed weights turn each output row into a sum of scaled rows
            let mut wt = vec![0.0; fi * fo];
            for o in 0..fo {
                for j in 0..fi {
                    wt[j * fo + o] = layer.weights[o * fi + j];
                }
            }
            let mut next = Vec::with_capacity(rows * fo);
            for s in 0..rows {
                let start = next.len();
                next.extend_from_slice(&layer.bias);
                let z = &mut next[start..];
                for (j, &a) in cur[s * fi..(s + 1) * fi].iter().enumerate() {
                    if a != 0.0 {
                        axpy(z, a, &wt[j * fo..(j + 1) * fo]);
                    }
                }
                if i + 1 < DEPTH {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                } else {
                    z.iter_mut().for_each(|v| *v = v.tanh());
                }
            }
            inputs.push(std::mem::replace(&mut cur, next));
        }
        Trace {
            rows,
            inputs,
            output: cur,
        }
    }

    /// Accumulates parameter gradients into `grad` given `d_out`,
    /// `rows × output_dim`; returns the input gradient, `rows × input_dim`.
    pub(crate) fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut Perceptron) -> Vec<f64> {
        let mut dz: Vec<f64> = d_out
            .iter()
            .zip(&trace.output)
            .map(|(d, y)| d * (1.0 - y * y))
            .collect();
        for li in (0..DEPTH).rev() {
            let layer = &self.layers[li];
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            let g = &mut grad.layers[li];
            let a = &trace.inputs[li];
            let mut da = vec![0.0; trace.rows * fi];
            for s in 0..trace.rows {
                let a_s = &a[s * fi..(s + 1) * fi];
                let da_s = &mut da[s * fi..(s + 1) * fi];
                for (o, &d) in dz[s * fo..(s + 1) * fo].iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    axpy(&mut g.weights[o * fi..(o + 1) * fi], d, a_s);
                    axpy(da_s, d, &layer.weights[o * fi..(o + 1) * fi]);
                }
                if li > 0 {
                    for (d, av) in da_s.iter_mut().zip(a_s) {
                        if *av <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
            dz = da;
        }
        dz
    }
}
