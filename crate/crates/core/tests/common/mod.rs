#![allow(dead_code)]

pub mod dd;

use evogm::archive::{EvalRecord, PairBatch, Source, WinnerLoserSplit};
use evogm::generator::{GeneratorPair, Perceptron, TrainHyper};
use evogm::rng::{stream, Stream};
use evogm::{CoefficientVector, Evaluator};

use dd::Dd;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn cv(v: &[f64]) -> CoefficientVector {
    CoefficientVector::new(v.to_vec()).unwrap()
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Per-seed quadratic target drawn uniformly from `[-1, 1]^n`.
pub fn quadratic_target(seed: u64, n: usize) -> CoefficientVector {
    let mut rng = stream(seed, Stream::Dataset);
    cv(&uniform_vec(&mut rng, n, -1.0, 1.0))
}

pub fn quadratic(seed: u64, n: usize) -> Evaluator {
    evogm::make_quadratic(&quadratic_target(seed, n)).unwrap()
}

/// Layer-by-layer re-evaluation from the raw weights.
#[allow(clippy::needless_range_loop)]
pub fn forward_oracle(net: &Perceptron, x: &[f64]) -> Vec<f64> {
    let layers = net.layers();
    let mut a = x.to_vec();
    for (i, l) in layers.iter().enumerate() {
        let mut z = vec![0.0; l.fan_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut s = l.bias[o];
            for j in 0..l.fan_in {
                s += l.weights[o * l.fan_in + j] * a[j];
            }
            *zo = if i + 1 == layers.len() {
                s.tanh()
            } else {
                s.max(0.0)
            };
        }
        a = z;
    }
    a
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(total, cyc, opt)` recomputed from the definitions.
pub fn loss_oracle(
    pair: &GeneratorPair,
    batch: &PairBatch,
    mu: &CoefficientVector,
    hp: &TrainHyper,
) -> (f64, f64, f64) {
    let m = batch.pairs.len() as f64;
    let (mut cyc_l, mut cyc_w, mut opt) = (0.0, 0.0, 0.0);
    for (l, w) in &batch.pairs {
        let fl = forward_oracle(&pair.forward, l.as_slice());
        opt += sq_dist(&fl, mu.as_slice());
        cyc_l += sq_dist(&forward_oracle(&pair.backward, &fl), l.as_slice());
        let bw = forward_oracle(&pair.backward, w.as_slice());
        cyc_w += sq_dist(&forward_oracle(&pair.forward, &bw), w.as_slice());
    }
    let cyc = cyc_l / m + cyc_w / m;
    let opt = opt / m;
    (hp.alpha_c * cyc + hp.alpha_o * opt, cyc, opt)
}

pub fn record(seq: u64, lambda: Vec<f64>, fitness: f64) -> EvalRecord {
    EvalRecord {
        seq,
        round: 0,
        iteration: 0,
        source: Source::InitRandom,
        lambda: CoefficientVector::new(lambda).unwrap(),
        fitness,
    }
}

/// Winners scattered around `w`, losers around `l` (isotropic noise of std `spread`).
pub fn clustered_split(
    rng: &mut impl Rng,
    w: &[f64],
    l: &[f64],
    winners: usize,
    losers: usize,
    spread: f64,
) -> WinnerLoserSplit {
    let mut jitter = |c: &[f64]| -> Vec<f64> {
        c.iter()
            .map(|v| v + spread * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut seq = 0;
    let mut next = || {
        seq += 1;
        seq
    };
    WinnerLoserSplit {
        winners: (0..winners)
            .map(|_| record(next(), jitter(w), 1.0))
            .collect(),
        losers: (0..losers)
            .map(|_| record(next(), jitter(l), 0.0))
            .collect(),
        rho: winners as f64 / (winners + losers) as f64,
    }
}

/// Mean `‖F(λ⁻) − μ⁺‖₂` over the split's losers.
pub fn mapped_loser_distance(pair: &GeneratorPair, split: &WinnerLoserSplit) -> f64 {
    let mu = split.winner_centroid().unwrap();
    let total: f64 = split
        .losers
        .iter()
        .map(|r| pair.apply(&r.lambda).unwrap().l2_distance(&mu))
        .sum();
    total / split.losers.len() as f64
}

/// Flat parameters (weights then bias, layer by layer) lifted to double-double.
fn lift(net: &Perceptron) -> Vec<Dd> {
    net.flat().into_iter().map(Dd::from_f64).collect()
}

/// Forward pass in double-double; pushes each hidden unit's on/off state
/// onto `pattern`.
fn forward_dd(
    shapes: &[(usize, usize)],
    params: &[Dd],
    x: &[Dd],
    pattern: &mut Vec<bool>,
) -> Vec<Dd> {
    let mut a = x.to_vec();
    let mut off = 0;
    for (i, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let w = &params[off..off + fan_in * fan_out];
        let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        a = (0..fan_out)
            .map(|o| {
                let mut s = b[o];
                for j in 0..fan_in {
                    s = s + w[o * fan_in + j] * a[j];
                }
                if i + 1 == shapes.len() {
                    s.tanh()
                } else {
                    let r = s.max_zero();
                    pattern.push(r.hi > 0.0);
                    r
                }
            })
            .collect();
    }
    a
}

fn sq_dist_dd(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(Dd::ZERO, |acc, (x, y)| {
        let d = *x - *y;
        acc + d * d
    })
}

/// Total loss evaluated in double-double for the given flat parameters.
fn total_loss_dd(
    shapes: &[(usize, usize)],
    fwd: &[Dd],
    bwd: &[Dd],
    batch: &PairBatch,
    mu: &CoefficientVector,
    hp: &TrainHyper,
    pattern: &mut Vec<bool>,
) -> Dd {
    let lift_v = |v: &CoefficientVector| -> Vec<Dd> {
        v.as_slice().iter().map(|x| Dd::from_f64(*x)).collect()
    };
    let mu = lift_v(mu);
    let (mut cyc, mut opt) = (Dd::ZERO, Dd::ZERO);
    for (l, w) in &batch.pairs {
        let (l, w) = (lift_v(l), lift_v(w));
        let fl = forward_dd(shapes, fwd, &l, pattern);
        opt = opt + sq_dist_dd(&fl, &mu);
        cyc = cyc + sq_dist_dd(&forward_dd(shapes, bwd, &fl, pattern), &l);
        let bw = forward_dd(shapes, bwd, &w, pattern);
        cyc = cyc + sq_dist_dd(&forward_dd(shapes, fwd, &bw, pattern), &w);
    }
    let m = Dd::from_f64(batch.pairs.len() as f64);
    Dd::from_f64(hp.alpha_c) * cyc / m + Dd::from_f64(hp.alpha_o) * opt / m
}

/// Largest relative gap between the analytic gradient and central differences
/// (losses evaluated in double-double) over every parameter of both networks.
/// A stencil that flips any rectifier is not a valid difference at that point,
/// so the step shrinks until both sides share one activation pattern.
/// Relative error uses a denominator floor of `1e-8`.
pub fn max_fd_error(
    pair: &GeneratorPair,
    batch: &PairBatch,
    mu: &CoefficientVector,
    hp: &TrainHyper,
    step: f64,
) -> f64 {
    let (_, grad) = pair.grads(batch, mu, hp).unwrap();
    let analytic: Vec<f64> = grad
        .forward
        .flat()
        .into_iter()
        .chain(grad.backward.flat())
        .collect();
    let shapes = pair.forward.shapes();
    let nf = pair.forward.num_params();
    let (fwd, bwd) = (lift(&pair.forward), lift(&pair.backward));
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let eval = |delta: Dd| {
            let (mut f, mut b) = (fwd.clone(), bwd.clone());
            if k < nf {
                f[k] = f[k] + delta;
            } else {
                b[k - nf] = b[k - nf] + delta;
            }
            let mut pattern = Vec::new();
            let loss = total_loss_dd(&shapes, &f, &b, batch, mu, hp, &mut pattern);
            (loss, pattern)
        };
        let mut h = step;
        let numeric = loop {
            let hd = Dd::from_f64(h);
            let ((up, p_up), (down, p_down)) = (eval(hd), eval(-hd));
            if p_up == p_down || h < 1e-13 {
                break ((up - down) / (Dd::from_f64(2.0) * hd)).to_f64();
            }
            h *= 1e-2;
        };
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// A random tiny pair with a random batch, for gradient and loss checks.
pub fn random_case(
    seed: u64,
    n: usize,
    hidden: usize,
    batch: usize,
) -> (GeneratorPair, PairBatch, CoefficientVector) {
    let mut rng = stream(seed, Stream::Pairs);
    let mut pair = GeneratorPair::new(n, hidden, &mut stream(seed, Stream::Networks)).unwrap();
    // nonzero biases so every code path is exercised
    for net in [&mut pair.forward, &mut pair.backward] {
        for layer in net.layers_mut() {
            for b in layer.bias.iter_mut() {
                *b = rng.random_range(-0.3..0.3);
            }
        }
    }
    let pairs = (0..batch)
        .map(|_| {
            (
                cv(&uniform_vec(&mut rng, n, -1.0, 1.0)),
                cv(&uniform_vec(&mut rng, n, -1.0, 1.0)),
            )
        })
        .collect();
    let mu = cv(&uniform_vec(&mut rng, n, -0.5, 0.5));
    (pair, PairBatch { pairs }, mu)
}
