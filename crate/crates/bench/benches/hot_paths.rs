use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use evogm::generator::{default_hidden, init_pair, TrainHyper, TrainMode};
use evogm::rng::{stream, Stream};
use evogm::{
    make_quadratic, make_toy_merge, Archive, CoefficientVector, ExpertPool, FitnessCache,
    ParameterVector, RecordMeta, Scope, Source, ToyMergeSpec,
};
use rand::Rng;

fn random_lambdas(n: usize, count: usize, seed: u64) -> Vec<CoefficientVector> {
    let mut rng = stream(seed, Stream::Population);
    (0..count)
        .map(|_| {
            CoefficientVector::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect()
}

fn merge(c: &mut Criterion) {
    let mut rng = stream(1, Stream::Dataset);
    let dim = 100_000;
    let mut vector =
        |_| ParameterVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let base = vector(0);
    let experts: Vec<ParameterVector> = (0..8).map(&mut vector).collect();
    let pool = ExpertPool::from_experts(base, &experts).unwrap();
    let lambda = random_lambdas(8, 1, 2).remove(0);
    c.bench_function("merge 8 experts x 100k params", |b| {
        b.iter(|| pool.merge(black_box(&lambda)).unwrap())
    });
    let elites = random_lambdas(8, 8, 3);
    c.bench_function("basis shift 8 elites x 100k params", |b| {
        b.iter(|| pool.shift_basis(black_box(&elites)).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let n = 4;
    let mut archive = Archive::new();
    let meta = RecordMeta {
        round: 0,
        iteration: 0,
        source: Source::InitRandom,
    };
    for (i, l) in random_lambdas(n, 64, 4).into_iter().enumerate() {
        archive.record(l, i as f64, meta).unwrap();
    }
    let split = archive.split(0.3, Scope::Global).unwrap();
    let hp = TrainHyper::default();
    let pair = init_pair(n, default_hidden(n), 5).unwrap();
    c.bench_function("train dual generators, 300 epochs", |b| {
        b.iter_batched(
            || (pair.clone(), stream(6, Stream::Pairs)),
            |(mut p, mut rng)| p.train(&split, &hp, TrainMode::Dual, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let population = random_lambdas(n, 8, 7);
    c.bench_function("propose 8 offspring", |b| {
        b.iter(|| pair.propose(black_box(&population)).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let lambdas = random_lambdas(4, 32, 8);
    let toy = make_toy_merge(&ToyMergeSpec::default(), 9).unwrap();
    c.bench_function("toy merge batch of 32, cold cache", |b| {
        b.iter_batched(
            FitnessCache::new,
            |cache| toy.batch_evaluate(&cache, &lambdas).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let quad = make_quadratic(&random_lambdas(4, 1, 10).remove(0)).unwrap();
    c.bench_function("quadratic batch of 32, cold cache", |b| {
        b.iter_batched(
            FitnessCache::new,
            |cache| quad.batch_evaluate(&cache, &lambdas).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, merge, training, evaluation);
criterion_main!(benches);
