mod common;

use common::{cv, uniform_vec};
use evogm::rng::{stream, Stream};
use evogm::{CoefficientVector, ExpertPool, ParameterVector};
use proptest::prelude::*;
use rand::Rng;

fn random_pool(rng: &mut impl Rng, n: usize, d: usize) -> ExpertPool {
    let base = ParameterVector::new(uniform_vec(rng, d, -1.0, 1.0)).unwrap();
    let experts: Vec<ParameterVector> = (0..n)
        .map(|_| ParameterVector::new(uniform_vec(rng, d, -1.0, 1.0)).unwrap())
        .collect();
    ExpertPool::from_experts(base, &experts).unwrap()
}

/// Dense `N×d` matrix of task vectors, rows indexed by expert id.
fn tau_matrix(pool: &ExpertPool) -> Vec<Vec<f64>> {
    let mut rows = vec![Vec::new(); pool.num_experts()];
    for tv in pool.task_vectors() {
        rows[tv.expert_id] = tv.delta.as_slice().to_vec();
    }
    rows
}

#[test]
fn shift_matches_dense_matrix_product() {
    let mut rng = stream(11, Stream::Dataset);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..=256);
        let pool = random_pool(&mut rng, n, d);
        let elites: Vec<CoefficientVector> = (0..n)
            .map(|_| cv(&uniform_vec(&mut rng, n, -1.0, 1.0)))
            .collect();
        let shifted = pool.shift_basis(&elites).unwrap().pool;
        let t = tau_matrix(&pool);
        let new_t = tau_matrix(&shifted);
        for i in 0..n {
            for k in 0..d {
                let expected: f64 = (0..n).map(|j| elites[i].as_slice()[j] * t[j][k]).sum();
                assert!((new_t[i][k] - expected).abs() <= 1e-10);
            }
        }
        assert_eq!(shifted.base(), pool.base());
        assert_eq!(shifted.round(), pool.round() + 1);
    }
}

#[test]
fn merge_endpoints() {
    let mut rng = stream(3, Stream::Dataset);
    let pool = random_pool(&mut rng, 4, 32);
    assert_eq!(
        pool.merge(&CoefficientVector::zeros(4)).unwrap(),
        *pool.base()
    );
    for tv in pool.task_vectors() {
        let merged = pool
            .merge(&CoefficientVector::one_hot(4, tv.expert_id))
            .unwrap();
        for ((m, b), t) in merged
            .as_slice()
            .iter()
            .zip(pool.base().as_slice())
            .zip(tv.delta.as_slice())
        {
            assert!((m - (b + t)).abs() <= 1e-12);
        }
    }
}

#[test]
fn merge_rejects_wrong_length() {
    let pool = ExpertPool::identity(3).unwrap();
    assert!(matches!(
        pool.merge(&cv(&[1.0, 2.0])),
        Err(evogm::Error::DimensionMismatch {
            expected: 3,
            found: 2
        })
    ));
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #[test]
    fn merge_is_affine_in_lambda(
        seed in 0u64..1000,
        a in coeffs(4),
        b in coeffs(4),
        s in -3.0f64..3.0,
    ) {
        let pool = random_pool(&mut stream(seed, Stream::Dataset), 4, 16);
        let base = pool.base().as_slice().to_vec();
        let delta = |l: &[f64]| -> Vec<f64> {
            pool.merge(&cv(l)).unwrap().as_slice().iter().zip(&base).map(|(m, b)| m - b).collect()
        };
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
        let lhs = delta(&combo);
        let (da, db) = (delta(&a), delta(&b));
        for k in 0..lhs.len() {
            let rhs = s * da[k] + db[k];
            prop_assert!((lhs[k] - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn shifted_merge_equals_transposed_old_merge(
        seed in 0u64..1000,
        mu in coeffs(3),
        e0 in coeffs(3),
        e1 in coeffs(3),
        e2 in coeffs(3),
    ) {
        let pool = random_pool(&mut stream(seed, Stream::Dataset), 3, 8);
        let elites = [cv(&e0), cv(&e1), cv(&e2)];
        let shifted = pool.shift_basis(&elites).unwrap().pool;
        let pulled: Vec<f64> = (0..3)
            .map(|j| (0..3).map(|i| mu[i] * elites[i].as_slice()[j]).sum())
            .collect();
        let lhs = shifted.merge(&cv(&mu)).unwrap();
        let rhs = pool.merge(&cv(&pulled)).unwrap();
        for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn binary_pool_round_trip(seed in 0u64..1000, n in 2usize..6, d in 1usize..40) {
        let pool = random_pool(&mut stream(seed, Stream::Dataset), n, d);
        let mut buf = Vec::new();
        pool.write_binary(&mut buf).unwrap();
        let back = ExpertPool::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back.base(), pool.base());
        prop_assert_eq!(back.task_vectors(), pool.task_vectors());
    }
}
