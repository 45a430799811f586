mod common;

use std::sync::Arc;

use common::quadratic;
use evogm::baselines::{
    compare, mean_std, mutation_ea, random_search, simple_pso, summarize, welch, CompareSpec,
    Method, MethodRun, PsoParams, WelchOutcome, DEFAULT_EA_SIGMA,
};
use evogm::rng::{stream, Stream};
use evogm::RunConfig;

#[test]
fn random_search_lands_near_optimum_in_two_dims() {
    let mut hits = 0;
    for seed in 0..50 {
        let ev = quadratic(seed, 2);
        let t = random_search(&ev, 400, (-1.0, 1.0), &mut stream(seed, Stream::Baseline)).unwrap();
        assert_eq!(t.len(), 400);
        if t.final_best() >= -0.15 {
            hits += 1;
        }
    }
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn mutation_ea_beats_random_search_mean() {
    let budget = RunConfig::new(quadratic(0, 4).spec().clone(), 0).budget();
    let mut ea = Vec::new();
    let mut rs = Vec::new();
    for seed in 0..20 {
        let ev = quadratic(seed, 4);
        ea.push(
            mutation_ea(
                &ev,
                budget,
                8,
                DEFAULT_EA_SIGMA,
                &mut stream(seed, Stream::Baseline),
            )
            .unwrap()
            .final_best(),
        );
        rs.push(
            random_search(
                &ev,
                budget,
                (-1.0, 1.0),
                &mut stream(seed, Stream::Baseline),
            )
            .unwrap()
            .final_best(),
        );
    }
    let (rs_mean, _) = mean_std(&rs);
    let wins = ea.iter().filter(|v| **v > rs_mean).count();
    assert!(wins >= 14, "{wins}/20");
}

#[test]
fn pso_converges_in_two_dims() {
    let mut hits = 0;
    for seed in 0..20 {
        let ev = quadratic(seed, 2);
        let t = simple_pso(
            &ev,
            200,
            PsoParams::default(),
            &mut stream(seed, Stream::Baseline),
        )
        .unwrap();
        assert_eq!(t.len(), 200);
        if t.final_best() >= -0.05 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn traces_respect_budget_and_stay_monotone() {
    let ev = quadratic(3, 3);
    let traces = [
        random_search(&ev, 37, (-1.0, 1.0), &mut stream(1, Stream::Baseline)).unwrap(),
        mutation_ea(
            &ev,
            37,
            6,
            DEFAULT_EA_SIGMA,
            &mut stream(1, Stream::Baseline),
        )
        .unwrap(),
        simple_pso(
            &ev,
            37,
            PsoParams::default(),
            &mut stream(1, Stream::Baseline),
        )
        .unwrap(),
    ];
    for t in &traces {
        assert_eq!(t.len(), 37, "{}", t.method);
        assert!(t.evals_used <= 37);
        assert!(t.best_so_far.windows(2).all(|w| w[1] >= w[0]));
        assert!(t
            .entries
            .iter()
            .enumerate()
            .all(|(i, e)| e.eval_index == i + 1));
        assert_eq!(t.best().unwrap().fitness, t.final_best());
    }
}

#[test]
fn degenerate_parameters_freeze_the_search() {
    let ev = quadratic(4, 2);
    // EA whose budget is its population only evaluates the initialization
    let t = mutation_ea(
        &ev,
        4,
        4,
        DEFAULT_EA_SIGMA,
        &mut stream(0, Stream::Baseline),
    )
    .unwrap();
    assert_eq!(t.len(), 4);
    // frozen swarm: zero velocity and no attraction
    let frozen = PsoParams {
        c1: 0.0,
        c2: 0.0,
        ..PsoParams::default()
    };
    let t = simple_pso(&ev, 60, frozen, &mut stream(0, Stream::Baseline)).unwrap();
    let after_init = t.best_so_far[frozen.swarm - 1];
    assert!(t
        .best_so_far
        .iter()
        .skip(frozen.swarm)
        .all(|b| *b == after_init));
    assert!(t.evals_used == frozen.swarm);
    // tiny mutation: children land on (quantized) parents and nothing improves
    let t = mutation_ea(&ev, 40, 4, 1e-12, &mut stream(0, Stream::Baseline)).unwrap();
    assert!(t.best_so_far.iter().skip(4).all(|b| *b == t.best_so_far[3]));
}

#[test]
fn fixed_seed_reproduces_traces() {
    let ev = quadratic(5, 3);
    let a = simple_pso(
        &ev,
        50,
        PsoParams::default(),
        &mut stream(2, Stream::Baseline),
    )
    .unwrap();
    let b = simple_pso(
        &ev,
        50,
        PsoParams::default(),
        &mut stream(2, Stream::Baseline),
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn welch_matches_reference_values() {
    // reference values from an independent statistics package
    let a = [0.812, 0.795, 0.830, 0.801];
    let b = [0.772, 0.790, 0.765, 0.781];
    match welch(&a, &b) {
        WelchOutcome::Test { t, dof, p } => {
            assert!((t - 3.453085658427887).abs() < 1e-9);
            assert!((dof - 5.397966869268495).abs() < 1e-9);
            assert!((p - 0.01607835880426976).abs() < 1e-8);
        }
        other => panic!("{other:?}"),
    }
    let a = [
        27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4,
    ];
    let b = [
        27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4,
    ];
    let w = welch(&a, &b);
    assert!((w.t_stat().unwrap() + 2.455356398286006).abs() < 1e-9);
    assert!((w.p_value() - 0.021378001462866985).abs() < 1e-8);
}

#[test]
fn welch_by_hand_on_four_seeds() {
    // means 2.5 and 5.5, both variances 5/3 → se² = 5/6, t = −3/√(5/6), dof = 6
    let w = welch(&[1.0, 2.0, 3.0, 4.0], &[4.0, 5.0, 6.0, 7.0]);
    match w {
        WelchOutcome::Test { t, dof, .. } => {
            assert!((t + 3.0 / (5.0f64 / 6.0).sqrt()).abs() < 1e-12);
            assert!((dof - 6.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn summary_handles_degenerate_samples() {
    let mr = |m: &str, seed, v| MethodRun {
        method: m.into(),
        seed,
        final_best: v,
        evals_used: 1,
    };
    let runs = vec![
        mr("evogm", 0, 0.5),
        mr("evogm", 1, 0.5),
        mr("random_search", 0, 0.5),
        mr("random_search", 1, 0.5),
        mr("pso", 0, 0.2),
        mr("pso", 1, 0.2),
    ];
    let s = summarize(&runs);
    assert_eq!(s[1].versus_evogm, Some(WelchOutcome::Identical));
    assert_eq!(s[2].versus_evogm.unwrap().note(), "degenerate variance");
    assert_eq!(s[2].versus_evogm.unwrap().p_value(), 0.0);
}

fn small_spec(seeds: Vec<u64>) -> (CompareSpec, Arc<evogm::Evaluator>) {
    let ev = Arc::new(quadratic(1, 2));
    let mut run = RunConfig::new(ev.spec().clone(), 0);
    run.train.epochs = 30;
    let spec = CompareSpec {
        run,
        baselines: vec![
            Method::RandomSearch {
                low: -1.0,
                high: 1.0,
                budget: None,
            },
            Method::Pso {
                params: PsoParams::default(),
                budget: None,
            },
        ],
        seeds,
    };
    (spec, ev)
}

#[test]
fn comparison_tables_have_one_row_per_method_and_seed() {
    let (spec, ev) = small_spec(vec![0, 1, 2]);
    let c = compare(&spec, ev).unwrap();
    assert_eq!(c.runs.len(), 9);
    assert_eq!(c.summary.len(), 3);
    assert!(c.runs.iter().all(|r| r.evals_used <= c.budget));
    let csv = c.runs_csv();
    assert!(csv.starts_with("method,seed,final_best,evals_used\n"));
    assert_eq!(csv.lines().count(), 10);
    let summary = c.summary_csv();
    assert!(summary.starts_with("method,mean,std,p_vs_evogm\n"));
    assert!(summary.lines().nth(1).unwrap().starts_with("evogm,"));
    assert!(summary.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn comparison_needs_two_seeds_and_a_matching_budget() {
    let (spec, ev) = small_spec(vec![0]);
    assert!(matches!(
        compare(&spec, ev.clone()),
        Err(evogm::Error::InsufficientSeeds { needed: 2, got: 1 })
    ));
    let (mut spec, _) = small_spec(vec![0, 1]);
    spec.baselines.push(Method::MutationEa {
        pop: 4,
        sigma: DEFAULT_EA_SIGMA,
        budget: Some(7),
    });
    assert!(matches!(
        compare(&spec, ev),
        Err(evogm::Error::InvalidConfig(_))
    ));
}
