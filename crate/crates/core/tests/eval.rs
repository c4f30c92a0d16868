use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use riskq::eval::{comparison_table, estimate_policy, ComparisonRow, Estimate, EvalSettings};
use riskq::gridworld::{GridSpec, GridWorld};
use riskq::oracle::{evaluate_policy, max_value_policy, min_risk_policy};

fn settings(episodes: usize) -> EvalSettings {
    EvalSettings {
        episodes,
        gamma: 0.9,
        max_steps: 10_000,
    }
}

#[test]
fn risk_estimates_are_unbiased() {
    let world = GridWorld::new(GridSpec::default()).unwrap();
    let (policy, exact) = max_value_policy(world.mdp(), 0.9, 1e-12).unwrap();
    let mut inside = 0;
    let mut total = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let est = estimate_policy(&world, &policy, world.mdp().start(), settings(400), &mut rng);
        for s in &est.per_state {
            let p = exact.risks[s.state];
            let se = (p * (1.0 - p) / 400.0).sqrt();
            total += 1;
            if (s.risk.mean - p).abs() <= 3.0 * se + 1e-12 {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.99 * total as f64, "{inside} of {total}");
}

#[test]
fn value_estimates_converge() {
    let world = GridWorld::new(GridSpec::default()).unwrap();
    let (policy, exact) = min_risk_policy(world.mdp(), 0.9, 1e-12).unwrap();
    let truth = exact.aggregate_value(world.mdp().start());
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut last_hw = f64::INFINITY;
    for n in [100, 1000, 10_000] {
        let est = estimate_policy(&world, &policy, world.mdp().start(), settings(n), &mut rng);
        assert!(
            (est.value.mean - truth).abs() <= 1.5 * est.value.half_width,
            "n {n}"
        );
        assert!(est.value.half_width < last_hw);
        last_hw = est.value.half_width;
    }
}

#[test]
fn same_seed_same_estimate() {
    let world = GridWorld::new(GridSpec::default()).unwrap();
    let policy = riskq::mdp::ExplicitPolicy::constant(world.num_states(), 0);
    let a = estimate_policy(
        &world,
        &policy,
        world.mdp().start(),
        settings(200),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let b = estimate_policy(
        &world,
        &policy,
        world.mdp().start(),
        settings(200),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    assert_eq!(a.risk, b.risk);
    assert_eq!(a.value, b.value);
    let exact = evaluate_policy(world.mdp(), &policy, 0.9, 1.0, 1e-12).unwrap();
    assert!(
        (a.risk.mean - exact.aggregate_risk(world.mdp().start())).abs() < 4.0 * a.risk.half_width.max(0.005)
    );
}

#[test]
fn table_csv_and_text_agree() {
    let t = comparison_table(
        vec![ComparisonRow {
            label: "RL-Y-CLC".into(),
            runs: vec![vec![0.0075, 0.0081], vec![0.02, 0.03]],
        }],
        &[0.8, 0.9],
    );
    let mut csv = Vec::new();
    t.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "approach,p=0.8,p=0.9");
    assert!(csv.contains("Li et al. (2002),0.0123,0.0484"));
    assert!(csv.contains("RL-Y-CLC,0.00780 (0.00042),0.02500 (0.00707)"));
    assert!(t.to_text().contains("RL-Y-CLC          0.00780 (0.00042)"));
}

proptest! {
    #[test]
    fn bernoulli_interval_contains_mean(hits in 0usize..=500, extra in 0usize..500) {
        let n = hits + extra.max(1);
        let e = Estimate::bernoulli(hits, n, 0);
        prop_assert!(e.lower <= e.mean + 1e-12 && e.mean <= e.upper + 1e-12);
        prop_assert!(e.lower >= 0.0 && e.upper <= 1.0);
    }

    #[test]
    fn sample_mean_is_exact(xs in prop::collection::vec(-5.0f64..5.0, 1..50)) {
        let e = Estimate::from_samples(&xs, 0);
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((e.mean - m).abs() < 1e-12);
        prop_assert!(e.half_width >= 0.0);
    }
}
