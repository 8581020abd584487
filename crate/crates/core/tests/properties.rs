use proptest::prelude::*;

use rce_core::equilibrium::{ce_lhs, check_ce, check_rce};
use rce_core::game::{expected_cost, marginal, normalize_costs, JointDistribution, PerturbedGame};
use rce_core::learner::transition_row;
use rce_core::regret::{autonomous_run, ApproachabilityIterate, RegretState};

fn shaped_game(counts: Vec<usize>, d: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = PerturbedGame> {
    let len = counts.len() * d * counts.iter().product::<usize>();
    prop::collection::vec(range, len).prop_map(move |c| PerturbedGame::new(counts.clone(), d, c).unwrap())
}

fn game_2x2x2() -> impl Strategy<Value = PerturbedGame> {
    shaped_game(vec![2, 2], 2, -5.0..5.0)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

fn any_game() -> impl Strategy<Value = (PerturbedGame, Vec<f64>)> {
    (prop::collection::vec(1usize..4, 1..4), 1usize..4).prop_flat_map(|(counts, d)| {
        let joint = counts.iter().product();
        (shaped_game(counts, d, -3.0..3.0), distribution(joint))
    })
}

proptest! {
    #[test]
    fn marginals_sum_to_one((game, p) in any_game()) {
        let dist = JointDistribution::new(game.action_counts(), p).unwrap();
        for i in 0..game.num_players() {
            let m = marginal(&dist, i).unwrap();
            prop_assert!((m.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn expected_cost_is_linear(game in game_2x2x2(), p in distribution(4), q in distribution(4), lambda in 0.0f64..=1.0) {
        let counts = [2, 2];
        let dp = JointDistribution::new(&counts, p).unwrap();
        let dq = JointDistribution::new(&counts, q).unwrap();
        let mix = JointDistribution::mix(lambda, &dp, &dq).unwrap();
        for i in 0..2 {
            for d in 0..2 {
                let lhs = expected_cost(&game, &mix, i, d).unwrap();
                let rhs = lambda * expected_cost(&game, &dp, i, d).unwrap()
                    + (1.0 - lambda) * expected_cost(&game, &dq, i, d).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn normalization_preserves_inequality_signs(game in game_2x2x2(), p in distribution(4)) {
        let norm = normalize_costs(&game);
        let dist = JointDistribution::new(&[2, 2], p).unwrap();
        for i in 0..2 {
            for (a, b) in [(0, 1), (1, 0)] {
                for d in 0..2 {
                    let raw = ce_lhs(&game, &dist, i, a, b, d).unwrap();
                    let scaled = ce_lhs(&norm, &dist, i, a, b, d).unwrap();
                    prop_assert_eq!(raw.partial_cmp(&0.0), scaled.partial_cmp(&0.0));
                }
            }
        }
    }

    #[test]
    fn rce_violation_is_worst_ce_violation((game, p) in any_game()) {
        let dist = JointDistribution::new(game.action_counts(), p).unwrap();
        let rce = check_rce(&game, &dist, 0.0).unwrap();
        let per_d = (0..game.num_disturbances())
            .map(|d| check_ce(&game, &dist, d, 0.0).unwrap().max_violation)
            .fold(f64::NEG_INFINITY, f64::max);
        if game.action_counts().iter().any(|&n| n > 1) {
            prop_assert_eq!(rce.max_violation, per_d);
        }
    }

    #[test]
    fn scaling_scales_every_lhs(game in game_2x2x2(), p in distribution(4), gamma in 0.01f64..100.0) {
        let scaled = PerturbedGame::new(
            game.action_counts().to_vec(),
            2,
            game.costs().iter().map(|c| c * gamma).collect(),
        ).unwrap();
        let dist = JointDistribution::new(&[2, 2], p).unwrap();
        for i in 0..2 {
            for d in 0..2 {
                let raw = ce_lhs(&game, &dist, i, 0, 1, d).unwrap();
                let s = ce_lhs(&scaled, &dist, i, 0, 1, d).unwrap();
                prop_assert!((s - gamma * raw).abs() <= 1e-9 * (1.0 + gamma * raw.abs()));
            }
        }
        prop_assert_eq!(
            check_rce(&game, &dist, 0.0).unwrap().is_member,
            check_rce(&scaled, &dist, 0.0).unwrap().is_member
        );
    }

    #[test]
    fn exact_members_form_a_convex_set(
        costs in prop::collection::vec(0i32..4, 16),
        lambda in prop::sample::select(vec![0.25, 0.5, 0.75]),
    ) {
        // Small integer games have pure members often enough to pair up.
        let game = PerturbedGame::new(vec![2, 2], 2, costs.into_iter().map(f64::from).collect()).unwrap();
        let members: Vec<JointDistribution> = (0..4)
            .map(|u| JointDistribution::point_mass(&[2, 2], u).unwrap())
            .filter(|x| check_rce(&game, x, 0.0).unwrap().is_member)
            .collect();
        for x in &members {
            for y in &members {
                let mix = JointDistribution::mix(lambda, x, y).unwrap();
                prop_assert!(check_rce(&game, &mix, 1e-10).unwrap().is_member);
            }
        }
    }

    #[test]
    fn transition_rows_are_stochastic(
        regrets in prop::collection::vec(
            prop_oneof![Just(0.0), 0.0f64..1.0, 1e300f64..f64::MAX],
            1..8,
        ),
        pick in any::<prop::sample::Index>(),
        inertia in prop::option::of(0.01f64..10.0),
    ) {
        let a = pick.index(regrets.len());
        let row = transition_row(&regrets, a, inertia).unwrap();
        prop_assert!(row.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((row.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn regret_invariants_hold_every_round(
        rounds in prop::collection::vec((0usize..3, prop::collection::vec(-1.0f64..1.0, 3)), 1..60),
        momentum in any::<bool>(),
    ) {
        let mut s = RegretState::new(3, momentum);
        for (a, row) in rounds {
            s.update(a, &row).unwrap();
            prop_assert!(s.invariants_hold());
            prop_assert!(s.matched_matrix().iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn iterate_forms_agree(losses in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..200)) {
        let mut three = ApproachabilityIterate::new(3);
        let mut collapsed = ApproachabilityIterate::new(3);
        for l in &losses {
            three.update(l).unwrap();
            collapsed.update_collapsed(l).unwrap();
            for (x, y) in three.current().iter().zip(collapsed.current()) {
                prop_assert!((x - y).abs() <= 1e-14);
            }
        }
    }
}

#[test]
fn autonomous_run_decays() {
    for y1 in [0.1, 1.0, 10.0] {
        let y = autonomous_run(y1, 100_000);
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!(y[3..].windows(2).all(|w| w[1] <= w[0]));
        assert!(y[100_000] < 1e-3, "y1={y1}: {}", y[100_000]);
    }
}
