use newsvendor_games::coalition::{self, Coalition};
use newsvendor_games::core_geometry::{least_core, max_excess};
use newsvendor_games::dynamic::{generic_diagonal, ConstantSource, DiagonalRun};
use newsvendor_games::lehrer::{self, ProcessState, Rule, Stride};
use newsvendor_games::solutions::{ls_lipschitz, ls_projection_oracle, ls_value, shapley_value};
use newsvendor_games::{CostGame, WeightProfile};
use proptest::prelude::*;

fn game_strategy(max_n: usize) -> impl Strategy<Value = CostGame> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0..10.0f64, coalition::coalition_count(n))
            .prop_map(move |costs| CostGame::new(n, costs).unwrap())
    })
}

fn weights_strategy(n: usize) -> impl Strategy<Value = WeightProfile> {
    prop::collection::vec(0.1..5.0f64, n - 1).prop_map(move |w| WeightProfile::new(n, w).unwrap())
}

fn game_and_weights(max_n: usize) -> impl Strategy<Value = (CostGame, WeightProfile)> {
    game_strategy(max_n).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), weights_strategy(n))
    })
}

fn permute(game: &CostGame, perm: &[usize]) -> CostGame {
    CostGame::from_fn(game.n(), |s| {
        let players: Vec<usize> = s.players().map(|i| perm[i]).collect();
        game.cost(Coalition::from_players(&players, game.n()).unwrap())
    })
    .unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ls_matches_the_weighted_projection((game, w) in game_and_weights(5)) {
        let closed = ls_value(&game, &w).unwrap();
        let oracle = ls_projection_oracle(&game, &w).unwrap();
        prop_assert!(close(&closed.0, &oracle.0, 1e-9));
        prop_assert!((closed.total() - game.grand_cost()).abs() < 1e-9);
    }

    #[test]
    fn ls_is_affine_covariant((game, w) in game_and_weights(5), k in 0.1..10.0f64, shift in prop::collection::vec(0.0..5.0f64, 5)) {
        let n = game.n();
        let moved = game.map_costs(|s, c| k * c + s.sum(&shift[..n])).unwrap();
        let x = ls_value(&game, &w).unwrap();
        let y = ls_value(&moved, &w).unwrap();
        let expected: Vec<f64> = (0..n).map(|i| k * x.0[i] + shift[i]).collect();
        prop_assert!(close(&y.0, &expected, 1e-9));
    }

    #[test]
    fn ls_and_shapley_are_permutation_covariant((game, w) in game_and_weights(4), seed in any::<u64>()) {
        let n = game.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let moved = permute(&game, &perm);
        let x = ls_value(&game, &w).unwrap();
        let y = ls_value(&moved, &w).unwrap();
        let sx = shapley_value(&game);
        let sy = shapley_value(&moved);
        for i in 0..n {
            prop_assert!((y.0[i] - x.0[perm[i]]).abs() < 1e-9);
            prop_assert!((sy.0[i] - sx.0[perm[i]]).abs() < 1e-9);
        }
    }

    #[test]
    fn ls_map_respects_its_lipschitz_bound((game, w) in game_and_weights(4), noise in prop::collection::vec(0.0..1.0f64, 15)) {
        let other = game.map_costs(|s, c| c + noise[s.index()]).unwrap();
        let gap = ls_value(&game, &w).unwrap().sup_distance(&ls_value(&other, &w).unwrap());
        prop_assert!(gap <= ls_lipschitz(&w) * game.sup_distance(&other) + 1e-12);
    }

    #[test]
    fn least_core_value_shifts_with_proper_costs(game in game_strategy(4), k in 0.0..3.0f64) {
        let n = game.n();
        let shifted = game.map_costs(|s, c| if s.is_grand(n) { c } else { c + k }).unwrap();
        let a = least_core(&game).unwrap();
        let b = least_core(&shifted).unwrap();
        prop_assert!((b.epsilon_star - (a.epsilon_star - k)).abs() < 1e-7);
        prop_assert!((max_excess(&game, &a.witness) - a.epsilon_star).abs() < 1e-7);
    }

    #[test]
    fn processes_conserve_the_budget(game in game_strategy(4), steps in 1u64..300, r2 in any::<bool>()) {
        prop_assume!(game.grand_cost() > 1e-6);
        let rule = if r2 { Rule::R2 } else { Rule::R1 };
        let w = WeightProfile::uniform(game.n()).unwrap();
        let run = lehrer::run(rule, &game, &w, steps, Stride::PowersOfTwo);
        prop_assert!((run.allocation.total() - game.grand_cost()).abs() < 1e-9 * (1.0 + game.grand_cost()));
        prop_assert_eq!(run.state.counts().iter().sum::<u64>(), steps);
        for row in &run.trace {
            prop_assert!((row.allocation.iter().sum::<f64>() - game.grand_cost()).abs() < 1e-9 * (1.0 + game.grand_cost()));
        }
    }

    #[test]
    fn r1_allocations_stay_in_the_scaled_simplex(game in game_strategy(4), steps in 1u64..200) {
        prop_assume!(game.grand_cost() > 1e-6);
        let w = WeightProfile::uniform(game.n()).unwrap();
        let x = lehrer::final_average(Rule::R1, &game, &w, steps);
        prop_assert!(x.0.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn r2_running_excess_matches_its_definition(game in game_strategy(3), steps in 1u64..100) {
        prop_assume!(game.grand_cost() > 1e-6);
        let n = game.n();
        let v: Vec<f64> = game.costs().iter().map(|c| c / game.grand_cost()).collect();
        let mut state = ProcessState::new(Rule::R2, n);
        let w = WeightProfile::uniform(n).unwrap();
        let normalized = match game.normalize() {
            newsvendor_games::game::Normalized::Game(g) => g,
            newsvendor_games::game::Normalized::Degenerate => unreachable!(),
        };
        let mut chosen = vec![0u64; n];
        for _ in 0..steps {
            let report = lehrer::step(&mut state, &normalized, &w);
            chosen[report.chosen] += 1;
        }
        let t = steps as f64;
        for s in coalition::proper(n) {
            let awarded: u64 = s.players().map(|i| chosen[i]).sum();
            let direct = v[s.index()] - awarded as f64 / t;
            prop_assert!((state.zbar(s) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_source_runs_are_reproducible(game in game_strategy(3), reps in 1usize..5) {
        let w = WeightProfile::uniform(game.n()).unwrap();
        let run = DiagonalRun::new(Rule::R1, w, 64, reps);
        let source = ConstantSource { game };
        let a = generic_diagonal(&source, &run).unwrap();
        let b = generic_diagonal(&source, &run).unwrap();
        prop_assert_eq!(a.rows, b.rows);
    }
}
