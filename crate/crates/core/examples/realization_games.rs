//! One-period realization games and a search for an empty core.

use newsvendor_games::core_geometry::least_core;
use newsvendor_games::dynamic::{empty_core_search, SearchOutcome};
use newsvendor_games::fixtures;
use newsvendor_games::game::{build_expected_game, build_realization_game, EstimatorConfig};
use newsvendor_games::rng;

fn main() -> newsvendor_games::Result<()> {
    let f = fixtures::three_player_correlated();
    let e = build_expected_game(&f.model, f.costs, &EstimatorConfig::default())?;

    let mut r = rng::stream(5, 0, 0);
    let mut state = f.model.initial_state(&mut r);
    for period in 0..3 {
        let demand = f.model.sample_period(&mut state, &mut r);
        let game = build_realization_game(&demand, &e.quantities, f.costs)?;
        let lc = least_core(&game)?;
        println!("period {period}: demand {demand:.1?} costs {:.2?} ε* = {:.3}", game.costs(), lc.epsilon_star);
    }

    match empty_core_search(&f.model, &e.quantities, f.costs, 10_000, 2024)? {
        SearchOutcome::Found { attempt, demand, game, least_core } => {
            println!("\nempty core at draw {attempt}");
            println!("demand {demand:.2?}");
            println!("costs  {:.3?}", game.costs());
            println!("ε* = {:.4}, least-core point {:.3?}", least_core.epsilon_star, least_core.witness.0);
        }
        SearchOutcome::Exhausted { attempts, max_epsilon } => {
            println!("no empty core in {attempts} draws (largest ε* {max_epsilon:.3e})");
        }
    }
    Ok(())
}
