//! Sup distance between the dynamic realization game and the expected game
//! as the history grows, for the two ways of aggregating the history.
//!
//! Costs of the running average demand settle at `g_S(μ_S)`; the running
//! average of realized costs settles at `c_E(S)`.

use newsvendor_games::dynamic::{dr_error_path, median, DrAggregation};
use newsvendor_games::fixtures;
use newsvendor_games::game::build_expected_game;

fn main() -> newsvendor_games::Result<()> {
    let f = fixtures::two_player_normal();
    let e = build_expected_game(&f.model, f.costs, &Default::default())?;
    let checkpoints = [10, 100, 1_000, 10_000, 100_000];
    println!("c_E = {:.4?}", e.game.costs());
    println!("{:>8} {:>16} {:>16}", "T", "running demand", "running cost");
    let demand = dr_error_path(&f.model, &e, &checkpoints, 20, 3, DrAggregation::RunningDemand)?;
    let cost = dr_error_path(&f.model, &e, &checkpoints, 20, 3, DrAggregation::RunningCost)?;
    for (k, t) in checkpoints.iter().enumerate() {
        println!("{t:>8} {:>16.4} {:>16.4}", median(&demand[k]), median(&cost[k]));
    }
    Ok(())
}
