//! Expected costs of every coalition for three correlated stores, closed form
//! and Monte Carlo side by side.

use newsvendor_games::coalition;
use newsvendor_games::fixtures;
use newsvendor_games::game::{build_expected_game, CostMethod, EstimatorConfig};

fn main() -> newsvendor_games::Result<()> {
    let f = fixtures::three_player_correlated();
    let closed = build_expected_game(&f.model, f.costs, &EstimatorConfig::default())?;
    let mc = build_expected_game(
        &f.model,
        f.costs,
        &EstimatorConfig { samples: 200_000, seed: 7, method: CostMethod::MonteCarlo },
    )?;
    println!("{:>6} {:>10} {:>12} {:>12} {:>8}", "S", "q_S", "closed", "monte-carlo", "se");
    for s in coalition::all(f.model.n()) {
        println!(
            "{:>6} {:>10.3} {:>12.5} {:>12.5} {:>8.4}",
            format!("{:03b}", s.mask()),
            closed.quantities.get(s),
            closed.game.cost(s),
            mc.game.cost(s),
            mc.standard_errors[s.index()]
        );
    }
    println!("\n{}", serde_json::to_string_pretty(&closed.game.to_document()).unwrap());
    Ok(())
}
