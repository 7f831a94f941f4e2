//! Least-square values under several weight profiles.

use newsvendor_games::fixtures;
use newsvendor_games::solutions::{ls_coefficients, ls_projection_oracle, ls_value, shapley_value};
use newsvendor_games::WeightProfile;

fn main() -> newsvendor_games::Result<()> {
    let game = fixtures::six_six_zero();
    let n = game.n();
    for (name, w) in [
        ("uniform", WeightProfile::uniform(n)?),
        ("shapley", WeightProfile::shapley(n)?),
        ("small coalitions", WeightProfile::new(n, vec![4.0, 1.0])?),
    ] {
        let x = ls_value(&game, &w)?;
        let oracle = ls_projection_oracle(&game, &w)?;
        println!("{name:>17}: {:.6?}  (projection {:.6?})", x.0, oracle.0);
    }
    println!("{:>17}: {:.6?}", "shapley value", shapley_value(&game).0);

    let expected = fixtures::two_player_normal();
    let e = newsvendor_games::game::build_expected_game(&expected.model, expected.costs, &Default::default())?;
    let w = WeightProfile::uniform(2)?;
    println!("\ntwo stores: c_E = {:.4?}, LS = {:.4?}", e.game.costs(), ls_value(&e.game, &w)?.0);
    println!("coefficients of player 1 by coalition: {:.4?}", ls_coefficients(&WeightProfile::uniform(3)?)[0]);
    Ok(())
}
