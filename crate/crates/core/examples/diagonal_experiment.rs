//! The diagonal experiment: Lehrer's process on the dynamic realization game
//! of each stage, compared with the expected game.

use newsvendor_games::dynamic::{diagonal_experiment, DiagonalConfig, DiagonalRun, DrAggregation};
use newsvendor_games::fixtures;
use newsvendor_games::game::build_expected_game;
use newsvendor_games::lehrer::Rule;
use newsvendor_games::WeightProfile;

fn main() -> newsvendor_games::Result<()> {
    let f = fixtures::two_player_normal();
    let e = build_expected_game(&f.model, f.costs, &Default::default())?;
    for rule in [Rule::R1, Rule::R2] {
        let cfg = DiagonalConfig {
            run: DiagonalRun::new(rule, WeightProfile::uniform(2)?, 1 << 14, 16),
            seed: 1,
            aggregation: DrAggregation::RunningDemand,
        };
        let trace = diagonal_experiment(&f.model, &e, &cfg)?;
        println!("{rule:?}: LS of c_E = {:.4?}", trace.ls_limit.0);
        println!("{:>7} {:>12} {:>12} {:>10} {:>8}", "T", "dist LS", "max excess", "ε_T", "φ_T");
        for s in trace.stage_summaries() {
            println!(
                "{:>7} {:>12.4} {:>12.4} {:>10.4} {:>8.4}",
                s.t, s.median_dist_ls_inf, s.median_max_excess, s.median_eps, s.phi
            );
        }
        println!();
    }
    Ok(())
}
