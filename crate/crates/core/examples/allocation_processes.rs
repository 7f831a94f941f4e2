//! R1 and R2 on fixed games, plus the least-core variant of R2.

use newsvendor_games::core_geometry::least_core;
use newsvendor_games::fixtures;
use newsvendor_games::lehrer::{self, Rule, Stride};
use newsvendor_games::solutions::ls_value;
use newsvendor_games::WeightProfile;

fn main() -> newsvendor_games::Result<()> {
    let game = fixtures::six_six_zero();
    let w = WeightProfile::uniform(3)?;
    println!("least-square value {:.4?}", ls_value(&game, &w)?.0);
    for rule in [Rule::R1, Rule::R2] {
        let run = lehrer::run(rule, &game, &w, 1 << 14, Stride::PowersOfTwo);
        println!("\n{rule:?}");
        for row in run.trace.iter().filter(|r| r.t.trailing_zeros() % 3 == 0) {
            println!("  t={:>6} ā={:.4?} max excess {:+.4}", row.t, row.allocation, row.max_excess);
        }
    }

    let empty = fixtures::symmetric_empty_core();
    let lc = least_core(&empty)?;
    let run = lehrer::run_least_core_variant(&empty, &lc, 4096, Stride::PowersOfTwo)?;
    println!(
        "\nleast-core variant on an empty-core game: ā = {:.4?}, max excess {:.4} (ε* = {})",
        run.allocation.0,
        newsvendor_games::core_geometry::max_excess(&empty, &run.allocation),
        lc.epsilon_star
    );
    Ok(())
}
