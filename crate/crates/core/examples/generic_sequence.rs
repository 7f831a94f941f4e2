//! The diagonal loop on a user-supplied sequence of games converging to a
//! known limit.

use newsvendor_games::dynamic::{generic_diagonal, DeterministicSource, DiagonalRun};
use newsvendor_games::lehrer::Rule;
use newsvendor_games::{CostGame, WeightProfile};

fn main() -> newsvendor_games::Result<()> {
    let limit = CostGame::new(3, vec![4.0, 5.0, 7.0, 6.0, 8.0, 9.0, 12.0])?;
    let source = DeterministicSource {
        limit: limit.clone(),
        f: |t: u64| {
            let wobble = if t % 2 == 0 { 1.0 } else { -1.0 } / t as f64;
            limit.map_costs(|s, c| if s.is_grand(3) { c } else { (c + wobble).max(0.0) })
        },
    };
    let run = DiagonalRun::new(Rule::R1, WeightProfile::uniform(3)?, 1 << 12, 1);
    let trace = generic_diagonal(&source, &run)?;
    println!("LS of the limit {:.4?} (Lipschitz constant {:.3})", trace.ls_limit.0, trace.lipschitz);
    for row in &trace.rows {
        println!("T={:>5} ā={:.4?} dist {:.4} ε_T {:.2e}", row.t, row.allocation, row.dist_ls_inf, row.eps);
    }
    Ok(())
}
