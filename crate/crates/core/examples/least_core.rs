//! Least-core values and witnesses.

use newsvendor_games::core_geometry::{core_membership, is_balanced, least_core, max_excess, DEFAULT_TOL};
use newsvendor_games::fixtures;
use newsvendor_games::Allocation;

fn main() -> newsvendor_games::Result<()> {
    for (name, game) in [
        ("pooling (10, 10, 15)", fixtures::two_player_pooling()),
        ("six-six-zero", fixtures::six_six_zero()),
        ("symmetric empty core", fixtures::symmetric_empty_core()),
    ] {
        let lc = least_core(&game)?;
        println!(
            "{name:>22}: ε* = {:+.4}  witness {:.4?}  balanced {}",
            lc.epsilon_star,
            lc.witness.0,
            is_balanced(&game)?
        );
    }
    let pool = fixtures::two_player_pooling();
    for x in [vec![7.5, 7.5], vec![11.0, 4.0]] {
        let a = Allocation(x);
        println!("{:?}: max excess {:+.2}, in core {}", a.0, max_excess(&pool, &a), core_membership(&pool, &a, DEFAULT_TOL));
    }
    Ok(())
}
