//! Probability that a fixed allocation meets every constraint of a random
//! realization game, with the grand-coalition cost inside an efficiency
//! band.

use newsvendor_games::core_geometry::{phi_quantile, stochastic_core_probability, Epsilon};
use newsvendor_games::fixtures;
use newsvendor_games::game::{build_expected_game, build_realization_game};
use newsvendor_games::rng;
use newsvendor_games::solutions::ls_value;
use newsvendor_games::WeightProfile;

fn main() -> newsvendor_games::Result<()> {
    let f = fixtures::two_player_normal();
    let e = build_expected_game(&f.model, f.costs, &Default::default())?;
    let x = ls_value(&e.game, &WeightProfile::uniform(2)?)?;

    let sample = |_r: u64, rng: &mut rng::StreamRng| {
        let mut state = f.model.initial_state(rng);
        let demand = f.model.sample_period(&mut state, rng);
        build_realization_game(&demand, &e.quantities, f.costs)
    };

    let grand: Vec<f64> = (0..2000)
        .map(|r| sample(r, &mut rng::stream(4, 1, r)).map(|g| g.grand_cost()))
        .collect::<newsvendor_games::Result<_>>()?;
    let centre = grand.iter().sum::<f64>() / grand.len() as f64;
    let band = phi_quantile(&grand, centre, 0.95)?;
    println!("allocation {:.4?}, efficiency band ±{:.4}", x.0, band.phi);

    for eps in [0.0, 5.0, 10.0, 20.0] {
        let p = stochastic_core_probability(sample, &x, &Epsilon::Fixed(eps), band, 5000, 11)?;
        println!(
            "ε = {eps:>4}: P = {:.4} [{:.4}, {:.4}], constraints alone {:.4}",
            p.estimate, p.lower, p.upper, p.constraint_rate
        );
    }
    let p = stochastic_core_probability(sample, &x, &Epsilon::DistanceTo(e.game.clone()), band, 5000, 11)?;
    println!("ε = sup distance to c_E: P = {:.4}", p.estimate);
    Ok(())
}
