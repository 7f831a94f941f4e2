//! Standard demand models, small named games and random instance
//! generators.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::coalition::{self, Coalition};
use crate::core_geometry::least_core;
use crate::demand::{DemandModel, DemandSpec, MarginalSpec, Regime, Temporal};
use crate::error::Result;
use crate::game::{CostGame, CostParams};
use crate::solutions::{ls_value, WeightProfile};

/// A demand model together with its newsvendor cost rates.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub model: DemandModel,
    pub costs: CostParams,
}

/// Two iid normal(100, 10²) stores, `p = h = 1`.
pub fn two_player_normal() -> Fixture {
    Fixture {
        name: "two-player-normal",
        model: DemandModel::iid_normal(&[100.0, 100.0], &[10.0, 10.0]).expect("valid fixture"),
        costs: CostParams::new(1.0, 1.0).expect("valid fixture"),
    }
}

/// Three correlated normal stores, `p = 3`, `h = 1`.
///
/// Means 100, standard deviations 10, 15, 20, pairwise correlation 0.3.
/// Unequal rates are needed for empty-core realizations at three players.
pub fn three_player_correlated() -> Fixture {
    let rho = 0.3;
    let corr = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { rho }).collect()).collect();
    let spec = DemandSpec {
        marginals: [10.0, 15.0, 20.0].iter().map(|&sd| MarginalSpec::normal(100.0, sd)).collect(),
        correlation: Some(corr),
        temporal: Temporal::Iid,
    };
    Fixture {
        name: "three-player-correlated",
        model: DemandModel::new(spec).expect("valid fixture"),
        costs: CostParams::new(3.0, 1.0).expect("valid fixture"),
    }
}

/// The two-player fixture with AR(1) dependence over time.
pub fn two_player_ar1(rho: f64) -> Result<Fixture> {
    let base = two_player_normal();
    Ok(Fixture { name: "two-player-ar1", model: base.model.with_temporal(Temporal::Ar1 { rho })?, ..base })
}

/// The two-player fixture with two equally likely regimes shifting every
/// mean by `+shift` or `-shift`.
pub fn two_player_regimes(shift: f64) -> Result<Fixture> {
    let base = two_player_normal();
    let regimes = vec![
        Regime { probability: 0.5, shifts: vec![shift, shift] },
        Regime { probability: 0.5, shifts: vec![-shift, -shift] },
    ];
    Ok(Fixture { name: "two-player-regimes", model: base.model.with_temporal(Temporal::RegimeMixture { regimes })?, ..base })
}

/// `c({1,2}) = c(N) = 12`, every other coalition free. Least-square and
/// Shapley value `(6, 6, 0)`.
pub fn six_six_zero() -> CostGame {
    CostGame::new(3, vec![0.0, 0.0, 12.0, 0.0, 0.0, 0.0, 12.0]).expect("valid fixture")
}

/// `c = (10, 10, 15)`: least-core value `-2.5` at `(7.5, 7.5)`.
pub fn two_player_pooling() -> CostGame {
    CostGame::new(2, vec![10.0, 10.0, 15.0]).expect("valid fixture")
}

/// Singletons and pairs cost 1, `c(N) = 3`: empty core, least-core value 1
/// at `(1, 1, 1)`.
pub fn symmetric_empty_core() -> CostGame {
    CostGame::from_fn(3, |s| if s.size() == 3 { 3.0 } else { 1.0 }).expect("valid fixture")
}

/// Costs uniform on `[0, 10)` for every coalition.
pub fn random_game<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CostGame> {
    let costs = (0..coalition::coalition_count(n)).map(|_| rng.random_range(0.0..10.0)).collect();
    CostGame::new(n, costs)
}

/// A pooling-like game `c(S) = u_S · Σ_{i∈S} a_i` whose least-square value
/// gives every player at least `min_share · c(N)`. Averages of one-player
/// budget assignments stay in the simplex, so only such games can be
/// reached by R1.
pub fn random_ls_interior_game<R: Rng + ?Sized>(n: usize, w: &WeightProfile, min_share: f64, rng: &mut R) -> Result<CostGame> {
    loop {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let costs: Vec<f64> = coalition::all(n).map(|s| rng.random_range(0.5..1.0) * s.sum(&a)).collect();
        let game = CostGame::new(n, costs)?;
        let ls = ls_value(&game, w)?;
        if ls.0.iter().all(|&x| x >= min_share * game.grand_cost()) {
            return Ok(game);
        }
    }
}

/// A game with a known core point: `x*` is uniform on the simplex scaled by
/// `c(N) ∈ [10, 100)` and each proper coalition pays `x*(S)` plus
/// a slack uniform on `[0, 0.3 c(N))`. Balancedness is rechecked by LP.
pub fn random_balanced_game<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CostGame> {
    let total = rng.random_range(10.0..100.0);
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = e.iter().sum();
    let x: Vec<f64> = e.iter().map(|v| total * v / sum).collect();
    let costs: Vec<f64> = coalition::all(n)
        .map(|s| if s.is_grand(n) { total } else { s.sum(&x) + rng.random_range(0.0..0.3 * total) })
        .collect();
    let game = CostGame::new(n, costs)?;
    let lc = least_core(&game)?;
    if lc.epsilon_star > 1e-9 * total {
        return Err(crate::error::Error::internal(format!(
            "generated game is not balanced (ε* = {:e})",
            lc.epsilon_star
        )));
    }
    Ok(game)
}

/// Normal marginals with means in `[50, 150)`, standard deviations in
/// `[5, 30)`, a random correlation matrix, and `p, h ∈ [0.5, 5)`.
pub fn random_normal_fixture<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Fixture> {
    // Correlation from normalized Gram vectors of dimension n.
    let vecs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let corr: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum() })
                .collect()
        })
        .collect();
    let marginals = (0..n)
        .map(|_| MarginalSpec::normal(rng.random_range(50.0..150.0), rng.random_range(5.0..30.0)))
        .collect();
    let spec = DemandSpec { marginals, correlation: Some(corr), temporal: Temporal::Iid };
    Ok(Fixture {
        name: "random-normal",
        model: DemandModel::new(spec)?,
        costs: CostParams::new(rng.random_range(0.5..5.0), rng.random_range(0.5..5.0))?,
    })
}

/// Coalition from 1-based player labels, for examples and tests.
pub fn players(labels: &[usize], n: usize) -> Result<Coalition> {
    let zero_based: Vec<usize> = labels.iter().map(|l| l.wrapping_sub(1)).collect();
    Coalition::from_players(&zero_based, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn fixture_values() {
        assert_eq!(six_six_zero().cost(players(&[1, 2], 3).unwrap()), 12.0);
        assert!((least_core(&symmetric_empty_core()).unwrap().epsilon_star - 1.0).abs() < 1e-12);
        assert!((least_core(&two_player_pooling()).unwrap().epsilon_star + 2.5).abs() < 1e-12);
        assert!(three_player_correlated().model.is_gaussian());
        assert!((three_player_correlated().model.correlation(0, 2) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn generators() {
        let mut rng = stream(1, 0, 0);
        let w = WeightProfile::uniform(4).unwrap();
        for _ in 0..10 {
            let g = random_ls_interior_game(4, &w, 0.05, &mut rng).unwrap();
            assert!(ls_value(&g, &w).unwrap().0.iter().all(|&x| x >= 0.05 * g.grand_cost()));
            random_balanced_game(4, &mut rng).unwrap();
            let f = random_normal_fixture(3, &mut rng).unwrap();
            assert_eq!(f.model.n(), 3);
        }
    }
}
