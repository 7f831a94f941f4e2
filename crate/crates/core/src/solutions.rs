//! Point solutions: the least-square value family and the Shapley value.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coalition::{self, binomial, Coalition};
use crate::error::{Error, Result};
use crate::game::CostGame;

/// Cost shares, one per player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<f64>);

impl Allocation {
    pub fn zeros(n: usize) -> Self {
        Allocation(vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn coalition(&self, s: Coalition) -> f64 {
        s.sum(&self.0)
    }

    pub fn sup_distance(&self, other: &Allocation) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Allocation {
        Allocation(self.0.iter().map(|x| x * k).collect())
    }
}

/// Size-symmetric coalition weights `α(s)` for `s = 1..n-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    n: usize,
    by_size: Vec<f64>,
}

impl WeightProfile {
    /// `by_size[s - 1] = α(s)`.
    pub fn new(n: usize, by_size: Vec<f64>) -> Result<Self> {
        coalition::check_player_count(n)?;
        if by_size.len() != n - 1 {
            return Err(Error::domain(format!("need {} size weights, got {}", n - 1, by_size.len())));
        }
        if by_size.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::domain("coalition weights must be positive"));
        }
        Ok(WeightProfile { n, by_size })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        WeightProfile::new(n, vec![1.0; n.saturating_sub(1)])
    }

    /// `α(s) = 1 / C(n-2, s-1)`, under which the least-square value is the
    /// Shapley value.
    pub fn shapley(n: usize) -> Result<Self> {
        coalition::check_player_count(n)?;
        WeightProfile::new(n, (1..n).map(|s| 1.0 / binomial(n - 2, s - 1)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `α(|S|)` for a proper coalition.
    #[inline]
    pub fn weight(&self, s: Coalition) -> f64 {
        self.by_size[s.size() - 1]
    }

    pub fn by_size(&self) -> &[f64] {
        &self.by_size
    }

    /// `β = Σ_{s=1}^{n-1} α(s) C(n-2, s-1)`.
    pub fn beta(&self) -> f64 {
        (1..self.n).map(|s| self.by_size[s - 1] * binomial(self.n - 2, s - 1)).sum()
    }
}

fn check_sizes(game: &CostGame, w: &WeightProfile) -> Result<()> {
    if game.n() != w.n() {
        return Err(Error::domain(format!("game has {} players but weights are for {}", game.n(), w.n())));
    }
    Ok(())
}

/// Per-player coefficients of `c(S)` in the least-square value: `LS_i =
/// c(N)/n + Σ_S coef[i][S] c(S)` over proper `S`.
pub fn ls_coefficients(w: &WeightProfile) -> Vec<Vec<f64>> {
    let n = w.n();
    let nb = n as f64 * w.beta();
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; coalition::coalition_count(n)];
            for s in coalition::proper(n) {
                let a = w.weight(s);
                let size = s.size() as f64;
                row[s.index()] = if s.contains(i) { (n as f64 - size) * a / nb } else { -size * a / nb };
            }
            row
        })
        .collect()
}

/// Sup-norm Lipschitz constant of the affine map `c ↦ LS^α(c)` with respect
/// to the sup norm on coalition costs.
pub fn ls_lipschitz(w: &WeightProfile) -> f64 {
    let n = w.n() as f64;
    ls_coefficients(w)
        .iter()
        .map(|row| 1.0 / n + row.iter().map(|a| a.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Least-square value `LS^α` by its closed form.
pub fn ls_value(game: &CostGame, w: &WeightProfile) -> Result<Allocation> {
    check_sizes(game, w)?;
    let n = game.n();
    let nb = n as f64 * w.beta();
    let mut x = vec![game.grand_cost() / n as f64; n];
    for s in coalition::proper(n) {
        let ac = w.weight(s) * game.cost(s);
        let size = s.size() as f64;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += if s.contains(i) { (n as f64 - size) * ac } else { -size * ac } / nb;
        }
    }
    Ok(Allocation(x))
}

/// Minimizer of `Σ_{S ⊊ N} α_S (c(S) - x(S))²` subject to `x(N) = c(N)`,
/// from the first-order conditions as one `(n+1)`-dimensional linear solve.
pub fn ls_projection_oracle(game: &CostGame, w: &WeightProfile) -> Result<Allocation> {
    check_sizes(game, w)?;
    let n = game.n();
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for s in coalition::proper(n) {
        let a = w.weight(s);
        for i in s.players() {
            rhs[i] += a * game.cost(s);
            for j in s.players() {
                m[(i, j)] += a;
            }
        }
    }
    for i in 0..n {
        m[(i, n)] = 1.0;
        m[(n, i)] = 1.0;
    }
    rhs[n] = game.grand_cost();
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::internal("least-squares normal equations are singular"))?;
    Ok(Allocation(sol.iter().take(n).copied().collect()))
}

/// Exact Shapley value by the subset formula.
pub fn shapley_value(game: &CostGame) -> Allocation {
    let n = game.n();
    let fact = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
    let weights: Vec<f64> = (1..=n).map(|s| fact(s - 1) * fact(n - s) / fact(n)).collect();
    let mut x = vec![0.0; n];
    for s in coalition::all(n) {
        let ws = weights[s.size() - 1];
        let cs = game.cost(s);
        for i in s.players() {
            let rest = s.mask() & !(1 << i);
            let without = if rest == 0 { 0.0 } else { game.costs()[rest as usize - 1] };
            x[i] += ws * (cs - without);
        }
    }
    Allocation(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Zero on singletons, c({1,2}) = 12, other pairs 0, c(N) = 12.
    fn six_six_zero() -> CostGame {
        CostGame::new(3, vec![0.0, 0.0, 12.0, 0.0, 0.0, 0.0, 12.0]).unwrap()
    }

    /// Independent oracle: average marginal cost over all n! orderings.
    fn shapley_by_permutations(game: &CostGame) -> Vec<f64> {
        fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for k in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(k);
                for mut p in permutations(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let n = game.n();
        let perms = permutations((0..n).collect());
        let mut x = vec![0.0; n];
        for p in &perms {
            let mut mask = 0u32;
            let mut prev = 0.0;
            for &i in p {
                mask |= 1 << i;
                let c = game.costs()[mask as usize - 1];
                x[i] += c - prev;
                prev = c;
            }
        }
        x.iter().map(|v| v / perms.len() as f64).collect()
    }

    #[test]
    fn symmetric_game_splits_equally() {
        let g = CostGame::from_fn(4, |s| [3.0, 5.0, 6.0, 8.0][s.size() - 1]).unwrap();
        let w = WeightProfile::new(4, vec![1.0, 2.0, 0.5]).unwrap();
        for x in [ls_value(&g, &w).unwrap(), ls_projection_oracle(&g, &w).unwrap(), shapley_value(&g)] {
            assert!(x.0.iter().all(|v| (v - 2.0).abs() < 1e-12), "{x:?}");
        }
    }

    #[test]
    fn two_players() {
        let g = CostGame::new(2, vec![10.0, 10.0, 15.0]).unwrap();
        for a in [0.1, 1.0, 7.0] {
            let w = WeightProfile::new(2, vec![a]).unwrap();
            assert_eq!(ls_value(&g, &w).unwrap().0, vec![7.5, 7.5]);
        }
        assert_eq!(shapley_value(&g).0, vec![7.5, 7.5]);
        let g = CostGame::new(2, vec![10.0, 4.0, 11.0]).unwrap();
        let x = ls_value(&g, &WeightProfile::uniform(2).unwrap()).unwrap();
        assert_eq!(x.0, vec![8.5, 2.5]);
    }

    #[test]
    fn six_six_zero_fixture() {
        let g = six_six_zero();
        let w = WeightProfile::uniform(3).unwrap();
        assert_eq!(WeightProfile::shapley(3).unwrap(), w);
        for x in [ls_value(&g, &w).unwrap(), ls_projection_oracle(&g, &w).unwrap(), shapley_value(&g)] {
            assert!(x.sup_distance(&Allocation(vec![6.0, 6.0, 0.0])) < 1e-12, "{x:?}");
        }
        assert_eq!(shapley_by_permutations(&g), vec![6.0, 6.0, 0.0]);
    }

    #[test]
    fn additive_game_shapley_is_the_weights() {
        let a = [1.0, 4.0, 2.5, 0.5];
        let g = CostGame::from_fn(4, |s| s.sum(&a)).unwrap();
        let x = shapley_value(&g);
        assert!(x.sup_distance(&Allocation(a.to_vec())) < 1e-12);
    }

    #[test]
    fn shapley_profile_shapes() {
        let w = WeightProfile::shapley(4).unwrap();
        assert_eq!(w.by_size(), &[1.0, 0.5, 1.0]);
        assert_eq!(w.beta(), 3.0);
        assert!(WeightProfile::new(3, vec![1.0, 0.0]).is_err());
        assert!(WeightProfile::new(3, vec![1.0]).is_err());
    }

    #[test]
    fn weight_mismatch_rejected() {
        let g = six_six_zero();
        assert!(ls_value(&g, &WeightProfile::uniform(2).unwrap()).is_err());
    }

    #[test]
    fn permutation_oracle_agrees_with_subset_formula() {
        let g = CostGame::new(3, vec![3.0, 5.0, 7.0, 4.0, 9.0, 6.0, 10.0]).unwrap();
        let a = shapley_value(&g);
        let b = shapley_by_permutations(&g);
        assert!(a.sup_distance(&Allocation(b)) < 1e-12);
    }

    #[test]
    fn coefficients_reproduce_closed_form() {
        let g = CostGame::new(3, vec![3.0, 5.0, 7.0, 4.0, 9.0, 6.0, 10.0]).unwrap();
        let w = WeightProfile::new(3, vec![2.0, 0.5]).unwrap();
        let coef = ls_coefficients(&w);
        let x = ls_value(&g, &w).unwrap();
        for i in 0..3 {
            let v = g.grand_cost() / 3.0 + coef[i].iter().zip(g.costs()).map(|(a, c)| a * c).sum::<f64>();
            assert!((v - x.0[i]).abs() < 1e-12);
        }
    }
}
