//! Core membership, ε-cores and the least core, efficiency bands and
//! Monte Carlo estimates of stochastic-core probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{self, Coalition};
use crate::error::{Error, Result};
use crate::game::CostGame;
use crate::lp::LinearProgram;
use crate::rng::{self, StreamRng};
use crate::solutions::Allocation;

pub const DEFAULT_TOL: f64 = 1e-9;

/// `max_{∅ ≠ S ⊊ N} x(S) - c(S)`.
pub fn max_excess(game: &CostGame, x: &Allocation) -> f64 {
    let sums = coalition::subset_sums(x.as_slice());
    coalition::proper(game.n())
        .map(|s| sums[s.index()] - game.cost(s))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn core_membership(game: &CostGame, x: &Allocation, tol: f64) -> bool {
    (x.total() - game.grand_cost()).abs() <= tol && max_excess(game, x) <= tol
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastCoreResult {
    pub epsilon_star: f64,
    pub witness: Allocation,
}

/// Solves `min ε  s.t.  x(S) <= c(S) + ε  (S ⊊ N),  x(N) = c(N)`.
///
/// The LP handed to the simplex is the dual, which has `n + 1` rows and one
/// column per proper coalition:
///
/// `min Σ_S λ_S c(S) - μ c(N)  s.t.  Σ_{S ∋ i} λ_S = μ,  Σ_S λ_S = 1,  λ, μ >= 0`.
///
/// Its optimal value is `-ε*`, and its multipliers are `(x, -ε*)`.
pub fn least_core(game: &CostGame) -> Result<LeastCoreResult> {
    let n = game.n();
    let scale = game.costs().iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(LeastCoreResult { epsilon_star: 0.0, witness: Allocation::zeros(n) });
    }
    let proper: Vec<Coalition> = coalition::proper(n).collect();
    let cols = proper.len() + 1;
    let mut rows = vec![vec![0.0; cols]; n + 1];
    let mut objective = vec![0.0; cols];
    for (j, s) in proper.iter().enumerate() {
        for i in s.players() {
            rows[i][j] = 1.0;
        }
        rows[n][j] = 1.0;
        objective[j] = game.cost(*s) / scale;
    }
    for row in rows.iter_mut().take(n) {
        row[cols - 1] = -1.0;
    }
    objective[cols - 1] = -game.grand_cost() / scale;
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;

    let sol = LinearProgram { objective, rows, rhs }.solve()?;
    let witness = Allocation(sol.duals[..n].iter().map(|y| y * scale).collect());
    let epsilon_star = -sol.objective * scale;

    let tol = DEFAULT_TOL * scale.max(1.0);
    let efficiency_gap = (witness.total() - game.grand_cost()).abs();
    let excess = max_excess(game, &witness);
    if efficiency_gap > tol || excess > epsilon_star + tol {
        return Err(Error::internal(format!(
            "least-core witness fails its constraints: ε* = {epsilon_star}, witness = {:?}, \
             efficiency gap = {efficiency_gap:e}, max excess = {excess}, costs = {:?}",
            witness.0,
            game.costs()
        )));
    }
    Ok(LeastCoreResult { epsilon_star, witness })
}

pub fn is_balanced(game: &CostGame) -> Result<bool> {
    Ok(least_core(game)?.epsilon_star <= DEFAULT_TOL)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBand {
    pub beta: f64,
    pub phi: f64,
}

/// Empirical `φ(β) = inf{φ' : P[|Y - ȳ| <= φ'] >= β}`: the order statistic
/// of `|Y_m - ȳ|` at rank `⌈βM⌉`, zero for `β = 0`.
pub fn phi_quantile(samples: &[f64], center: f64, beta: f64) -> Result<EfficiencyBand> {
    if samples.is_empty() {
        return Err(Error::domain("efficiency band needs at least one sample"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("significance level must lie in [0, 1], got {beta}")));
    }
    if beta == 0.0 {
        return Ok(EfficiencyBand { beta, phi: 0.0 });
    }
    let mut dev: Vec<f64> = samples.iter().map(|y| (y - center).abs()).collect();
    let m = dev.len();
    let k = ((beta * m as f64).ceil() as usize).clamp(1, m) - 1;
    let (_, v, _) = dev.select_nth_unstable_by(k, f64::total_cmp);
    Ok(EfficiencyBand { beta, phi: *v })
}

/// Slack added to every proper-coalition constraint of a stochastic core.
#[derive(Clone, Debug)]
pub enum Epsilon {
    Fixed(f64),
    /// `max_S |c(S) - reference(S)|` of each drawn game.
    DistanceTo(CostGame),
}

impl Epsilon {
    fn value(&self, game: &CostGame) -> f64 {
        match self {
            Epsilon::Fixed(e) => *e,
            Epsilon::DistanceTo(reference) => game.sup_distance(reference),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreProbability {
    pub estimate: f64,
    /// 95% Wilson interval.
    pub lower: f64,
    pub upper: f64,
    /// Fraction of draws meeting every proper-coalition constraint.
    pub constraint_rate: f64,
    /// Sample mean of `c(N)`, standing in for `E[c(N)]`.
    pub mean_grand_cost: f64,
    pub efficient: bool,
    pub replications: usize,
}

pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let nt = trials as f64;
    let p = successes as f64 / nt;
    let denom = 1.0 + z * z / nt;
    let center = (p + z * z / (2.0 * nt)) / denom;
    let half = z * (p * (1.0 - p) / nt + z * z / (4.0 * nt * nt)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Estimates `P[x(S) <= c(S) + ε ∀ S ⊊ N; |x(N) - E c(N)| <= φ]` over
/// `replications` game draws. Draw `r` gets its own stream
/// `(seed, r)`, so the estimate does not depend on the thread count.
pub fn stochastic_core_probability<F>(
    sampler: F,
    x: &Allocation,
    epsilon: &Epsilon,
    band: EfficiencyBand,
    replications: usize,
    seed: u64,
) -> Result<CoreProbability>
where
    F: Fn(u64, &mut StreamRng) -> Result<CostGame> + Sync,
{
    if replications < 100 {
        return Err(Error::config(format!("need at least 100 replications, got {replications}")));
    }
    let draws: Vec<(bool, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, rng::domain::STOCHASTIC_CORE, r);
            let game = sampler(r, &mut rng)?;
            let eps = epsilon.value(&game);
            Ok((max_excess(&game, x) <= eps, game.grand_cost()))
        })
        .collect::<Result<_>>()?;
    let hits = draws.iter().filter(|d| d.0).count();
    let mean_grand_cost = draws.iter().map(|d| d.1).sum::<f64>() / replications as f64;
    let efficient = (x.total() - mean_grand_cost).abs() <= band.phi;
    let (lo, hi) = wilson_interval(hits, replications);
    let rate = hits as f64 / replications as f64;
    let gate = if efficient { 1.0 } else { 0.0 };
    Ok(CoreProbability {
        estimate: rate * gate,
        lower: lo * gate,
        upper: hi * gate,
        constraint_rate: rate,
        mean_grand_cost,
        efficient,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn g2() -> CostGame {
        CostGame::new(2, vec![10.0, 10.0, 15.0]).unwrap()
    }

    fn empty_core_3() -> CostGame {
        CostGame::from_fn(3, |s| if s.size() == 3 { 3.0 } else { 1.0 }).unwrap()
    }

    #[test]
    fn excess_and_membership() {
        let g = g2();
        assert_eq!(max_excess(&g, &Allocation(vec![10.0, 5.0])), 0.0);
        assert_eq!(max_excess(&g, &Allocation(vec![7.5, 7.5])), -2.5);
        assert!(core_membership(&g, &Allocation(vec![7.5, 7.5]), DEFAULT_TOL));
        assert!(!core_membership(&g, &Allocation(vec![11.0, 4.0]), DEFAULT_TOL));
        assert!(!core_membership(&g, &Allocation(vec![7.0, 7.0]), DEFAULT_TOL));
    }

    #[test]
    fn least_core_examples() {
        let r = least_core(&g2()).unwrap();
        assert!((r.epsilon_star + 2.5).abs() < 1e-9);
        assert!(r.witness.sup_distance(&Allocation(vec![7.5, 7.5])) < 1e-9);
        assert!(is_balanced(&g2()).unwrap());

        let r = least_core(&empty_core_3()).unwrap();
        assert!((r.epsilon_star - 1.0).abs() < 1e-9);
        assert!(r.witness.sup_distance(&Allocation(vec![1.0, 1.0, 1.0])) < 1e-9);
        assert!(!is_balanced(&empty_core_3()).unwrap());
        assert!(!core_membership(&empty_core_3(), &r.witness, DEFAULT_TOL));

        let a = [2.0, 3.0, 0.5, 1.0];
        let additive = CostGame::from_fn(4, |s| s.sum(&a)).unwrap();
        let r = least_core(&additive).unwrap();
        assert!(r.epsilon_star.abs() < 1e-9);
        assert!(r.witness.sup_distance(&Allocation(a.to_vec())) < 1e-9);
    }

    #[test]
    fn zero_game() {
        let r = least_core(&CostGame::new(3, vec![0.0; 7]).unwrap()).unwrap();
        assert_eq!(r.epsilon_star, 0.0);
    }

    /// Oracle for n <= 3: the LP optimum sits at a vertex where `n` proper
    /// constraints are tight together with efficiency.
    fn vertex_enumeration(game: &CostGame) -> f64 {
        let n = game.n();
        let proper: Vec<Coalition> = coalition::proper(n).collect();
        let mut best = f64::INFINITY;
        let combos = |k: usize| -> Vec<Vec<usize>> {
            let mut out = Vec::new();
            let mut cur = Vec::new();
            fn rec(start: usize, k: usize, total: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for i in start..total {
                    cur.push(i);
                    rec(i + 1, k, total, cur, out);
                    cur.pop();
                }
            }
            rec(0, k, proper.len(), &mut cur, &mut out);
            out
        };
        for pick in combos(n) {
            let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
            let mut b = DVector::<f64>::zeros(n + 1);
            for (r, &k) in pick.iter().enumerate() {
                for i in proper[k].players() {
                    a[(r, i)] = 1.0;
                }
                a[(r, n)] = -1.0;
                b[r] = game.cost(proper[k]);
            }
            for i in 0..n {
                a[(n, i)] = 1.0;
            }
            b[n] = game.grand_cost();
            if a.determinant().abs() < 1e-12 {
                continue;
            }
            let sol = a.lu().solve(&b).unwrap();
            let x = Allocation(sol.iter().take(n).copied().collect());
            let eps = sol[n];
            if max_excess(game, &x) <= eps + 1e-9 {
                best = best.min(eps);
            }
        }
        best
    }

    #[test]
    fn least_core_matches_vertex_enumeration() {
        use rand::Rng;
        let mut rng = rng::stream(42, 0, 0);
        for trial in 0..300 {
            let n = 2 + trial % 2;
            let costs: Vec<f64> = (0..coalition::coalition_count(n)).map(|_| rng.random_range(0.0..10.0)).collect();
            let game = CostGame::new(n, costs).unwrap();
            let lp = least_core(&game).unwrap().epsilon_star;
            let oracle = vertex_enumeration(&game);
            assert!((lp - oracle).abs() < 1e-7, "{:?}: lp {lp} oracle {oracle}", game.costs());
        }
    }

    #[test]
    fn phi_band() {
        let ys = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_eq!(phi_quantile(&ys, 4.0, 0.0).unwrap().phi, 0.0);
        assert_eq!(phi_quantile(&ys, 4.0, 1.0).unwrap().phi, 6.0);
        // |dev| sorted: 0,1,2,3,6; ceil(0.5*5) = 3 -> 2.
        assert_eq!(phi_quantile(&ys, 4.0, 0.5).unwrap().phi, 2.0);
        assert!(phi_quantile(&[], 0.0, 0.5).is_err());
        assert!(phi_quantile(&ys, 0.0, 1.5).is_err());
    }

    #[test]
    fn phi_of_normal_sample() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng::stream(3, 0, 0);
        let ys: Vec<f64> = (0..1_000_000).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            5.0 + 2.0 * z
        }).collect();
        let b = phi_quantile(&ys, 5.0, 0.95).unwrap();
        assert!((b.phi - 1.959_964 * 2.0).abs() < 0.04, "{}", b.phi);
    }

    #[test]
    fn stochastic_core_trivial_cases() {
        let g = g2();
        let band = EfficiencyBand { beta: 1.0, phi: 0.0 };
        let p = stochastic_core_probability(|_, _| Ok(g.clone()), &Allocation(vec![7.5, 7.5]), &Epsilon::Fixed(0.0), band, 200, 1).unwrap();
        assert_eq!(p.estimate, 1.0);
        assert!(p.efficient);
        let p = stochastic_core_probability(|_, _| Ok(g.clone()), &Allocation(vec![10.0 + 1e6, -1e6]), &Epsilon::Fixed(0.0), band, 200, 1).unwrap();
        assert_eq!(p.estimate, 0.0);
        assert!(stochastic_core_probability(|_, _| Ok(g.clone()), &Allocation(vec![7.5, 7.5]), &Epsilon::Fixed(0.0), band, 99, 1).is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }
}
