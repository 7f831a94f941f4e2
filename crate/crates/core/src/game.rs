//! Newsvendor cost games.
//!
//! Three characteristic functions share the frozen order quantities `q_S`
//! of the expected game:
//!
//! * expected game `c_E(S) = E[Ψ(x_S, q_S)]`,
//! * realization game `c_R(S) = g_S(q̂(S))` for one period's demand,
//! * dynamic realization game at stage `T`, `g_S(q̃^T(S))` for the running
//!   average demand,
//!
//! where `g_S(x) = max{p (x - q_S), h (q_S - x)}`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{self, Coalition};
use crate::demand::{normal_pdf, normal_quantile, DemandHistory, DemandModel, Quantile, QuantileEstimator, MIN_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::rng;

/// `c(N)` at or below this is treated as nothing to allocate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Per-unit penalty (lost sales) and holding (disposal) costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub p: f64,
    pub h: f64,
}

impl CostParams {
    pub fn new(p: f64, h: f64) -> Result<Self> {
        let c = CostParams { p, h };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 0.0 && self.h > 0.0 && self.p.is_finite() && self.h.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("penalty and holding costs must be positive, got p={} h={}", self.p, self.h)))
        }
    }

    /// Critical fractile `p / (p + h)`.
    pub fn fractile(&self) -> f64 {
        self.p / (self.p + self.h)
    }
}

/// Newsvendor cost of demand `x` against order `q`:
/// `max{p (x - q), h (q - x)}`.
#[inline]
pub fn realization_cost(x: f64, q: f64, costs: CostParams) -> f64 {
    (costs.p * (x - q)).max(costs.h * (q - x))
}

/// Optimal order for coalition `s`: the critical-fractile quantile of `x_S`.
pub fn order_quantity(model: &DemandModel, s: Coalition, costs: CostParams, est: &QuantileEstimator) -> Result<Quantile> {
    costs.validate()?;
    model.coalition_quantile(s, costs.fractile(), est)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostMethod {
    /// Closed form for Gaussian models, Monte Carlo otherwise.
    #[default]
    Auto,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Monte Carlo draws for quantiles and expected costs.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: CostMethod,
}

fn default_samples() -> usize {
    1_000_000
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { samples: default_samples(), seed: 0, method: CostMethod::Auto }
    }
}

impl EstimatorConfig {
    pub fn quantiles(&self) -> QuantileEstimator {
        QuantileEstimator { samples: self.samples, seed: self.seed }
    }

    fn validate(&self) -> Result<()> {
        if self.samples < MIN_MC_SAMPLES {
            return Err(Error::config(format!(
                "estimator needs at least {MIN_MC_SAMPLES} draws, got {}",
                self.samples
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Expected {
        /// `closed-form` or `monte-carlo`.
        cost_method: String,
        samples: Option<usize>,
        seed: Option<u64>,
        /// Per-coalition standard errors, ascending mask order.
        standard_errors: Vec<f64>,
        quantiles: Vec<Quantile>,
    },
    Realization,
    DynamicRealization { stage: u64 },
    Synthetic,
}

/// A TU cost game over all non-empty coalitions of `n` players.
#[derive(Clone, Debug, PartialEq)]
pub struct CostGame {
    n: usize,
    costs: Vec<f64>,
    costs_params: Option<CostParams>,
    order_quantities: Option<Vec<f64>>,
    provenance: Provenance,
}

impl CostGame {
    /// Synthetic game from dense costs indexed by `mask - 1`.
    pub fn new(n: usize, costs: Vec<f64>) -> Result<Self> {
        coalition::check_player_count(n)?;
        if costs.len() != coalition::coalition_count(n) {
            return Err(Error::domain(format!(
                "game on {n} players needs {} costs, got {}",
                coalition::coalition_count(n),
                costs.len()
            )));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::domain(format!("costs must be finite and nonnegative, found {c}")));
        }
        Ok(CostGame { n, costs, costs_params: None, order_quantities: None, provenance: Provenance::Synthetic })
    }

    pub fn from_fn(n: usize, f: impl Fn(Coalition) -> f64) -> Result<Self> {
        CostGame::new(n, coalition::all(n).map(f).collect())
    }

    /// Games from a newsvendor model carry `p`, `h` and the frozen `q_S`.
    pub(crate) fn newsvendor(n: usize, costs: Vec<f64>, params: CostParams, quantities: &OrderQuantities, provenance: Provenance) -> Self {
        CostGame {
            n,
            costs,
            costs_params: Some(params),
            order_quantities: Some(quantities.values.clone()),
            provenance,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cost(&self, s: Coalition) -> f64 {
        self.costs[s.index()]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn grand_cost(&self) -> f64 {
        self.costs[self.costs.len() - 1]
    }

    pub fn cost_params(&self) -> Option<CostParams> {
        self.costs_params
    }

    pub fn order_quantities(&self) -> Option<&[f64]> {
        self.order_quantities.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_zero(&self) -> bool {
        self.costs.iter().all(|&c| c == 0.0)
    }

    /// Same metadata, new costs (used for scaled and shifted variants).
    pub fn map_costs(&self, f: impl Fn(Coalition, f64) -> f64) -> Result<Self> {
        let costs = coalition::all(self.n).map(|s| f(s, self.cost(s))).collect();
        let mut g = CostGame::new(self.n, costs)?;
        g.costs_params = self.costs_params;
        g.order_quantities = self.order_quantities.clone();
        g.provenance = self.provenance.clone();
        Ok(g)
    }

    /// `max_S |c(S) - other(S)|`.
    pub fn sup_distance(&self, other: &CostGame) -> f64 {
        self.costs.iter().zip(&other.costs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn normalize(&self) -> Normalized<'_> {
        let scale = self.grand_cost();
        if scale > DEGENERACY_THRESHOLD {
            Normalized::Game(NormalizedGame {
                base: self,
                scale,
                values: self.costs.iter().map(|c| c / scale).collect(),
            })
        } else {
            Normalized::Degenerate
        }
    }

    pub fn to_document(&self) -> GameDocument {
        let masks: Vec<u32> = coalition::all(self.n).map(|s| s.mask()).collect();
        GameDocument {
            n: self.n,
            p: self.costs_params.map(|c| c.p),
            h: self.costs_params.map(|c| c.h),
            order_quantities: self
                .order_quantities
                .as_ref()
                .map(|q| masks.iter().copied().zip(q.iter().copied()).collect()),
            costs: masks.iter().copied().zip(self.costs.iter().copied()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_document(doc: &GameDocument) -> Result<Self> {
        coalition::check_player_count(doc.n)?;
        let dense = |map: &BTreeMap<u32, f64>, what: &str| -> Result<Vec<f64>> {
            let expected: Vec<u32> = coalition::all(doc.n).map(|s| s.mask()).collect();
            let keys: Vec<u32> = map.keys().copied().collect();
            if keys != expected {
                return Err(Error::domain(format!("{what} must list every mask 1..={} exactly once", expected.len())));
            }
            Ok(map.values().copied().collect())
        };
        let mut g = CostGame::new(doc.n, dense(&doc.costs, "costs")?)?;
        g.costs_params = match (doc.p, doc.h) {
            (Some(p), Some(h)) => Some(CostParams::new(p, h)?),
            (None, None) => None,
            _ => return Err(Error::domain("p and h must be given together")),
        };
        g.order_quantities = doc.order_quantities.as_ref().map(|q| dense(q, "order_quantities")).transpose()?;
        g.provenance = doc.provenance.clone();
        Ok(g)
    }
}

/// Interchange form of a [`CostGame`]; masks are decimal bitmasks with
/// player 1 as the least significant bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDocument {
    pub n: usize,
    pub p: Option<f64>,
    pub h: Option<f64>,
    #[serde(default)]
    pub order_quantities: Option<BTreeMap<u32, f64>>,
    pub costs: BTreeMap<u32, f64>,
    #[serde(default = "synthetic")]
    pub provenance: Provenance,
}

fn synthetic() -> Provenance {
    Provenance::Synthetic
}

/// `c(S) / c(N)` for a game with positive grand-coalition cost.
#[derive(Clone, Debug)]
pub struct NormalizedGame<'a> {
    pub base: &'a CostGame,
    pub scale: f64,
    values: Vec<f64>,
}

impl NormalizedGame<'_> {
    #[inline]
    pub fn value(&self, s: Coalition) -> f64 {
        self.values[s.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.base.n
    }
}

#[derive(Clone, Debug)]
pub enum Normalized<'a> {
    Game(NormalizedGame<'a>),
    /// `c(N)` is (numerically) zero; there is nothing to share.
    Degenerate,
}

/// Frozen order quantities `q_S`, indexed by `mask - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderQuantities {
    pub values: Vec<f64>,
    pub estimates: Vec<Quantile>,
}

impl OrderQuantities {
    pub fn compute(model: &DemandModel, costs: CostParams, est: &QuantileEstimator) -> Result<Self> {
        costs.validate()?;
        let estimates = model.coalition_quantiles(costs.fractile(), est)?;
        Ok(OrderQuantities { values: estimates.iter().map(|q| q.value).collect(), estimates })
    }

    #[inline]
    pub fn get(&self, s: Coalition) -> f64 {
        self.values[s.index()]
    }

    pub fn from_game(game: &CostGame) -> Option<Self> {
        game.order_quantities.as_ref().map(|v| OrderQuantities {
            values: v.clone(),
            estimates: Vec::new(),
        })
    }
}

/// Expected game together with the quantities it froze.
#[derive(Clone, Debug)]
pub struct ExpectedGame {
    pub game: CostGame,
    pub quantities: OrderQuantities,
    pub costs: CostParams,
    pub standard_errors: Vec<f64>,
}

/// Builds `c_E`. Gaussian models use `(p + h) φ(z*) σ_S` unless Monte Carlo
/// is forced; everything else averages `g_S` over one common demand panel.
pub fn build_expected_game(model: &DemandModel, costs: CostParams, est: &EstimatorConfig) -> Result<ExpectedGame> {
    costs.validate()?;
    est.validate()?;
    let n = model.n();
    let quantities = OrderQuantities::compute(model, costs, &est.quantiles())?;
    let closed = est.method == CostMethod::Auto && model.is_gaussian();

    let (values, standard_errors) = if closed {
        let z = normal_quantile(costs.fractile());
        let k = (costs.p + costs.h) * normal_pdf(z);
        let values = coalition::all(n).map(|s| k * model.coalition_sd(s).unwrap()).collect();
        (values, vec![0.0; coalition::coalition_count(n)])
    } else {
        monte_carlo_expected_costs(model, costs, &quantities, est)
    };

    let provenance = Provenance::Expected {
        cost_method: if closed { "closed-form" } else { "monte-carlo" }.to_string(),
        samples: (!closed).then_some(est.samples),
        seed: (!closed).then_some(est.seed),
        standard_errors: standard_errors.clone(),
        quantiles: quantities.estimates.clone(),
    };
    let game = CostGame::newsvendor(n, values, costs, &quantities, provenance);
    Ok(ExpectedGame { game, quantities, costs, standard_errors })
}

fn monte_carlo_expected_costs(model: &DemandModel, costs: CostParams, q: &OrderQuantities, est: &EstimatorConfig) -> (Vec<f64>, Vec<f64>) {
    let n = model.n();
    let k = coalition::coalition_count(n);
    let panel = model.panel(est.samples, est.seed, rng::domain::EXPECTED_COST);
    // Fixed chunking keeps the summation order independent of thread count.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = panel
        .par_chunks(4096 * n)
        .map(|chunk| {
            let mut sum = vec![0.0; k];
            let mut sq = vec![0.0; k];
            for row in chunk.chunks_exact(n) {
                let sums = coalition::subset_sums(row);
                for j in 0..k {
                    let c = realization_cost(sums[j], q.values[j], costs);
                    sum[j] += c;
                    sq[j] += c * c;
                }
            }
            (sum, sq)
        })
        .collect();
    let m = est.samples as f64;
    let mut mean = vec![0.0; k];
    let mut se = vec![0.0; k];
    for j in 0..k {
        let s: f64 = partials.iter().map(|p| p.0[j]).sum();
        let s2: f64 = partials.iter().map(|p| p.1[j]).sum();
        mean[j] = s / m;
        let var = ((s2 - s * s / m) / (m - 1.0)).max(0.0);
        se[j] = (var / m).sqrt();
    }
    (mean, se)
}

/// `c_R(S) = g_S(q̂(S))` for one period's demand vector.
pub fn build_realization_game(sample: &[f64], quantities: &OrderQuantities, costs: CostParams) -> Result<CostGame> {
    let game = realization_from_sums(sample, quantities, costs, Provenance::Realization)?;
    Ok(game)
}

/// `c̃_R^T(S) = g_S(q̃^T(S))` from the running average demand.
pub fn build_dr_game(history: &DemandHistory, quantities: &OrderQuantities, costs: CostParams) -> Result<CostGame> {
    if history.periods() == 0 {
        return Err(Error::domain("dynamic realization game needs at least one period"));
    }
    realization_from_sums(
        &history.running_average(),
        quantities,
        costs,
        Provenance::DynamicRealization { stage: history.periods() },
    )
}

fn realization_from_sums(demand: &[f64], q: &OrderQuantities, costs: CostParams, provenance: Provenance) -> Result<CostGame> {
    costs.validate()?;
    let n = demand.len();
    coalition::check_player_count(n)?;
    if q.values.len() != coalition::coalition_count(n) {
        return Err(Error::config("order quantities do not match the player count"));
    }
    let sums = coalition::subset_sums(demand);
    let values = sums.iter().zip(&q.values).map(|(&x, &qs)| realization_cost(x, qs, costs)).collect();
    Ok(CostGame::newsvendor(n, values, costs, q, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandSpec, MarginalSpec, Temporal};

    fn unit() -> CostParams {
        CostParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn realization_cost_branches() {
        let c = CostParams::new(3.0, 1.0).unwrap();
        assert_eq!(realization_cost(100.0, 100.0, c), 0.0);
        assert_eq!(realization_cost(110.0, 100.0, c), 30.0);
        assert_eq!(realization_cost(90.0, 100.0, c), 10.0);
    }

    #[test]
    fn order_quantities() {
        let m = DemandModel::iid_normal(&[100.0, 100.0], &[10.0, 10.0]).unwrap();
        let est = QuantileEstimator::default();
        let s = Coalition::singleton(0);
        assert!((order_quantity(&m, s, unit(), &est).unwrap().value - 100.0).abs() < 1e-9);
        let q = order_quantity(&m, s, CostParams { p: 3.0, h: 1.0 }, &est).unwrap().value;
        assert!((q - 106.744_897_5).abs() < 1e-6);
        assert!(order_quantity(&m, s, CostParams { p: 0.0, h: 1.0 }, &est).is_err());
        assert!(order_quantity(&m, s, CostParams { p: 1.0, h: -1.0 }, &est).is_err());

        let u = DemandModel::new(DemandSpec {
            marginals: vec![MarginalSpec::Uniform { low: 0.0, high: 200.0 }; 2],
            correlation: None,
            temporal: Temporal::Iid,
        })
        .unwrap();
        let q = order_quantity(&u, s, CostParams { p: 1.0, h: 3.0 }, &est).unwrap().value;
        assert!((q - 50.0).abs() < 0.5);
    }

    /// Independent oracle: minimize a Monte Carlo estimate of E[Ψ(x, q)]
    /// over a grid of q.
    #[test]
    fn fractile_matches_grid_search() {
        let m = DemandModel::iid_normal(&[100.0, 100.0], &[10.0, 10.0]).unwrap();
        let costs = CostParams::new(3.0, 1.0).unwrap();
        let xs: Vec<f64> = m.panel(200_000, 12, 0).chunks_exact(2).map(|r| r[0]).collect();
        let expected_cost = |q: f64| xs.iter().map(|&x| realization_cost(x, q, costs)).sum::<f64>() / xs.len() as f64;
        let best = (0..=400)
            .map(|k| 95.0 + k as f64 * 0.05)
            .min_by(|a, b| expected_cost(*a).total_cmp(&expected_cost(*b)))
            .unwrap();
        let q = order_quantity(&m, Coalition::singleton(0), costs, &QuantileEstimator::default()).unwrap().value;
        assert!((best - q).abs() < 0.25, "grid {best} fractile {q}");
    }

    #[test]
    fn deterministic_expected_game_is_zero() {
        let m = DemandModel::new(DemandSpec {
            marginals: vec![MarginalSpec::Deterministic { value: 4.0 }, MarginalSpec::Deterministic { value: 9.0 }],
            correlation: None,
            temporal: Temporal::Iid,
        })
        .unwrap();
        let e = build_expected_game(&m, CostParams::new(2.0, 1.0).unwrap(), &EstimatorConfig { samples: 1000, ..Default::default() }).unwrap();
        assert!(e.game.is_zero());
        assert_eq!(e.quantities.values, vec![4.0, 9.0, 13.0]);
        assert!(matches!(e.game.normalize(), Normalized::Degenerate));
    }

    #[test]
    fn uniform_expected_cost_is_quarter_range() {
        let u = DemandModel::new(DemandSpec {
            marginals: vec![MarginalSpec::Uniform { low: 0.0, high: 200.0 }; 2],
            correlation: None,
            temporal: Temporal::Iid,
        })
        .unwrap();
        let e = build_expected_game(&u, unit(), &EstimatorConfig::default()).unwrap();
        let s = Coalition::singleton(1);
        let (c, se) = (e.game.cost(s), e.standard_errors[s.index()]);
        assert!((c - 50.0).abs() < 3.0 * se + 0.2, "{c} ± {se}");
    }

    #[test]
    fn normal_closed_form_values() {
        let m = DemandModel::iid_normal(&[100.0, 100.0], &[10.0, 10.0]).unwrap();
        let e = build_expected_game(&m, unit(), &EstimatorConfig::default()).unwrap();
        assert!((e.game.cost(Coalition::singleton(0)) - 7.978_845_608).abs() < 1e-8);
        assert!((e.game.grand_cost() - 11.283_791_670_955).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples_is_config_error() {
        let m = DemandModel::iid_normal(&[100.0, 100.0], &[10.0, 10.0]).unwrap();
        let est = EstimatorConfig { samples: 999, ..Default::default() };
        assert!(matches!(build_expected_game(&m, unit(), &est), Err(Error::Config(_))));
    }

    #[test]
    fn realization_game_direct_formula() {
        let q = OrderQuantities { values: vec![100.0, 100.0, 200.0], estimates: vec![] };
        let g = build_realization_game(&[110.0, 95.0], &q, unit()).unwrap();
        assert_eq!(g.costs(), &[10.0, 5.0, 5.0]);
        let g = build_realization_game(&[100.0, 100.0], &q, unit()).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn dr_game_at_stage_one_is_the_realization_game() {
        let q = OrderQuantities { values: vec![100.0, 90.0, 185.0], estimates: vec![] };
        let x = [104.5, 83.25];
        let mut h = DemandHistory::new(2);
        assert!(build_dr_game(&h, &q, unit()).is_err());
        h.extend(&x).unwrap();
        let dr = build_dr_game(&h, &q, unit()).unwrap();
        let r = build_realization_game(&x, &q, unit()).unwrap();
        assert_eq!(dr.costs(), r.costs());
        assert_eq!(dr.provenance(), &Provenance::DynamicRealization { stage: 1 });
    }

    #[test]
    fn normalization() {
        let g = CostGame::new(2, vec![10.0, 10.0, 15.0]).unwrap();
        match g.normalize() {
            Normalized::Game(v) => {
                assert!((v.value(Coalition::singleton(0)) - 2.0 / 3.0).abs() < 1e-15);
                assert_eq!(v.value(Coalition::grand(2)), 1.0);
            }
            Normalized::Degenerate => panic!(),
        }
        let z = CostGame::new(2, vec![0.0; 3]).unwrap();
        assert!(matches!(z.normalize(), Normalized::Degenerate));
    }

    #[test]
    fn rejects_negative_or_misshapen_costs() {
        assert!(CostGame::new(2, vec![1.0, -1.0, 1.0]).is_err());
        assert!(CostGame::new(2, vec![1.0, 1.0]).is_err());
        assert!(CostGame::new(2, vec![1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn document_round_trip() {
        let m = DemandModel::iid_normal(&[100.0, 80.0, 60.0], &[10.0, 8.0, 5.0]).unwrap();
        let e = build_expected_game(&m, CostParams::new(2.0, 1.0).unwrap(), &EstimatorConfig::default()).unwrap();
        let text = serde_json::to_string_pretty(&e.game.to_document()).unwrap();
        let back: GameDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(CostGame::from_document(&back).unwrap(), e.game);
        assert!(text.contains("\"7\""));
    }

    #[test]
    fn document_missing_mask_rejected() {
        let doc: GameDocument = serde_json::from_str(r#"{"n":2,"p":null,"h":null,"costs":{"1":1.0,"3":2.0}}"#).unwrap();
        assert!(CostGame::from_document(&doc).is_err());
    }
}
