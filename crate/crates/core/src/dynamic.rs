//! Diagonal experiments on sequences of stage games.
//!
//! At stage `T` a replication holds a game `c^T` (typically the dynamic
//! realization game built from the running average of `T` demand periods).
//! Lehrer's process is run on `c^T` for `L(T)` steps and the average
//! allocation is compared with the limit game: distance to its least-square
//! value, its maximal excess, and the sup distance `ε_T` between the stage
//! game and the limit.
//!
//! Every stage restarts the inner process from the empty history, so only
//! the stages that are written to the trace need the inner run; the demand
//! history is still extended every period. The warm-start variant instead
//! carries one process across all stages and advances it every period.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{self, Coalition};
use crate::core_geometry::{least_core, max_excess, phi_quantile, wilson_interval, EfficiencyBand, LeastCoreResult};
use crate::demand::{DemandHistory, DemandModel, DemandState, Temporal};
use crate::error::{Error, Result};
use crate::game::{
    build_dr_game, build_realization_game, realization_cost, CostGame, CostParams, ExpectedGame, Normalized,
    OrderQuantities, Provenance,
};
use crate::lehrer::{self, ProcessState, Rule, Stride};
use crate::rng::{self, StreamRng};
use crate::solutions::{ls_lipschitz, ls_value, Allocation, WeightProfile};

/// Inner steps `L(T)` run at stage `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnerSchedule {
    /// `L(T) = T`.
    #[default]
    Linear,
    /// `L(T) = factor · T`. Not part of the original construction.
    Accelerated { factor: u64 },
}

impl InnerSchedule {
    pub fn steps(&self, t: u64) -> u64 {
        match self {
            InnerSchedule::Linear => t,
            InnerSchedule::Accelerated { factor } => factor.saturating_mul(t),
        }
    }
}

/// How the stage game aggregates the demand history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DrAggregation {
    /// `c̃^T(S) = g_S(running average demand of S)`.
    #[default]
    RunningDemand,
    /// `c̃^T(S) = (1/T) Σ_t g_S(x_S^t)`, the running average of realized
    /// costs. Not part of the original construction; its limit is `c_E`.
    RunningCost,
}

/// One replication's stream of stage games.
pub trait GameSequence {
    /// Moves to the next stage.
    fn advance(&mut self) -> Result<()>;
    /// Number of stages taken so far.
    fn stage(&self) -> u64;
    /// The current stage game; only valid after the first `advance`.
    fn current(&self) -> Result<CostGame>;
    /// Demand regime of a regime-mixture replication.
    fn regime(&self) -> Option<usize> {
        None
    }
}

/// A family of independent game sequences plus the game they should
/// approach.
pub trait GameSequenceSource: Sync {
    fn n(&self) -> usize;
    fn limit(&self) -> &CostGame;
    fn sequence(&self, replication: u64) -> Result<Box<dyn GameSequence + '_>>;
}

/// Dynamic realization games from a demand model with frozen order
/// quantities. Replication `r` draws from stream `(seed, r)`.
pub struct DrSource<'a> {
    model: &'a DemandModel,
    quantities: &'a OrderQuantities,
    costs: CostParams,
    limit: &'a CostGame,
    seed: u64,
    aggregation: DrAggregation,
}

impl<'a> DrSource<'a> {
    pub fn new(expected: &'a ExpectedGame, model: &'a DemandModel, seed: u64, aggregation: DrAggregation) -> Result<Self> {
        if model.n() != expected.game.n() {
            return Err(Error::config(format!(
                "demand model has {} stores but the expected game has {} players",
                model.n(),
                expected.game.n()
            )));
        }
        Ok(DrSource {
            model,
            quantities: &expected.quantities,
            costs: expected.costs,
            limit: &expected.game,
            seed,
            aggregation,
        })
    }
}

struct DrSequence<'s> {
    source: &'s DrSource<'s>,
    rng: StreamRng,
    state: DemandState,
    history: DemandHistory,
    sample: Vec<f64>,
    cost_sums: Vec<f64>,
}

impl GameSequenceSource for DrSource<'_> {
    fn n(&self) -> usize {
        self.model.n()
    }

    fn limit(&self) -> &CostGame {
        self.limit
    }

    fn sequence(&self, replication: u64) -> Result<Box<dyn GameSequence + '_>> {
        let n = self.model.n();
        let mut rng = rng::stream(self.seed, rng::domain::REPLICATION, replication);
        let state = self.model.initial_state(&mut rng);
        Ok(Box::new(DrSequence {
            source: self,
            rng,
            state,
            history: DemandHistory::new(n),
            sample: vec![0.0; n],
            cost_sums: match self.aggregation {
                DrAggregation::RunningDemand => Vec::new(),
                DrAggregation::RunningCost => vec![0.0; coalition::coalition_count(n)],
            },
        }))
    }
}

impl GameSequence for DrSequence<'_> {
    fn advance(&mut self) -> Result<()> {
        let src = self.source;
        src.model.sample_into(&mut self.state, &mut self.rng, &mut self.sample);
        self.history.extend(&self.sample)?;
        if src.aggregation == DrAggregation::RunningCost {
            let sums = coalition::subset_sums(&self.sample);
            for ((acc, x), q) in self.cost_sums.iter_mut().zip(&sums).zip(&src.quantities.values) {
                *acc += realization_cost(*x, *q, src.costs);
            }
        }
        Ok(())
    }

    fn stage(&self) -> u64 {
        self.history.periods()
    }

    fn current(&self) -> Result<CostGame> {
        let src = self.source;
        match src.aggregation {
            DrAggregation::RunningDemand => build_dr_game(&self.history, src.quantities, src.costs),
            DrAggregation::RunningCost => {
                let t = self.history.periods();
                if t == 0 {
                    return Err(Error::domain("dynamic realization game needs at least one period"));
                }
                let values = self.cost_sums.iter().map(|s| s / t as f64).collect();
                Ok(CostGame::newsvendor(
                    self.history.n(),
                    values,
                    src.costs,
                    src.quantities,
                    Provenance::DynamicRealization { stage: t },
                ))
            }
        }
    }

    fn regime(&self) -> Option<usize> {
        self.state.regime()
    }
}

/// The same game at every stage.
pub struct ConstantSource {
    pub game: CostGame,
}

impl GameSequenceSource for ConstantSource {
    fn n(&self) -> usize {
        self.game.n()
    }

    fn limit(&self) -> &CostGame {
        &self.game
    }

    fn sequence(&self, _replication: u64) -> Result<Box<dyn GameSequence + '_>> {
        Ok(Box::new(FnSequence { f: move |_| Ok(self.game.clone()), t: 0 }))
    }
}

/// `c^t = f(t)`, identical across replications.
pub struct DeterministicSource<F> {
    pub limit: CostGame,
    pub f: F,
}

impl<F> GameSequenceSource for DeterministicSource<F>
where
    F: Fn(u64) -> Result<CostGame> + Sync,
{
    fn n(&self) -> usize {
        self.limit.n()
    }

    fn limit(&self) -> &CostGame {
        &self.limit
    }

    fn sequence(&self, _replication: u64) -> Result<Box<dyn GameSequence + '_>> {
        Ok(Box::new(FnSequence { f: &self.f, t: 0 }))
    }
}

struct FnSequence<F> {
    f: F,
    t: u64,
}

impl<F: Fn(u64) -> Result<CostGame>> GameSequence for FnSequence<F> {
    fn advance(&mut self) -> Result<()> {
        self.t += 1;
        Ok(())
    }

    fn stage(&self) -> u64 {
        self.t
    }

    fn current(&self) -> Result<CostGame> {
        (self.f)(self.t)
    }
}

/// Parameters of the diagonal loop shared by every game source.
#[derive(Clone, Debug)]
pub struct DiagonalRun {
    pub rule: Rule,
    pub weights: WeightProfile,
    pub t_max: u64,
    pub schedule: InnerSchedule,
    pub replications: usize,
    /// Stages written to the trace.
    pub stages: Stride,
    pub warm_start: bool,
}

impl DiagonalRun {
    pub fn new(rule: Rule, weights: WeightProfile, t_max: u64, replications: usize) -> Self {
        DiagonalRun {
            rule,
            weights,
            t_max,
            schedule: InnerSchedule::Linear,
            replications,
            stages: Stride::PowersOfTwo,
            warm_start: false,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::config("t_max must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("need at least one replication"));
        }
        if let InnerSchedule::Accelerated { factor: 0 } = self.schedule {
            return Err(Error::config("inner-step factor must be at least 1"));
        }
        if let Stride::Every { k: 0 } = self.stages {
            return Err(Error::config("stage stride must be at least 1"));
        }
        if self.weights.n() != n {
            return Err(Error::config(format!("weights are for {} players, games have {n}", self.weights.n())));
        }
        Ok(())
    }
}

/// Diagonal experiment over dynamic realization games of a demand model.
#[derive(Clone, Debug)]
pub struct DiagonalConfig {
    pub run: DiagonalRun,
    pub seed: u64,
    pub aggregation: DrAggregation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub replication: u64,
    pub t: u64,
    /// Stage game costs, ascending mask order.
    pub costs: Vec<f64>,
    pub allocation: Vec<f64>,
    pub dist_ls_inf: f64,
    pub max_excess: f64,
    pub eps: f64,
    /// Spread of `c^T(N)` across replications at this stage (`β = 1`).
    pub phi: f64,
    pub degenerate: bool,
    pub regime: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentTrace {
    pub n: usize,
    pub limit: CostGame,
    pub ls_limit: Allocation,
    /// Sup-norm Lipschitz constant of the least-square value map.
    pub lipschitz: f64,
    /// Ordered by replication, then stage.
    pub rows: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub t: u64,
    pub replications: usize,
    pub degenerate: usize,
    pub median_dist_ls_inf: f64,
    pub median_max_excess: f64,
    pub median_eps: f64,
    pub phi: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl ExperimentTrace {
    pub fn stages(&self) -> Vec<u64> {
        let mut ts: Vec<u64> = self.rows.iter().map(|r| r.t).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    /// Rows of the last stage, one per replication.
    pub fn final_rows(&self) -> impl Iterator<Item = &TraceRow> {
        let last = self.rows.iter().map(|r| r.t).max().unwrap_or(0);
        self.rows.iter().filter(move |r| r.t == last)
    }

    /// Per-stage medians over non-degenerate replications.
    pub fn stage_summaries(&self) -> Vec<StageSummary> {
        self.stages()
            .into_iter()
            .map(|t| {
                let at: Vec<&TraceRow> = self.rows.iter().filter(|r| r.t == t).collect();
                let live: Vec<&&TraceRow> = at.iter().filter(|r| !r.degenerate).collect();
                let col = |f: fn(&TraceRow) -> f64| median(&live.iter().map(|r| f(r)).collect::<Vec<_>>());
                StageSummary {
                    t,
                    replications: at.len(),
                    degenerate: at.len() - live.len(),
                    median_dist_ls_inf: col(|r| r.dist_ls_inf),
                    median_max_excess: col(|r| r.max_excess),
                    median_eps: col(|r| r.eps),
                    phi: at[0].phi,
                }
            })
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["replication".to_string(), "T".to_string()];
        h.extend(coalition::all(self.n).map(|s| format!("cost_{}", s.mask())));
        h.extend((1..=self.n).map(|i| format!("alloc_{i}")));
        h.extend(["dist_ls_inf", "max_excess_cE", "eps_T", "phi_T", "degenerate"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.replication.to_string(), r.t.to_string()];
            rec.extend(r.costs.iter().chain(&r.allocation).map(|&x| fmt_float(x)));
            rec.extend([r.dist_ls_inf, r.max_excess, r.eps, r.phi].map(fmt_float));
            rec.push(if r.degenerate { "1" } else { "0" }.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the diagonal loop for every replication of `source` and measures
/// each recorded stage against the source's limit game.
pub fn generic_diagonal(source: &dyn GameSequenceSource, run: &DiagonalRun) -> Result<ExperimentTrace> {
    let n = source.n();
    run.validate(n)?;
    let limit = source.limit().clone();
    if limit.n() != n {
        return Err(Error::config("limit game does not match the source's player count"));
    }
    let ls_limit = ls_value(&limit, &run.weights)?;
    let per_replication: Vec<Vec<TraceRow>> = (0..run.replications as u64)
        .into_par_iter()
        .map(|r| replicate(source, run, r, &limit, &ls_limit))
        .collect::<Result<_>>()?;
    let mut rows: Vec<TraceRow> = per_replication.into_iter().flatten().collect();

    let grand = Coalition::grand(n).index();
    let mut stages: Vec<u64> = rows.iter().map(|r| r.t).collect();
    stages.sort_unstable();
    stages.dedup();
    for t in stages {
        let totals: Vec<f64> = rows.iter().filter(|r| r.t == t).map(|r| r.costs[grand]).collect();
        let center = totals.iter().sum::<f64>() / totals.len() as f64;
        let phi = phi_quantile(&totals, center, 1.0)?.phi;
        rows.iter_mut().filter(|r| r.t == t).for_each(|r| r.phi = phi);
    }
    Ok(ExperimentTrace { n, limit, ls_limit, lipschitz: ls_lipschitz(&run.weights), rows })
}

fn replicate(
    source: &dyn GameSequenceSource,
    run: &DiagonalRun,
    replication: u64,
    limit: &CostGame,
    ls_limit: &Allocation,
) -> Result<Vec<TraceRow>> {
    let n = source.n();
    let mut seq = source.sequence(replication)?;
    let mut warm = run.warm_start.then(|| ProcessState::new(run.rule, n));
    let mut rows = Vec::new();
    for t in 1..=run.t_max {
        seq.advance()?;
        let record = run.stages.records(t, run.t_max);
        if !record && warm.is_none() {
            continue;
        }
        let game = seq.current()?;
        if game.n() != n {
            return Err(Error::config(format!("stage {t} game has {} players, expected {n}", game.n())));
        }
        let steps = run.schedule.steps(t);
        let normalized = game.normalize();
        let degenerate = matches!(normalized, Normalized::Degenerate);
        let allocation = match (&mut warm, normalized) {
            (_, Normalized::Degenerate) => Allocation::zeros(n),
            (Some(state), Normalized::Game(v)) => {
                state.rebase(&v);
                while state.steps() < steps {
                    lehrer::step(state, &v, &run.weights);
                }
                state.allocation(v.scale)
            }
            (None, Normalized::Game(_)) => lehrer::final_average(run.rule, &game, &run.weights, steps),
        };
        if record {
            rows.push(TraceRow {
                replication,
                t,
                dist_ls_inf: allocation.sup_distance(ls_limit),
                max_excess: max_excess(limit, &allocation),
                eps: game.sup_distance(limit),
                phi: 0.0,
                degenerate,
                regime: seq.regime(),
                costs: game.costs().to_vec(),
                allocation: allocation.0,
            });
        }
    }
    Ok(rows)
}

/// Diagonal sequence of dynamic realization games measured against the
/// expected game.
pub fn diagonal_experiment(model: &DemandModel, expected: &ExpectedGame, cfg: &DiagonalConfig) -> Result<ExperimentTrace> {
    let source = DrSource::new(expected, model, cfg.seed, cfg.aggregation)?;
    generic_diagonal(&source, &cfg.run)
}

/// `ε_T = max_S |c̃^T(S) - c_E(S)|` at each checkpoint, one vector over
/// replications per checkpoint. Uses the same streams as
/// [`diagonal_experiment`].
pub fn dr_error_path(
    model: &DemandModel,
    expected: &ExpectedGame,
    checkpoints: &[u64],
    replications: usize,
    seed: u64,
    aggregation: DrAggregation,
) -> Result<Vec<Vec<f64>>> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
        return Err(Error::config("checkpoints must be positive and strictly increasing"));
    }
    let source = DrSource::new(expected, model, seed, aggregation)?;
    let per_rep: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut seq = source.sequence(r)?;
            let mut out = Vec::with_capacity(checkpoints.len());
            for &c in checkpoints {
                while seq.stage() < c {
                    seq.advance()?;
                }
                out.push(seq.current()?.sup_distance(&expected.game));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..checkpoints.len()).map(|k| per_rep.iter().map(|v| v[k]).collect()).collect())
}

#[derive(Clone, Debug)]
pub struct StationaryConfig {
    pub run: DiagonalRun,
    pub seed: u64,
    pub aggregation: DrAggregation,
    /// Core slack as a fraction of `c_E(N)`.
    pub core_tolerance: f64,
    /// Level of the efficiency band of `Y_N`.
    pub band_beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalitionSummary {
    pub mask: u32,
    pub expected_cost: f64,
    /// Mean of the terminal costs, an estimate of `E[Y_S]`.
    pub terminal_mean: f64,
    pub standard_error: f64,
    /// Sample standard deviation of the terminal costs across replications.
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub mask: u32,
    pub center: f64,
    pub standard_error: f64,
    /// `g_S` at the regime's pooled mean with the frozen `q_S`.
    pub target: f64,
    pub within_three_se: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: usize,
    pub replications: usize,
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticCoreSummary {
    pub tolerance: f64,
    pub successes: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub band: EfficiencyBand,
    /// Least-core value of `min_r Y_S^r` on proper `S` with the mean `Y_N`;
    /// non-positive when one allocation satisfies every sampled constraint.
    pub common_core_epsilon: f64,
    pub common_core_witness: Allocation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarySummary {
    pub temporal: String,
    pub t_max: u64,
    pub replications: usize,
    pub coalitions: Vec<CoalitionSummary>,
    pub regimes: Vec<RegimeSummary>,
    pub core: StochasticCoreSummary,
}

impl StationarySummary {
    /// Largest `spread / c_E(S)` over coalitions with positive `c_E(S)`.
    pub fn max_relative_spread(&self) -> f64 {
        self.coalitions
            .iter()
            .filter(|c| c.expected_cost > 0.0)
            .map(|c| c.spread / c.expected_cost)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct StationaryOutcome {
    pub trace: ExperimentTrace,
    pub summary: StationarySummary,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Terminal stage games `Y_S` and allocations under stationary, non-iid
/// demand.
pub fn stationary_experiment(model: &DemandModel, expected: &ExpectedGame, cfg: &StationaryConfig) -> Result<StationaryOutcome> {
    let temporal = match model.temporal() {
        Temporal::Iid => return Err(Error::config("stationary experiment needs ar1 or regime-mixture demand")),
        Temporal::Ar1 { .. } => "ar1",
        Temporal::RegimeMixture { .. } => "regime-mixture",
    };
    if cfg.run.replications < 2 {
        return Err(Error::config("stationary experiment needs at least two replications"));
    }
    let mut run = cfg.run.clone();
    run.stages = Stride::Every { k: run.t_max };
    let source = DrSource::new(expected, model, cfg.seed, cfg.aggregation)?;
    let trace = generic_diagonal(&source, &run)?;
    let n = model.n();
    let c_e = &expected.game;
    let terminal: Vec<&TraceRow> = trace.final_rows().collect();
    let reps = terminal.len();

    let coalitions = coalition::all(n)
        .map(|s| {
            let ys: Vec<f64> = terminal.iter().map(|r| r.costs[s.index()]).collect();
            let (mean, sd) = mean_sd(&ys);
            CoalitionSummary {
                mask: s.mask(),
                expected_cost: c_e.cost(s),
                terminal_mean: mean,
                standard_error: sd / (reps as f64).sqrt(),
                spread: sd,
            }
        })
        .collect();

    let mut regimes = Vec::new();
    if let Temporal::RegimeMixture { regimes: specs } = model.temporal() {
        for k in 0..specs.len() {
            let members: Vec<&&TraceRow> = terminal.iter().filter(|r| r.regime == Some(k)).collect();
            let means = model.regime_means(k).ok_or_else(|| Error::internal("regime index out of range"))?;
            let clusters = coalition::all(n)
                .map(|s| {
                    let ys: Vec<f64> = members.iter().map(|r| r.costs[s.index()]).collect();
                    let (center, sd) = mean_sd(&ys);
                    let se = sd / (ys.len() as f64).sqrt();
                    let target = realization_cost(s.sum(&means), expected.quantities.get(s), expected.costs);
                    let slack = 1e-9 * (1.0 + target.abs());
                    ClusterSummary {
                        mask: s.mask(),
                        center,
                        standard_error: se,
                        target,
                        within_three_se: (center - target).abs() <= 3.0 * se + slack,
                    }
                })
                .collect();
            regimes.push(RegimeSummary { regime: k, replications: members.len(), clusters });
        }
    }

    let tolerance = cfg.core_tolerance * c_e.grand_cost();
    let mut successes = 0;
    let mut floor = vec![f64::INFINITY; coalition::coalition_count(n)];
    for r in &terminal {
        let y = CostGame::new(n, r.costs.clone())?;
        if max_excess(&y, &Allocation(r.allocation.clone())) <= tolerance {
            successes += 1;
        }
        floor.iter_mut().zip(&r.costs).for_each(|(f, c)| *f = f.min(*c));
    }
    let totals: Vec<f64> = terminal.iter().map(|r| r.costs[Coalition::grand(n).index()]).collect();
    let mean_total = totals.iter().sum::<f64>() / reps as f64;
    *floor.last_mut().expect("grand coalition") = mean_total;
    let LeastCoreResult { epsilon_star, witness } = least_core(&CostGame::new(n, floor)?)?;
    let (lower, upper) = wilson_interval(successes, reps);
    let core = StochasticCoreSummary {
        tolerance,
        successes,
        estimate: successes as f64 / reps as f64,
        lower,
        upper,
        band: phi_quantile(&totals, mean_total, cfg.band_beta)?,
        common_core_epsilon: epsilon_star,
        common_core_witness: witness,
    };

    let summary = StationarySummary {
        temporal: temporal.to_string(),
        t_max: run.t_max,
        replications: reps,
        coalitions,
        regimes,
        core,
    };
    Ok(StationaryOutcome { trace, summary })
}

/// Least-core value above which a realization game counts as having an
/// empty core.
pub const EMPTY_CORE_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug)]
pub enum SearchOutcome {
    Found {
        attempt: u64,
        demand: Vec<f64>,
        game: CostGame,
        least_core: LeastCoreResult,
    },
    Exhausted {
        attempts: u64,
        max_epsilon: f64,
    },
}

const SEARCH_CHUNK: u64 = 4096;

/// Draws one-period demand vectors until a realization game has least-core
/// value above [`EMPTY_CORE_THRESHOLD`]. Attempt `k` uses stream
/// `(seed, k)`, so the first hit does not depend on the thread count.
pub fn empty_core_search(
    model: &DemandModel,
    quantities: &OrderQuantities,
    costs: CostParams,
    attempts: u64,
    seed: u64,
) -> Result<SearchOutcome> {
    if attempts == 0 {
        return Err(Error::config("search needs at least one attempt"));
    }
    let n = model.n();
    let mut max_epsilon = f64::NEG_INFINITY;
    let mut start = 0;
    while start < attempts {
        let end = (start + SEARCH_CHUNK).min(attempts);
        let results: Vec<(f64, Vec<f64>, CostGame, LeastCoreResult)> = (start..end)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(seed, rng::domain::SEARCH, k);
                let mut state = model.initial_state(&mut rng);
                let mut demand = vec![0.0; n];
                model.sample_into(&mut state, &mut rng, &mut demand);
                let game = build_realization_game(&demand, quantities, costs)?;
                let lc = least_core(&game)?;
                Ok((lc.epsilon_star, demand, game, lc))
            })
            .collect::<Result<_>>()?;
        for (k, (eps, demand, game, lc)) in results.into_iter().enumerate() {
            if eps > EMPTY_CORE_THRESHOLD {
                return Ok(SearchOutcome::Found { attempt: start + k as u64, demand, game, least_core: lc });
            }
            max_epsilon = max_epsilon.max(eps);
        }
        start = end;
    }
    Ok(SearchOutcome::Exhausted { attempts, max_epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandSpec, MarginalSpec, Regime};
    use crate::game::{build_expected_game, EstimatorConfig};

    fn fixture2() -> (DemandModel, ExpectedGame) {
        let m = DemandModel::iid_normal(&[100.0, 100.0], &[10.0, 10.0]).unwrap();
        let e = build_expected_game(&m, CostParams::new(1.0, 1.0).unwrap(), &EstimatorConfig::default()).unwrap();
        (m, e)
    }

    fn cfg(rule: Rule, n: usize, t_max: u64, reps: usize) -> DiagonalConfig {
        DiagonalConfig {
            run: DiagonalRun::new(rule, WeightProfile::uniform(n).unwrap(), t_max, reps),
            seed: 11,
            aggregation: DrAggregation::RunningDemand,
        }
    }

    #[test]
    fn first_stage_is_the_realization_game() {
        let (m, e) = fixture2();
        let source = DrSource::new(&e, &m, 5, DrAggregation::RunningDemand).unwrap();
        let mut seq = source.sequence(3).unwrap();
        seq.advance().unwrap();
        let mut rng = rng::stream(5, rng::domain::REPLICATION, 3);
        let mut st = m.initial_state(&mut rng);
        let x = m.sample_period(&mut st, &mut rng);
        let r = build_realization_game(&x, &e.quantities, e.costs).unwrap();
        assert_eq!(seq.current().unwrap().costs(), r.costs());
    }

    #[test]
    fn running_cost_starts_at_the_realization_game() {
        let (m, e) = fixture2();
        let a = DrSource::new(&e, &m, 5, DrAggregation::RunningDemand).unwrap();
        let b = DrSource::new(&e, &m, 5, DrAggregation::RunningCost).unwrap();
        let (mut sa, mut sb) = (a.sequence(0).unwrap(), b.sequence(0).unwrap());
        sa.advance().unwrap();
        sb.advance().unwrap();
        let (ga, gb) = (sa.current().unwrap(), sb.current().unwrap());
        assert!(ga.sup_distance(&gb) < 1e-12);
    }

    #[test]
    fn deterministic_demand_gives_degenerate_stages() {
        let spec = DemandSpec {
            marginals: vec![MarginalSpec::Deterministic { value: 50.0 }; 3],
            correlation: None,
            temporal: Temporal::Iid,
        };
        let m = DemandModel::new(spec).unwrap();
        let e = build_expected_game(&m, CostParams::new(1.0, 1.0).unwrap(), &EstimatorConfig::default()).unwrap();
        let trace = diagonal_experiment(&m, &e, &cfg(Rule::R1, 3, 64, 2)).unwrap();
        assert_eq!(trace.rows.len(), 2 * 7);
        for r in &trace.rows {
            assert!(r.degenerate);
            assert!(r.allocation.iter().all(|&a| a == 0.0));
            assert!(r.costs.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn dr_source_matches_diagonal_experiment() {
        let (m, e) = fixture2();
        let c = cfg(Rule::R2, 2, 300, 3);
        let a = diagonal_experiment(&m, &e, &c).unwrap();
        let src = DrSource::new(&e, &m, c.seed, c.aggregation).unwrap();
        let b = generic_diagonal(&src, &c.run).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn constant_source_reduces_to_fixed_process() {
        let g = CostGame::new(3, vec![3.0, 5.0, 7.0, 4.0, 9.0, 6.0, 10.0]).unwrap();
        let w = WeightProfile::uniform(3).unwrap();
        let run = DiagonalRun::new(Rule::R1, w.clone(), 200, 1);
        let trace = generic_diagonal(&ConstantSource { game: g.clone() }, &run).unwrap();
        for r in &trace.rows {
            assert_eq!(r.allocation, lehrer::final_average(Rule::R1, &g, &w, r.t).0);
            assert_eq!(r.eps, 0.0);
            assert_eq!(r.phi, 0.0);
        }
    }

    #[test]
    fn vanishing_perturbation_converges() {
        let g = CostGame::new(3, vec![0.0, 0.0, 12.0, 0.0, 0.0, 0.0, 12.0]).unwrap();
        let base = g.clone();
        let src = DeterministicSource {
            limit: g,
            f: move |t: u64| {
                let eta = if t % 2 == 0 { 1.0 } else { -1.0 } / t as f64;
                base.map_costs(|_, c| c * (1.0 + eta))
            },
        };
        let run = DiagonalRun::new(Rule::R1, WeightProfile::uniform(3).unwrap(), 10_000, 1);
        let trace = generic_diagonal(&src, &run).unwrap();
        let last = trace.final_rows().next().unwrap();
        assert!(last.dist_ls_inf <= 0.01 * 12.0, "{last:?}");
    }

    #[test]
    fn ls_lipschitz_bound_holds_per_stage() {
        let m = DemandModel::iid_normal(&[100.0, 80.0, 60.0], &[10.0, 20.0, 5.0]).unwrap();
        let e = build_expected_game(&m, CostParams::new(2.0, 1.0).unwrap(), &EstimatorConfig::default()).unwrap();
        let w = WeightProfile::uniform(3).unwrap();
        let trace = diagonal_experiment(&m, &e, &cfg(Rule::R1, 3, 256, 4)).unwrap();
        for r in &trace.rows {
            let stage = CostGame::new(3, r.costs.clone()).unwrap();
            let d = ls_value(&stage, &w).unwrap().sup_distance(&trace.ls_limit);
            assert!(d <= trace.lipschitz * r.eps * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn running_demand_costs_approach_g_at_the_mean() {
        // With p = h and normal demand, q_S = μ_S and g_S(μ_S) = 0.
        let (m, e) = fixture2();
        let path = dr_error_path(&m, &e, &[10, 10_000], 4, 3, DrAggregation::RunningDemand).unwrap();
        let source = DrSource::new(&e, &m, 3, DrAggregation::RunningDemand).unwrap();
        let mut seq = source.sequence(0).unwrap();
        for _ in 0..10_000 {
            seq.advance().unwrap();
        }
        assert!(seq.current().unwrap().costs().iter().all(|&c| c < 2.0));
        for v in path[1].iter() {
            assert!((v - e.game.grand_cost()).abs() < 2.0);
        }
    }

    #[test]
    fn running_cost_approaches_expected_game() {
        let (m, e) = fixture2();
        let path = dr_error_path(&m, &e, &[100, 100_000], 4, 3, DrAggregation::RunningCost).unwrap();
        assert!(median(&path[1]) < median(&path[0]));
        assert!(median(&path[1]) < 0.1);
    }

    #[test]
    fn budget_conservation_and_determinism() {
        let (m, e) = fixture2();
        let c = cfg(Rule::R1, 2, 500, 3);
        let a = diagonal_experiment(&m, &e, &c).unwrap();
        for r in &a.rows {
            let total: f64 = r.allocation.iter().sum();
            assert!((total - r.costs[2]).abs() <= 1e-12 * (1.0 + r.costs[2]));
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| diagonal_experiment(&m, &e, &c).unwrap());
        assert_eq!(a.rows, b.rows);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("replication,T,cost_1,cost_2,cost_3,alloc_1,alloc_2,dist_ls_inf,max_excess_cE,eps_T,phi_T,degenerate\n"));
    }

    #[test]
    fn warm_start_runs_total_schedule() {
        let (m, e) = fixture2();
        let mut c = cfg(Rule::R2, 2, 100, 1);
        c.run.warm_start = true;
        let trace = diagonal_experiment(&m, &e, &c).unwrap();
        let last = trace.final_rows().next().unwrap();
        let total: f64 = last.allocation.iter().sum();
        assert!((total - last.costs[2]).abs() < 1e-12 * (1.0 + total));
    }

    #[test]
    fn ar1_with_zero_rho_matches_iid() {
        let (m, e) = fixture2();
        let ar = m.with_temporal(Temporal::Ar1 { rho: 0.0 }).unwrap();
        let mut sc = StationaryConfig {
            run: DiagonalRun::new(Rule::R1, WeightProfile::uniform(2).unwrap(), 200, 4),
            seed: 9,
            aggregation: DrAggregation::RunningDemand,
            core_tolerance: 0.05,
            band_beta: 0.95,
        };
        let out = stationary_experiment(&ar, &e, &sc).unwrap();
        let mut dc = cfg(Rule::R1, 2, 200, 4);
        dc.seed = 9;
        let iid = diagonal_experiment(&m, &e, &dc).unwrap();
        let finals: Vec<&TraceRow> = iid.final_rows().collect();
        for (a, b) in out.trace.rows.iter().zip(finals) {
            assert_eq!(a.costs, b.costs);
            assert_eq!(a.allocation, b.allocation);
        }
        sc.run.replications = 1;
        assert!(stationary_experiment(&ar, &e, &sc).is_err());
        assert!(stationary_experiment(&m, &e, &StationaryConfig { run: dc.run, ..sc }).is_err());
    }

    #[test]
    fn regime_clusters_sit_at_regime_means() {
        let (m, e) = fixture2();
        let mix = m
            .with_temporal(Temporal::RegimeMixture {
                regimes: vec![
                    Regime { probability: 0.5, shifts: vec![20.0, 20.0] },
                    Regime { probability: 0.5, shifts: vec![-20.0, -20.0] },
                ],
            })
            .unwrap();
        let sc = StationaryConfig {
            run: DiagonalRun::new(Rule::R1, WeightProfile::uniform(2).unwrap(), 2_000, 20),
            seed: 4,
            aggregation: DrAggregation::RunningDemand,
            core_tolerance: 0.05,
            band_beta: 0.95,
        };
        let out = stationary_experiment(&mix, &e, &sc).unwrap();
        assert_eq!(out.summary.regimes.len(), 2);
        for r in &out.summary.regimes {
            assert!(r.replications > 0);
            for c in &r.clusters {
                let size = c.mask.count_ones() as f64;
                assert!((c.target - 20.0 * size).abs() < 1e-9);
                assert!(c.within_three_se, "{c:?}");
            }
        }
    }

    #[test]
    fn search_on_zero_game_exhausts() {
        let spec = DemandSpec {
            marginals: vec![MarginalSpec::Deterministic { value: 5.0 }; 3],
            correlation: None,
            temporal: Temporal::Iid,
        };
        let m = DemandModel::new(spec).unwrap();
        let e = build_expected_game(&m, CostParams::new(1.0, 1.0).unwrap(), &EstimatorConfig::default()).unwrap();
        match empty_core_search(&m, &e.quantities, e.costs, 100, 1).unwrap() {
            SearchOutcome::Exhausted { attempts, max_epsilon } => {
                assert_eq!(attempts, 100);
                assert!(max_epsilon.abs() < 1e-12);
            }
            SearchOutcome::Found { .. } => panic!("zero game has a core"),
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(InnerSchedule::Linear.steps(7), 7);
        assert_eq!(InnerSchedule::Accelerated { factor: 3 }.steps(7), 21);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
