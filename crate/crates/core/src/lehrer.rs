//! Lehrer's repeated allocation processes on a fixed normalized game.
//!
//! Each step hands the whole budget `v(N) = 1` to one player; the object of
//! interest is the historical average `ā_t = counts / t`.
//!
//! * Rule R1 is conditional gradient on `Φ(ā) = Σ_{S ⊊ N} α_S (ā(S) - v(S))²`:
//!   the budget goes to `argmax_i Σ_{S ∋ i} α_S (v(S) - ā_t(S))`. The averages
//!   converge to the least-square value `LS^α`.
//! * Rule R2 is Blackwell approachability of the nonnegative orthant by the
//!   average surplus vector `z̄_t^S = v(S) - ā_t(S)` (cost convention):
//!   over-charged coalitions get weight `-min(z̄_t^S, 0)` and the budget goes
//!   to `argmax_i Σ_S w_S (v(S) - 1[i ∈ S])`. On a balanced game the averages
//!   approach the core.
//!
//! Only proper coalitions enter either rule. Ties go to the lowest player
//! index.

use serde::{Deserialize, Serialize};

use crate::coalition::{self, Coalition};
use crate::core_geometry::{max_excess, LeastCoreResult, DEFAULT_TOL};
use crate::error::Result;
use crate::game::{CostGame, Normalized, NormalizedGame};
use crate::solutions::{Allocation, WeightProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    R1,
    R2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessState {
    rule: Rule,
    t: u64,
    counts: Vec<u64>,
    /// `t · ā_t(S)` per coalition, indexed by `mask - 1`.
    coalition_counts: Vec<u64>,
    /// `z̄_t^S` for R2, indexed by `mask - 1`; the grand slot stays zero.
    zbar: Vec<f64>,
    /// R2 steps whose best weighted surplus was negative, which cannot
    /// happen on a balanced game.
    balance_violations: u64,
}

impl ProcessState {
    /// The empty history.
    pub fn new(rule: Rule, n: usize) -> Self {
        let k = coalition::coalition_count(n);
        ProcessState {
            rule,
            t: 0,
            counts: vec![0; n],
            coalition_counts: vec![0; k],
            zbar: vec![0.0; k],
            balance_violations: 0,
        }
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn zbar(&self, s: Coalition) -> f64 {
        self.zbar[s.index()]
    }

    pub fn balance_violations(&self) -> u64 {
        self.balance_violations
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// `ā_t` on the normalized scale (zeros on the empty history).
    pub fn average(&self) -> Vec<f64> {
        if self.t == 0 {
            return vec![0.0; self.n()];
        }
        let t = self.t as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    #[inline]
    fn average_of(&self, s: Coalition) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.coalition_counts[s.index()] as f64 / self.t as f64
        }
    }

    /// `ā_t` in cost units of the game normalized by `scale`.
    pub fn allocation(&self, scale: f64) -> Allocation {
        if self.t == 0 {
            return Allocation::zeros(self.n());
        }
        let t = self.t as f64;
        Allocation(self.counts.iter().map(|&c| c as f64 * scale / t).collect())
    }

    /// Recomputes `z̄` against a new game, keeping the allocation history.
    pub fn rebase(&mut self, v: &NormalizedGame) {
        for s in coalition::proper(self.n()) {
            self.zbar[s.index()] = v.value(s) - self.average_of(s);
        }
    }

    fn award(&mut self, player: usize, v: &NormalizedGame) {
        self.t += 1;
        self.counts[player] += 1;
        let n = self.n();
        for s in coalition::all(n) {
            if s.contains(player) {
                self.coalition_counts[s.index()] += 1;
            }
        }
        if self.rule == Rule::R2 {
            let t = self.t as f64;
            for s in coalition::proper(n) {
                let y = v.value(s) - if s.contains(player) { 1.0 } else { 0.0 };
                let z = &mut self.zbar[s.index()];
                *z += (y - *z) / t;
            }
        }
    }

    /// `Φ(ā_t) = Σ_{S ⊊ N} α_S (ā_t(S) - v(S))²` on the normalized scale.
    pub fn potential(&self, v: &NormalizedGame, w: &WeightProfile) -> f64 {
        coalition::proper(self.n())
            .map(|s| w.weight(s) * (self.average_of(s) - v.value(s)).powi(2))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen: usize,
    pub indices: Vec<f64>,
    pub tie: bool,
}

fn select(indices: Vec<f64>) -> SelectionReport {
    let best = indices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + best.abs());
    let mut winners = indices.iter().enumerate().filter(|(_, &x)| x >= best - tol).map(|(i, _)| i);
    let chosen = winners.next().expect("at least one player");
    let tie = winners.next().is_some();
    SelectionReport { chosen, indices, tie }
}

/// One R1 step. The game is non-degenerate by construction of
/// [`NormalizedGame`].
pub fn r1_step(state: &mut ProcessState, v: &NormalizedGame, w: &WeightProfile) -> SelectionReport {
    let n = state.n();
    let mut sigma = vec![0.0; n];
    for s in coalition::proper(n) {
        let d = w.weight(s) * (v.value(s) - state.average_of(s));
        for i in s.players() {
            sigma[i] += d;
        }
    }
    let report = select(sigma);
    state.award(report.chosen, v);
    report
}

/// One R2 step.
pub fn r2_step(state: &mut ProcessState, v: &NormalizedGame) -> SelectionReport {
    let n = state.n();
    let mut base = 0.0;
    let mut index = vec![0.0; n];
    for s in coalition::proper(n) {
        let w = -state.zbar[s.index()].min(0.0);
        if w > 0.0 {
            base += w * v.value(s);
            for i in s.players() {
                index[i] -= w;
            }
        }
    }
    index.iter_mut().for_each(|x| *x += base);
    let report = select(index);
    if report.indices[report.chosen] < -DEFAULT_TOL {
        state.balance_violations += 1;
    }
    state.award(report.chosen, v);
    report
}

pub fn step(state: &mut ProcessState, v: &NormalizedGame, w: &WeightProfile) -> SelectionReport {
    match state.rule {
        Rule::R1 => r1_step(state, v, w),
        Rule::R2 => r2_step(state, v),
    }
}

/// Which steps of a run are written to the trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Stride {
    /// `t = 1, 2, 4, 8, ...` plus the final step.
    #[default]
    PowersOfTwo,
    /// Every `k`-th step plus the final step.
    Every { k: u64 },
}

impl Stride {
    pub fn records(&self, t: u64, last: u64) -> bool {
        t == last
            || match self {
                Stride::PowersOfTwo => t.is_power_of_two(),
                Stride::Every { k } => *k > 0 && t % k == 0,
            }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessTraceRow {
    pub t: u64,
    pub chosen: usize,
    /// `ā_t` in cost units.
    pub allocation: Vec<f64>,
    pub max_excess: f64,
    /// `Φ(ā_t)` on the normalized scale.
    pub potential: f64,
}

#[derive(Clone, Debug)]
pub struct ProcessRun {
    pub allocation: Allocation,
    pub trace: Vec<ProcessTraceRow>,
    pub state: ProcessState,
    pub note: Option<String>,
}

/// Normalizes `game` and runs `steps` steps of `rule` from the empty
/// history. A degenerate game returns the zero allocation and no trace.
pub fn run(rule: Rule, game: &CostGame, w: &WeightProfile, steps: u64, stride: Stride) -> ProcessRun {
    let n = game.n();
    let mut state = ProcessState::new(rule, n);
    let v = match game.normalize() {
        Normalized::Degenerate => {
            return ProcessRun { allocation: Allocation::zeros(n), trace: Vec::new(), state, note: Some("degenerate game".into()) }
        }
        Normalized::Game(v) => v,
    };
    let mut trace = Vec::new();
    for t in 1..=steps {
        let report = step(&mut state, &v, w);
        if stride.records(t, steps) {
            let allocation = state.allocation(v.scale);
            trace.push(ProcessTraceRow {
                t,
                chosen: report.chosen,
                max_excess: max_excess(game, &allocation),
                potential: state.potential(&v, w),
                allocation: allocation.0,
            });
        }
    }
    ProcessRun { allocation: state.allocation(v.scale), trace, state, note: None }
}

/// `ā_L` in cost units without a trace.
pub fn final_average(rule: Rule, game: &CostGame, w: &WeightProfile, steps: u64) -> Allocation {
    match game.normalize() {
        Normalized::Degenerate => Allocation::zeros(game.n()),
        Normalized::Game(v) => {
            let mut state = ProcessState::new(rule, game.n());
            for _ in 0..steps {
                step(&mut state, &v, w);
            }
            state.allocation(v.scale)
        }
    }
}

/// R2 on the game tightened by the least-core value, `c'(S) = c(S) + ε*`
/// for proper `S`, whose core is the least core of `c`. Balanced games fall
/// back to plain R2.
pub fn run_least_core_variant(game: &CostGame, least: &LeastCoreResult, steps: u64, stride: Stride) -> Result<ProcessRun> {
    let w = WeightProfile::uniform(game.n())?;
    if least.epsilon_star <= DEFAULT_TOL {
        let mut out = run(Rule::R2, game, &w, steps, stride);
        out.note = Some(format!("game is balanced (ε* = {:e}); ran plain R2", least.epsilon_star));
        return Ok(out);
    }
    let n = game.n();
    let eps = least.epsilon_star;
    let tightened = game.map_costs(|s, c| if s.is_grand(n) { c } else { c + eps })?;
    let mut out = run(Rule::R2, &tightened, &w, steps, stride);
    for row in &mut out.trace {
        row.max_excess = max_excess(game, &Allocation(row.allocation.clone()));
    }
    Ok(out)
}
