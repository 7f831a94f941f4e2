//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure (or a failed `verify`), 2
//! configuration or input error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::acceptance::{self, CriterionOutcome, CRITERIA};
use crate::config::{ExperimentBlock, ExperimentConfig, SolutionKind, WeightSpec};
use crate::core_geometry::{core_membership, least_core, max_excess};
use crate::dynamic::{
    diagonal_experiment, empty_core_search, DiagonalConfig, ExperimentTrace, SearchOutcome, StageSummary,
    StationaryConfig, StationarySummary, stationary_experiment,
};
use crate::error::{Error, Result};
use crate::game::{build_expected_game, CostGame, ExpectedGame, GameDocument};
use crate::lehrer::{self, ProcessRun, Rule};
use crate::solutions::{ls_value, shapley_value, Allocation};

#[derive(Debug, Parser)]
#[command(name = "newsvendor", version, about = "Newsvendor centralization games and allocation processes")]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the expected game of the configured demand model.
    Build,
    /// Compute a solution of a game document.
    Solve {
        #[arg(long)]
        game: Option<PathBuf>,
        #[arg(long, value_enum)]
        solution: Option<SolutionKind>,
        /// Comma-separated allocation for core-check.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        allocation: Option<Vec<f64>>,
        /// Use the Shapley weight profile for ls.
        #[arg(long)]
        shapley_weights: bool,
    },
    /// Run an allocation process on a fixed game.
    Process {
        #[arg(long)]
        game: Option<PathBuf>,
        #[arg(long, value_enum)]
        rule: Option<Rule>,
        #[arg(long)]
        steps: Option<u64>,
        /// Run R2 on the game tightened by its least-core value.
        #[arg(long)]
        least_core: bool,
    },
    /// Diagonal experiment on dynamic realization games.
    Diagonal,
    /// Diagonal experiment under stationary non-iid demand.
    Stationary,
    /// Look for a realization game with an empty core.
    SearchEmptyCore,
    /// Run the acceptance criteria.
    Verify {
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
    },
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::Build => "build-expected",
            Command::Solve { .. } => "solve",
            Command::Process { .. } => "process",
            Command::Diagonal => "diagonal",
            Command::Stationary => "stationary",
            Command::SearchEmptyCore => "empty-core-search",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.estimator.seed = None;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    let mut cfg = cfg.resolve(kind)?;
    apply_flags(&cli.command, &mut cfg)?;

    let threads = cli.threads.unwrap_or(0);
    if cli.threads == Some(0) {
        return Err(Error::config("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::internal(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cfg))
}

fn apply_flags(command: &Command, cfg: &mut ExperimentConfig) -> Result<()> {
    let block = cfg.experiment.as_mut().ok_or_else(|| Error::internal("unresolved experiment block"))?;
    match (command, block) {
        (
            Command::Solve { game: g, solution: s, allocation: a, shapley_weights },
            ExperimentBlock::Solve { game, solution, allocation, weights, .. },
        ) => {
            if g.is_some() {
                *game = g.clone();
            }
            if let Some(s) = s {
                *solution = *s;
            }
            if a.is_some() {
                *allocation = a.clone();
            }
            if *shapley_weights {
                *weights = WeightSpec::Shapley;
            }
        }
        (
            Command::Process { game: g, rule: r, steps: st, least_core: lc },
            ExperimentBlock::Process { game, rule, steps, least_core_variant, .. },
        ) => {
            if g.is_some() {
                *game = g.clone();
            }
            if let Some(r) = r {
                *rule = *r;
            }
            if let Some(st) = st {
                *steps = *st;
            }
            *least_core_variant |= *lc;
        }
        (Command::Verify { criteria: c }, ExperimentBlock::Verify { criteria }) => {
            if c.is_some() {
                *criteria = c.clone();
            }
        }
        _ => {}
    }
    Ok(())
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.output.directory.clone();
        fs::create_dir_all(&dir)?;
        let out = Output { dir };
        out.text("config.json", &cfg.to_json()?)?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    fn trace(&self, name: &str, trace: &ExperimentTrace) -> Result<()> {
        let file = fs::File::create(self.path(name))?;
        trace.write_csv(std::io::BufWriter::new(file))
    }
}

fn dispatch(cfg: &ExperimentConfig) -> Result<i32> {
    let out = Output::new(cfg)?;
    match cfg.experiment()? {
        ExperimentBlock::BuildExpected {} => {
            let e = expected_game(cfg)?;
            out.json("game.json", &e.game.to_document())?;
            println!("expected game written to {}", out.path("game.json").display());
        }
        ExperimentBlock::Solve { game, solution, weights, allocation, tolerance } => {
            let path = game.as_deref().ok_or_else(|| Error::config("solve needs a game document (--game)"))?;
            let game = read_game(path)?;
            let result = solve(&game, *solution, weights, allocation.as_deref(), *tolerance)?;
            println!("{}", serde_json::to_string(&result)?);
            out.json("solution.json", &result)?;
        }
        ExperimentBlock::Process { game, rule, weights, steps, least_core_variant } => {
            let game = match game {
                Some(path) => read_game(path)?,
                None => expected_game(cfg)?.game,
            };
            if *steps == 0 {
                return Err(Error::config("steps must be at least 1"));
            }
            let w = weights.resolve(game.n())?;
            let run = if *least_core_variant {
                lehrer::run_least_core_variant(&game, &least_core(&game)?, *steps, cfg.output.stride)?
            } else {
                lehrer::run(*rule, &game, &w, *steps, cfg.output.stride)
            };
            write_process_csv(&out.path("process.csv"), &run)?;
            let summary = ProcessSummary {
                rule: if *least_core_variant { Rule::R2 } else { *rule },
                least_core_variant: *least_core_variant,
                steps: run.state.steps(),
                max_excess: max_excess(&game, &run.allocation),
                ls_value: ls_value(&game, &w)?,
                balance_violations: run.state.balance_violations(),
                note: run.note.clone(),
                allocation: run.allocation,
            };
            println!("allocation {:?}", summary.allocation.0);
            out.json("process.json", &summary)?;
        }
        block @ ExperimentBlock::Diagonal { aggregation, .. } => {
            let model = cfg.demand_model()?;
            let e = build_expected_game(&model, cfg.cost_params()?, &cfg.estimator())?;
            out.json("game.json", &e.game.to_document())?;
            let run = block.diagonal_run(model.n(), cfg.output.stride)?;
            let trace = diagonal_experiment(&model, &e, &DiagonalConfig { run, seed: cfg.seed, aggregation: *aggregation })?;
            out.trace("trace.csv", &trace)?;
            let summary = DiagonalSummary {
                seed: cfg.seed,
                expected_costs: e.game.costs().to_vec(),
                ls_limit: trace.ls_limit.clone(),
                lipschitz: trace.lipschitz,
                stages: trace.stage_summaries(),
            };
            if let Some(last) = summary.stages.last() {
                println!(
                    "T = {}: median ‖ā − LS(c_E)‖∞ {:.6}, median max_excess {:.6}, median ε_T {:.6}",
                    last.t, last.median_dist_ls_inf, last.median_max_excess, last.median_eps
                );
            }
            out.json("summary.json", &summary)?;
        }
        block @ ExperimentBlock::Stationary { aggregation, core_tolerance, band_beta, .. } => {
            let model = cfg.demand_model()?;
            let e = build_expected_game(&model, cfg.cost_params()?, &cfg.estimator())?;
            out.json("game.json", &e.game.to_document())?;
            let run = block.diagonal_run(model.n(), cfg.output.stride)?;
            let sc = StationaryConfig {
                run,
                seed: cfg.seed,
                aggregation: *aggregation,
                core_tolerance: *core_tolerance,
                band_beta: *band_beta,
            };
            let outcome = stationary_experiment(&model, &e, &sc)?;
            out.trace("trace.csv", &outcome.trace)?;
            println!("max spread / c_E(S) = {:.6}", outcome.summary.max_relative_spread());
            out.json("summary.json", &StationaryReport { seed: cfg.seed, summary: outcome.summary })?;
        }
        ExperimentBlock::EmptyCoreSearch { attempts } => {
            let model = cfg.demand_model()?;
            let e = expected_game(cfg)?;
            let report = match empty_core_search(&model, &e.quantities, e.costs, *attempts, cfg.seed)? {
                SearchOutcome::Found { attempt, demand, game, least_core } => {
                    out.json("witness_game.json", &game.to_document())?;
                    println!("empty core at draw {attempt}: ε* = {}", least_core.epsilon_star);
                    SearchReport {
                        found: true,
                        attempts: attempt + 1,
                        epsilon_star: least_core.epsilon_star,
                        witness: Some(least_core.witness),
                        demand: Some(demand),
                    }
                }
                SearchOutcome::Exhausted { attempts, max_epsilon } => {
                    println!("no empty core in {attempts} draws; largest ε* = {max_epsilon}");
                    SearchReport { found: false, attempts, epsilon_star: max_epsilon, witness: None, demand: None }
                }
            };
            out.json("search.json", &report)?;
        }
        ExperimentBlock::Verify { criteria } => {
            let ids = criteria.clone().unwrap_or_else(|| CRITERIA.to_vec());
            let mut outcomes: Vec<CriterionOutcome> = Vec::new();
            for id in ids {
                let o = acceptance::run(id)?;
                println!("{o}");
                outcomes.push(o);
            }
            out.json("acceptance.json", &outcomes)?;
            return Ok(if outcomes.iter().all(|o| o.passed) { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn expected_game(cfg: &ExperimentConfig) -> Result<ExpectedGame> {
    build_expected_game(&cfg.demand_model()?, cfg.cost_params()?, &cfg.estimator())
}

fn read_game(path: &Path) -> Result<CostGame> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read game {}: {e}", path.display())))?;
    let doc: GameDocument = serde_json::from_str(&text)?;
    CostGame::from_document(&doc).map_err(|e| Error::config(format!("game {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct SolveResult {
    pub solution: SolutionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Allocation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_core: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_excess: Option<f64>,
}

pub fn solve(
    game: &CostGame,
    kind: SolutionKind,
    weights: &WeightSpec,
    allocation: Option<&[f64]>,
    tolerance: f64,
) -> Result<SolveResult> {
    let mut r = SolveResult { solution: kind, allocation: None, epsilon_star: None, in_core: None, max_excess: None };
    match kind {
        SolutionKind::Ls => r.allocation = Some(ls_value(game, &weights.resolve(game.n())?)?),
        SolutionKind::Shapley => r.allocation = Some(shapley_value(game)),
        SolutionKind::LeastCore => {
            let lc = least_core(game)?;
            r.epsilon_star = Some(lc.epsilon_star);
            r.allocation = Some(lc.witness);
        }
        SolutionKind::CoreCheck => {
            let x = allocation.ok_or_else(|| Error::config("core-check needs an allocation"))?;
            if x.len() != game.n() {
                return Err(Error::config(format!("allocation has {} entries, game has {} players", x.len(), game.n())));
            }
            let x = Allocation(x.to_vec());
            r.in_core = Some(core_membership(game, &x, tolerance));
            r.max_excess = Some(max_excess(game, &x));
            r.allocation = Some(x);
        }
    }
    Ok(r)
}

#[derive(Debug, Serialize)]
struct ProcessSummary {
    rule: Rule,
    least_core_variant: bool,
    steps: u64,
    allocation: Allocation,
    max_excess: f64,
    ls_value: Allocation,
    balance_violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn write_process_csv(path: &Path, run: &ProcessRun) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = run.state.n();
    let mut header = vec!["t".to_string(), "chosen".to_string()];
    header.extend((1..=n).map(|i| format!("alloc_{i}")));
    header.extend(["max_excess", "potential"].map(String::from));
    w.write_record(&header)?;
    for row in &run.trace {
        let mut rec = vec![row.t.to_string(), (row.chosen + 1).to_string()];
        rec.extend(row.allocation.iter().chain([&row.max_excess, &row.potential]).map(|x| format!("{x:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiagonalSummary {
    seed: u64,
    expected_costs: Vec<f64>,
    ls_limit: Allocation,
    lipschitz: f64,
    stages: Vec<StageSummary>,
}

#[derive(Debug, Serialize)]
struct StationaryReport {
    seed: u64,
    #[serde(flatten)]
    summary: StationarySummary,
}

#[derive(Debug, Serialize)]
struct SearchReport {
    found: bool,
    attempts: u64,
    /// First ε* above the threshold, or the largest seen.
    epsilon_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Allocation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    demand: Option<Vec<f64>>,
}
