//! JSON experiment configuration.
//!
//! Every block has defaults, unknown keys are rejected, and the resolved
//! configuration (defaults filled, seeds fixed) is what gets echoed next to
//! the outputs. Re-submitting the echo reproduces the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demand::{DemandModel, DemandSpec};
use crate::dynamic::{DiagonalRun, DrAggregation, InnerSchedule};
use crate::error::{Error, Result};
use crate::game::{CostMethod, CostParams, EstimatorConfig};
use crate::lehrer::{Rule, Stride};
use crate::solutions::WeightProfile;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Master seed for every random stream of the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<DemandSpec>,
    #[serde(default)]
    pub costs: CostsBlock,
    #[serde(default)]
    pub estimator: EstimatorBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            demand: None,
            costs: CostsBlock::default(),
            estimator: EstimatorBlock::default(),
            experiment: None,
            output: OutputBlock::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsBlock {
    pub p: f64,
    pub h: f64,
}

impl Default for CostsBlock {
    fn default() -> Self {
        CostsBlock { p: 1.0, h: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Defaults to the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub method: CostMethod,
}

fn default_samples() -> usize {
    EstimatorConfig::default().samples
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        EstimatorBlock { samples: default_samples(), seed: None, method: CostMethod::Auto }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Trace thinning for processes and diagonal stages.
    #[serde(default)]
    pub stride: Stride,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: default_directory(), stride: Stride::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    Uniform,
    Shapley,
    /// `by_size[s - 1] = α(s)`.
    Custom { by_size: Vec<f64> },
}

impl WeightSpec {
    pub fn resolve(&self, n: usize) -> Result<WeightProfile> {
        let w = match self {
            WeightSpec::Uniform => WeightProfile::uniform(n),
            WeightSpec::Shapley => WeightProfile::shapley(n),
            WeightSpec::Custom { by_size } => WeightProfile::new(n, by_size.clone()),
        };
        w.map_err(|e| Error::config(format!("weights: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionKind {
    Ls,
    Shapley,
    LeastCore,
    CoreCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentBlock {
    BuildExpected {},
    Solve {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        game: Option<PathBuf>,
        #[serde(default = "default_solution")]
        solution: SolutionKind,
        #[serde(default)]
        weights: WeightSpec,
        /// Candidate allocation for `core-check`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        allocation: Option<Vec<f64>>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    Process {
        /// Game document; the expected game of `demand` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        game: Option<PathBuf>,
        #[serde(default = "default_rule")]
        rule: Rule,
        #[serde(default)]
        weights: WeightSpec,
        #[serde(default = "default_steps")]
        steps: u64,
        #[serde(default)]
        least_core_variant: bool,
    },
    Diagonal {
        #[serde(default = "default_rule")]
        rule: Rule,
        #[serde(default)]
        weights: WeightSpec,
        #[serde(default = "default_steps")]
        t_max: u64,
        #[serde(default = "default_replications")]
        replications: usize,
        #[serde(default)]
        schedule: InnerSchedule,
        #[serde(default)]
        warm_start: bool,
        #[serde(default)]
        aggregation: DrAggregation,
    },
    Stationary {
        #[serde(default = "default_rule")]
        rule: Rule,
        #[serde(default)]
        weights: WeightSpec,
        #[serde(default = "default_steps")]
        t_max: u64,
        #[serde(default = "default_replications")]
        replications: usize,
        #[serde(default)]
        schedule: InnerSchedule,
        #[serde(default)]
        aggregation: DrAggregation,
        /// Core slack as a fraction of `c_E(N)`.
        #[serde(default = "default_core_tolerance")]
        core_tolerance: f64,
        #[serde(default = "default_band_beta")]
        band_beta: f64,
    },
    EmptyCoreSearch {
        #[serde(default = "default_attempts")]
        attempts: u64,
    },
    Verify {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        criteria: Option<Vec<u8>>,
    },
}

fn default_solution() -> SolutionKind {
    SolutionKind::Ls
}
fn default_tolerance() -> f64 {
    crate::core_geometry::DEFAULT_TOL
}
fn default_rule() -> Rule {
    Rule::R1
}
fn default_steps() -> u64 {
    10_000
}
fn default_replications() -> usize {
    20
}
fn default_core_tolerance() -> f64 {
    0.05
}
fn default_band_beta() -> f64 {
    0.95
}
fn default_attempts() -> u64 {
    100_000
}

impl ExperimentBlock {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentBlock::BuildExpected {} => "build-expected",
            ExperimentBlock::Solve { .. } => "solve",
            ExperimentBlock::Process { .. } => "process",
            ExperimentBlock::Diagonal { .. } => "diagonal",
            ExperimentBlock::Stationary { .. } => "stationary",
            ExperimentBlock::EmptyCoreSearch { .. } => "empty-core-search",
            ExperimentBlock::Verify { .. } => "verify",
        }
    }

    /// The block with every field at its default.
    pub fn default_for(kind: &str) -> Result<Self> {
        serde_json::from_value(serde_json::json!({ "kind": kind }))
            .map_err(|e| Error::config(format!("unknown experiment kind {kind:?}: {e}")))
    }

    pub fn diagonal_run(&self, n: usize, stages: Stride) -> Result<DiagonalRun> {
        let (rule, weights, t_max, replications, schedule, warm_start) = match self {
            ExperimentBlock::Diagonal { rule, weights, t_max, replications, schedule, warm_start, .. } => {
                (*rule, weights, *t_max, *replications, *schedule, *warm_start)
            }
            ExperimentBlock::Stationary { rule, weights, t_max, replications, schedule, .. } => {
                (*rule, weights, *t_max, *replications, *schedule, false)
            }
            other => return Err(Error::config(format!("{} block has no diagonal parameters", other.kind()))),
        };
        Ok(DiagonalRun { rule, weights: weights.resolve(n)?, t_max, schedule, replications, stages, warm_start })
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Fills the experiment block for `kind` and the estimator seed. `build`
    /// and `verify` take no block parameters and replace any other block.
    pub fn resolve(mut self, kind: &str) -> Result<Self> {
        let needs_block = !matches!(kind, "build-expected" | "verify");
        match &self.experiment {
            Some(block) if block.kind() != kind && !needs_block => {
                self.experiment = Some(ExperimentBlock::default_for(kind)?);
            }
            Some(block) if block.kind() != kind => {
                return Err(Error::config(format!(
                    "config describes a {} experiment, not {kind}",
                    block.kind()
                )))
            }
            Some(_) => {}
            None => self.experiment = Some(ExperimentBlock::default_for(kind)?),
        }
        self.estimator.seed.get_or_insert(self.seed);
        Ok(self)
    }

    pub fn cost_params(&self) -> Result<CostParams> {
        CostParams::new(self.costs.p, self.costs.h).map_err(|e| Error::config(format!("costs: {e}")))
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            samples: self.estimator.samples,
            seed: self.estimator.seed.unwrap_or(self.seed),
            method: self.estimator.method,
        }
    }

    pub fn demand_model(&self) -> Result<DemandModel> {
        let spec = self.demand.clone().ok_or_else(|| Error::config("this command needs a demand block"))?;
        DemandModel::new(spec).map_err(|e| match e {
            Error::Domain(m) => Error::config(format!("demand: {m}")),
            other => other,
        })
    }

    pub fn experiment(&self) -> Result<&ExperimentBlock> {
        self.experiment.as_ref().ok_or_else(|| Error::config("missing experiment block"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_echo_round_trip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"demand": {"marginals": [{"kind": "normal", "mean": 100, "sd": 10},
                                         {"kind": "normal", "mean": 100, "sd": 10}]},
                "seed": 7, "experiment": {"kind": "diagonal", "rule": "r2"}}"#,
        )
        .unwrap()
        .resolve("diagonal")
        .unwrap();
        assert_eq!(cfg.estimator.seed, Some(7));
        match cfg.experiment().unwrap() {
            ExperimentBlock::Diagonal { rule, t_max, replications, .. } => {
                assert_eq!((*rule, *t_max, *replications), (Rule::R2, 10_000, 20));
            }
            other => panic!("{other:?}"),
        }
        let echo = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&echo).unwrap().resolve("diagonal").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_mismatches_are_config_errors() {
        for bad in [
            r#"{"sed": 1}"#,
            r#"{"costs": {"p": 1, "h": 1, "q": 2}}"#,
            r#"{"experiment": {"kind": "diagonal", "tmax": 5}}"#,
            r#"{"schema_version": 9}"#,
        ] {
            assert_eq!(ExperimentConfig::from_json(bad).unwrap_err().exit_code(), 2, "{bad}");
        }
        let cfg = ExperimentConfig::from_json(r#"{"experiment": {"kind": "verify"}}"#).unwrap();
        assert_eq!(cfg.clone().resolve("diagonal").unwrap_err().exit_code(), 2);
        assert_eq!(cfg.resolve("build-expected").unwrap().experiment().unwrap().kind(), "build-expected");
        assert!(ExperimentConfig::default().demand_model().is_err());
    }

    #[test]
    fn every_kind_has_defaults() {
        for kind in ["build-expected", "solve", "process", "diagonal", "stationary", "empty-core-search", "verify"] {
            assert_eq!(ExperimentBlock::default_for(kind).unwrap().kind(), kind);
        }
    }
}
