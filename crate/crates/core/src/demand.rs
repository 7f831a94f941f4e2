//! Store demand models.
//!
//! A [`DemandModel`] couples per-store marginals through a Gaussian copula:
//! each period draws a latent standard-normal vector with the configured
//! correlation and pushes every coordinate through its marginal's inverse
//! CDF. Temporal structure acts on the latent vector (AR(1)) or adds a
//! per-replication mean shift (regime mixture), so the one-period marginals
//! are the same under every temporal kind except the mixture, whose
//! one-period law is the mixture itself.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::coalition::{self, Coalition};
use crate::error::{Error, Result};
use crate::rng;

/// Monte Carlo quantile estimates below this many draws are refused.
pub const MIN_MC_SAMPLES: usize = 1_000;

/// Draws per parallel batch when sampling demand panels.
const PANEL_BATCH: usize = 16_384;

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub fn normal_pdf(z: f64) -> f64 {
    std_normal().pdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarginalSpec {
    Deterministic { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Plain normal. Puts mass on negative demand.
    Normal { mean: f64, sd: f64 },
    /// Normal with parameters `mean`, `sd`, conditioned on being nonnegative.
    TruncatedNormal { mean: f64, sd: f64 },
    /// `exp(meanlog + sdlog * Z)`.
    Lognormal { meanlog: f64, sdlog: f64 },
    /// Resampling from a fixed list of observations.
    Empirical { samples: Vec<f64> },
}

impl MarginalSpec {
    pub fn normal(mean: f64, sd: f64) -> Self {
        MarginalSpec::Normal { mean, sd }
    }

    fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            MarginalSpec::Deterministic { value } => finite(&[*value]) && *value >= 0.0,
            MarginalSpec::Uniform { low, high } => finite(&[*low, *high]) && *low >= 0.0 && low < high,
            MarginalSpec::Normal { mean, sd } | MarginalSpec::TruncatedNormal { mean, sd } => {
                finite(&[*mean, *sd]) && *sd > 0.0
            }
            MarginalSpec::Lognormal { meanlog, sdlog } => finite(&[*meanlog, *sdlog]) && *sdlog > 0.0,
            MarginalSpec::Empirical { samples } => {
                !samples.is_empty() && finite(samples) && samples.iter().all(|&x| x >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid marginal parameters: {self:?}")))
        }
    }

    /// Effective mean of the marginal (the truncated mean for
    /// `truncated-normal`).
    pub fn mean(&self) -> f64 {
        match self {
            MarginalSpec::Deterministic { value } => *value,
            MarginalSpec::Uniform { low, high } => 0.5 * (low + high),
            MarginalSpec::Normal { mean, .. } => *mean,
            MarginalSpec::TruncatedNormal { mean, sd } => {
                let alpha = -mean / sd;
                // Inverse Mills ratio; cdf(-alpha) keeps the upper tail accurate.
                mean + sd * normal_pdf(alpha) / normal_cdf(-alpha)
            }
            MarginalSpec::Lognormal { meanlog, sdlog } => (meanlog + 0.5 * sdlog * sdlog).exp(),
            MarginalSpec::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, MarginalSpec::Normal { .. })
    }

    /// Maps a latent standard-normal draw to demand via the inverse CDF.
    pub fn from_latent(&self, z: f64) -> f64 {
        match self {
            MarginalSpec::Deterministic { value } => *value,
            MarginalSpec::Uniform { low, high } => low + (high - low) * normal_cdf(z),
            MarginalSpec::Normal { mean, sd } => mean + sd * z,
            MarginalSpec::TruncatedNormal { mean, sd } => {
                // Upper-tail form: F^{-1}(u) = mean - sd * Phi^{-1}((1 - u) * Phi(mean / sd)).
                let upper = normal_cdf(-z) * normal_cdf(mean / sd);
                if upper <= 0.0 {
                    return *mean + sd * z.max(0.0);
                }
                (mean - sd * normal_quantile(upper)).max(0.0)
            }
            MarginalSpec::Lognormal { meanlog, sdlog } => (meanlog + sdlog * z).exp(),
            MarginalSpec::Empirical { samples } => {
                // Sorted at model construction.
                let m = samples.len();
                let k = ((normal_cdf(z) * m as f64) as usize).min(m - 1);
                samples[k]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub probability: f64,
    /// Additive per-store mean shift while the regime is active.
    pub shifts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Temporal {
    #[default]
    Iid,
    /// Stationary AR(1) on the latent Gaussian vector.
    Ar1 { rho: f64 },
    /// Regime drawn once per replication and held fixed.
    RegimeMixture { regimes: Vec<Regime> },
}

impl Temporal {
    pub fn is_stationary_non_iid(&self) -> bool {
        !matches!(self, Temporal::Iid)
    }
}

/// Serializable description of a demand model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub marginals: Vec<MarginalSpec>,
    /// Copula correlation; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub temporal: Temporal,
}

/// Validated demand model.
#[derive(Clone, Debug)]
pub struct DemandModel {
    spec: DemandSpec,
    marginals: Vec<MarginalSpec>,
    correlation: DMatrix<f64>,
    /// `L` with `L L' = correlation`; `None` for independent stores.
    factor: Option<DMatrix<f64>>,
}

impl DemandModel {
    pub fn new(spec: DemandSpec) -> Result<Self> {
        let n = spec.marginals.len();
        coalition::check_player_count(n).map_err(|e| Error::config(e.to_string()))?;
        let mut marginals = spec.marginals.clone();
        for m in &mut marginals {
            m.validate()?;
            if let MarginalSpec::Empirical { samples } = m {
                samples.sort_by(f64::total_cmp);
            }
        }

        let correlation = match &spec.correlation {
            None => DMatrix::identity(n, n),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::config(format!("correlation must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        let factor = correlation_factor(&correlation)?;

        match &spec.temporal {
            Temporal::Iid => {}
            Temporal::Ar1 { rho } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    return Err(Error::config(format!("ar1 coefficient must satisfy |rho| < 1, got {rho}")));
                }
            }
            Temporal::RegimeMixture { regimes } => {
                if regimes.is_empty() {
                    return Err(Error::config("regime mixture needs at least one regime"));
                }
                let total: f64 = regimes.iter().map(|r| r.probability).sum();
                if (total - 1.0).abs() > 1e-12 || regimes.iter().any(|r| !(r.probability >= 0.0)) {
                    return Err(Error::config(format!("regime probabilities must sum to 1, got {total}")));
                }
                if regimes.iter().any(|r| r.shifts.len() != n || r.shifts.iter().any(|s| !s.is_finite())) {
                    return Err(Error::config(format!("each regime needs {n} finite shifts")));
                }
            }
        }

        Ok(DemandModel { spec, marginals, correlation, factor })
    }

    /// Independent plain-normal stores.
    pub fn iid_normal(means: &[f64], sds: &[f64]) -> Result<Self> {
        DemandModel::new(DemandSpec {
            marginals: means.iter().zip(sds).map(|(&m, &s)| MarginalSpec::normal(m, s)).collect(),
            correlation: None,
            temporal: Temporal::Iid,
        })
    }

    pub fn with_temporal(&self, temporal: Temporal) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.temporal = temporal;
        DemandModel::new(spec)
    }

    pub fn spec(&self) -> &DemandSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    pub fn temporal(&self) -> &Temporal {
        &self.spec.temporal
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.correlation[(i, j)]
    }

    /// True when some marginal (plain normal) or regime shift can produce
    /// negative demand. Surfaced in output metadata.
    pub fn violates_nonnegativity(&self) -> bool {
        let negative_shift = match &self.spec.temporal {
            Temporal::RegimeMixture { regimes } => {
                regimes.iter().any(|r| r.shifts.iter().any(|&s| s < 0.0))
            }
            _ => false,
        };
        negative_shift || self.marginals.iter().any(|m| !m.is_nonnegative())
    }

    /// Closed forms apply when every store is plain normal and the
    /// one-period law is Gaussian (no regime mixture).
    pub fn is_gaussian(&self) -> bool {
        !matches!(self.spec.temporal, Temporal::RegimeMixture { .. })
            && self.marginals.iter().all(|m| matches!(m, MarginalSpec::Normal { .. }))
    }

    /// Effective per-store means, including the expected regime shift.
    pub fn means(&self) -> Vec<f64> {
        let mut mu: Vec<f64> = self.marginals.iter().map(MarginalSpec::mean).collect();
        if let Temporal::RegimeMixture { regimes } = &self.spec.temporal {
            for r in regimes {
                for (m, s) in mu.iter_mut().zip(&r.shifts) {
                    *m += r.probability * s;
                }
            }
        }
        mu
    }

    pub fn coalition_mean(&self, s: Coalition) -> f64 {
        s.sum(&self.means())
    }

    /// Per-store means under one regime of a mixture.
    pub fn regime_means(&self, regime: usize) -> Option<Vec<f64>> {
        match &self.spec.temporal {
            Temporal::RegimeMixture { regimes } => regimes.get(regime).map(|r| {
                self.marginals.iter().zip(&r.shifts).map(|(m, s)| m.mean() + s).collect()
            }),
            _ => None,
        }
    }

    /// Standard deviation of `x_S` for Gaussian models.
    pub fn coalition_sd(&self, s: Coalition) -> Option<f64> {
        if !self.is_gaussian() {
            return None;
        }
        let sd: Vec<f64> = self
            .marginals
            .iter()
            .map(|m| match m {
                MarginalSpec::Normal { sd, .. } => *sd,
                _ => unreachable!(),
            })
            .collect();
        let mut var = 0.0;
        for i in s.players() {
            for j in s.players() {
                var += sd[i] * sd[j] * self.correlation[(i, j)];
            }
        }
        Some(var.max(0.0).sqrt())
    }

    /// `tau`-quantile of the coalition demand `x_S`.
    pub fn coalition_quantile(&self, s: Coalition, tau: f64, est: &QuantileEstimator) -> Result<Quantile> {
        check_probability(tau)?;
        if let Some(sd) = self.coalition_sd(s) {
            return Ok(Quantile {
                value: self.coalition_mean(s) + sd * normal_quantile(tau),
                method: QuantileMethod::ClosedForm,
            });
        }
        let q = self.monte_carlo_quantiles(&[s], tau, est)?;
        Ok(q.into_iter().next().unwrap())
    }

    /// `tau`-quantiles of every non-empty coalition, indexed by `mask - 1`.
    /// Monte Carlo estimates share one demand panel.
    pub fn coalition_quantiles(&self, tau: f64, est: &QuantileEstimator) -> Result<Vec<Quantile>> {
        check_probability(tau)?;
        let all: Vec<Coalition> = coalition::all(self.n()).collect();
        if self.is_gaussian() {
            return all.iter().map(|&s| self.coalition_quantile(s, tau, est)).collect();
        }
        self.monte_carlo_quantiles(&all, tau, est)
    }

    fn monte_carlo_quantiles(&self, coalitions: &[Coalition], tau: f64, est: &QuantileEstimator) -> Result<Vec<Quantile>> {
        est.validate()?;
        let panel = self.panel(est.samples, est.seed, rng::domain::QUANTILE);
        let n = self.n();
        let m = est.samples;
        let k = ((tau * m as f64).ceil() as usize).clamp(1, m) - 1;
        Ok(coalitions
            .par_iter()
            .map(|&s| {
                let mut sums: Vec<f64> = panel.chunks_exact(n).map(|row| s.sum(row)).collect();
                let (_, v, _) = sums.select_nth_unstable_by(k, f64::total_cmp);
                Quantile {
                    value: *v,
                    method: QuantileMethod::MonteCarlo { samples: m, seed: est.seed },
                }
            })
            .collect())
    }

    /// `m` independent one-period draws, row-major `m x n`. Each draw uses a
    /// fresh temporal state, i.e. the stationary one-period law.
    pub fn panel(&self, m: usize, seed: u64, domain: u64) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; m * n];
        out.par_chunks_mut(PANEL_BATCH * n)
            .enumerate()
            .for_each(|(b, chunk)| {
                let mut rng = rng::stream(seed, domain, b as u64);
                for row in chunk.chunks_exact_mut(n) {
                    let mut state = self.initial_state(&mut rng);
                    self.sample_into(&mut state, &mut rng, row);
                }
            });
        out
    }

    /// Fresh temporal carry-over; draws the regime for mixtures.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> DemandState {
        let regime = match &self.spec.temporal {
            Temporal::RegimeMixture { regimes } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = regimes.len() - 1;
                for (k, r) in regimes.iter().enumerate() {
                    acc += r.probability;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                Some(pick)
            }
            _ => None,
        };
        DemandState { latent: None, regime }
    }

    pub fn sample_period<R: Rng + ?Sized>(&self, state: &mut DemandState, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.sample_into(state, rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, state: &mut DemandState, rng: &mut R, out: &mut [f64]) {
        let n = self.n();
        let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let innovation = match &self.factor {
            None => eps,
            Some(l) => (0..n).map(|i| (0..=i).map(|j| l[(i, j)] * eps[j]).sum()).collect(),
        };
        let latent = match (&self.spec.temporal, state.latent.take()) {
            (Temporal::Ar1 { rho }, Some(prev)) => {
                let scale = (1.0 - rho * rho).sqrt();
                prev.iter().zip(&innovation).map(|(p, e)| rho * p + scale * e).collect()
            }
            _ => innovation,
        };
        for i in 0..n {
            out[i] = self.marginals[i].from_latent(latent[i]);
        }
        if let (Some(k), Temporal::RegimeMixture { regimes }) = (state.regime, &self.spec.temporal) {
            for (x, s) in out.iter_mut().zip(&regimes[k].shifts) {
                *x += s;
            }
        }
        if matches!(self.spec.temporal, Temporal::Ar1 { .. }) {
            state.latent = Some(latent);
        }
    }
}

/// Lower-triangular `L` with `L L' = R`, or `None` when `R` is the
/// identity. Accepts positive semidefinite `R`.
fn correlation_factor(r: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let n = r.nrows();
    for i in 0..n {
        if (r[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::config("correlation matrix must have unit diagonal"));
        }
        for j in 0..n {
            if !r[(i, j)].is_finite() || (r[(i, j)] - r[(j, i)]).abs() > 1e-12 {
                return Err(Error::config("correlation matrix must be symmetric"));
            }
        }
    }
    if *r == DMatrix::identity(n, n) {
        return Ok(None);
    }
    let eig = SymmetricEigen::new(r.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(Error::config("correlation matrix must be positive semidefinite"));
    }
    // Pivoted Cholesky tolerates a singular (semidefinite) matrix.
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = r[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        let d = if d < 1e-12 { 0.0 } else { d.sqrt() };
        l[(j, j)] = d;
        for i in j + 1..n {
            let v = r[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = if d > 0.0 { v / d } else { 0.0 };
        }
    }
    Ok(Some(l))
}

fn check_probability(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability must lie in (0, 1), got {tau}")))
    }
}

/// Temporal carry-over between periods of one replication.
#[derive(Clone, Debug, Default)]
pub struct DemandState {
    latent: Option<Vec<f64>>,
    regime: Option<usize>,
}

impl DemandState {
    pub fn regime(&self) -> Option<usize> {
        self.regime
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileEstimator {
    pub samples: usize,
    pub seed: u64,
}

impl Default for QuantileEstimator {
    fn default() -> Self {
        QuantileEstimator { samples: 1_000_000, seed: 0 }
    }
}

impl QuantileEstimator {
    fn validate(&self) -> Result<()> {
        if self.samples < MIN_MC_SAMPLES {
            return Err(Error::config(format!(
                "Monte Carlo estimates need at least {MIN_MC_SAMPLES} draws, got {}",
                self.samples
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum QuantileMethod {
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub value: f64,
    #[serde(flatten)]
    pub method: QuantileMethod,
}

/// Realized demands of one replication with a compensated running sum.
#[derive(Clone, Debug)]
pub struct DemandHistory {
    n: usize,
    periods: u64,
    sum: Vec<f64>,
    compensation: Vec<f64>,
    samples: Option<Vec<Vec<f64>>>,
}

impl DemandHistory {
    pub fn new(n: usize) -> Self {
        DemandHistory { n, periods: 0, sum: vec![0.0; n], compensation: vec![0.0; n], samples: None }
    }

    /// A history that also stores every sample.
    pub fn recording(n: usize) -> Self {
        DemandHistory { samples: Some(Vec::new()), ..DemandHistory::new(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> u64 {
        self.periods
    }

    pub fn samples(&self) -> Option<&[Vec<f64>]> {
        self.samples.as_deref()
    }

    pub fn extend(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.n {
            return Err(Error::domain(format!(
                "demand sample has length {}, expected {}",
                sample.len(),
                self.n
            )));
        }
        for i in 0..self.n {
            // Neumaier summation.
            let t = self.sum[i] + sample[i];
            if self.sum[i].abs() >= sample[i].abs() {
                self.compensation[i] += (self.sum[i] - t) + sample[i];
            } else {
                self.compensation[i] += (sample[i] - t) + self.sum[i];
            }
            self.sum[i] = t;
        }
        self.periods += 1;
        if let Some(s) = &mut self.samples {
            s.push(sample.to_vec());
        }
        Ok(())
    }

    /// Per-store running average; zeros before the first period.
    pub fn running_average(&self) -> Vec<f64> {
        if self.periods == 0 {
            return vec![0.0; self.n];
        }
        let t = self.periods as f64;
        self.sum.iter().zip(&self.compensation).map(|(s, c)| (s + c) / t).collect()
    }

    pub fn coalition_average(&self, s: Coalition) -> f64 {
        s.sum(&self.running_average())
    }
}
