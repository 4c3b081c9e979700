//! Experiment configuration files.
//!
//! A config is a JSON object with the run-level fields (`seed`, `workers`,
//! `output`, `allow_unstable`) and an `experiment` record tagged by `kind`:
//!
//! ```json
//! {
//!   "seed": 42,
//!   "workers": 4,
//!   "experiment": {
//!     "kind": "simulate_micro",
//!     "params": {
//!       "mu1": 0.5, "mu2": 0.5,
//!       "phi1": {"type": "exponential", "rate": 1.0, "scale": 0.3},
//!       "phi2": {"type": "exponential", "rate": 1.0, "scale": 0.1},
//!       "k": {"type": "exponential", "rate": 1.0, "scale": 0.5657},
//!       "alpha1": 1.0, "alpha2": 1.0
//!     },
//!     "horizon": 100.0,
//!     "paths": 100
//!   }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qhawkes_core::kernels::KernelSpec;
use qhawkes_core::limit_sde::{LimitParams, LimitRegime};
use qhawkes_core::qhawkes_sim::{MicroParams, SimOptions};
use qhawkes_core::volterra::PicardKind;

use crate::error::{CliError, CliResult};

fn one_worker() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one_worker")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Run even when the stability or contraction checks fail.
    #[serde(default)]
    pub allow_unstable: bool,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    SimulateMicro(SimulateMicro),
    SimulateLimitStable(LimitRun),
    SimulateLimitUnstable(LimitRun),
    MeanIntensityCheck(MeanIntensityCheck),
    ResolventCheck(ResolventCheck),
    Picard(PicardRun),
    ConvergenceStudy(ConvergenceStudy),
    TraStudy(TraStudy),
    RoughnessStudy(RoughnessStudy),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::SimulateMicro(_) => "simulate_micro",
            Experiment::SimulateLimitStable(_) => "simulate_limit_stable",
            Experiment::SimulateLimitUnstable(_) => "simulate_limit_unstable",
            Experiment::MeanIntensityCheck(_) => "mean_intensity_check",
            Experiment::ResolventCheck(_) => "resolvent_check",
            Experiment::Picard(_) => "picard",
            Experiment::ConvergenceStudy(_) => "convergence_study",
            Experiment::TraStudy(_) => "tra_study",
            Experiment::RoughnessStudy(_) => "roughness_study",
        }
    }
}

fn default_safety() -> f64 {
    1.5
}

fn default_max_events() -> usize {
    2_000_000
}

/// Thinning settings shared by the microscopic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    /// Micro-grid step `h`; defaults to `horizon / 1e5`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro_step: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            micro_step: None,
            safety: default_safety(),
            max_events: default_max_events(),
        }
    }
}

impl SimSettings {
    pub fn options(&self, allow_unstable: bool) -> SimOptions {
        SimOptions {
            micro_step: self.micro_step,
            safety: self.safety,
            max_events: self.max_events,
            allow_unstable,
            ..SimOptions::default()
        }
    }
}

fn default_intensity_cells() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateMicro {
    pub params: MicroParams,
    pub horizon: f64,
    pub paths: usize,
    #[serde(default)]
    pub sim: SimSettings,
    /// Cells of the grid on which intensities are written.
    #[serde(default = "default_intensity_cells")]
    pub intensity_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitRun {
    pub params: LimitParams,
    pub paths: usize,
    /// Paths whose `V̄` enters the roughness estimate (at most `paths`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst_paths: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanIntensityCheck {
    pub params: MicroParams,
    pub horizon: f64,
    /// Cells of the comparison grid on `[0, horizon]`.
    pub cells: usize,
    pub paths: usize,
    #[serde(default)]
    pub sim: SimSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventCheck {
    /// Near-unstable limit parameters; `limit.phi` is used unless `phi` is set.
    pub limit: LimitParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<KernelSpec>,
    pub schedule: Vec<f64>,
    /// Step of the microscopic grid.
    pub dt: f64,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardRun {
    pub params: MicroParams,
    pub equation: PicardKind,
    /// The analytic contraction bound applies on `[0, 1]`.
    pub horizon: f64,
    pub cells: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_scaled_cells() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceStudy {
    pub limit: LimitParams,
    pub schedule: Vec<f64>,
    pub micro_paths: usize,
    pub limit_paths: usize,
    /// Cells of the macroscopic grid on `[0, 1]` for the scaled processes.
    #[serde(default = "default_scaled_cells")]
    pub cells: usize,
    #[serde(default)]
    pub sim: SimSettings,
}

fn default_window() -> usize {
    16
}

fn default_lags() -> Vec<usize> {
    (1..=16).collect()
}

fn default_bootstrap() -> usize {
    1000
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraStudy {
    /// Parameters of the quadratic arm; the linear arm sets `α₁ = α₂ = 0`.
    pub params: MicroParams,
    pub horizon: f64,
    pub pairs: usize,
    /// Sampling step of the returns.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_lags")]
    pub lags: Vec<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub sim: SimSettings,
}

fn default_fbm_paths() -> usize {
    50
}

fn default_fbm_hurst() -> f64 {
    0.3
}

fn default_fbm_cells() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughnessStudy {
    pub limit: LimitParams,
    pub paths: usize,
    #[serde(default = "default_fbm_paths")]
    pub fbm_paths: usize,
    #[serde(default = "default_fbm_hurst")]
    pub fbm_hurst: f64,
    #[serde(default = "default_fbm_cells")]
    pub fbm_cells: usize,
}

fn path_error<T: for<'de> Deserialize<'de>>(value: &serde_json::Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        CliError::config(path, e.into_inner())
    })
}

/// Re-parses the experiment record as its variant struct. The tagged enum
/// buffers its content, which hides the path of nested errors.
fn experiment_error(value: &serde_json::Value) -> Option<CliError> {
    let exp = value.get("experiment")?;
    let kind = exp.get("kind")?.as_str()?;
    let mut body = exp.clone();
    body.as_object_mut()?.remove("kind");
    let p = "experiment";
    match kind {
        "simulate_micro" => path_error::<SimulateMicro>(&body, p).err(),
        "simulate_limit_stable" | "simulate_limit_unstable" => path_error::<LimitRun>(&body, p).err(),
        "mean_intensity_check" => path_error::<MeanIntensityCheck>(&body, p).err(),
        "resolvent_check" => path_error::<ResolventCheck>(&body, p).err(),
        "picard" => path_error::<PicardRun>(&body, p).err(),
        "convergence_study" => path_error::<ConvergenceStudy>(&body, p).err(),
        "tra_study" => path_error::<TraStudy>(&body, p).err(),
        "roughness_study" => path_error::<RoughnessStudy>(&body, p).err(),
        _ => None,
    }
}

/// Parses a config, reporting the JSON path of the first offending field.
pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::config("", format!("malformed JSON: {e}")))?;
    let cfg: ExperimentConfig = match path_error(&value, "") {
        Ok(cfg) => cfg,
        Err(CliError::Config { path, message }) if path == "experiment" => {
            return Err(experiment_error(&value).unwrap_or(CliError::Config { path, message }));
        }
        Err(e) => return Err(e),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
    parse_config(&text)
}

fn positive(path: &str, x: f64) -> CliResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be positive and finite, got {x}")))
    }
}

fn at_least(path: &str, n: usize, min: usize) -> CliResult<()> {
    if n >= min {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be at least {min}, got {n}")))
    }
}

fn schedule(path: &str, s: &[f64]) -> CliResult<()> {
    if s.is_empty() {
        return Err(CliError::config(path, "schedule is empty"));
    }
    for (i, t) in s.iter().enumerate() {
        positive(&format!("{path}[{i}]"), *t)?;
    }
    if s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::config(path, "schedule must be strictly increasing"));
    }
    Ok(())
}

fn micro(path: &str, p: &MicroParams) -> CliResult<()> {
    p.validate().map_err(|e| CliError::config(path, e))
}

fn limit(path: &str, p: &LimitParams) -> CliResult<()> {
    p.validate().map_err(|e| CliError::config(path, e))
}

fn near_unstable(path: &str, p: &LimitParams) -> CliResult<()> {
    limit(path, p)?;
    match p.regime {
        LimitRegime::NearUnstable { .. } => Ok(()),
        LimitRegime::Stable { .. } => Err(CliError::config(
            format!("{path}.regime"),
            "this experiment needs near_unstable parameters",
        )),
    }
}

fn sim(path: &str, s: &SimSettings) -> CliResult<()> {
    if let Some(h) = s.micro_step {
        positive(&format!("{path}.micro_step"), h)?;
    }
    if !(s.safety >= 1.0) {
        return Err(CliError::config(format!("{path}.safety"), "must be >= 1"));
    }
    at_least(&format!("{path}.max_events"), s.max_events, 1)
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        at_least("workers", self.workers, 1)?;
        let e = "experiment";
        match &self.experiment {
            Experiment::SimulateMicro(x) => {
                micro(&format!("{e}.params"), &x.params)?;
                positive(&format!("{e}.horizon"), x.horizon)?;
                at_least(&format!("{e}.paths"), x.paths, 1)?;
                at_least(&format!("{e}.intensity_cells"), x.intensity_cells, 1)?;
                sim(&format!("{e}.sim"), &x.sim)
            }
            Experiment::SimulateLimitStable(x) | Experiment::SimulateLimitUnstable(x) => {
                limit(&format!("{e}.params"), &x.params)?;
                let stable = matches!(x.params.regime, LimitRegime::Stable { .. });
                let want_stable = matches!(self.experiment, Experiment::SimulateLimitStable(_));
                if stable != want_stable {
                    return Err(CliError::config(
                        format!("{e}.params.regime"),
                        format!("regime does not match experiment kind {}", self.experiment.name()),
                    ));
                }
                at_least(&format!("{e}.paths"), x.paths, 2)
            }
            Experiment::MeanIntensityCheck(x) => {
                micro(&format!("{e}.params"), &x.params)?;
                positive(&format!("{e}.horizon"), x.horizon)?;
                at_least(&format!("{e}.cells"), x.cells, 1)?;
                at_least(&format!("{e}.paths"), x.paths, 2)?;
                sim(&format!("{e}.sim"), &x.sim)
            }
            Experiment::ResolventCheck(x) => {
                near_unstable(&format!("{e}.limit"), &x.limit)?;
                schedule(&format!("{e}.schedule"), &x.schedule)?;
                positive(&format!("{e}.dt"), x.dt)
            }
            Experiment::Picard(x) => {
                micro(&format!("{e}.params"), &x.params)?;
                positive(&format!("{e}.horizon"), x.horizon)?;
                positive(&format!("{e}.tol"), x.tol)?;
                at_least(&format!("{e}.cells"), x.cells, 1)?;
                at_least(&format!("{e}.max_iter"), x.max_iter, 1)
            }
            Experiment::ConvergenceStudy(x) => {
                near_unstable(&format!("{e}.limit"), &x.limit)?;
                schedule(&format!("{e}.schedule"), &x.schedule)?;
                at_least(&format!("{e}.micro_paths"), x.micro_paths, 2)?;
                at_least(&format!("{e}.limit_paths"), x.limit_paths, 2)?;
                at_least(&format!("{e}.cells"), x.cells, 1)?;
                sim(&format!("{e}.sim"), &x.sim)
            }
            Experiment::TraStudy(x) => {
                micro(&format!("{e}.params"), &x.params)?;
                positive(&format!("{e}.horizon"), x.horizon)?;
                positive(&format!("{e}.dt"), x.dt)?;
                at_least(&format!("{e}.pairs"), x.pairs, 2)?;
                at_least(&format!("{e}.window"), x.window, 1)?;
                at_least(&format!("{e}.bootstrap"), x.bootstrap, 2)?;
                if x.lags.is_empty() || x.lags.contains(&0) {
                    return Err(CliError::config(format!("{e}.lags"), "lags must be positive and nonempty"));
                }
                sim(&format!("{e}.sim"), &x.sim)
            }
            Experiment::RoughnessStudy(x) => {
                near_unstable(&format!("{e}.limit"), &x.limit)?;
                at_least(&format!("{e}.paths"), x.paths, 1)?;
                at_least(&format!("{e}.fbm_cells"), x.fbm_cells, 256)?;
                if !(x.fbm_hurst > 0.0 && x.fbm_hurst < 1.0) {
                    return Err(CliError::config(format!("{e}.fbm_hurst"), "must lie in (0, 1)"));
                }
                Ok(())
            }
        }
    }

    /// SHA-256 of the canonical JSON of everything that determines the
    /// output bytes (the worker count and output directory do not).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.output = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
