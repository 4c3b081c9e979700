use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiments::{assumption_reports, dispatch, Ctx};
use crate::output::{RunDir, RunManifest, Summary, SUMMARY};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `output` from the config, or `runs/<kind>-<digest prefix>`.
pub fn default_output(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(format!("{}-{}", cfg.experiment.name(), &cfg.digest()[..12])))
}

/// Fails with [`CliError::Assumption`] when a model check fails and the
/// config does not allow unstable parameters.
pub fn check_config(cfg: &ExperimentConfig) -> CliResult<Vec<qhawkes_core::kernels::AssumptionReport>> {
    cfg.validate()?;
    let reports = assumption_reports(cfg);
    if !cfg.allow_unstable {
        if let Some(bad) = reports.iter().find(|r| !r.passed) {
            return Err(CliError::Assumption(bad.messages.join("; ")));
        }
    }
    Ok(reports)
}

/// Runs the experiment into `dir` and writes its summary and manifest.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, force: bool) -> CliResult<(RunManifest, Summary)> {
    let reports = check_config(cfg)?;
    let started = unix_now();
    let mut run = RunDir::create(dir, force)?;

    let mut canonical = cfg.clone();
    canonical.workers = 1;
    canonical.output = None;
    run.write_json("config.json", &canonical)?;

    let outcome = {
        let mut ctx = Ctx {
            seed: cfg.seed,
            workers: cfg.workers,
            allow_unstable: cfg.allow_unstable,
            dir: &mut run,
        };
        dispatch(&cfg.experiment, &mut ctx)?
    };
    let summary = Summary {
        kind: cfg.experiment.name().to_string(),
        config_digest: cfg.digest(),
        seed: cfg.seed,
        checks: outcome.checks,
        results: outcome.results,
    };
    run.write_json(SUMMARY, &summary)?;

    let manifest = run.finish(RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_digest: cfg.digest(),
        config: serde_json::to_value(cfg).map_err(|e| CliError::Runtime(e.to_string()))?,
        started_unix: started,
        finished_unix: unix_now(),
        files: Default::default(),
        assumptions: reports,
    })?;
    Ok((manifest, summary))
}
