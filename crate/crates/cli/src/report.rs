//! Text summaries and plot-shaped CSVs for finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::output::{read_json, sha256_hex, RunManifest, Summary, Table, SUMMARY};
use crate::row;

pub const REPORT: &str = "report.txt";

fn write(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| CliError::io(format!("cannot write {}", p.display()), e))
}

/// Files whose bytes no longer match the manifest.
pub fn verify_checksums(dir: &Path, manifest: &RunManifest) -> CliResult<Vec<String>> {
    let mut bad = Vec::new();
    for (name, sum) in &manifest.files {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(|e| CliError::io(format!("cannot read {}", p.display()), e))?;
        if &sha256_hex(&bytes) != sum {
            bad.push(name.clone());
        }
    }
    Ok(bad)
}

/// Writes `report.txt` and long-form CSVs next to the outputs of a run.
/// Returns the text of the report.
pub fn emit_report(dir: &Path) -> CliResult<String> {
    let manifest = RunManifest::load(dir)?;
    let summary: Summary = read_json(&dir.join(SUMMARY))?;
    let corrupted = verify_checksums(dir, &manifest)?;

    let mut text = String::new();
    let _ = writeln!(text, "experiment  {}", summary.kind);
    let _ = writeln!(text, "config      {}", summary.config_digest);
    let _ = writeln!(text, "seed        {}", summary.seed);
    let _ = writeln!(text, "tool        {}", manifest.tool_version);
    let _ = writeln!(text, "outputs     {} files", manifest.files.len());
    for r in &manifest.assumptions {
        let _ = writeln!(
            text,
            "assumptions {:?}: {} (stability margin {:.6})",
            r.regime,
            if r.passed { "ok" } else { "FAILED" },
            r.stability_margin
        );
    }
    let _ = writeln!(text);
    let mut checks = Table::new(&["check", "passed", "value", "condition"]);
    for c in &summary.checks {
        let _ = writeln!(
            text,
            "{} {}: {:.6e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.condition
        );
        checks.push(row![c.name.clone(), c.passed, c.value, c.condition.clone()]);
    }
    let _ = writeln!(
        text,
        "{} checksums: {}",
        if corrupted.is_empty() { "PASS" } else { "FAIL" },
        if corrupted.is_empty() {
            "all outputs match the manifest".to_string()
        } else {
            format!("modified {}", corrupted.join(", "))
        }
    );
    write(dir, "report_checks.csv", &checks.to_bytes()?)?;

    match summary.kind.as_str() {
        "convergence_study" => {
            let mut t = Table::new(&["T", "ks_distance", "compensator_gap"]);
            let _ = writeln!(text, "\n{:>10} {:>12} {:>16}", "T", "ks_distance", "compensator_gap");
            for r in summary.results["rows"].as_array().into_iter().flatten() {
                let (tt, ks, gap) = (
                    r["T"].as_f64().unwrap_or(f64::NAN),
                    r["ks_distance"].as_f64().unwrap_or(f64::NAN),
                    r["compensator_gap"].as_f64().unwrap_or(f64::NAN),
                );
                let _ = writeln!(text, "{tt:>10} {ks:>12.6} {gap:>16.6}");
                t.push(row![tt, ks, gap]);
            }
            write(dir, "report_convergence.csv", &t.to_bytes()?)?;
        }
        "picard" => {
            let r = &summary.results;
            let _ = writeln!(
                text,
                "\niterations {}  residual {:.3e}  max contraction ratio {:.6}  analytic bound {}",
                r["iterations"],
                r["residual_sup"].as_f64().unwrap_or(f64::NAN),
                r["max_rate"].as_f64().unwrap_or(f64::NAN),
                r["rate_bound"]
                    .as_f64()
                    .map(|b| format!("{b:.6}"))
                    .unwrap_or_else(|| "none".into())
            );
            let mut t = Table::new(&["quantity", "value"]);
            for k in ["iterations", "residual_sup", "max_rate", "rate_bound"] {
                t.push(row![k, r[k].as_f64().unwrap_or(f64::NAN)]);
            }
            write(dir, "report_picard.csv", &t.to_bytes()?)?;
        }
        "resolvent_check" => {
            let mut t = Table::new(&["T", "gap", "gap_rate_adjusted"]);
            for g in summary.results["gaps"].as_array().into_iter().flatten() {
                t.push(row![
                    g["t_scale"].as_f64().unwrap_or(f64::NAN),
                    g["gap"].as_f64().unwrap_or(f64::NAN),
                    g["gap_rate_adjusted"].as_f64().unwrap_or(f64::NAN)
                ]);
            }
            write(dir, "report_resolvent.csv", &t.to_bytes()?)?;
        }
        _ => {}
    }
    write(dir, REPORT, text.as_bytes())?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_report(dir.path()), Err(CliError::Io { .. })));
    }
}
