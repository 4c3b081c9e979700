//! Acceptance criteria 1-11, one PASS/FAIL line each.
//!
//! Criteria 5 and 7 are expected to fail (see the README); every other
//! failure makes the binary exit nonzero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use serde_json::{json, Value};

use qhawkes_cli::{parse_config, run_experiment, Summary};
use qhawkes_core::kernels::{mittag_leffler, ml_kernel, MlForm};
use qhawkes_core::quadrature::{integrate_power_singular, QuadOptions};

const EXPECTED_RED: [usize; 2] = [5, 7];

fn exp_kernel(rate: f64, scale: f64) -> Value {
    json!({"type": "exponential", "rate": rate, "scale": scale})
}

/// `μ₁ = μ₂ = 0.5`, `φ₁ = 0.3e^{−t}`, `φ₂ = 0.1e^{−t}`, `‖k‖₂² = 0.16`.
fn reference_micro(alpha1: f64, alpha2: f64) -> Value {
    json!({
        "mu1": 0.5, "mu2": 0.5,
        "phi1": exp_kernel(1.0, 0.3),
        "phi2": exp_kernel(1.0, 0.1),
        "k": exp_kernel(1.0, 0.32f64.sqrt()),
        "alpha1": alpha1, "alpha2": alpha2
    })
}

fn near_unstable(alpha_tilde: f64, cells: usize, form: &str) -> Value {
    json!({
        "regime": "near_unstable",
        "alpha_tilde": alpha_tilde, "sigma": 1.0, "c1": 3.0, "c2": 2.0,
        "mu_star": 0.5, "mu_bar_star": 1.0,
        "phi": {"type": "power_law", "alpha": alpha_tilde, "cutoff": 1.0},
        "k": exp_kernel(1.0, 2f64.sqrt()),
        "alpha1": 1.0, "alpha2": 1.0,
        "cells": cells,
        "form": form
    })
}

struct Runner {
    root: PathBuf,
    /// Config text and output directory of every run, for the rerun check.
    runs: Vec<(String, Value, PathBuf)>,
}

impl Runner {
    fn run(&mut self, name: &str, seed: u64, experiment: Value) -> Result<Summary, String> {
        let cfg = json!({"seed": seed, "workers": 1, "experiment": experiment});
        let parsed = parse_config(&cfg.to_string()).map_err(|e| format!("{name}: {e}"))?;
        let dir = self.root.join(name);
        let (_, summary) = run_experiment(&parsed, &dir, false).map_err(|e| format!("{name}: {e}"))?;
        self.runs.push((name.to_string(), cfg, dir));
        Ok(summary)
    }
}

fn check(s: &Summary, name: &str) -> Result<(bool, f64), String> {
    s.check(name)
        .map(|c| (c.passed, c.value))
        .ok_or_else(|| format!("{} has no check {name}", s.kind))
}

fn all(s: &Summary, names: &[&str]) -> Result<(bool, String), String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in names {
        let (p, v) = check(s, n)?;
        ok &= p;
        parts.push(format!("{n}={v:.4e}{}", if p { "" } else { " (fail)" }));
    }
    Ok((ok, parts.join(", ")))
}

type Verdict = Result<(bool, String), String>;

fn mean_intensity(r: &mut Runner, summaries: &mut BTreeMap<&'static str, Summary>) -> Result<(), String> {
    let exp = |alpha: f64| {
        json!({
            "kind": "mean_intensity_check",
            "params": reference_micro(alpha, alpha),
            "horizon": 10.0,
            "cells": 31,
            "paths": 2000,
            "sim": {"micro_step": 10.0 / (31.0 * 16.0)}
        })
    };
    summaries.insert("quadratic", r.run("mean_intensity", 1, exp(1.0))?);
    summaries.insert("linear", r.run("mean_intensity_linear", 3, exp(0.0))?);
    Ok(())
}

fn criterion_1(s: &Summary) -> Verdict {
    all(s, &["oracle_within_3se", "violation_rate"])
}

fn criterion_2(s: &Summary) -> Verdict {
    all(s, &["stability_bound"])
}

fn criterion_3(r: &mut Runner, linear: &Summary) -> Verdict {
    let poisson = r.run(
        "poisson",
        2,
        json!({
            "kind": "simulate_micro",
            "params": {
                "mu1": 1.0, "mu2": 1.0,
                "phi1": exp_kernel(1.0, 0.0), "phi2": exp_kernel(1.0, 0.0), "k": exp_kernel(1.0, 0.0),
                "alpha1": 0.0, "alpha2": 0.0
            },
            "horizon": 200.0,
            "paths": 100
        }),
    )?;
    let (p_ok, p_msg) = all(&poisson, &["poisson_interarrival_ks"])?;
    let (l_ok, l_msg) = all(linear, &["oracle_within_3se", "violation_rate"])?;
    Ok((p_ok && l_ok, format!("poisson {p_msg}; linear hawkes {l_msg}")))
}

fn criterion_4() -> Verdict {
    let mut exp_err: f64 = 0.0;
    for i in 0..=1000 {
        let s = -5.0 + 0.01 * i as f64;
        exp_err = exp_err.max((mittag_leffler(1.0, 1.0, s).map_err(|e| e.to_string())? - s.exp()).abs());
    }
    let mut dens_err: f64 = 0.0;
    for sigma in [0.5, 1.0, 2.0] {
        for i in 1..=100 {
            let t = 0.05 * i as f64;
            let f = ml_kernel(1.0, sigma, t, MlForm::Density).map_err(|e| e.to_string())?;
            dens_err = dens_err.max((f - sigma * (-sigma * t).exp()).abs());
        }
    }
    let mut quad_err: f64 = 0.0;
    for alpha in [0.55, 0.75, 0.95] {
        for i in 1..=40 {
            let t = 0.05 * i as f64;
            let big_f = ml_kernel(alpha, 1.0, t, MlForm::Integral).map_err(|e| e.to_string())?;
            let q = integrate_power_singular(
                |s| ml_kernel(alpha, 1.0, s, MlForm::Density).unwrap_or(f64::NAN),
                0.0,
                t,
                alpha,
                QuadOptions::tight(),
            )
            .map_err(|e| e.to_string())?;
            quad_err = quad_err.max((big_f - q).abs());
        }
    }
    let ok = exp_err < 1e-10 && dens_err < 1e-10 && quad_err < 1e-8;
    Ok((
        ok,
        format!("E_1,1 vs exp {exp_err:.2e}, density vs exp {dens_err:.2e}, F vs quadrature {quad_err:.2e}"),
    ))
}

fn criterion_5(r: &mut Runner) -> Verdict {
    let s = r.run(
        "resolvent",
        5,
        json!({
            "kind": "resolvent_check",
            "limit": near_unstable(0.6, 1024, "stated"),
            "schedule": [50.0, 200.0, 800.0],
            "dt": 0.1
        }),
    )?;
    let (ok, msg) = all(&s, &["gap_strictly_decreasing", "final_gap"])?;
    let gaps: Vec<String> = s.results["gaps"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|g| {
            format!(
                "T={}: {:.4} (rate-adjusted {:.4})",
                g["t_scale"],
                g["gap"].as_f64().unwrap_or(f64::NAN),
                g["gap_rate_adjusted"].as_f64().unwrap_or(f64::NAN)
            )
        })
        .collect();
    Ok((ok, format!("{msg}; {}", gaps.join(", "))))
}

fn criterion_6(r: &mut Runner) -> Verdict {
    let s = r.run(
        "picard",
        6,
        json!({
            "kind": "picard",
            "params": {
                "mu1": 0.6, "mu2": 0.4,
                "phi1": exp_kernel(1.0, 0.3), "phi2": exp_kernel(1.0, 0.1),
                "k": exp_kernel(1.0, 0.32f64.sqrt()),
                "alpha1": 1.0, "alpha2": 1.0
            },
            "equation": "v",
            "horizon": 1.0,
            "cells": 200,
            "max_iter": 200
        }),
    )?;
    let (ok, msg) = all(&s, &["residual", "contraction_ratio"])?;
    Ok((
        ok,
        format!("{msg}; iterations {}, analytic bound {}", s.results["iterations"], s.results["rate_bound"]),
    ))
}

fn criterion_7(r: &mut Runner) -> Verdict {
    let s = r.run(
        "limit_unstable",
        7,
        json!({
            "kind": "simulate_limit_unstable",
            "params": near_unstable(0.75, 1024, "stated"),
            "paths": 500
        }),
    )?;
    all(
        &s,
        &[
            "bracket_m_star_vs_x_bar",
            "bracket_m_bar_star_vs_x_bar",
            "bracket_m_star_m_bar_star_vs_x",
            "rho_clip_rate",
            "v_bar_truncation_rate",
        ],
    )
}

fn criterion_8(r: &mut Runner) -> Verdict {
    let s = r.run(
        "roughness",
        8,
        json!({
            "kind": "roughness_study",
            "limit": near_unstable(0.75, 1024, "stated"),
            "paths": 50,
            "fbm_paths": 50,
            "fbm_hurst": 0.3,
            "fbm_cells": 1024
        }),
    )?;
    let (fbm_ok, _) = check(&s, "fbm_calibration")?;
    if !fbm_ok {
        return Ok((false, "fBm calibration failed; estimator not trusted".into()));
    }
    all(&s, &["fbm_calibration", "v_bar_hurst"])
}

fn criterion_9(r: &mut Runner) -> Verdict {
    // ‖k‖₂² = 0.3 with a slow decay rate 0.1.
    let k_scale = (0.3f64 * 2.0 * 0.1).sqrt();
    let s = r.run(
        "tra",
        9,
        json!({
            "kind": "tra_study",
            "params": {
                "mu1": 0.5, "mu2": 0.5,
                "phi1": exp_kernel(1.0, 0.1), "phi2": exp_kernel(1.0, 0.0),
                "k": exp_kernel(0.1, k_scale),
                "alpha1": 2.0, "alpha2": 0.02
            },
            "horizon": 4000.0,
            "pairs": 200,
            "window": 16,
            "bootstrap": 1000,
            "sim": {"micro_step": 0.05}
        }),
    )?;
    let (ok, msg) = all(
        &s,
        &["quadratic_index_exceeds_linear", "sign_test", "linear_index_near_zero", "violation_rate"],
    )?;
    Ok((
        ok,
        format!(
            "{msg}; index quadratic {:.4}, linear {:.4}",
            s.results["index_quadratic"].as_f64().unwrap_or(f64::NAN),
            s.results["index_linear"].as_f64().unwrap_or(f64::NAN)
        ),
    ))
}

fn criterion_10(r: &mut Runner) -> Verdict {
    let s = r.run(
        "convergence",
        10,
        json!({
            "kind": "convergence_study",
            "limit": near_unstable(0.75, 512, "micro_consistent"),
            "schedule": [50.0, 200.0, 800.0],
            "micro_paths": 200,
            "limit_paths": 500,
            "cells": 64,
            "sim": {"micro_step": 0.2}
        }),
    )?;
    let (ok, msg) = all(&s, &["ks_non_increasing", "final_ks", "compensator_gap_decreasing", "violation_rate"])?;
    let rows: Vec<String> = s.results["rows"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| {
            format!(
                "T={}: ks {:.3}, gap {:.4}",
                r["T"],
                r["ks_distance"].as_f64().unwrap_or(f64::NAN),
                r["compensator_gap"].as_f64().unwrap_or(f64::NAN)
            )
        })
        .collect();
    Ok((ok, format!("{msg}; {}", rows.join(", "))))
}

fn output_checksums(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    let m = qhawkes_cli::RunManifest::load(dir).map_err(|e| e.to_string())?;
    Ok(m.files.into_iter().filter(|(name, _)| name.ends_with(".csv")).collect())
}

fn criterion_11(r: &Runner) -> Verdict {
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (name, cfg, dir) in &r.runs {
        let mut again = cfg.clone();
        again["workers"] = json!(3);
        let parsed = parse_config(&again.to_string()).map_err(|e| e.to_string())?;
        let rerun = r.root.join(format!("{name}-rerun"));
        run_experiment(&parsed, &rerun, false).map_err(|e| format!("{name} rerun: {e}"))?;
        let (a, b) = (output_checksums(dir)?, output_checksums(&rerun)?);
        compared += a.len();
        if a.is_empty() || a != b {
            mismatched.push(name.clone());
        }
    }
    Ok((
        mismatched.is_empty(),
        format!(
            "{} runs, {compared} CSV files re-run at 3 workers{}",
            r.runs.len(),
            if mismatched.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", mismatched.join(", "))
            }
        ),
    ))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut r = Runner {
        root: tmp.path().to_path_buf(),
        runs: Vec::new(),
    };
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();

    let mut mi = BTreeMap::new();
    let mi_err = mean_intensity(&mut r, &mut mi).err();
    let from_mi = |key: &str, f: fn(&Summary) -> Verdict| match (&mi_err, mi.get(key)) {
        (Some(e), _) => Err(e.clone()),
        (None, Some(s)) => f(s),
        (None, None) => Err("missing run".into()),
    };
    results.push((1, "mean intensity matches the Volterra oracle", from_mi("quadratic", criterion_1)));
    results.push((2, "mean intensity respects the stability bound", from_mi("quadratic", criterion_2)));
    let c3 = match (&mi_err, mi.get("linear")) {
        (Some(e), _) => Err(e.clone()),
        (None, Some(l)) => criterion_3(&mut r, l),
        (None, None) => Err("missing run".into()),
    };
    results.push((3, "Poisson and linear Hawkes degenerations", c3));
    results.push((4, "Mittag-Leffler special cases and quadrature", criterion_4()));
    results.push((5, "scaled resolvent converges to (1/c1) F", criterion_5(&mut r)));
    results.push((6, "Picard iteration and contraction bound", criterion_6(&mut r)));
    results.push((7, "limit SDE bracket identities and clip rates", criterion_7(&mut r)));
    results.push((8, "roughness of V_bar", criterion_8(&mut r)));
    results.push((9, "time-reversal asymmetry", criterion_9(&mut r)));
    results.push((10, "micro-to-macro convergence", criterion_10(&mut r)));
    results.push((11, "determinism across reruns and worker counts", criterion_11(&r)));

    let mut unexpected = 0;
    for (id, title, verdict) in &results {
        let (ok, detail) = match verdict {
            Ok((ok, d)) => (*ok, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        let note = match (ok, EXPECTED_RED.contains(id)) {
            (false, true) => " [expected failure]",
            (true, true) => " [expected failure, now passing]",
            (false, false) => {
                unexpected += 1;
                ""
            }
            (true, false) => "",
        };
        println!(
            "criterion {id:>2} {} {title}{note}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}
