//! One runner per experiment kind.
//!
//! Each runner draws its paths through [`run_paths`] with a tag derived from
//! the experiment name (sub-experiments append `/<name>`), writes its tables
//! into the run directory and returns the checks it evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use qhawkes_core::kernels::{check_assumptions, ml_kernel, AssumptionReport, MlForm, ModelRef};
use qhawkes_core::limit_sde::{simulate_limit, LimitPath, LimitRegime};
use qhawkes_core::montecarlo::{derive_seed, run_paths, tag_of};
use qhawkes_core::qhawkes_sim::{rescale_params, scaled_processes, simulate, EventPath, MicroParams};
use qhawkes_core::stats::{
    bootstrap_mean_se, covariation_check, hurst_estimate, ks_distance, ks_one_sample, mean_stderr,
    sign_test, tra_statistic, FbmGenerator, McAccumulator,
};
use qhawkes_core::volterra::{mean_intensity, picard_solve, scaled_cumulative_resolvent, scaled_resolvent_check};
use qhawkes_core::{Grid, GridSeries};

use crate::config::{
    ConvergenceStudy, Experiment, ExperimentConfig, LimitRun, MeanIntensityCheck, PicardRun, ResolventCheck,
    RoughnessStudy, SimulateMicro, TraStudy,
};
use crate::error::CliResult;
use crate::output::{Check, RunDir, Table};
use crate::row;

/// Maximum share of thinning candidates that exceeded their bound.
pub const MAX_VIOLATION_RATE: f64 = 1e-3;
/// Maximum relative error of the bracket identities.
pub const MAX_BRACKET_ERROR: f64 = 0.05;
/// Maximum share of limit steps with `|ρ| > 1` or `V̄ < 0`.
pub const MAX_CLIP_RATE: f64 = 0.01;

pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
}

pub(crate) struct Ctx<'a> {
    pub seed: u64,
    pub workers: usize,
    pub allow_unstable: bool,
    pub dir: &'a mut RunDir,
}

/// Assumption reports of every parameter set an experiment relies on.
pub fn assumption_reports(cfg: &ExperimentConfig) -> Vec<AssumptionReport> {
    match &cfg.experiment {
        Experiment::SimulateMicro(x) => vec![check_assumptions(ModelRef::Micro(&x.params))],
        Experiment::MeanIntensityCheck(x) => vec![check_assumptions(ModelRef::Micro(&x.params))],
        Experiment::Picard(x) => vec![check_assumptions(ModelRef::Micro(&x.params))],
        Experiment::TraStudy(x) => vec![
            check_assumptions(ModelRef::Micro(&x.params)),
            check_assumptions(ModelRef::Micro(&linear_arm(&x.params))),
        ],
        Experiment::SimulateLimitStable(x) | Experiment::SimulateLimitUnstable(x) => {
            vec![check_assumptions(ModelRef::Limit(&x.params))]
        }
        Experiment::ResolventCheck(x) => vec![check_assumptions(ModelRef::Limit(&x.limit))],
        Experiment::ConvergenceStudy(x) => vec![check_assumptions(ModelRef::Limit(&x.limit))],
        Experiment::RoughnessStudy(x) => vec![check_assumptions(ModelRef::Limit(&x.limit))],
    }
}

pub(crate) fn dispatch(exp: &Experiment, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    match exp {
        Experiment::SimulateMicro(x) => simulate_micro(x, ctx),
        Experiment::SimulateLimitStable(x) => limit_run(x, exp.name(), ctx),
        Experiment::SimulateLimitUnstable(x) => limit_run(x, exp.name(), ctx),
        Experiment::MeanIntensityCheck(x) => mean_intensity_check(x, ctx),
        Experiment::ResolventCheck(x) => resolvent_check(x, ctx),
        Experiment::Picard(x) => picard(x, ctx),
        Experiment::ConvergenceStudy(x) => convergence_study(x, ctx),
        Experiment::TraStudy(x) => tra_study(x, ctx),
        Experiment::RoughnessStudy(x) => roughness_study(x, ctx),
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn violation_check(violations: usize, candidates: usize) -> Check {
    let r = rate(violations, candidates);
    Check::new("violation_rate", r < MAX_VIOLATION_RATE, r, format!("< {MAX_VIOLATION_RATE}"))
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

fn inter_arrivals(path: &EventPath) -> Vec<f64> {
    let mut prev = 0.0;
    path.events
        .iter()
        .map(|e| {
            let g = e.time - prev;
            prev = e.time;
            g
        })
        .collect()
}

fn is_poisson(p: &MicroParams) -> bool {
    p.phi1.is_zero() && p.phi2.is_zero() && p.alpha1 == 0.0 && p.alpha2 == 0.0
}

struct MicroOut {
    seed: u64,
    events: Table,
    intensity: Table,
    buys: usize,
    sells: usize,
    violations: usize,
    candidates: usize,
    ks_p: Option<f64>,
}

fn simulate_micro(x: &SimulateMicro, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let opts = x.sim.options(ctx.allow_unstable);
    let grid = Grid::span(x.horizon, x.intensity_cells)?;
    let poisson = is_poisson(&x.params);
    let mu_bar = x.params.mu_bar();
    let outs = run_paths(x.paths, ctx.seed, tag_of("simulate_micro"), ctx.workers, |_, seed| {
        let path = simulate(&x.params, x.horizon, seed, &opts)?;
        let mut events = Table::new(&["time", "mark"]);
        for e in &path.events {
            events.push(row![e.time, e.mark as i64]);
        }
        let mut intensity = Table::new(&["t", "lambda1", "lambda2"]);
        for t in grid.times() {
            let s = path.sample_at(t)?;
            intensity.push(row![t, s.lambda1, s.lambda2]);
        }
        let ks_p = if poisson && mu_bar > 0.0 {
            ks_one_sample(&inter_arrivals(&path), |g| 1.0 - (-mu_bar * g).exp())
                .ok()
                .map(|(_, p)| p)
        } else {
            None
        };
        let (buys, sells) = path.counts_at(x.horizon);
        Ok(MicroOut {
            seed,
            events,
            intensity,
            buys,
            sells,
            violations: path.diagnostics.violations,
            candidates: path.diagnostics.candidates(),
            ks_p,
        })
    })?;

    let mut paths = Table::new(&["path", "seed", "buys", "sells", "violations", "candidates", "ks_p_value"]);
    let (mut violations, mut candidates) = (0, 0);
    for (i, o) in outs.iter().enumerate() {
        ctx.dir.write_csv(&format!("events/path_{i:05}.csv"), &o.events)?;
        ctx.dir.write_csv(&format!("intensity/path_{i:05}.csv"), &o.intensity)?;
        let ks = o.ks_p.map(crate::output::fmt_real).unwrap_or_default();
        paths.push(row![i, o.seed, o.buys, o.sells, o.violations, o.candidates, ks]);
        violations += o.violations;
        candidates += o.candidates;
    }
    ctx.dir.write_csv("paths.csv", &paths)?;

    let mut checks = vec![violation_check(violations, candidates)];
    let tested: Vec<f64> = outs.iter().filter_map(|o| o.ks_p).collect();
    let mut results = json!({
        "paths": x.paths,
        "violation_rate": rate(violations, candidates),
        "mean_events": outs.iter().map(|o| (o.buys + o.sells) as f64).sum::<f64>() / x.paths as f64,
    });
    if poisson {
        let passed = tested.iter().filter(|p| **p > 0.01).count();
        let frac = rate(passed, x.paths);
        checks.push(Check::new("poisson_interarrival_ks", frac >= 0.95, frac, ">= 0.95 of paths at level 0.01"));
        results["ks_pass_fraction"] = json!(frac);
    }
    Ok(Outcome { checks, results })
}

fn mean_intensity_check(x: &MeanIntensityCheck, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    const REFINE: usize = 64;
    let opts = x.sim.options(ctx.allow_unstable);
    let grid = Grid::span(x.horizon, x.cells)?;
    let fine = mean_intensity(&x.params, &Grid::span(x.horizon, x.cells * REFINE)?)?;
    let oracle: Vec<f64> = (0..grid.len()).map(|j| fine.values()[j * REFINE]).collect();

    let runs = run_paths(x.paths, ctx.seed, tag_of("mean_intensity_check"), ctx.workers, |_, seed| {
        let path = simulate(&x.params, x.horizon, seed, &opts)?;
        let values = grid
            .times()
            .map(|t| path.sample_at(t).map(|s| s.lambda1 + s.lambda2))
            .collect::<qhawkes_core::Result<Vec<f64>>>()?;
        Ok((GridSeries::new(grid, values)?, path.diagnostics.violations, path.diagnostics.candidates()))
    })?;
    let mut acc = McAccumulator::new(grid);
    let (mut violations, mut candidates) = (0, 0);
    for (series, v, c) in &runs {
        acc.push(series)?;
        violations += v;
        candidates += c;
    }
    let mc = acc.summary()?;

    let mut table = Table::new(&["t", "oracle", "mc_mean", "stderr", "z_score"]);
    let mut within = 0;
    for (j, t) in grid.times().enumerate() {
        let (o, m, se) = (oracle[j], mc.mean[j], mc.stderr[j]);
        let diff = m - o;
        let z = if se > 0.0 { diff / se } else { 0.0 };
        if diff.abs() <= 3.0 * se + 1e-12 * (1.0 + o.abs()) {
            within += 1;
        }
        table.push(row![t, o, m, se, z]);
    }
    ctx.dir.write_csv("table.csv", &table)?;

    let n = grid.len();
    let need = (15 * n).div_ceil(16);
    let mut checks = vec![
        Check::new("oracle_within_3se", within >= need, within as f64, format!(">= {need} of {n} points")),
        violation_check(violations, candidates),
    ];
    let a = x.params.stability_functional();
    let mut results = json!({
        "points_within_3se": within,
        "points": n,
        "stability_functional": a,
        "violation_rate": rate(violations, candidates),
    });
    if a < 1.0 {
        let bound = x.params.mu_bar() / (1.0 - a);
        let excess = mc
            .mean
            .iter()
            .zip(&mc.stderr)
            .map(|(m, se)| m - (bound + 3.0 * se))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new("stability_bound", excess <= 0.0, excess, "mean - (mu_bar/(1-a) + 3 se) <= 0"));
        results["stability_bound"] = json!(bound);
    }
    Ok(Outcome { checks, results })
}

fn limit_run(x: &LimitRun, name: &str, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let paths: Vec<LimitPath> = run_paths(x.paths, ctx.seed, tag_of(name), ctx.workers, |_, seed| {
        simulate_limit(&x.params, seed)
    })?;
    let grid = x.params.grid();

    let mut means = Table::new(&["t", "series", "mean", "stderr"]);
    type Pick = fn(&LimitPath) -> &GridSeries;
    let series: [(&str, Pick); 4] = [
        ("v", |p| &p.v),
        ("v_bar", |p| &p.v_bar),
        ("x", |p| &p.x),
        ("x_bar", |p| &p.x_bar),
    ];
    for (label, pick) in series {
        let mut acc = McAccumulator::new(grid);
        for p in &paths {
            acc.push(pick(p))?;
        }
        let s = acc.summary()?;
        for (j, t) in grid.times().enumerate() {
            means.push(row![t, label, s.mean[j], s.stderr[j]]);
        }
    }
    ctx.dir.write_csv("means.csv", &means)?;

    let mut terminal = Table::new(&["path", "x", "x_bar", "v", "v_bar", "truncations", "rho_clips"]);
    let (mut steps, mut truncations, mut clips) = (0, 0, 0);
    for (i, p) in paths.iter().enumerate() {
        terminal.push(row![
            i,
            p.x.last(),
            p.x_bar.last(),
            p.v.last(),
            p.v_bar.last(),
            p.diagnostics.truncations,
            p.diagnostics.rho_clips
        ]);
        steps += p.diagnostics.steps;
        truncations += p.diagnostics.truncations;
        clips += p.diagnostics.rho_clips;
    }
    ctx.dir.write_csv("terminal.csv", &terminal)?;

    let report = covariation_check(&paths)?;
    let mut cov = Table::new(&["bracket", "bracket_mean", "bracket_stderr", "target_mean", "target_stderr", "rel_error"]);
    let mut checks = Vec::new();
    for (label, target, c) in [
        ("m_star", "x_bar", &report.qv),
        ("m_bar_star", "x_bar", &report.qv_bar),
        ("m_star_m_bar_star", "x", &report.cross),
    ] {
        if let Some(c) = c {
            cov.push(row![label, c.bracket_mean, c.bracket_stderr, c.target_mean, c.target_stderr, c.rel_error]);
            checks.push(Check::new(
                format!("bracket_{label}_vs_{target}"),
                c.rel_error < MAX_BRACKET_ERROR,
                c.rel_error,
                format!("< {MAX_BRACKET_ERROR}"),
            ));
        }
    }
    ctx.dir.write_csv("covariation.csv", &cov)?;

    let clip_rate = rate(clips, steps);
    let trunc_rate = rate(truncations, steps);
    checks.push(Check::new("rho_clip_rate", clip_rate < MAX_CLIP_RATE, clip_rate, format!("< {MAX_CLIP_RATE}")));
    checks.push(Check::new(
        "v_bar_truncation_rate",
        trunc_rate < MAX_CLIP_RATE,
        trunc_rate,
        format!("< {MAX_CLIP_RATE}"),
    ));
    let mut results = json!({
        "paths": x.paths,
        "rho_clip_rate": clip_rate,
        "truncation_rate": trunc_rate,
        "covariation_note": report.note,
    });

    if let (Some(n), LimitRegime::NearUnstable { alpha_tilde, .. }) = (x.hurst_paths, &x.params.regime) {
        let fits = paths
            .iter()
            .take(n)
            .map(|p| hurst_estimate(p.v_bar.values(), None))
            .collect::<qhawkes_core::Result<Vec<_>>>()?;
        let hs: Vec<f64> = fits.iter().map(|f| f.h).collect();
        let mut table = Table::new(&["path", "h", "r_squared"]);
        for (i, f) in fits.iter().enumerate() {
            table.push(row![i, f.h, f.r_squared]);
        }
        ctx.dir.write_csv("hurst.csv", &table)?;
        let (h, _) = mean_stderr(&hs);
        checks.push(roughness_check(h, *alpha_tilde));
        results["hurst_mean"] = json!(h);
    }
    Ok(Outcome { checks, results })
}

fn roughness_check(h: f64, alpha_tilde: f64) -> Check {
    let target = alpha_tilde - 0.5;
    let (lo, hi) = (target - 0.1, target + 0.1);
    Check::new("v_bar_hurst", (lo..=hi).contains(&h), h, format!("in [{lo:.2}, {hi:.2}]"))
}

fn resolvent_check(x: &ResolventCheck, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let phi = x.phi.as_ref().unwrap_or(&x.limit.phi);
    let gaps = scaled_resolvent_check(phi, &x.schedule, &x.limit, x.dt, None)?;
    let LimitRegime::NearUnstable { alpha_tilde, sigma, c1, .. } = x.limit.regime else {
        unreachable!("validated as near-unstable");
    };

    let mut table = Table::new(&["T", "a_T", "beta_T", "gap", "gap_rate_adjusted"]);
    for g in &gaps {
        table.push(row![g.t_scale, g.a_t, g.beta_t, g.gap, g.gap_rate_adjusted]);
    }
    ctx.dir.write_csv("gaps.csv", &table)?;

    let mut curves = Table::new(&["T", "t", "F_T", "stated_target", "rate_adjusted_target"]);
    for &t_scale in &x.schedule {
        let (f, _, _) = scaled_cumulative_resolvent(phi, t_scale, &x.limit, x.dt)?;
        for (t, v) in f.iter() {
            let stated = ml_kernel(alpha_tilde, sigma, t, MlForm::Integral)? / c1;
            let adjusted = ml_kernel(alpha_tilde, c1 * sigma, t, MlForm::Integral)? / c1;
            curves.push(row![t_scale, t, v, stated, adjusted]);
        }
    }
    ctx.dir.write_csv("curves.csv", &curves)?;

    let stated: Vec<f64> = gaps.iter().map(|g| g.gap).collect();
    let adjusted: Vec<f64> = gaps.iter().map(|g| g.gap_rate_adjusted).collect();
    let last = *stated.last().expect("schedule is nonempty");
    let checks = vec![
        Check::new("gap_strictly_decreasing", strictly_decreasing(&stated), last, "strictly decreasing over T"),
        Check::new("final_gap", last < 0.05, last, "< 0.05"),
        Check::new(
            "rate_adjusted_gap_strictly_decreasing",
            strictly_decreasing(&adjusted),
            *adjusted.last().expect("schedule is nonempty"),
            "strictly decreasing over T",
        ),
    ];
    Ok(Outcome {
        checks,
        results: json!({ "gaps": gaps }),
    })
}

fn picard(x: &PicardRun, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let grid = Grid::span(x.horizon, x.cells)?;
    let r = picard_solve(x.equation, &x.params, &grid, x.tol, x.max_iter, ctx.allow_unstable)?;

    let mut solution = Table::new(&["t", "value"]);
    for (t, v) in r.solution.iter() {
        solution.push(row![t, v]);
    }
    ctx.dir.write_csv("solution.csv", &solution)?;
    let mut rates = Table::new(&["iteration", "ratio"]);
    for (i, q) in r.rate_estimates.iter().enumerate() {
        rates.push(row![i + 1, *q]);
    }
    ctx.dir.write_csv("rates.csv", &rates)?;

    let max_rate = r.rate_estimates.iter().copied().fold(0.0, f64::max);
    let mut checks = vec![Check::new(
        "residual",
        r.converged && r.residual_sup < 1e-10 && r.iterations <= x.max_iter,
        r.residual_sup,
        format!("< 1e-10 within {} iterations", x.max_iter),
    )];
    if let Some(bound) = r.rate_bound {
        checks.push(Check::new(
            "contraction_ratio",
            max_rate <= bound + 0.02,
            max_rate,
            format!("<= {} (bound + 0.02)", bound + 0.02),
        ));
    }
    Ok(Outcome {
        checks,
        results: json!({
            "iterations": r.iterations,
            "residual_sup": r.residual_sup,
            "converged": r.converged,
            "max_rate": max_rate,
            "rate_bound": r.rate_bound,
        }),
    })
}

fn convergence_study(x: &ConvergenceStudy, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let limit: Vec<f64> = run_paths(
        x.limit_paths,
        ctx.seed,
        tag_of("convergence_study/limit"),
        ctx.workers,
        |_, seed| Ok(simulate_limit(&x.limit, seed)?.x_bar.last()),
    )?;
    let mut samples = Table::new(&["source", "T", "path", "x_bar_1"]);
    for (i, v) in limit.iter().enumerate() {
        samples.push(row!["limit", "", i, *v]);
    }

    let opts = x.sim.options(ctx.allow_unstable);
    let grid = Grid::unit(x.cells)?;
    let mut table = Table::new(&[
        "T",
        "ks_distance",
        "compensator_gap",
        "compensator_gap_stderr",
        "violation_rate",
        "a_T",
        "rescaling_residual",
    ]);
    let (mut ks_all, mut gap_all) = (Vec::new(), Vec::new());
    let (mut violations, mut candidates) = (0, 0);
    let mut rows = Vec::new();
    for &t_scale in &x.schedule {
        let rescaled = rescale_params(&x.limit, t_scale)?;
        let tag = tag_of(&format!("convergence_study/T={t_scale}"));
        let outs = run_paths(x.micro_paths, ctx.seed, tag, ctx.workers, |_, seed| {
            let path = simulate(&rescaled.micro, t_scale, seed, &opts)?;
            let sp = scaled_processes(&path, &rescaled, &grid)?;
            Ok((sp.x_bar.last(), sp.compensator_gap(), path.diagnostics.violations, path.diagnostics.candidates()))
        })?;
        let xb: Vec<f64> = outs.iter().map(|o| o.0).collect();
        let gaps: Vec<f64> = outs.iter().map(|o| o.1).collect();
        let v: usize = outs.iter().map(|o| o.2).sum();
        let c: usize = outs.iter().map(|o| o.3).sum();
        violations += v;
        candidates += c;
        let ks = ks_distance(&xb, &limit)?;
        let (gap, gap_se) = mean_stderr(&gaps);
        for (i, v) in xb.iter().enumerate() {
            samples.push(row!["micro", t_scale, i, *v]);
        }
        table.push(row![
            t_scale,
            ks,
            gap,
            gap_se,
            rate(v, c),
            rescaled.a_t.unwrap_or(f64::NAN),
            rescaled.residual.unwrap_or(f64::NAN)
        ]);
        rows.push(json!({ "T": t_scale, "ks_distance": ks, "compensator_gap": gap, "compensator_gap_stderr": gap_se }));
        ks_all.push(ks);
        gap_all.push(gap);
    }
    ctx.dir.write_csv("table.csv", &table)?;
    ctx.dir.write_csv("samples.csv", &samples)?;

    let last_ks = *ks_all.last().expect("schedule is nonempty");
    let checks = vec![
        Check::new("ks_non_increasing", non_increasing(&ks_all), last_ks, "non-increasing over T"),
        Check::new("final_ks", last_ks < 0.15, last_ks, "< 0.15"),
        Check::new(
            "compensator_gap_decreasing",
            strictly_decreasing(&gap_all),
            *gap_all.last().expect("schedule is nonempty"),
            "strictly decreasing over T",
        ),
        violation_check(violations, candidates),
    ];
    Ok(Outcome {
        checks,
        results: json!({ "rows": rows, "limit_paths": x.limit_paths, "micro_paths": x.micro_paths }),
    })
}

fn linear_arm(p: &MicroParams) -> MicroParams {
    MicroParams {
        alpha1: 0.0,
        alpha2: 0.0,
        ..p.clone()
    }
}

/// Returns of the price `N¹ − N²` over consecutive steps of length `dt`.
fn price_returns(path: &EventPath, dt: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for e in &path.events {
        let j = (e.time / dt).ceil() as usize;
        if (1..=n).contains(&j) {
            out[j - 1] += e.mark as f64;
        }
    }
    out
}

fn tra_study(x: &TraStudy, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let opts = x.sim.options(ctx.allow_unstable);
    let linear = linear_arm(&x.params);
    let n = (x.horizon / x.dt + 1e-9).floor() as usize;
    let outs = run_paths(x.pairs, ctx.seed, tag_of("tra_study"), ctx.workers, |_, seed| {
        let q = simulate(&x.params, x.horizon, seed, &opts)?;
        let l = simulate(&linear, x.horizon, seed, &opts)?;
        let cq = tra_statistic(&price_returns(&q, x.dt, n), x.window, &x.lags)?;
        let cl = tra_statistic(&price_returns(&l, x.dt, n), x.window, &x.lags)?;
        let v = q.diagnostics.violations + l.diagnostics.violations;
        let c = q.diagnostics.candidates() + l.diagnostics.candidates();
        Ok((seed, cq, cl, v, c))
    })?;

    let mut pairs = Table::new(&["pair", "seed", "index_quadratic", "index_linear", "difference"]);
    let (mut iq, mut il, mut diffs) = (Vec::new(), Vec::new(), Vec::new());
    let (mut quad_curves, mut lin_curves) = (Vec::new(), Vec::new());
    let (mut violations, mut candidates) = (0, 0);
    for (i, (seed, cq, cl, v, c)) in outs.iter().enumerate() {
        let d = cq.asymmetry_index - cl.asymmetry_index;
        pairs.push(row![i, *seed, cq.asymmetry_index, cl.asymmetry_index, d]);
        iq.push(cq.asymmetry_index);
        il.push(cl.asymmetry_index);
        diffs.push(d);
        quad_curves.push(cq);
        lin_curves.push(cl);
        violations += v;
        candidates += c;
    }
    ctx.dir.write_csv("pairs.csv", &pairs)?;

    let mut curves = Table::new(&["arm", "lag", "forward_mean", "backward_mean"]);
    for (arm, curves_of) in [("quadratic", &quad_curves), ("linear", &lin_curves)] {
        for (k, lag) in x.lags.iter().enumerate() {
            let f: Vec<f64> = curves_of.iter().map(|c| c.forward_corr[k]).collect();
            let b: Vec<f64> = curves_of.iter().map(|c| c.backward_corr[k]).collect();
            curves.push(row![arm, *lag, mean_stderr(&f).0, mean_stderr(&b).0]);
        }
    }
    ctx.dir.write_csv("curves.csv", &curves)?;

    let (mq, seq) = mean_stderr(&iq);
    let (ml, sel) = mean_stderr(&il);
    let (pos, trials, p) = sign_test(&diffs);
    let boot = bootstrap_mean_se(&il, x.bootstrap, derive_seed(ctx.seed, tag_of("tra_study/bootstrap"), 0))?;
    let checks = vec![
        Check::new("quadratic_index_exceeds_linear", mq > ml, mq - ml, "> 0"),
        Check::new("sign_test", p < 0.01, p, "one-sided p < 0.01"),
        Check::new("linear_index_near_zero", ml.abs() <= 3.0 * boot, ml.abs() / boot, "|mean| / bootstrap se <= 3"),
        violation_check(violations, candidates),
    ];
    Ok(Outcome {
        checks,
        results: json!({
            "index_quadratic": mq,
            "index_quadratic_stderr": seq,
            "index_linear": ml,
            "index_linear_stderr": sel,
            "index_linear_bootstrap_se": boot,
            "sign_test": { "positives": pos, "trials": trials, "p_value": p },
            "violation_rate": rate(violations, candidates),
        }),
    })
}

fn roughness_study(x: &RoughnessStudy, ctx: &mut Ctx<'_>) -> CliResult<Outcome> {
    let LimitRegime::NearUnstable { alpha_tilde, .. } = x.limit.regime else {
        unreachable!("validated as near-unstable");
    };
    let gen = FbmGenerator::new(x.fbm_cells, x.fbm_hurst)?;
    let fbm = run_paths(x.fbm_paths, ctx.seed, tag_of("roughness_study/fbm"), ctx.workers, |_, seed| {
        hurst_estimate(&gen.sample(&mut ChaCha20Rng::seed_from_u64(seed)), None)
    })?;
    let limit = run_paths(x.paths, ctx.seed, tag_of("roughness_study"), ctx.workers, |_, seed| {
        hurst_estimate(simulate_limit(&x.limit, seed)?.v_bar.values(), None)
    })?;

    let mut table = Table::new(&["source", "path", "h", "r_squared"]);
    for (source, fits) in [("fbm", &fbm), ("v_bar", &limit)] {
        for (i, f) in fits.iter().enumerate() {
            table.push(row![source, i, f.h, f.r_squared]);
        }
    }
    ctx.dir.write_csv("hurst.csv", &table)?;

    let h_fbm = mean_stderr(&fbm.iter().map(|f| f.h).collect::<Vec<_>>()).0;
    let (h, se) = mean_stderr(&limit.iter().map(|f| f.h).collect::<Vec<_>>());
    let checks = vec![
        Check::new(
            "fbm_calibration",
            (h_fbm - x.fbm_hurst).abs() <= 0.05,
            h_fbm,
            format!("within 0.05 of {}", x.fbm_hurst),
        ),
        roughness_check(h, alpha_tilde),
    ];
    Ok(Outcome {
        checks,
        results: json!({
            "fbm_hurst_mean": h_fbm,
            "v_bar_hurst_mean": h,
            "v_bar_hurst_stderr": se,
            "target": alpha_tilde - 0.5,
        }),
    })
}

