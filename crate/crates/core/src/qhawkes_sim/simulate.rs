use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{Grid, GridSeries};

use super::params::MicroParams;
use super::state::{IntensityState, Mark};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Micro-step `h`; `None` means `horizon / 10⁵`.
    pub micro_step: Option<f64>,
    /// Multiplier applied to the intensity bound at each refresh.
    pub safety: f64,
    pub max_events: usize,
    /// Keep one intensity sample every `sample_stride` micro-steps.
    pub sample_stride: usize,
    /// Run even when the stability functional is `≥ 1`.
    pub allow_unstable: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            micro_step: None,
            safety: 1.5,
            max_events: 2_000_000,
            sample_stride: 1,
            allow_unstable: false,
        }
    }
}

impl SimOptions {
    pub fn with_step(h: f64) -> Self {
        Self {
            micro_step: Some(h),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub mark: Mark,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub accepted: usize,
    pub rejected: usize,
    pub refreshes: usize,
    pub violations: usize,
}

impl SimDiagnostics {
    pub fn candidates(&self) -> usize {
        self.accepted + self.rejected
    }

    pub fn violation_rate(&self) -> f64 {
        if self.candidates() == 0 {
            0.0
        } else {
            self.violations as f64 / self.candidates() as f64
        }
    }
}

/// Intensities, compensators and counts at a micro-grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensitySample {
    pub t: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub comp1: f64,
    pub comp2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPath {
    pub horizon: f64,
    pub micro_step: f64,
    pub events: Vec<Event>,
    pub diagnostics: SimDiagnostics,
    pub samples: Vec<IntensitySample>,
}

impl EventPath {
    /// `(N¹_t, N²_t)`
    pub fn counts_at(&self, t: f64) -> (usize, usize) {
        let n = self.events.partition_point(|e| e.time <= t);
        let buys = self.events[..n].iter().filter(|e| e.mark > 0).count();
        (buys, n - buys)
    }

    /// Intensity samples linearly interpolated at `t`.
    pub fn sample_at(&self, t: f64) -> Result<IntensitySample> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Range(format!(
                "t = {t} outside the simulated horizon [0, {}]",
                self.horizon
            )));
        }
        let i = s.partition_point(|x| x.t <= t);
        if i == 0 {
            return Ok(s[0]);
        }
        if i == s.len() {
            return Ok(s[s.len() - 1]);
        }
        let (a, b) = (s[i - 1], s[i]);
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        Ok(IntensitySample {
            t,
            lambda1: lerp(a.lambda1, b.lambda1),
            lambda2: lerp(a.lambda2, b.lambda2),
            comp1: lerp(a.comp1, b.comp1),
            comp2: lerp(a.comp2, b.comp2),
        })
    }
}

/// Simulates the bivariate process on `[0, horizon]` by thinning.
///
/// The dominating rate on `[t, next node]` is
/// `safety · (μ̄ + sup excitation + current quadratic terms)`, refreshed at
/// every micro-grid node and after every accepted event. A candidate whose
/// intensity exceeds the bound is accepted and counted as a violation.
pub fn simulate(params: &MicroParams, horizon: f64, seed: u64, opts: &SimOptions) -> Result<EventPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return param(format!("horizon must be positive, got {horizon}"));
    }
    let h = opts.micro_step.unwrap_or(horizon / 1e5);
    if !(h > 0.0 && h.is_finite()) {
        return param(format!("micro step must be positive, got {h}"));
    }
    if !(opts.safety >= 1.0) {
        return param(format!("safety factor must be >= 1, got {}", opts.safety));
    }
    let stride = opts.sample_stride.max(1);
    let a = params.stability_functional();
    if a >= 1.0 && !opts.allow_unstable {
        return Err(Error::Precondition(format!(
            "stability functional {a} >= 1; set allow_unstable to run anyway"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = IntensityState::new(params)?;
    let nodes = (horizon / h).ceil().max(1.0) as usize;
    let node_time = |m: usize| {
        if m >= nodes {
            horizon
        } else {
            m as f64 * h
        }
    };
    let sample = |s: &IntensityState| {
        let (l1, l2) = s.intensities();
        let (c1, c2) = s.compensators();
        IntensitySample {
            t: s.time(),
            lambda1: l1,
            lambda2: l2,
            comp1: c1,
            comp2: c2,
        }
    };

    let mut events = Vec::new();
    let mut diag = SimDiagnostics::default();
    let mut samples = vec![sample(&state)];
    let mut m = 0;
    let mut t_next = node_time(1);
    let mut bound = opts.safety * state.bound_base(t_next);
    diag.refreshes += 1;
    loop {
        let e: f64 = rng.sample(Exp1);
        let tau = if bound > 0.0 {
            state.time() + e / bound
        } else {
            f64::INFINITY
        };
        if tau >= t_next {
            state.advance(t_next)?;
            m += 1;
            if m % stride == 0 || m == nodes {
                samples.push(sample(&state));
            }
            if m == nodes {
                break;
            }
            t_next = node_time(m + 1);
            bound = opts.safety * state.bound_base(t_next);
            diag.refreshes += 1;
            continue;
        }
        state.advance(tau)?;
        let (l1, l2) = state.intensities();
        let total = l1 + l2;
        let u: f64 = rng.gen();
        let violated = total > bound;
        if violated {
            diag.violations += 1;
        }
        if violated || u * bound < total {
            let v: f64 = rng.gen();
            let mark: Mark = if v * total < l1 { 1 } else { -1 };
            state.add_event(mark);
            events.push(Event { time: tau, mark });
            diag.accepted += 1;
            if events.len() > opts.max_events {
                return Err(Error::Explosion {
                    events: events.len(),
                    time: tau,
                });
            }
            bound = opts.safety * state.bound_base(t_next);
            diag.refreshes += 1;
        } else {
            diag.rejected += 1;
        }
    }
    Ok(EventPath {
        horizon,
        micro_step: h,
        events,
        diagnostics: diag,
        samples,
    })
}

/// `(Λ, Λ̄)`: time integrals of `λ = λ₁ − λ₂` and `λ̄ = λ₁ + λ₂` on `grid`.
pub fn compensator_path(path: &EventPath, grid: &Grid) -> Result<(GridSeries, GridSeries)> {
    if grid.t0 < 0.0 || grid.end() > path.horizon * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "grid [{}, {}] exceeds path horizon {}",
            grid.t0,
            grid.end(),
            path.horizon
        )));
    }
    let mut diff = Vec::with_capacity(grid.len());
    let mut sum = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let s = path.sample_at(t.min(path.horizon))?;
        diff.push(s.comp1 - s.comp2);
        sum.push(s.comp1 + s.comp2);
    }
    Ok((GridSeries::new(*grid, diff)?, GridSeries::new(*grid, sum)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    fn hawkes() -> MicroParams {
        MicroParams::new(
            0.5,
            0.5,
            KernelSpec::exponential(1.0, 0.3).unwrap(),
            KernelSpec::exponential(1.0, 0.1).unwrap(),
            KernelSpec::exponential(1.0, 0.32f64.sqrt()).unwrap(),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_for_a_seed() {
        let o = SimOptions::with_step(0.05);
        let a = simulate(&hawkes(), 50.0, 7, &o).unwrap();
        let b = simulate(&hawkes(), 50.0, 7, &o).unwrap();
        assert_eq!(a, b);
        let c = simulate(&hawkes(), 50.0, 8, &o).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn events_ordered_inside_horizon() {
        let p = simulate(&hawkes(), 100.0, 3, &SimOptions::with_step(0.05)).unwrap();
        assert!(!p.events.is_empty());
        assert!(p.events[0].time > 0.0);
        assert!(p.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(p.events.last().unwrap().time <= 100.0);
        assert_eq!(p.diagnostics.accepted, p.events.len());
        assert_eq!(p.diagnostics.violations, 0);
        for s in &p.samples {
            assert!(s.lambda1 >= 0.0 && s.lambda2 >= 0.0);
        }
    }

    #[test]
    fn poisson_compensator_is_linear() {
        let p = simulate(&MicroParams::poisson(0.7).unwrap(), 20.0, 1, &SimOptions::with_step(0.01)).unwrap();
        let grid = Grid::span(20.0, 40).unwrap();
        let (lam, lam_bar) = compensator_path(&p, &grid).unwrap();
        for (t, v) in lam_bar.iter() {
            assert!((v - 1.4 * t).abs() < 1e-12 * (1.0 + t));
        }
        assert!(lam.sup_norm() < 1e-12);
        let too_long = Grid::span(21.0, 10).unwrap();
        assert!(matches!(compensator_path(&p, &too_long), Err(Error::Range(_))));
    }

    #[test]
    fn unstable_needs_override() {
        let mut p = hawkes();
        p.phi1 = KernelSpec::exponential(1.0, 0.95).unwrap();
        let err = simulate(&p, 10.0, 1, &SimOptions::with_step(0.1)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn runaway_intensity_raises_explosion() {
        let mut p = hawkes();
        p.phi1 = KernelSpec::exponential(1.0, 3.0).unwrap();
        let o = SimOptions {
            micro_step: Some(0.01),
            max_events: 500,
            allow_unstable: true,
            ..SimOptions::default()
        };
        assert!(matches!(simulate(&p, 100.0, 1, &o), Err(Error::Explosion { .. })));
    }

    #[test]
    fn counts_at_splits_marks() {
        let p = simulate(&hawkes(), 30.0, 11, &SimOptions::with_step(0.05)).unwrap();
        let (n1, n2) = p.counts_at(30.0);
        assert_eq!(n1 + n2, p.events.len());
        assert_eq!(n1, p.events.iter().filter(|e| e.mark == 1).count());
        assert_eq!(p.counts_at(0.0), (0, 0));
    }
}
