//! Macroscopic limit systems: the stable-regime Volterra SDE and the
//! near-unstable super-Heston-rough system with stochastic correlation
//! `⟨B¹, B²⟩ = ∫ V/V̄ dt`.
//!
//! Both integrators return one scheme-dependent solution; the limit equations
//! carry no uniqueness statement in the near-unstable case.

mod params;

pub use params::{LimitForm, LimitParams, LimitRegime};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{Grid, GridSeries};
use crate::kernels::{Kernel, KernelSpec};
use crate::volterra::ProductWeights;

/// Cell masses of a kernel on a uniform grid:
/// `weight(j, i) = ∫_{t_i}^{t_{i+1}} f(t_j − s) ds = mass[j − 1 − i]` for `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub dt: f64,
    pub mass: Vec<f64>,
}

impl KernelWeights {
    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    pub fn weight(&self, j: usize, i: usize) -> f64 {
        if i < j {
            self.mass[j - 1 - i]
        } else {
            0.0
        }
    }

    /// `Σ_i weight(j, i) = ∫_0^{t_j} f`
    pub fn row_sum(&self, j: usize) -> f64 {
        self.mass[..j].iter().sum()
    }

    /// `Σ_{i<j} weight(j, i) · x_i`
    pub fn apply(&self, x: &[f64], j: usize) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate().take(j) {
            acc += self.mass[j - 1 - i] * xi;
        }
        acc
    }
}

/// Exact cell masses of `f` on `grid` (closed form for the built-in kernel
/// families, quadrature otherwise).
pub fn build_kernel_weights(f: &dyn Kernel, grid: &Grid) -> Result<KernelWeights> {
    let dt = grid.dt;
    let mut mass = Vec::with_capacity(grid.cells);
    for m in 0..grid.cells {
        let c = f.mass(m as f64 * dt, (m + 1) as f64 * dt)?;
        if !c.is_finite() {
            return Err(Error::Divergence(format!(
                "kernel mass on [{}, {}] is not finite",
                m as f64 * dt,
                (m + 1) as f64 * dt
            )));
        }
        mass.push(c);
    }
    Ok(KernelWeights { dt, mass })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitDiagnostics {
    pub steps: usize,
    /// Steps with `V̄ < 0` before truncation.
    pub truncations: usize,
    /// Steps with `|V/V̄| > 1` before clipping.
    pub rho_clips: usize,
    /// Steps with `V̄` below the floor in the `ρ` denominator.
    pub floor_hits: usize,
}

impl LimitDiagnostics {
    pub fn truncation_rate(&self) -> f64 {
        self.truncations as f64 / self.steps.max(1) as f64
    }

    pub fn clip_rate(&self) -> f64 {
        self.rho_clips as f64 / self.steps.max(1) as f64
    }
}

/// One path of a limit system on the grid of its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPath {
    pub v: GridSeries,
    pub v_bar: GridSeries,
    pub x: GridSeries,
    pub x_bar: GridSeries,
    pub m_star: GridSeries,
    pub m_bar_star: GridSeries,
    pub z_star: GridSeries,
    pub z_bar_star: GridSeries,
    pub rho: GridSeries,
    pub diagnostics: LimitDiagnostics,
}

impl LimitPath {
    pub fn grid(&self) -> &Grid {
        self.v.grid()
    }

    /// Discrete brackets `([M*], [M̄*], [M*, M̄*])` on the grid.
    pub fn brackets(&self) -> (GridSeries, GridSeries, GridSeries) {
        brackets(&self.m_star, &self.m_bar_star)
    }
}

/// Running sums of `(ΔM)²`, `(ΔM̄)²` and `ΔM ΔM̄`.
pub fn brackets(m: &GridSeries, m_bar: &GridSeries) -> (GridSeries, GridSeries, GridSeries) {
    let grid = *m.grid();
    let (dm, dmb) = (m.increments(), m_bar.increments());
    let mut q = vec![0.0; grid.len()];
    let mut qb = vec![0.0; grid.len()];
    let mut qc = vec![0.0; grid.len()];
    for i in 0..dm.len() {
        q[i + 1] = q[i] + dm[i] * dm[i];
        qb[i + 1] = qb[i] + dmb[i] * dmb[i];
        qc[i + 1] = qc[i] + dm[i] * dmb[i];
    }
    let mk = |v| GridSeries::new(grid, v).expect("grid length");
    (mk(q), mk(qb), mk(qc))
}

/// Correlated Brownian increments with the left-point correlation `ρ`.
struct Noise {
    rng: ChaCha20Rng,
    on: bool,
    sd: f64,
}

impl Noise {
    fn new(seed: u64, on: bool, dt: f64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            on,
            sd: dt.sqrt(),
        }
    }

    /// `(ΔB¹, ΔB²)` with `ΔB¹ = ρ ΔB² + √(1−ρ²) ΔW`.
    fn draw(&mut self, rho: f64) -> (f64, f64) {
        if !self.on {
            return (0.0, 0.0);
        }
        let b2: f64 = self.rng.sample::<f64, _>(StandardNormal) * self.sd;
        let w: f64 = self.rng.sample::<f64, _>(StandardNormal) * self.sd;
        (rho * b2 + (1.0 - rho * rho).max(0.0).sqrt() * w, b2)
    }
}

struct Step {
    rho: f64,
    dm: f64,
    dm_bar: f64,
}

/// `ρ`, then `ΔM*`, `ΔM̄*` from the left-point state, updating the counters.
fn noise_step(noise: &mut Noise, v: f64, v_bar: f64, floor: f64, d: &mut LimitDiagnostics) -> Step {
    d.steps += 1;
    if v_bar < 0.0 {
        d.truncations += 1;
    }
    if v_bar < floor {
        d.floor_hits += 1;
    }
    let raw = v / v_bar.max(floor);
    if raw.abs() > 1.0 {
        d.rho_clips += 1;
    }
    let rho = raw.clamp(-1.0, 1.0);
    let (b1, b2) = noise.draw(rho);
    let s = v_bar.max(0.0).sqrt();
    Step {
        rho,
        dm: s * b1,
        dm_bar: s * b2,
    }
}

struct Drifts {
    alpha: f64,
    alpha1: f64,
    alpha2: f64,
    form: LimitForm,
}

impl Drifts {
    fn of(p: &LimitParams) -> Self {
        Self {
            alpha: p.alpha(),
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            form: p.form,
        }
    }

    /// Quadratic parts of the `V` and `V̄` drifts.
    fn quadratic(&self, z: f64, z_bar: f64) -> (f64, f64) {
        match self.form {
            LimitForm::Stated => (self.alpha * z * z, 0.5 * (self.alpha1 + self.alpha2) * z * z),
            LimitForm::MicroConsistent => (
                self.alpha * z * z_bar,
                0.5 * (self.alpha1 * z * z + self.alpha2 * z_bar * z_bar),
            ),
        }
    }
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for x in xs {
        acc += x;
        out.push(acc);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    grid: Grid,
    v: Vec<f64>,
    v_bar: Vec<f64>,
    dm: &[f64],
    dm_bar: &[f64],
    z: Vec<f64>,
    z_bar: Vec<f64>,
    rho: Vec<f64>,
    diagnostics: LimitDiagnostics,
) -> Result<LimitPath> {
    let v = GridSeries::new(grid, v)?;
    let v_bar = GridSeries::new(grid, v_bar)?;
    Ok(LimitPath {
        x: v.cumulative_trapezoid(),
        x_bar: v_bar.cumulative_trapezoid(),
        v,
        v_bar,
        m_star: GridSeries::new(grid, cumulative(dm))?,
        m_bar_star: GridSeries::new(grid, cumulative(dm_bar))?,
        z_star: GridSeries::new(grid, z)?,
        z_bar_star: GridSeries::new(grid, z_bar)?,
        rho: GridSeries::new(grid, rho)?,
        diagnostics,
    })
}

/// Integrates the near-unstable limit system with an explicit left-point
/// scheme.
///
/// On each cell `[t_i, t_{i+1}]`: `ρ_i = clip(V_i / max(V̄_i, floor))`,
/// `ΔM*_i = √V̄_i⁺ ΔB¹_i`, `ΔM̄*_i = √V̄_i⁺ ΔB²_i`, and
/// `V_j = Σ_{i<j} w_V(j,i) (ΔM*_i/(dt √(σμ̄*)) + b_i)`,
/// `V̄_j = Σ_{i<j} w_V̄(j,i) (ΔM̄*_i/(dt √(σμ̄*)) + b̄_i)` with the cell masses
/// `w` of the Mittag-Leffler kernels and the drifts `b`, `b̄` at `t_i`.
pub fn simulate_unstable_limit(params: &LimitParams, seed: u64) -> Result<LimitPath> {
    params.validate()?;
    let LimitRegime::NearUnstable {
        alpha_tilde,
        sigma,
        c1,
        c2,
        mu_star,
        mu_bar_star,
    } = params.regime
    else {
        return param("simulate_unstable_limit needs near-unstable parameters");
    };
    let grid = params.grid();
    let (rate1, rate2) = match params.form {
        LimitForm::Stated => (sigma, sigma),
        LimitForm::MicroConsistent => (c1 * sigma, c2 * sigma),
    };
    let f1 = KernelSpec::ml_density(alpha_tilde, rate1)?.scaled(1.0 / c1, 1.0)?;
    let f2 = KernelSpec::ml_density(alpha_tilde, rate2)?.scaled(1.0 / c2, 1.0)?;
    let w1 = build_kernel_weights(&f1, &grid)?;
    let w2 = build_kernel_weights(&f2, &grid)?;
    let wk = build_kernel_weights(&params.k, &grid)?;
    let drifts = Drifts::of(params);
    let n = grid.cells;
    let dt = grid.dt;
    let norm = 1.0 / (dt * (sigma * mu_bar_star).sqrt());
    let mu_ratio = mu_star / mu_bar_star;

    let mut noise = Noise::new(seed, params.noise, dt);
    let mut diag = LimitDiagnostics::default();
    let (mut v, mut v_bar) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut z, mut z_bar) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut rho = vec![0.0; n + 1];
    let (mut dm, mut dm_bar) = (Vec::with_capacity(n), Vec::with_capacity(n));
    // Integrands of the two Volterra convolutions, per cell.
    let (mut g, mut g_bar) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut dmk, mut dmk_bar) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let s = noise_step(&mut noise, v[i], v_bar[i], params.rho_floor, &mut diag);
        rho[i] = s.rho;
        let (q, q_bar) = drifts.quadratic(z[i], z_bar[i]);
        g.push(s.dm * norm + mu_ratio + q);
        g_bar.push(s.dm_bar * norm + 1.0 + q_bar);
        dmk.push(s.dm / dt);
        dmk_bar.push(s.dm_bar / dt);
        dm.push(s.dm);
        dm_bar.push(s.dm_bar);
        let j = i + 1;
        v[j] = w1.apply(&g, j);
        v_bar[j] = w2.apply(&g_bar, j);
        z[j] = wk.apply(&dmk, j);
        z_bar[j] = wk.apply(&dmk_bar, j);
    }
    rho[n] = (v[n] / v_bar[n].max(params.rho_floor)).clamp(-1.0, 1.0);
    assemble(grid, v, v_bar, &dm, &dm_bar, z, z_bar, rho, diag)
}

/// Integrates the stable-regime limit system.
///
/// The deterministic part is the product-trapezoid scheme of
/// [`ProductWeights::march`] with the `V_j` term implicit, so the noise-free
/// linear case reproduces [`crate::volterra::solve_linear_volterra`]. `Z*_j`
/// uses only increments before `t_j`, so each step stays explicit in the
/// noise.
pub fn simulate_stable_limit(params: &LimitParams, seed: u64) -> Result<LimitPath> {
    params.validate()?;
    let LimitRegime::Stable {
        mu,
        mu_bar,
        beta,
        beta_bar,
    } = params.regime
    else {
        return param("simulate_stable_limit needs stable parameters");
    };
    let grid = params.grid();
    let pw = ProductWeights::for_grid(&params.phi, &grid)?;
    let wk = build_kernel_weights(&params.k, &grid)?;
    let diag_v = beta * pw.diagonal();
    let diag_vb = beta_bar * pw.diagonal();
    if diag_v.abs() >= 1.0 || diag_vb >= 1.0 {
        return Err(Error::StepSize(diag_vb.max(diag_v.abs())));
    }
    let drifts = Drifts::of(params);
    let n = grid.cells;
    let dt = grid.dt;

    let mut noise = Noise::new(seed, params.noise, dt);
    let mut diag = LimitDiagnostics::default();
    let (mut v, mut v_bar) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut z, mut z_bar) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut rho = vec![0.0; n + 1];
    let (mut dm, mut dm_bar) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut dmk, mut dmk_bar) = (Vec::with_capacity(n), Vec::with_capacity(n));
    v[0] = mu;
    v_bar[0] = mu_bar;
    for i in 0..n {
        let s = noise_step(&mut noise, v[i], v_bar[i], params.rho_floor, &mut diag);
        rho[i] = s.rho;
        dmk.push(s.dm / dt);
        dmk_bar.push(s.dm_bar / dt);
        dm.push(s.dm);
        dm_bar.push(s.dm_bar);
        let j = i + 1;
        z[j] = wk.apply(&dmk, j);
        z_bar[j] = wk.apply(&dmk_bar, j);
        let (q, q_bar) = drifts.quadratic(z[j], z_bar[j]);
        v[j] = (mu + q + beta * history(&pw, &v, j)) / (1.0 - diag_v);
        v_bar[j] = (mu_bar + q_bar + beta_bar * history(&pw, &v_bar, j)) / (1.0 - diag_vb);
    }
    rho[n] = (v[n] / v_bar[n].max(params.rho_floor)).clamp(-1.0, 1.0);
    assemble(grid, v, v_bar, &dm, &dm_bar, z, z_bar, rho, diag)
}

/// Convolution at `t_j` without the `g_j` term.
fn history(pw: &ProductWeights, g: &[f64], j: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..j {
        let m = j - 1 - i;
        acc += pw.w0[m] * g[i];
        if i + 1 < j {
            acc += pw.w1[m] * g[i + 1];
        }
    }
    acc
}

/// Dispatches on the regime of `params`.
pub fn simulate_limit(params: &LimitParams, seed: u64) -> Result<LimitPath> {
    match params.regime {
        LimitRegime::Stable { .. } => simulate_stable_limit(params, seed),
        LimitRegime::NearUnstable { .. } => simulate_unstable_limit(params, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ml_kernel, MlForm};
    use crate::volterra::solve_linear_volterra;

    #[test]
    fn weights_of_constant_kernel() {
        let grid = Grid::unit(16).unwrap();
        let w = build_kernel_weights(&|_t: f64| 1.0, &grid).unwrap();
        for j in 0..=16 {
            for i in 0..j {
                assert!((w.weight(j, i) - grid.dt).abs() < 1e-14);
            }
            assert_eq!(w.weight(j, j), 0.0);
        }
    }

    #[test]
    fn ml_row_sums_telescope() {
        let grid = Grid::unit(256).unwrap();
        let f = KernelSpec::ml_density(0.75, 1.0).unwrap();
        let w = build_kernel_weights(&f, &grid).unwrap();
        for j in [1, 10, 100, 256] {
            let exact = ml_kernel(0.75, 1.0, grid.time(j), MlForm::Integral).unwrap();
            assert!((w.row_sum(j) - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_weights_are_exact() {
        let grid = Grid::unit(64).unwrap();
        let k = KernelSpec::exponential(3.0, 2.0).unwrap();
        let w = build_kernel_weights(&k, &grid).unwrap();
        for m in 0..64 {
            let a = m as f64 * grid.dt;
            let b = a + grid.dt;
            let exact = 2.0 / 3.0 * ((-3.0 * a).exp() - (-3.0 * b).exp());
            assert!((w.mass[m] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_free_unstable_vbar_is_scaled_integral() {
        let mut p = LimitParams::near_unstable_default(0.75).unwrap();
        p.noise = false;
        let path = simulate_unstable_limit(&p, 1).unwrap();
        for (t, v) in path.v_bar.iter() {
            let exact = ml_kernel(0.75, 1.0, t, MlForm::Integral).unwrap() / 2.0;
            assert!((v - exact).abs() < 1e-6, "{t}: {v} vs {exact}");
        }
        assert_eq!(path.v.values()[0], 0.0);
        assert_eq!(path.x.values()[0], 0.0);
        assert_eq!(path.z_star.sup_norm(), 0.0);
    }

    #[test]
    fn unstable_path_is_deterministic_and_clipped() {
        let p = LimitParams::near_unstable_default(0.75).unwrap().with_cells(256);
        let a = simulate_unstable_limit(&p, 9).unwrap();
        let b = simulate_unstable_limit(&p, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.rho.values().iter().all(|r| r.abs() <= 1.0));
        let x = a.v.cumulative_trapezoid();
        for (u, w) in x.values().iter().zip(a.x.values()) {
            assert!((u - w).abs() <= 1e-14 * (1.0 + u.abs()));
        }
    }

    fn stable(alpha: f64, k: KernelSpec) -> LimitParams {
        LimitParams::stable(
            KernelSpec::exponential(1.0, 1.0).unwrap(),
            k,
            0.2,
            0.6,
            0.3,
            0.5,
            alpha,
            alpha,
            512,
        )
        .unwrap()
    }

    #[test]
    fn stable_linear_case_matches_volterra_solver() {
        let p = stable(0.0, KernelSpec::zero());
        let path = simulate_stable_limit(&p, 4).unwrap();
        let phi = KernelSpec::exponential(1.0, 0.3).unwrap();
        let phi_bar = KernelSpec::exponential(1.0, 0.5).unwrap();
        let v = solve_linear_volterra(0.2, &phi, &p.grid()).unwrap();
        let vb = solve_linear_volterra(0.6, &phi_bar, &p.grid()).unwrap();
        assert!(path.v.sub(&v).unwrap().sup_norm() < 1e-6);
        assert!(path.v_bar.sub(&vb).unwrap().sup_norm() < 1e-6);
    }

    #[test]
    fn stable_zero_model_stays_at_zero() {
        let mut p = stable(0.5, KernelSpec::exponential(1.0, 0.5).unwrap());
        p.regime = LimitRegime::Stable {
            mu: 0.0,
            mu_bar: 0.0,
            beta: 0.0,
            beta_bar: 0.0,
        };
        let path = simulate_stable_limit(&p, 2).unwrap();
        assert_eq!(path.v.sup_norm(), 0.0);
        assert_eq!(path.v_bar.sup_norm(), 0.0);
        assert_eq!(path.m_star.sup_norm(), 0.0);
    }

    #[test]
    fn regime_mismatch_is_rejected() {
        let p = stable(0.5, KernelSpec::zero());
        assert!(matches!(simulate_unstable_limit(&p, 1), Err(Error::Parameter(_))));
        let q = LimitParams::near_unstable_default(0.75).unwrap();
        assert!(matches!(simulate_stable_limit(&q, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn brackets_of_known_increments() {
        let grid = Grid::unit(2).unwrap();
        let m = GridSeries::new(grid, vec![0.0, 1.0, -1.0]).unwrap();
        let mb = GridSeries::new(grid, vec![0.0, 2.0, 2.0]).unwrap();
        let (q, qb, qc) = brackets(&m, &mb);
        assert_eq!(q.values(), &[0.0, 1.0, 5.0]);
        assert_eq!(qb.values(), &[0.0, 4.0, 4.0]);
        assert_eq!(qc.values(), &[0.0, 2.0, 2.0]);
    }
}
