//! Linear Volterra equations, resolvents and the Picard iteration for the
//! deterministic quadratic equations.
//!
//! Convolutions `∫_0^{t_j} K(t_j − s) g(s) ds` are discretized by product
//! integration: `g` is interpolated linearly on each cell and integrated
//! exactly against `K`, so only the cell masses `∫_cell K` and first moments
//! `∫_cell u K(u) du` are needed. Singular kernels are therefore handled as
//! long as their cell integrals are.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{Grid, GridSeries};
use crate::kernels::assumptions::{check_assumptions, ModelRef};
use crate::kernels::{ml_kernel, Kernel, KernelShape, KernelSpec, MlForm};
use crate::limit_sde::{LimitParams, LimitRegime};
use crate::qhawkes_sim::MicroParams;

/// Product-integration weights of a kernel on a uniform grid.
///
/// For lag cell `m = [m dt, (m+1) dt]`, `w0[m] = ∫ K(u)(u − m dt)/dt du` and
/// `w1[m] = mass[m] − w0[m]`; then
/// `∫_0^{t_j} K(t_j − s) g(s) ds ≈ Σ_{i<j} w0[j−1−i] g_i + w1[j−1−i] g_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductWeights {
    pub dt: f64,
    pub mass: Vec<f64>,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

impl ProductWeights {
    pub fn new(kernel: &dyn Kernel, dt: f64, cells: usize) -> Result<Self> {
        let mut mass = Vec::with_capacity(cells);
        let mut w0 = Vec::with_capacity(cells);
        let mut w1 = Vec::with_capacity(cells);
        for m in 0..cells {
            let a = m as f64 * dt;
            let b = a + dt;
            let cm = kernel.mass(a, b)?;
            let fm = kernel.first_moment(a, b)?;
            let left = ((fm - a * cm) / dt).clamp(0.0, cm.max(0.0));
            mass.push(cm);
            w0.push(left);
            w1.push(cm - left);
        }
        Ok(Self { dt, mass, w0, w1 })
    }

    pub fn for_grid(kernel: &dyn Kernel, grid: &Grid) -> Result<Self> {
        Self::new(kernel, grid.dt, grid.cells)
    }

    pub fn zeros(dt: f64, cells: usize) -> Self {
        Self {
            dt,
            mass: vec![0.0; cells],
            w0: vec![0.0; cells],
            w1: vec![0.0; cells],
        }
    }

    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    /// `self + c · other`
    pub fn add_scaled(&self, c: f64, other: &ProductWeights) -> Result<Self> {
        if self.cells() != other.cells() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return param("product weights on different grids");
        }
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + c * y).collect();
        Ok(Self {
            dt: self.dt,
            mass: f(&self.mass, &other.mass),
            w0: f(&self.w0, &other.w0),
            w1: f(&self.w1, &other.w1),
        })
    }

    /// Convolution at `t_j` of the grid values `g[0..=j]`.
    pub fn convolve_at(&self, g: &[f64], j: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..j {
            let m = j - 1 - i;
            acc += self.w0[m] * g[i] + self.w1[m] * g[i + 1];
        }
        acc
    }

    /// Convolution at `t_j` without the `g_j` term.
    fn convolve_history(&self, g: &[f64], j: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..j {
            let m = j - 1 - i;
            acc += self.w0[m] * g[i];
            if i + 1 < j {
                acc += self.w1[m] * g[i + 1];
            }
        }
        acc
    }

    /// Weight on `g_j` in the convolution at `t_j`.
    pub fn diagonal(&self) -> f64 {
        self.w1.first().copied().unwrap_or(0.0)
    }

    /// Solves `g_j = base_j + coeff · (K∗g)(t_j)` by marching; the `g_j`
    /// term is treated implicitly.
    pub fn march(&self, base: impl Fn(usize) -> f64, coeff: f64) -> Result<Vec<f64>> {
        let n = self.cells();
        let diag = coeff * self.diagonal();
        if diag >= 1.0 {
            return Err(Error::StepSize(diag));
        }
        let mut g = Vec::with_capacity(n + 1);
        g.push(base(0));
        for j in 1..=n {
            g.push(0.0);
            let h = coeff * self.convolve_history(&g, j);
            g[j] = (base(j) + h) / (1.0 - diag);
        }
        Ok(g)
    }
}

/// Solves `g(t) = base + ∫_0^t K(t−s) g(s) ds` on the grid.
pub fn solve_linear_volterra(base: f64, kernel: &dyn Kernel, grid: &Grid) -> Result<GridSeries> {
    if !base.is_finite() {
        return param(format!("base must be finite, got {base}"));
    }
    let w = ProductWeights::for_grid(kernel, grid)?;
    GridSeries::new(*grid, w.march(|_| base, 1.0)?)
}

/// Product weights of `k²`, exact for exponential `k`.
pub fn square_weights(k: &KernelSpec, dt: f64, cells: usize) -> Result<ProductWeights> {
    if k.is_zero() {
        return Ok(ProductWeights::zeros(dt, cells));
    }
    if let KernelShape::Exponential { rate, scale } = k.shape() {
        let sq = KernelSpec::exponential(2.0 * rate, scale * scale)?
            .scaled(k.weight() * k.weight(), k.time_scale())?;
        return ProductWeights::new(&sq, dt, cells);
    }
    ProductWeights::new(&|t: f64| k.value(t).powi(2), dt, cells)
}

/// Mean total intensity `E[λ̄_t]`, solving
/// `g = μ̄ + ∫ (φ̄ + ((α₁+α₂)/2) k²)(t−s) g(s) ds`.
pub fn mean_intensity(params: &MicroParams, grid: &Grid) -> Result<GridSeries> {
    let w = ProductWeights::for_grid(&params.phi1, grid)?
        .add_scaled(1.0, &ProductWeights::for_grid(&params.phi2, grid)?)?
        .add_scaled(
            0.5 * (params.alpha1 + params.alpha2),
            &square_weights(&params.k, grid.dt, grid.cells)?,
        )?;
    let mu_bar = params.mu_bar();
    GridSeries::new(*grid, w.march(|_| mu_bar, 1.0)?)
}

/// Resolvent `ψ = Σ_{i≥1} (c φ)^{∗i}` on the grid, from `ψ = cφ + cφ∗ψ`.
///
/// The identity term (`i = 0`, a Dirac mass) is excluded, so that the
/// solution of `g = b + cφ∗g` is `g = b + ψ∗b`.
pub fn resolvent(kernel: &dyn Kernel, coeff: f64, grid: &Grid) -> Result<GridSeries> {
    let w = ProductWeights::for_grid(kernel, grid)?;
    let phi: Vec<f64> = (0..grid.len()).map(|j| kernel.value(j as f64 * grid.dt)).collect();
    if let Some(j) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::Singularity(j as f64 * grid.dt));
    }
    GridSeries::new(*grid, w.march(|j| coeff * phi[j], coeff)?)
}

/// `R(t) = ∫_0^t ψ`, from `R = cΦ + cφ∗R` with `Φ(t) = ∫_0^t φ`.
///
/// `R` is continuous even when `φ` jumps or is singular, so this is the
/// accurate route to the integrated resolvent.
pub fn integrated_resolvent(kernel: &dyn Kernel, coeff: f64, grid: &Grid) -> Result<GridSeries> {
    let w = ProductWeights::for_grid(kernel, grid)?;
    let mut big_phi = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    big_phi.push(0.0);
    for m in &w.mass {
        acc += m;
        big_phi.push(acc);
    }
    GridSeries::new(*grid, w.march(|j| coeff * big_phi[j], coeff)?)
}

/// Sup-norm gaps of `F^T` against the scaling limit at one scale `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventGap {
    pub t_scale: f64,
    pub a_t: f64,
    pub beta_t: f64,
    /// `sup |F^T − (1/c₁) F^{α̃,σ}|`
    pub gap: f64,
    /// `sup |F^T − (1/c₁) F^{α̃,c₁σ}|`
    pub gap_rate_adjusted: f64,
    /// `sup |F^T − target|` for a caller-supplied target.
    pub gap_custom: Option<f64>,
}

/// `F^T(t) = (1 − a_T) R^T(tT)` on the macroscopic grid `j/n`, `n = T/dt`,
/// where `R^T` is the integrated resolvent of `β_T φ`.
pub fn scaled_cumulative_resolvent(
    phi: &KernelSpec,
    t_scale: f64,
    limit: &LimitParams,
    dt: f64,
) -> Result<(GridSeries, f64, f64)> {
    let LimitRegime::NearUnstable {
        alpha_tilde,
        sigma,
        c1,
        ..
    } = limit.regime
    else {
        return param("the resolvent scaling check needs near-unstable limit parameters");
    };
    let delta = limit.delta()?;
    let gap = sigma * delta * t_scale.powf(-alpha_tilde);
    if !(gap > 0.0 && gap < 1.0) {
        return param(format!("1 - a_T = {gap} outside (0, 1) at T = {t_scale}"));
    }
    let beta = 1.0 / (1.0 + c1 * gap);
    let cells = (t_scale / dt).round().max(1.0) as usize;
    let micro = Grid::span(t_scale, cells)?;
    let r = integrated_resolvent(phi, beta, &micro)?;
    let values = r.values().iter().map(|v| gap * v).collect();
    Ok((GridSeries::new(Grid::unit(cells)?, values)?, 1.0 - gap, beta))
}

/// For each `T` in the schedule, the sup-norm gap between `F^T` and
/// `(1/c₁) F^{α̃,σ}`, together with the gap to `(1/c₁) F^{α̃,c₁σ}` and to an
/// optional custom target.
pub fn scaled_resolvent_check(
    phi: &KernelSpec,
    schedule: &[f64],
    limit: &LimitParams,
    dt: f64,
    custom: Option<&dyn Fn(f64) -> f64>,
) -> Result<Vec<ResolventGap>> {
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return param("T schedule must be strictly increasing");
    }
    let LimitRegime::NearUnstable {
        alpha_tilde,
        sigma,
        c1,
        ..
    } = limit.regime
    else {
        return param("the resolvent scaling check needs near-unstable limit parameters");
    };
    let mut out = Vec::with_capacity(schedule.len());
    for &t_scale in schedule {
        let (f_t, a_t, beta_t) = scaled_cumulative_resolvent(phi, t_scale, limit, dt)?;
        let mut gap: f64 = 0.0;
        let mut adjusted: f64 = 0.0;
        let mut own: f64 = 0.0;
        for (x, v) in f_t.iter() {
            let stated = ml_kernel(alpha_tilde, sigma, x, MlForm::Integral)? / c1;
            let rate = ml_kernel(alpha_tilde, c1 * sigma, x, MlForm::Integral)? / c1;
            gap = gap.max((v - stated).abs());
            adjusted = adjusted.max((v - rate).abs());
            if let Some(f) = custom {
                own = own.max((v - f(x)).abs());
            }
        }
        out.push(ResolventGap {
            t_scale,
            a_t,
            beta_t,
            gap,
            gap_rate_adjusted: adjusted,
            gap_custom: custom.map(|_| own),
        });
    }
    Ok(out)
}

/// Which deterministic quadratic equation to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardKind {
    /// `V = μ + φ∗V + α (k∗V)²` with `φ = φ₁ − φ₂`
    V,
    /// `V̄ = μ̄ + φ̄∗V̄ + ((α₁+α₂)/2) (k∗V̄)²` with `φ̄ = φ₁ + φ₂`
    VBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardResult {
    pub solution: GridSeries,
    pub iterations: usize,
    /// `sup |g − T[g]|` at the returned solution.
    pub residual_sup: f64,
    /// `‖g_{n+1} − g_n‖ / ‖g_n − g_{n−1}‖`, recorded while updates are above
    /// rounding level.
    pub rate_estimates: Vec<f64>,
    pub converged: bool,
    /// Analytic contraction constant at the witness `η`, when one exists.
    pub rate_bound: Option<f64>,
}

/// Iterates `g_{n+1} = T[g_n]` from `g_0 ≡ μ` (or `μ̄`).
///
/// Fails with a precondition error when no contraction witness exists, unless
/// `allow_non_contractive` is set; in that case the iteration runs and
/// `converged` reports the outcome.
pub fn picard_solve(
    kind: PicardKind,
    params: &MicroParams,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
    allow_non_contractive: bool,
) -> Result<PicardResult> {
    if !(tol > 0.0) {
        return param(format!("tolerance must be positive, got {tol}"));
    }
    let report = check_assumptions(ModelRef::Micro(params));
    let (ok, bound) = match kind {
        PicardKind::V => (report.contraction_ok.0, report.rate_bound),
        PicardKind::VBar => (report.contraction_ok.1, report.rate_bound_bar),
    };
    if !ok && !allow_non_contractive {
        return Err(Error::Precondition(format!(
            "no contraction witness for the {kind:?} operator"
        )));
    }
    let w1 = ProductWeights::for_grid(&params.phi1, grid)?;
    let w2 = ProductWeights::for_grid(&params.phi2, grid)?;
    let (base, coef, phi_w) = match kind {
        PicardKind::V => (params.mu(), params.alpha(), w1.add_scaled(-1.0, &w2)?),
        PicardKind::VBar => (
            params.mu_bar(),
            0.5 * (params.alpha1 + params.alpha2),
            w1.add_scaled(1.0, &w2)?,
        ),
    };
    let k_w = ProductWeights::for_grid(&params.k, grid)?;
    let apply = |g: &[f64]| -> Vec<f64> {
        (0..g.len())
            .map(|j| {
                let z = k_w.convolve_at(g, j);
                base + phi_w.convolve_at(g, j) + coef * z * z
            })
            .collect()
    };
    let sup_diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };

    let mut g = vec![base; grid.len()];
    let mut rates = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let next = apply(&g);
        let d = sup_diff(&next, &g);
        let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if let Some(p) = prev {
            if p > 1e-12 * scale {
                rates.push(d / p);
            }
        }
        prev = Some(d);
        g = next;
        if !d.is_finite() {
            break;
        }
        if d < tol {
            converged = true;
            break;
        }
    }
    let residual = sup_diff(&apply(&g), &g);
    Ok(PicardResult {
        solution: GridSeries::new(*grid, g)?,
        iterations,
        residual_sup: residual,
        rate_estimates: rates,
        converged,
        rate_bound: bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_kernel_gives_constant() {
        let grid = Grid::span(5.0, 50).unwrap();
        let g = solve_linear_volterra(0.7, &|_t: f64| 0.0, &grid).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.7));
        let z = solve_linear_volterra(0.0, &KernelSpec::exponential(1.0, 0.5).unwrap(), &grid).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exponential_kernel_matches_ode() {
        // g' = (c − b) g + b μ, g(0) = μ  ⇒  g = μ (c e^{(c−b)t} − b)/(c − b)
        let (b, c, mu) = (1.5, 0.6, 0.4);
        let k = KernelSpec::exponential(b, c).unwrap();
        let grid = Grid::span(10.0, 1000).unwrap();
        let g = solve_linear_volterra(mu, &k, &grid).unwrap();
        let err = g
            .iter()
            .map(|(t, v)| (v - mu * (c * ((c - b) * t).exp() - b) / (c - b)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn refinement_order() {
        let (b, c, mu) = (1.0, 0.8, 1.0);
        let k = KernelSpec::exponential(b, c).unwrap();
        let exact = |t: f64| mu * (c * ((c - b) * t).exp() - b) / (c - b);
        let err = |n: usize| {
            let grid = Grid::span(4.0, n).unwrap();
            let g = solve_linear_volterra(mu, &k, &grid).unwrap();
            g.iter().map(|(t, v)| (v - exact(t)).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(40), err(80));
        assert!(e1 / e2 > 2.0, "{e1} {e2}");
    }

    #[test]
    fn exponential_resolvent() {
        // ψ̂ = βφ̂/(1 − βφ̂) with φ = b e^{−bt} inverts to βb e^{−b(1−β)t}.
        let (b, beta) = (2.0, 0.6);
        let phi = KernelSpec::exponential(b, b).unwrap();
        let grid = Grid::span(5.0, 2000).unwrap();
        let psi = resolvent(&phi, beta, &grid).unwrap();
        let err = psi
            .iter()
            .map(|(t, v)| (v - beta * b * (-b * (1.0 - beta) * t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
        let zero = resolvent(&phi, 0.0, &grid).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn resolvent_reconstructs_mean_intensity() {
        let k = KernelSpec::exponential(1.3, 0.7).unwrap();
        let grid = Grid::span(8.0, 1600).unwrap();
        let direct = solve_linear_volterra(0.5, &k, &grid).unwrap();
        let r = integrated_resolvent(&k, 1.0, &grid).unwrap();
        let via_psi = r.map(|v| 0.5 * (1.0 + v));
        assert!(direct.sub(&via_psi).unwrap().sup_norm() < 1e-6);
    }

    #[test]
    fn resolvent_mass_is_geometric() {
        let phi = KernelSpec::exponential(1.0, 1.0).unwrap();
        let grid = Grid::span(80.0, 8000).unwrap();
        let r = integrated_resolvent(&phi, 0.5, &grid).unwrap();
        assert!((r.last() - 1.0).abs() < 1e-4, "{}", r.last());
    }

    #[test]
    fn step_size_error() {
        let k = KernelSpec::exponential(1.0, 100.0).unwrap();
        let grid = Grid::span(1.0, 2).unwrap();
        assert!(matches!(solve_linear_volterra(1.0, &k, &grid), Err(Error::StepSize(_))));
    }

    #[test]
    fn self_comparison_has_zero_gap() {
        let limit = LimitParams::near_unstable_default(0.6).unwrap();
        let phi = limit.phi.clone();
        let (f_t, _, _) = scaled_cumulative_resolvent(&phi, 200.0, &limit, 0.5).unwrap();
        let n = f_t.grid().cells as f64;
        let lookup = |x: f64| f_t.values()[(x * n).round() as usize];
        let gaps = scaled_resolvent_check(&phi, &[200.0], &limit, 0.5, Some(&lookup)).unwrap();
        assert_eq!(gaps[0].gap_custom, Some(0.0));
        assert_eq!(f_t.values()[0], 0.0);
    }

    fn picard_params(mu: f64, phi_l1: f64, alpha: f64, k: KernelSpec) -> MicroParams {
        MicroParams::new(
            mu,
            0.0,
            KernelSpec::exponential(1.0, phi_l1).unwrap(),
            KernelSpec::zero(),
            k,
            alpha,
            alpha,
        )
        .unwrap()
    }

    #[test]
    fn picard_constant_operator() {
        let p = picard_params(0.1, 0.0, 0.0, KernelSpec::zero());
        let grid = Grid::unit(32).unwrap();
        let r = picard_solve(PicardKind::V, &p, &grid, 1e-12, 50, false).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.solution.values().iter().all(|v| *v == 0.1));
    }

    #[test]
    fn picard_unit_kernel_closed_form() {
        let alpha = 0.5;
        let k = KernelSpec::tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let p = picard_params(0.1, 0.0, alpha, k);
        let coarse = Grid::unit(64).unwrap();
        let fine = Grid::unit(512).unwrap();
        let a = picard_solve(PicardKind::V, &p, &coarse, 1e-13, 200, false).unwrap();
        let b = picard_solve(PicardKind::V, &p, &fine, 1e-13, 200, false).unwrap();
        assert!(a.converged && b.converged);
        let w = (0.1f64 * alpha).sqrt();
        for (j, (t, v)) in a.solution.iter().enumerate() {
            let exact = 0.1 / (w * t).cos().powi(2);
            assert!((v - b.solution.values()[8 * j]).abs() < 1e-6);
            assert!((v - exact).abs() < 1e-6, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn picard_rates_respect_bound() {
        // ‖φ‖₁ = 0.2, α = 0.05, ‖k‖₂² = 0.5, μ = 0.1.
        let k = KernelSpec::exponential(1.0, 1.0).unwrap();
        let p = picard_params(0.1, 0.2, 0.05, k);
        let grid = Grid::span(1.0, 200).unwrap();
        let r = picard_solve(PicardKind::V, &p, &grid, 1e-12, 200, false).unwrap();
        let bound = r.rate_bound.unwrap();
        assert!(bound <= 0.23);
        assert!(r.residual_sup < 1e-10);
        assert!(r.rate_estimates.iter().all(|q| *q <= bound + 0.02), "{:?}", r.rate_estimates);
    }

    #[test]
    fn picard_precondition() {
        let k = KernelSpec::exponential(0.1, 3.0).unwrap();
        let p = picard_params(1.0, 0.9, 2.0, k);
        let grid = Grid::unit(16).unwrap();
        assert!(matches!(
            picard_solve(PicardKind::V, &p, &grid, 1e-10, 10, false),
            Err(Error::Precondition(_))
        ));
        let r = picard_solve(PicardKind::V, &p, &grid, 1e-10, 10, true).unwrap();
        assert!(!r.converged || r.residual_sup < 1e-10);
    }
}
