use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::grid::{Grid, GridSeries};
use crate::kernels::{Kernel, KernelSpec};

use super::params::RescaledParams;
use super::simulate::EventPath;

/// Macroscopic images of one microscopic path on a grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPaths {
    pub x: GridSeries,
    pub x_bar: GridSeries,
    pub m_star: GridSeries,
    pub m_bar_star: GridSeries,
    pub z_star: GridSeries,
    /// Compensators on the scale of `X` and `X̄`.
    pub lambda: GridSeries,
    pub lambda_bar: GridSeries,
}

impl ScaledPaths {
    /// `sup_t |X̄^T_t − Λ̄^T_t|` over the grid.
    pub fn compensator_gap(&self) -> f64 {
        self.x_bar
            .values()
            .iter()
            .zip(self.lambda_bar.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `∫_0^t k(t−s) dM_s = k(0) M_t + ∫_0^t k'(t−s) M_s ds` on the grid of `m`
/// (`M_0 = 0`), the integral by the trapezoid rule.
pub fn kernel_integral_by_parts(k: &KernelSpec, m: &GridSeries) -> GridSeries {
    let grid = *m.grid();
    let dt = grid.dt;
    let v = m.values();
    let k0 = k.value(0.0);
    let dk: Vec<f64> = (0..grid.len()).map(|i| k.derivative(i as f64 * dt)).collect();
    let out = (0..grid.len())
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..=j {
                let w = if i == 0 || i == j { 0.5 } else { 1.0 };
                acc += w * dk[j - i] * v[i];
            }
            if j == 0 {
                acc = 0.0;
            }
            k0 * v[j] + dt * acc
        })
        .collect();
    GridSeries::new(grid, out).expect("same length as the input")
}

/// Scaled processes of a path simulated with `rescaled.micro` on
/// `[0, T · grid.end()]`.
///
/// With `c` the count factor of the regime: `X^T = c P_{tT}/T`,
/// `X̄^T = c P̄_{tT}/T`, `M*^T = √c (P − Λ)_{tT}/√T`,
/// `M̄*^T = √c (P̄ − Λ̄)_{tT}/√T` and `Z*^T = ∫k(t−s) dM*^T_s` with the
/// unscaled impact kernel `k`.
pub fn scaled_processes(path: &EventPath, rescaled: &RescaledParams, grid: &Grid) -> Result<ScaledPaths> {
    let t_scale = rescaled.t_scale;
    if grid.t0 != 0.0 {
        return param("scaled processes need a grid starting at 0");
    }
    if path.horizon < t_scale * grid.end() * (1.0 - 1e-12) {
        return param(format!(
            "path horizon {} does not cover T = {t_scale} times the grid end {}",
            path.horizon,
            grid.end()
        ));
    }
    let c = rescaled.count_factor();
    let micro_grid = Grid::new(0.0, grid.dt * t_scale, grid.cells)?;
    let (lam, lam_bar) = super::simulate::compensator_path(path, &micro_grid)?;
    let n = grid.len();
    let mut x = Vec::with_capacity(n);
    let mut x_bar = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut m_bar = Vec::with_capacity(n);
    let lam_s: Vec<f64> = lam.values().iter().map(|v| c * v / t_scale).collect();
    let lam_bar_s: Vec<f64> = lam_bar.values().iter().map(|v| c * v / t_scale).collect();
    let root = (c / t_scale).sqrt();
    for (j, t) in micro_grid.times().enumerate() {
        let (n1, n2) = path.counts_at(t);
        let p = n1 as f64 - n2 as f64;
        let p_bar = (n1 + n2) as f64;
        x.push(c * p / t_scale);
        x_bar.push(c * p_bar / t_scale);
        m.push(root * (p - lam.values()[j]));
        m_bar.push(root * (p_bar - lam_bar.values()[j]));
    }
    let base_k = if rescaled.micro.k.is_zero() {
        KernelSpec::zero()
    } else {
        rescaled.micro.k.scaled(1.0 / rescaled.k_factor, 1.0 / t_scale)?
    };
    let m_star = GridSeries::new(*grid, m)?;
    let z_star = kernel_integral_by_parts(&base_k, &m_star);
    Ok(ScaledPaths {
        x: GridSeries::new(*grid, x)?,
        x_bar: GridSeries::new(*grid, x_bar)?,
        m_star,
        m_bar_star: GridSeries::new(*grid, m_bar)?,
        z_star,
        lambda: GridSeries::new(*grid, lam_s)?,
        lambda_bar: GridSeries::new(*grid, lam_bar_s)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_sde::LimitParams;
    use crate::qhawkes_sim::{rescale_params, simulate, SimOptions};

    #[test]
    fn by_parts_matches_direct_sum_for_a_step() {
        // M jumps by 1 at s = 0.3: ∫k(t−s)dM = k(t − 0.3) for t ≥ 0.3.
        let k = KernelSpec::exponential(2.0, 1.0).unwrap();
        let grid = Grid::span(1.0, 10_000).unwrap();
        let m = GridSeries::from_fn(grid, |t| if t >= 0.3 { 1.0 } else { 0.0 });
        let z = kernel_integral_by_parts(&k, &m);
        for (t, v) in z.iter().skip(3100) {
            assert!((v - (-2.0 * (t - 0.3)).exp()).abs() < 1e-3, "{t} {v}");
        }
        assert_eq!(z.values()[0], 0.0);
    }

    #[test]
    fn jumps_have_the_scaled_size() {
        let base = LimitParams::near_unstable_default(0.75).unwrap();
        let r = rescale_params(&base, 50.0).unwrap();
        let path = simulate(&r.micro, 50.0, 5, &SimOptions::with_step(0.05)).unwrap();
        let grid = Grid::unit(5000).unwrap();
        let s = scaled_processes(&path, &r, &grid).unwrap();
        let size = r.count_factor() / 50.0;
        for w in s.x_bar.values().windows(2) {
            let d = w[1] - w[0];
            let k = (d / size).round();
            assert!((d - k * size).abs() < 1e-12, "{d}");
        }
        assert_eq!(s.m_star.values()[0], 0.0);
        let (n1, n2) = path.counts_at(50.0);
        assert!((s.x_bar.last() - size * (n1 + n2) as f64).abs() < 1e-12);
    }

    #[test]
    fn zero_event_path_is_minus_compensator() {
        let base = LimitParams::near_unstable_default(0.75).unwrap();
        let r = rescale_params(&base, 50.0).unwrap();
        let mut path = simulate(&r.micro, 50.0, 5, &SimOptions::with_step(0.05)).unwrap();
        path.events.clear();
        let grid = Grid::unit(100).unwrap();
        let s = scaled_processes(&path, &r, &grid).unwrap();
        assert!(s.x_bar.sup_norm() == 0.0);
        let root = (r.count_factor() / 50.0).sqrt();
        for (j, v) in s.m_bar_star.values().iter().enumerate() {
            let expected = -root * s.lambda_bar.values()[j] * 50.0 / r.count_factor();
            assert!((v - expected).abs() < 1e-12);
        }
    }
}
