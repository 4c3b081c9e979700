use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{param, Result};
use crate::grid::Grid;
use crate::kernels::{tail_constant, KernelSpec};

/// Which drift and kernel rates the near-unstable limit uses.
///
/// `Stated` integrates the system exactly as it is usually stated: both
/// Volterra kernels are `f^{α̃,σ}`, the `V` drift is `μ*/μ̄* + α Z*²` and the
/// `V̄` drift is `1 + ((α₁+α₂)/2) Z*²`.
///
/// `MicroConsistent` follows the limits of the microscopic equations instead:
/// `(1/c₁) f^{α̃,c₁σ}` and `(1/c₂) f^{α̃,c₂σ}` as kernels, drifts
/// `μ*/μ̄* + α Z* Z̄*` and `1 + (α₁ Z*² + α₂ Z̄*²)/2` with `Z̄* = ∫k dM̄*`.
/// The stable regime uses the same drift split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitForm {
    #[default]
    Stated,
    MicroConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum LimitRegime {
    Stable {
        mu: f64,
        mu_bar: f64,
        beta: f64,
        beta_bar: f64,
    },
    NearUnstable {
        alpha_tilde: f64,
        sigma: f64,
        c1: f64,
        c2: f64,
        mu_star: f64,
        mu_bar_star: f64,
    },
}

fn default_cells() -> usize {
    1024
}

fn default_floor() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

/// Macroscopic parameters, together with the microscopic shapes `φ` and `k`
/// they are the limit of.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    #[serde(flatten)]
    pub regime: LimitRegime,
    pub phi: KernelSpec,
    pub k: KernelSpec,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Number of cells of the grid on `[0, 1]`.
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default)]
    pub form: LimitForm,
    /// Lower bound for `V̄` in the denominator of `ρ = V / V̄`.
    #[serde(default = "default_floor")]
    pub rho_floor: f64,
    /// When false all Brownian increments are zero.
    #[serde(default = "default_true")]
    pub noise: bool,
}

impl LimitParams {
    #[allow(clippy::too_many_arguments)]
    pub fn stable(
        phi: KernelSpec,
        k: KernelSpec,
        mu: f64,
        mu_bar: f64,
        beta: f64,
        beta_bar: f64,
        alpha1: f64,
        alpha2: f64,
        cells: usize,
    ) -> Result<Self> {
        let p = Self {
            regime: LimitRegime::Stable {
                mu,
                mu_bar,
                beta,
                beta_bar,
            },
            phi,
            k,
            alpha1,
            alpha2,
            cells,
            form: LimitForm::Stated,
            rho_floor: default_floor(),
            noise: true,
        };
        p.validate()?;
        Ok(p)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn near_unstable(
        phi: KernelSpec,
        k: KernelSpec,
        alpha_tilde: f64,
        sigma: f64,
        c1: f64,
        c2: f64,
        mu_star: f64,
        mu_bar_star: f64,
        alpha1: f64,
        alpha2: f64,
        cells: usize,
    ) -> Result<Self> {
        let p = Self {
            regime: LimitRegime::NearUnstable {
                alpha_tilde,
                sigma,
                c1,
                c2,
                mu_star,
                mu_bar_star,
            },
            phi,
            k,
            alpha1,
            alpha2,
            cells,
            form: LimitForm::Stated,
            rho_floor: default_floor(),
            noise: true,
        };
        p.validate()?;
        Ok(p)
    }

    /// Power-law `φ` with cutoff 1, `k = √2 e^{−t}`, `σ = 1`, `c₁ = 3`,
    /// `c₂ = 2`, `α₁ = α₂ = 1`, `μ* = 0.5`, `μ̄* = 1`, 1024 cells.
    pub fn near_unstable_default(alpha_tilde: f64) -> Result<Self> {
        Self::near_unstable(
            KernelSpec::power_law(alpha_tilde, 1.0)?,
            KernelSpec::exponential(1.0, 2f64.sqrt())?,
            alpha_tilde,
            1.0,
            3.0,
            2.0,
            0.5,
            1.0,
            1.0,
            1.0,
            1024,
        )
    }

    pub fn with_form(mut self, form: LimitForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_cells(mut self, cells: usize) -> Self {
        self.cells = cells;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells < 2 {
            return param("limit grid needs at least 2 cells");
        }
        if !(self.alpha2 >= 0.0 && self.alpha1 >= self.alpha2 && self.alpha1.is_finite()) {
            return param(format!(
                "need alpha1 >= alpha2 >= 0, got alpha1={}, alpha2={}",
                self.alpha1, self.alpha2
            ));
        }
        if !(self.rho_floor > 0.0) {
            return param("rho_floor must be positive");
        }
        if !self.k.l2_norm_sq().is_finite() {
            return param("k is not square integrable");
        }
        match self.regime {
            LimitRegime::Stable {
                mu,
                mu_bar,
                beta,
                beta_bar,
            } => {
                if !(mu_bar >= mu.abs()) || !mu_bar.is_finite() {
                    return param(format!("need mu_bar >= |mu|, got mu={mu}, mu_bar={mu_bar}"));
                }
                if !(beta_bar >= beta.abs()) || !beta_bar.is_finite() {
                    return param(format!("need beta_bar >= |beta|, got beta={beta}, beta_bar={beta_bar}"));
                }
            }
            LimitRegime::NearUnstable {
                alpha_tilde,
                sigma,
                c1,
                c2,
                mu_star,
                mu_bar_star,
            } => {
                if !(alpha_tilde > 0.5 && alpha_tilde < 1.0) {
                    return param(format!("alpha_tilde must lie in (1/2, 1), got {alpha_tilde}"));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return param(format!("sigma must be positive, got {sigma}"));
                }
                let half_sum = 0.5 * (self.alpha1 + self.alpha2);
                if !(c1 > c2 && c2 > half_sum) {
                    return param(format!(
                        "need c1 > c2 > (alpha1+alpha2)/2, got c1={c1}, c2={c2}, (alpha1+alpha2)/2={half_sum}"
                    ));
                }
                if !(mu_bar_star > 0.0 && mu_star.abs() <= mu_bar_star) {
                    return param(format!(
                        "need mu_bar* > 0 and |mu*| <= mu_bar*, got mu*={mu_star}, mu_bar*={mu_bar_star}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        (self.alpha1 * self.alpha2).sqrt()
    }

    pub fn grid(&self) -> Grid {
        Grid::unit(self.cells).expect("cells validated")
    }

    /// `δ = K Γ(1−α̃) / α̃` (near-unstable only).
    pub fn delta(&self) -> Result<f64> {
        match self.regime {
            LimitRegime::NearUnstable { alpha_tilde, .. } => {
                Ok(tail_constant(&self.phi)? * gamma(1.0 - alpha_tilde) / alpha_tilde)
            }
            LimitRegime::Stable { .. } => param("delta is defined in the near-unstable regime only"),
        }
    }
}
