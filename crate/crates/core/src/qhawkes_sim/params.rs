use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{param, Result};
use crate::kernels::assumptions::Regime;
use crate::kernels::{tail_constant, KernelSpec};
use crate::limit_sde::{LimitParams, LimitRegime};

/// Bivariate quadratic Hawkes parameters.
///
/// The buy intensity is
/// `λ₁ = μ₁ + Σ_buy φ₁ + Σ_sell φ₂ + (∫k₁ dM¹ − ∫k₂ dM²)²` and the sell
/// intensity swaps the roles of the kernels. The impact kernels are stored
/// through their shared shape `k` and the pair `α₁ ≥ α₂ ≥ 0`:
/// `k₁ + k₂ = √α₁ k`, `k₁ − k₂ = √α₂ k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroParams {
    pub mu1: f64,
    pub mu2: f64,
    pub phi1: KernelSpec,
    pub phi2: KernelSpec,
    pub k: KernelSpec,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl MicroParams {
    pub fn new(
        mu1: f64,
        mu2: f64,
        phi1: KernelSpec,
        phi2: KernelSpec,
        k: KernelSpec,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        let p = Self {
            mu1,
            mu2,
            phi1,
            phi2,
            k,
            alpha1,
            alpha2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Homogeneous Poisson processes with rate `mu` on each side.
    pub fn poisson(mu: f64) -> Result<Self> {
        Self::new(mu, mu, KernelSpec::zero(), KernelSpec::zero(), KernelSpec::zero(), 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1 >= 0.0 && self.mu1.is_finite() && self.mu2 >= 0.0 && self.mu2.is_finite()) {
            return param(format!(
                "baseline rates must be finite and >= 0, got mu1={}, mu2={}",
                self.mu1, self.mu2
            ));
        }
        if !(self.alpha2 >= 0.0 && self.alpha1 >= self.alpha2 && self.alpha1.is_finite()) {
            return param(format!(
                "need alpha1 >= alpha2 >= 0 so that k1 >= k2 >= 0, got alpha1={}, alpha2={}",
                self.alpha1, self.alpha2
            ));
        }
        for (name, phi) in [("phi1", &self.phi1), ("phi2", &self.phi2)] {
            if !phi.l1_norm().is_finite() {
                return param(format!("{name} is not integrable"));
            }
        }
        if !self.k.l2_norm_sq().is_finite() {
            return param("k is not square integrable");
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        self.mu1 - self.mu2
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu1 + self.mu2
    }

    /// `α = √(α₁α₂)`
    pub fn alpha(&self) -> f64 {
        (self.alpha1 * self.alpha2).sqrt()
    }

    pub fn k1(&self) -> KernelSpec {
        let w = 0.5 * (self.alpha1.sqrt() + self.alpha2.sqrt());
        self.k.scaled(w, 1.0).expect("weight is nonnegative")
    }

    pub fn k2(&self) -> KernelSpec {
        let w = 0.5 * (self.alpha1.sqrt() - self.alpha2.sqrt());
        self.k.scaled(w.max(0.0), 1.0).expect("weight is nonnegative")
    }

    /// `‖φ̄‖₁ = ‖φ₁‖₁ + ‖φ₂‖₁`
    pub fn phi_bar_l1(&self) -> f64 {
        self.phi1.l1_norm() + self.phi2.l1_norm()
    }

    /// `‖φ₁ − φ₂‖₁`
    pub fn phi_l1(&self) -> Result<f64> {
        crate::kernels::difference_l1(&self.phi1, &self.phi2)
    }

    /// `a = ‖φ̄‖₁ + ((α₁+α₂)/2)‖k‖₂²`; the mean intensity is bounded by
    /// `μ̄ / (1 − a)` when `a < 1`.
    pub fn stability_functional(&self) -> f64 {
        self.phi_bar_l1() + 0.5 * (self.alpha1 + self.alpha2) * self.k.l2_norm_sq()
    }
}

/// Parameters of the model observed at scale `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledParams {
    pub t_scale: f64,
    pub regime: Regime,
    pub beta: f64,
    pub beta_bar: f64,
    /// `a_T = 1 − σδT^{−α̃}` (near-unstable only).
    pub a_t: Option<f64>,
    pub mu_t: f64,
    pub mu_bar_t: f64,
    /// Amplitude factor applied to `k(·/T)`.
    pub k_factor: f64,
    /// `|a_T − (β̄_T + ((α₁+α₂)/2)(1 − a_T))|` (near-unstable only).
    pub residual: Option<f64>,
    pub delta: Option<f64>,
    pub micro: MicroParams,
}

impl RescaledParams {
    /// Factor `c` such that `X^T = c · P_{tT} / T` and `M*^T = √c · M_{tT} / √T`.
    pub fn count_factor(&self) -> f64 {
        match self.a_t {
            Some(a) => (1.0 - a) / self.mu_bar_t,
            None => 1.0,
        }
    }
}

/// Builds the microscopic parameters at scale `T` from the base of a scaling
/// limit.
///
/// Stable: `φ₁^T = ((β̄+β)/2) φ(·/T)/T`, `φ₂^T = ((β̄−β)/2) φ(·/T)/T`,
/// `k^T = k(·/T)/√T`, baselines unchanged.
///
/// Near-unstable: `a_T = 1 − σδT^{−α̃}`, `β̄_T = 1/(1 + c₂(1−a_T))`,
/// `β_T = 1/(1 + c₁(1−a_T))`, `φ₁ = ((β̄_T+β_T)/2) φ`, `φ₂ = ((β̄_T−β_T)/2) φ`
/// (no time stretch: the resolvent of `β_T φ` lives on scale `T` by itself),
/// `k_T = √((1−a_T)/T) k(·/T)`, `μ_T = μ*/(δT^{1−α̃})`, `μ̄_T = μ̄*/(δT^{1−α̃})`.
pub fn rescale_params(base: &LimitParams, t_scale: f64) -> Result<RescaledParams> {
    if !(t_scale > 0.0 && t_scale.is_finite()) {
        return param(format!("scale T must be positive, got {t_scale}"));
    }
    base.validate()?;
    let half_sum = 0.5 * (base.alpha1 + base.alpha2);
    match base.regime {
        LimitRegime::Stable {
            mu,
            mu_bar,
            beta,
            beta_bar,
        } => {
            let a = beta_bar * base.phi.l1_norm() + half_sum * base.k.l2_norm_sq();
            if a >= 1.0 {
                return param(format!("stable regime needs beta_bar ||phi||_1 + ((alpha1+alpha2)/2) ||k||_2^2 < 1, got {a}"));
            }
            let phi1 = base.phi.scaled(0.5 * (beta_bar + beta) / t_scale, t_scale)?;
            let phi2 = base.phi.scaled(0.5 * (beta_bar - beta) / t_scale, t_scale)?;
            let k_factor = 1.0 / t_scale.sqrt();
            let k = base.k.scaled(k_factor, t_scale)?;
            let micro = MicroParams::new(
                0.5 * (mu_bar + mu),
                0.5 * (mu_bar - mu),
                phi1,
                phi2,
                k,
                base.alpha1,
                base.alpha2,
            )?;
            Ok(RescaledParams {
                t_scale,
                regime: Regime::Stable,
                beta,
                beta_bar,
                a_t: None,
                mu_t: mu,
                mu_bar_t: mu_bar,
                k_factor,
                residual: None,
                delta: None,
                micro,
            })
        }
        LimitRegime::NearUnstable {
            alpha_tilde,
            sigma,
            c1,
            c2,
            mu_star,
            mu_bar_star,
            ..
        } => {
            let k_tail = tail_constant(&base.phi)?;
            let delta = k_tail * gamma(1.0 - alpha_tilde) / alpha_tilde;
            let gap = sigma * delta * t_scale.powf(-alpha_tilde);
            let a_t = 1.0 - gap;
            if !(a_t > 0.0 && a_t < 1.0) {
                return param(format!(
                    "a_T = {a_t} outside (0, 1) at T = {t_scale}; increase T"
                ));
            }
            let beta_bar = 1.0 / (1.0 + c2 * gap);
            let beta = 1.0 / (1.0 + c1 * gap);
            let phi1 = base.phi.scaled(0.5 * (beta_bar + beta), 1.0)?;
            let phi2 = base.phi.scaled(0.5 * (beta_bar - beta), 1.0)?;
            let k_factor = (gap / t_scale).sqrt();
            let k = base.k.scaled(k_factor, t_scale)?;
            let denom = delta * t_scale.powf(1.0 - alpha_tilde);
            let mu_t = mu_star / denom;
            let mu_bar_t = mu_bar_star / denom;
            let micro = MicroParams::new(
                0.5 * (mu_bar_t + mu_t),
                0.5 * (mu_bar_t - mu_t),
                phi1,
                phi2,
                k,
                base.alpha1,
                base.alpha2,
            )?;
            let residual = (a_t - (beta_bar + half_sum * gap)).abs();
            Ok(RescaledParams {
                t_scale,
                regime: Regime::NearUnstable,
                beta,
                beta_bar,
                a_t: Some(a_t),
                mu_t,
                mu_bar_t,
                k_factor,
                residual: Some(residual),
                delta: Some(delta),
                micro,
            })
        }
    }
}
