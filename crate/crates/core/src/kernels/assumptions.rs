//! Stability, contraction and near-unstable parameter checks.
//!
//! Failures are reported in an [`AssumptionReport`], never raised.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::spec::tail_constant;
use crate::limit_sde::{LimitParams, LimitRegime};
use crate::qhawkes_sim::MicroParams;

/// Scaling regime of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Stable,
    NearUnstable,
}

/// What to check: a microscopic parameter set, or the base of a scaling limit.
#[derive(Debug, Clone, Copy)]
pub enum ModelRef<'a> {
    Micro(&'a MicroParams),
    Limit(&'a LimitParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub regime: Regime,
    /// `1 - a`, with `a = ‖φ̄‖₁ + ((α₁+α₂)/2)‖k‖₂²` (stable) or `a = ‖φ‖₁`
    /// (near-unstable, where it is 0 by design).
    pub stability_margin: f64,
    /// Contraction conditions for the `V` and `V̄` equations.
    pub contraction_ok: (bool, bool),
    pub eta: Option<f64>,
    pub eta_bar: Option<f64>,
    /// Left-hand sides of the contraction inequalities at the witnesses;
    /// these bound the Picard contraction ratios.
    pub rate_bound: Option<f64>,
    pub rate_bound_bar: Option<f64>,
    pub tail_k: Option<f64>,
    pub delta: Option<f64>,
    pub messages: Vec<String>,
    /// All checks required by the regime hold.
    pub passed: bool,
}

/// `‖φ‖₁ + 2 a ‖k‖₂² (η + |μ|)`, the contraction constant of
/// `g ↦ μ + φ∗g + a (∫k g)²` on the ball of radius `η` around `μ`.
pub fn contraction_lhs(phi_l1: f64, quad_coef: f64, k_l2_sq: f64, mu: f64, eta: f64) -> f64 {
    phi_l1 + 2.0 * quad_coef * k_l2_sq * (eta + mu.abs())
}

/// Whether `η` witnesses `contraction_lhs < η / (η + |μ|)`.
pub fn contraction_holds(phi_l1: f64, quad_coef: f64, k_l2_sq: f64, mu: f64, eta: f64) -> bool {
    eta > 0.0 && contraction_lhs(phi_l1, quad_coef, k_l2_sq, mu, eta) < eta / (eta + mu.abs())
}

/// Smallest `η = 2^j · scale`, `j = -4..=10`, satisfying the contraction
/// inequality, with the constant it yields.
fn find_witness(phi_l1: f64, quad_coef: f64, k_l2_sq: f64, mu: f64, scale: f64) -> Option<(f64, f64)> {
    (-4..=10)
        .map(|j| 2f64.powi(j) * scale)
        .find(|&eta| contraction_holds(phi_l1, quad_coef, k_l2_sq, mu, eta))
        .map(|eta| (eta, contraction_lhs(phi_l1, quad_coef, k_l2_sq, mu, eta)))
}

fn witness_scale(primary: f64, fallback: f64) -> f64 {
    if primary.abs() > 0.0 {
        primary.abs()
    } else if fallback.abs() > 0.0 {
        fallback.abs()
    } else {
        1.0
    }
}

struct StableInputs {
    phi_l1: f64,
    phi_bar_l1: f64,
    alpha: f64,
    half_sum: f64,
    k_l2_sq: f64,
    mu: f64,
    mu_bar: f64,
}

fn stable_report(s: StableInputs, mut messages: Vec<String>) -> AssumptionReport {
    let a = s.phi_bar_l1 + s.half_sum * s.k_l2_sq;
    let margin = 1.0 - a;
    if margin > 0.0 {
        messages.push(format!("stability functional a = {a:.6} < 1"));
    } else {
        messages.push(format!("stability functional a = {a:.6} >= 1: no stationary regime"));
    }
    let w = find_witness(s.phi_l1, s.alpha, s.k_l2_sq, s.mu, witness_scale(s.mu, s.mu_bar));
    let wb = find_witness(
        s.phi_bar_l1,
        s.half_sum,
        s.k_l2_sq,
        s.mu_bar,
        witness_scale(s.mu_bar, s.mu),
    );
    match w {
        Some((eta, lhs)) => messages.push(format!("V contraction: witness eta = {eta}, constant {lhs:.6}")),
        None => messages.push("V contraction: no witness on the search grid".into()),
    }
    match wb {
        Some((eta, lhs)) => {
            messages.push(format!("V-bar contraction: witness eta = {eta}, constant {lhs:.6}"))
        }
        None => messages.push("V-bar contraction: no witness on the search grid".into()),
    }
    let ok = margin > 0.0;
    AssumptionReport {
        regime: Regime::Stable,
        stability_margin: margin,
        contraction_ok: (w.is_some(), wb.is_some()),
        eta: w.map(|x| x.0),
        eta_bar: wb.map(|x| x.0),
        rate_bound: w.map(|x| x.1),
        rate_bound_bar: wb.map(|x| x.1),
        tail_k: None,
        delta: None,
        messages,
        passed: ok,
    }
}

fn failed(regime: Regime, message: String) -> AssumptionReport {
    AssumptionReport {
        regime,
        stability_margin: f64::NAN,
        contraction_ok: (false, false),
        eta: None,
        eta_bar: None,
        rate_bound: None,
        rate_bound_bar: None,
        tail_k: None,
        delta: None,
        messages: vec![format!("error: {message}")],
        passed: false,
    }
}

/// Runs the checks appropriate to the model's regime.
pub fn check_assumptions(model: ModelRef<'_>) -> AssumptionReport {
    match model {
        ModelRef::Micro(p) => {
            if let Err(e) = p.validate() {
                return failed(Regime::Stable, e.to_string());
            }
            let phi_l1 = match p.phi_l1() {
                Ok(v) => v,
                Err(e) => return failed(Regime::Stable, e.to_string()),
            };
            stable_report(
                StableInputs {
                    phi_l1,
                    phi_bar_l1: p.phi_bar_l1(),
                    alpha: p.alpha(),
                    half_sum: 0.5 * (p.alpha1 + p.alpha2),
                    k_l2_sq: p.k.l2_norm_sq(),
                    mu: p.mu(),
                    mu_bar: p.mu_bar(),
                },
                Vec::new(),
            )
        }
        ModelRef::Limit(l) => match &l.regime {
            LimitRegime::Stable {
                mu,
                mu_bar,
                beta,
                beta_bar,
            } => {
                if let Err(e) = l.validate() {
                    return failed(Regime::Stable, e.to_string());
                }
                let phi = l.phi.l1_norm();
                stable_report(
                    StableInputs {
                        phi_l1: beta.abs() * phi,
                        phi_bar_l1: beta_bar * phi,
                        alpha: l.alpha(),
                        half_sum: 0.5 * (l.alpha1 + l.alpha2),
                        k_l2_sq: l.k.l2_norm_sq(),
                        mu: *mu,
                        mu_bar: *mu_bar,
                    },
                    Vec::new(),
                )
            }
            LimitRegime::NearUnstable { .. } => near_unstable_report(l),
        },
    }
}

fn near_unstable_report(l: &LimitParams) -> AssumptionReport {
    let mut messages = Vec::new();
    let mut ok = true;
    let LimitRegime::NearUnstable {
        alpha_tilde,
        sigma,
        c1,
        c2,
        mu_star,
        mu_bar_star,
        ..
    } = l.regime
    else {
        unreachable!()
    };
    let half_sum = 0.5 * (l.alpha1 + l.alpha2);
    if c1 > c2 && c2 > half_sum {
        messages.push(format!("ordering c1 = {c1} > c2 = {c2} > (alpha1+alpha2)/2 = {half_sum} holds"));
    } else {
        ok = false;
        messages.push(format!(
            "error: ordering c1 > c2 > (alpha1+alpha2)/2 fails (c1 = {c1}, c2 = {c2}, (alpha1+alpha2)/2 = {half_sum})"
        ));
    }
    let phi_l1 = l.phi.l1_norm();
    if (phi_l1 - 1.0).abs() > 1e-6 {
        ok = false;
        messages.push(format!("error: ||phi||_1 = {phi_l1}, must be 1"));
    }
    let k_l2 = l.k.l2_norm_sq();
    if (k_l2 - 1.0).abs() > 1e-6 {
        ok = false;
        messages.push(format!("error: ||k||_2^2 = {k_l2}, must be 1"));
    }
    if !(sigma > 0.0) || !(mu_bar_star > 0.0) || mu_star.abs() > mu_bar_star {
        ok = false;
        messages.push(format!(
            "error: need sigma > 0 and |mu*| <= mu_bar* with mu_bar* > 0 (sigma = {sigma}, mu* = {mu_star}, mu_bar* = {mu_bar_star})"
        ));
    }
    if mu_star < 0.0 {
        messages.push("warning: mu* < 0 biases the price intensity downward".into());
    }
    match l.phi.power_tail_exponent() {
        Some(e) if (e - alpha_tilde).abs() <= 1e-12 => {}
        Some(e) => {
            ok = false;
            messages.push(format!("error: phi tail exponent {e} differs from alpha_tilde = {alpha_tilde}"));
        }
        None => {}
    }
    let (tail_k, delta) = match tail_constant(&l.phi) {
        Ok(k) => {
            let d = k * gamma(1.0 - alpha_tilde) / alpha_tilde;
            messages.push(format!("tail constant K = {k}, delta = {d}"));
            (Some(k), Some(d))
        }
        Err(e) => {
            ok = false;
            messages.push(format!("error: {e}"));
            (None, None)
        }
    };
    AssumptionReport {
        regime: Regime::NearUnstable,
        stability_margin: 1.0 - phi_l1,
        contraction_ok: (false, false),
        eta: None,
        eta_bar: None,
        rate_bound: None,
        rate_bound_bar: None,
        tail_k,
        delta,
        messages,
        passed: ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    fn micro(phi_bar_scale: f64) -> MicroParams {
        MicroParams::new(
            0.5,
            0.5,
            KernelSpec::exponential(1.0, 0.3 * phi_bar_scale).unwrap(),
            KernelSpec::exponential(1.0, 0.1 * phi_bar_scale).unwrap(),
            KernelSpec::exponential(1.0, 0.32f64.sqrt()).unwrap(),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn margin_arithmetic() {
        let r = check_assumptions(ModelRef::Micro(&micro(1.0)));
        assert!((r.stability_margin - 0.44).abs() < 1e-12, "{}", r.stability_margin);
        assert!(r.passed);
    }

    #[test]
    fn contraction_example() {
        let lhs = contraction_lhs(0.2, 0.05, 0.5, 0.1, 0.5);
        assert!((lhs - 0.23).abs() < 1e-15);
        assert!(contraction_holds(0.2, 0.05, 0.5, 0.1, 0.5));
        let (eta, bound) = find_witness(0.2, 0.05, 0.5, 0.1, 0.1).unwrap();
        assert_eq!(eta, 0.05);
        assert!(bound < 0.23);
    }

    #[test]
    fn no_witness_when_feedback_too_strong() {
        assert!(find_witness(0.99, 5.0, 1.0, 1.0, 1.0).is_none());
    }

    #[test]
    fn margin_is_monotone_in_phi_bar() {
        let mut last = f64::INFINITY;
        for s in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let r = check_assumptions(ModelRef::Micro(&micro(s)));
            assert!(r.stability_margin <= last);
            last = r.stability_margin;
        }
    }

    #[test]
    fn near_unstable_ordering() {
        let l = crate::limit_sde::LimitParams::near_unstable_default(0.75).unwrap();
        let r = check_assumptions(ModelRef::Limit(&l));
        assert!(r.passed, "{:?}", r.messages);
        assert_eq!(r.tail_k, Some(0.75));
        let d = r.delta.unwrap();
        assert!((d - gamma(0.25)).abs() < 1e-12);

        let mut bad = l.clone();
        if let LimitRegime::NearUnstable { c2, .. } = &mut bad.regime {
            *c2 = 0.9;
        }
        assert!(!check_assumptions(ModelRef::Limit(&bad)).passed);
    }
}
