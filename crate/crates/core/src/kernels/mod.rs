//! Decay kernels, their norms and tails, and the parameter checks of both
//! scaling regimes.

pub mod assumptions;
pub mod mittag_leffler;
mod spec;

pub use assumptions::{
    check_assumptions, contraction_holds, contraction_lhs, AssumptionReport, ModelRef, Regime,
};
pub use mittag_leffler::{mittag_leffler, ml_kernel, MlForm};
pub use spec::{
    difference_l1, estimate_tail_constant, kernel_norms, tail_constant, KernelShape, KernelSpec,
};

use crate::error::Result;
use crate::quadrature::{integrate, integrate_left_singular, QuadOptions};

/// A nonnegative causal kernel `t ↦ k(t)`, zero for `t < 0`.
///
/// Closures `Fn(f64) -> f64` implement it through quadrature defaults;
/// [`KernelSpec`] overrides the integrals with closed forms where they exist.
pub trait Kernel: Send + Sync {
    fn value(&self, t: f64) -> f64;

    /// `∫_a^b k(u) du`
    fn mass(&self, a: f64, b: f64) -> Result<f64> {
        default_integral(|u| self.value(u), a, b)
    }

    /// `∫_a^b u k(u) du`
    fn first_moment(&self, a: f64, b: f64) -> Result<f64> {
        default_integral(|u| u * self.value(u), a, b)
    }
}

impl<F> Kernel for F
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self(t)
        }
    }
}

pub(crate) fn default_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let a = a.max(0.0);
    if b <= a {
        return Ok(0.0);
    }
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-15,
        max_panels: 2000,
    };
    if a == 0.0 {
        integrate_left_singular(f, a, b, opts)
    } else {
        integrate(f, a, b, opts)
    }
}
