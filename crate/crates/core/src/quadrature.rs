//! Adaptive Gauss-Legendre quadrature.
//!
//! Each panel is integrated with a 15-point Gauss rule and with the same rule
//! on its two halves; the difference is the panel error estimate. Panels are
//! refined globally, largest error first, until the summed error estimate
//! meets the tolerance or the panel cap is reached.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 15;

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_panels: 2000,
        }
    }
}

impl QuadOptions {
    pub fn tight() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            max_panels: 5000,
        }
    }
}

fn gauss_legendre() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let whole = gauss(f, a, b);
    let m = 0.5 * (a + b);
    let value = gauss(f, a, m) + gauss(f, m, b);
    Panel {
        a,
        b,
        value,
        err: (whole - value).abs(),
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, opts).map(|v| -v);
    }
    let mut heap = BinaryHeap::new();
    let first = panel(&f, a, b);
    let (mut total, mut total_err) = (first.value, first.err);
    heap.push(first);
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::Divergence(format!(
                "no convergence on [{a}, {b}] after {} panels (estimate {total:e}, error {total_err:e})",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel cannot be split further in floating point.
            return Err(Error::Divergence(format!(
                "panel collapsed near {m} while integrating on [{a}, {b}]"
            )));
        }
        let left = panel(&f, worst.a, m);
        let right = panel(&f, m, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        // Re-sum periodically to stop drift in the running totals.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
}

/// Integrates over `[a, b]` after the substitution `s = a + (b - a) v^2`,
/// which removes integrable power singularities `(s - a)^(p - 1)` with
/// `p > 1/2` at the left endpoint.
pub fn integrate_left_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<f64> {
    let w = b - a;
    integrate(|v| 2.0 * w * v * f(a + w * v * v), 0.0, 1.0, opts)
}

/// Integrates over `[a, b]` after `s = a + (b - a) v^{1/p}`, which turns a
/// left-endpoint factor `(s - a)^(p - 1)` into a smooth integrand.
pub fn integrate_power_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    p: f64,
    opts: QuadOptions,
) -> Result<f64> {
    let w = b - a;
    let q = 1.0 / p;
    integrate(
        |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let y = f(a + w * v.powf(q)) * w * q * v.powf(q - 1.0);
            if y.is_finite() {
                y
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Integrates over `[a, ∞)` via `s = a + u / (1 - u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<f64> {
    integrate(
        |u| {
            let d = 1.0 - u;
            let v = f(a + u / d) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        opts,
    )
}
