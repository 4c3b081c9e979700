use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::mittag_leffler::{mittag_leffler, ml_kernel, MlForm};
use super::{default_integral, Kernel};
use crate::error::{param, Error, Result};
use crate::quadrature::{
    integrate, integrate_power_singular, integrate_to_infinity, QuadOptions,
};

/// Kernel family and shape parameters, as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelShape {
    /// `scale · exp(-rate t)`
    Exponential {
        rate: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `alpha · t^{-alpha-1}` for `t ≥ cutoff`, zero before.
    PowerLaw {
        alpha: f64,
        #[serde(default = "one")]
        cutoff: f64,
    },
    /// Mittag-Leffler density `σ t^{α-1} E_{α,α}(-σ t^α)`.
    MlDensity {
        alpha: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Entire series `Σ t^n / Γ(α n + σ)`; smooth at 0 and growing.
    MlSeries {
        alpha: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Linear interpolation of `(times, values)`, zero outside the table.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    #[serde(flatten)]
    shape: KernelShape,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    weight: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    time_scale: f64,
}

/// A validated kernel `t ↦ weight · shape(t / time_scale)` with cached
/// `‖·‖₁` and `‖·‖₂²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct KernelSpec {
    shape: KernelShape,
    weight: f64,
    time_scale: f64,
    l1: f64,
    l2_sq: f64,
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.weight == other.weight
            && self.time_scale == other.time_scale
    }
}

impl TryFrom<KernelRepr> for KernelSpec {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        KernelSpec::new(r.shape)?.scaled(r.weight, r.time_scale)
    }
}

impl From<KernelSpec> for KernelRepr {
    fn from(k: KernelSpec) -> Self {
        KernelRepr {
            shape: k.shape,
            weight: k.weight,
            time_scale: k.time_scale,
        }
    }
}

fn in_rough_range(alpha: f64) -> bool {
    alpha > 0.5 && alpha < 1.0
}

impl KernelSpec {
    pub fn new(shape: KernelShape) -> Result<Self> {
        validate(&shape)?;
        let (l1, l2_sq) = shape_norms(&shape)?;
        Ok(Self {
            shape,
            weight: 1.0,
            time_scale: 1.0,
            l1,
            l2_sq,
        })
    }

    pub fn exponential(rate: f64, scale: f64) -> Result<Self> {
        Self::new(KernelShape::Exponential { rate, scale })
    }

    pub fn power_law(alpha: f64, cutoff: f64) -> Result<Self> {
        Self::new(KernelShape::PowerLaw { alpha, cutoff })
    }

    pub fn ml_density(alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(KernelShape::MlDensity { alpha, sigma })
    }

    pub fn ml_series(alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(KernelShape::MlSeries { alpha, sigma })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(KernelShape::Tabulated { times, values })
    }

    /// The identically zero kernel.
    pub fn zero() -> Self {
        Self::exponential(1.0, 0.0).expect("zero kernel is valid")
    }

    /// `t ↦ weight · self(t / time_scale)`.
    pub fn scaled(&self, weight: f64, time_scale: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return param(format!("kernel weight must be finite and >= 0, got {weight}"));
        }
        if !(time_scale > 0.0 && time_scale.is_finite()) {
            return param(format!("kernel time scale must be > 0, got {time_scale}"));
        }
        let (l1, l2_sq) = if weight == 0.0 || self.weight == 0.0 {
            (0.0, 0.0)
        } else {
            (
                weight * time_scale * self.l1,
                weight * weight * time_scale * self.l2_sq,
            )
        };
        Ok(Self {
            shape: self.shape.clone(),
            weight: self.weight * weight,
            time_scale: self.time_scale * time_scale,
            l1,
            l2_sq,
        })
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_sq
    }

    pub fn is_zero(&self) -> bool {
        self.weight == 0.0 || matches!(self.shape, KernelShape::Exponential { scale, .. } if scale == 0.0)
    }

    /// True when `other` is a nonnegative multiple of `self`'s shape on the
    /// same time scale.
    pub fn same_profile(&self, other: &KernelSpec) -> bool {
        unit_shape(&self.shape) == unit_shape(&other.shape) && self.time_scale == other.time_scale
    }

    /// Multiplier of the unit-amplitude profile: `weight · scale` for the
    /// exponential family, `weight` otherwise.
    pub fn amplitude(&self) -> f64 {
        match self.shape {
            KernelShape::Exponential { scale, .. } => self.weight * scale,
            _ => self.weight,
        }
    }

    /// Exponent `α` of a `t^{-α-1}` tail, if the family has one.
    pub fn power_tail_exponent(&self) -> Option<f64> {
        match self.shape {
            KernelShape::PowerLaw { alpha, .. } | KernelShape::MlDensity { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// `∫_a^b k(u)² du`
    pub fn l2_sq_on(&self, a: f64, b: f64) -> Result<f64> {
        let ts = self.time_scale;
        Ok(self.weight * self.weight * ts * shape_l2(&self.shape, a / ts, b / ts)?)
    }

    /// `∫_x^∞ k(u) du`
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        let ts = self.time_scale;
        let u = (x / ts).max(0.0);
        let tail = match &self.shape {
            KernelShape::Exponential { rate, scale } => scale / rate * (-rate * u).exp(),
            KernelShape::PowerLaw { alpha, cutoff } => u.max(*cutoff).powf(-alpha),
            KernelShape::MlDensity { alpha, sigma } => {
                if u == 0.0 {
                    1.0
                } else {
                    mittag_leffler(*alpha, 1.0, -sigma * u.powf(*alpha))?
                }
            }
            KernelShape::MlSeries { .. } => f64::INFINITY,
            KernelShape::Tabulated { times, values } => {
                let end = *times.last().expect("validated");
                tab_integral(times, values, u, end, |_, f| f)
            }
        };
        Ok(self.weight * ts * tail)
    }

    /// An upper bound for `k` on `[a, b]`, exact for the monotone families.
    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b < a {
            return 0.0;
        }
        match &self.shape {
            KernelShape::Exponential { .. } | KernelShape::MlDensity { .. } => self.value(a),
            KernelShape::PowerLaw { cutoff, .. } => {
                let c = cutoff * self.time_scale;
                if b < c {
                    0.0
                } else {
                    self.value(a.max(c))
                }
            }
            KernelShape::MlSeries { .. } => self.value(b),
            KernelShape::Tabulated { times, .. } => {
                let ts = self.time_scale;
                let mut m = self.value(a).max(self.value(b));
                for (i, &t) in times.iter().enumerate() {
                    let x = t * ts;
                    if x > a && x < b {
                        m = m.max(self.weight * tab_node(self, i));
                    }
                }
                m
            }
        }
    }

    /// `k'(t)` for `t > 0`; the jump of the truncated power law is ignored.
    pub fn derivative(&self, t: f64) -> f64 {
        let ts = self.time_scale;
        let u = t / ts;
        let w = self.weight / ts;
        match &self.shape {
            KernelShape::Exponential { rate, scale } => {
                if u < 0.0 {
                    0.0
                } else {
                    -w * rate * scale * (-rate * u).exp()
                }
            }
            KernelShape::PowerLaw { alpha, cutoff } => {
                if u < *cutoff {
                    0.0
                } else {
                    -w * alpha * (alpha + 1.0) * u.powf(-alpha - 2.0)
                }
            }
            KernelShape::Tabulated { times, values } => {
                if u < times[0] || u > *times.last().expect("validated") {
                    return 0.0;
                }
                let i = segment(times, u);
                w * (values[i + 1] - values[i]) / (times[i + 1] - times[i])
            }
            KernelShape::MlDensity { .. } | KernelShape::MlSeries { .. } => {
                let h = 1e-6 * t.abs().max(1e-3);
                if t > h {
                    (self.value(t + h) - self.value(t - h)) / (2.0 * h)
                } else {
                    (self.value(t + 2.0 * h) - self.value(t + h)) / h
                }
            }
        }
    }
}

fn tab_node(k: &KernelSpec, i: usize) -> f64 {
    match &k.shape {
        KernelShape::Tabulated { values, .. } => values[i],
        _ => unreachable!(),
    }
}

impl Kernel for KernelSpec {
    fn value(&self, t: f64) -> f64 {
        if t < 0.0 || self.weight == 0.0 {
            return 0.0;
        }
        self.weight * shape_value(&self.shape, t / self.time_scale)
    }

    fn mass(&self, a: f64, b: f64) -> Result<f64> {
        if self.weight == 0.0 {
            return Ok(0.0);
        }
        let ts = self.time_scale;
        Ok(self.weight * ts * shape_mass(&self.shape, a / ts, b / ts)?)
    }

    fn first_moment(&self, a: f64, b: f64) -> Result<f64> {
        if self.weight == 0.0 {
            return Ok(0.0);
        }
        let ts = self.time_scale;
        Ok(self.weight * ts * ts * shape_first_moment(&self.shape, a / ts, b / ts)?)
    }
}

fn validate(shape: &KernelShape) -> Result<()> {
    match shape {
        KernelShape::Exponential { rate, scale } => {
            if !(*rate > 0.0 && rate.is_finite()) || !(*scale >= 0.0 && scale.is_finite()) {
                return param(format!(
                    "exponential kernel needs rate > 0 and scale >= 0, got rate={rate}, scale={scale}"
                ));
            }
        }
        KernelShape::PowerLaw { alpha, cutoff } => {
            if !in_rough_range(*alpha) || !(*cutoff > 0.0 && cutoff.is_finite()) {
                return param(format!(
                    "power-law kernel needs alpha in (1/2, 1) and cutoff > 0, got alpha={alpha}, cutoff={cutoff}"
                ));
            }
        }
        KernelShape::MlDensity { alpha, sigma } | KernelShape::MlSeries { alpha, sigma } => {
            if !in_rough_range(*alpha) || !(*sigma > 0.0 && sigma.is_finite()) {
                return param(format!(
                    "Mittag-Leffler kernel needs alpha in (1/2, 1) and sigma > 0, got alpha={alpha}, sigma={sigma}"
                ));
            }
        }
        KernelShape::Tabulated { times, values } => {
            if times.len() < 2 || times.len() != values.len() {
                return param("tabulated kernel needs at least two (time, value) pairs of equal length");
            }
            if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
                return param("tabulated kernel times must start at >= 0 and increase strictly");
            }
            if times.iter().any(|t| !t.is_finite()) {
                return param("tabulated kernel times must be finite");
            }
            if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return param("tabulated kernel values must be finite and nonnegative");
            }
        }
    }
    Ok(())
}

fn shape_value(shape: &KernelShape, u: f64) -> f64 {
    if u < 0.0 {
        return 0.0;
    }
    match shape {
        KernelShape::Exponential { rate, scale } => scale * (-rate * u).exp(),
        KernelShape::PowerLaw { alpha, cutoff } => {
            if u >= *cutoff {
                alpha * u.powf(-alpha - 1.0)
            } else {
                0.0
            }
        }
        KernelShape::MlDensity { alpha, sigma } => {
            if u == 0.0 {
                f64::INFINITY
            } else {
                ml_kernel(*alpha, *sigma, u, MlForm::Density).unwrap_or(f64::NAN)
            }
        }
        KernelShape::MlSeries { alpha, sigma } => {
            mittag_leffler(*alpha, *sigma, u).unwrap_or(f64::INFINITY)
        }
        KernelShape::Tabulated { times, values } => interpolate(times, values, u),
    }
}

fn segment(times: &[f64], u: f64) -> usize {
    let i = times.partition_point(|&t| t <= u);
    i.saturating_sub(1).min(times.len() - 2)
}

fn interpolate(times: &[f64], values: &[f64], u: f64) -> f64 {
    let n = times.len();
    if u < times[0] || u > times[n - 1] {
        return 0.0;
    }
    let i = segment(times, u);
    let (t0, t1) = (times[i], times[i + 1]);
    let x = (u - t0) / (t1 - t0);
    values[i] + x * (values[i + 1] - values[i])
}

/// `∫_a^b g(u, f(u)) du` for piecewise-linear `f`, exact when `g` is at most
/// quadratic in `u` on each piece (Simpson's rule per piece).
fn tab_integral(
    times: &[f64],
    values: &[f64],
    a: f64,
    b: f64,
    g: impl Fn(f64, f64) -> f64,
) -> f64 {
    let n = times.len();
    let lo = a.max(times[0]);
    let hi = b.min(times[n - 1]);
    if hi <= lo {
        return 0.0;
    }
    let mut total = 0.0;
    for i in segment(times, lo)..n - 1 {
        let p = lo.max(times[i]);
        let q = hi.min(times[i + 1]);
        if q > p {
            let f = |u: f64| {
                let x = (u - times[i]) / (times[i + 1] - times[i]);
                g(u, values[i] + x * (values[i + 1] - values[i]))
            };
            let m = 0.5 * (p + q);
            total += (q - p) / 6.0 * (f(p) + 4.0 * f(m) + f(q));
        }
        if times[i + 1] >= hi {
            break;
        }
    }
    total
}

fn unit_shape(shape: &KernelShape) -> KernelShape {
    match *shape {
        KernelShape::Exponential { rate, .. } => KernelShape::Exponential { rate, scale: 1.0 },
        ref other => other.clone(),
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-11,
        abs_tol: 1e-15,
        max_panels: 4000,
    }
}

fn shape_mass(shape: &KernelShape, a: f64, b: f64) -> Result<f64> {
    let a = a.max(0.0);
    if b <= a {
        return Ok(0.0);
    }
    Ok(match shape {
        KernelShape::Exponential { rate, scale } => {
            scale / rate * (-rate * a).exp() * -(-rate * (b - a)).exp_m1()
        }
        KernelShape::PowerLaw { alpha, cutoff } => {
            let lo = a.max(*cutoff);
            let hi = b.max(*cutoff);
            lo.powf(-alpha) - hi.powf(-alpha)
        }
        KernelShape::MlDensity { alpha, sigma } => {
            let fb = ml_kernel(*alpha, *sigma, b, MlForm::Integral)?;
            let fa = ml_kernel(*alpha, *sigma, a, MlForm::Integral)?;
            fb - fa
        }
        KernelShape::MlSeries { .. } => {
            default_integral(|u| shape_value(shape, u), a, b)?
        }
        KernelShape::Tabulated { times, values } => tab_integral(times, values, a, b, |_, f| f),
    })
}

fn shape_first_moment(shape: &KernelShape, a: f64, b: f64) -> Result<f64> {
    let a = a.max(0.0);
    if b <= a {
        return Ok(0.0);
    }
    Ok(match shape {
        KernelShape::Exponential { rate, scale } => {
            let r = *rate;
            scale / (r * r) * ((1.0 + r * a) * (-r * a).exp() - (1.0 + r * b) * (-r * b).exp())
        }
        KernelShape::PowerLaw { alpha, cutoff } => {
            let lo = a.max(*cutoff);
            let hi = b.max(*cutoff);
            alpha / (1.0 - alpha) * (hi.powf(1.0 - alpha) - lo.powf(1.0 - alpha))
        }
        KernelShape::MlDensity { .. } | KernelShape::MlSeries { .. } => {
            default_integral(|u| u * shape_value(shape, u), a, b)?
        }
        KernelShape::Tabulated { times, values } => {
            tab_integral(times, values, a, b, |u, f| u * f)
        }
    })
}

fn shape_l2(shape: &KernelShape, a: f64, b: f64) -> Result<f64> {
    let a = a.max(0.0);
    if b <= a {
        return Ok(0.0);
    }
    Ok(match shape {
        KernelShape::Exponential { rate, scale } => {
            scale * scale / (2.0 * rate)
                * ((-2.0 * rate * a).exp() - (-2.0 * rate * b).exp())
        }
        KernelShape::PowerLaw { alpha, cutoff } => {
            let lo = a.max(*cutoff);
            let hi = b.max(*cutoff);
            let e = -2.0 * alpha - 1.0;
            alpha * alpha / (2.0 * alpha + 1.0) * (lo.powf(e) - hi.powf(e))
        }
        KernelShape::MlDensity { alpha, .. } => {
            let f2 = |u: f64| shape_value(shape, u).powi(2);
            if a == 0.0 {
                integrate_power_singular(f2, 0.0, b, 2.0 * alpha - 1.0, quad_opts())?
            } else {
                integrate(f2, a, b, quad_opts())?
            }
        }
        KernelShape::MlSeries { .. } => {
            integrate(|u| shape_value(shape, u).powi(2), a, b, quad_opts())?
        }
        KernelShape::Tabulated { times, values } => {
            tab_integral(times, values, a, b, |_, f| f * f)
        }
    })
}

fn shape_norms(shape: &KernelShape) -> Result<(f64, f64)> {
    Ok(match shape {
        KernelShape::Exponential { rate, scale } => (scale / rate, scale * scale / (2.0 * rate)),
        KernelShape::PowerLaw { alpha, cutoff } => (
            cutoff.powf(-alpha),
            alpha * alpha * cutoff.powf(-2.0 * alpha - 1.0) / (2.0 * alpha + 1.0),
        ),
        KernelShape::MlDensity { alpha, .. } => {
            let f2 = |u: f64| shape_value(shape, u).powi(2);
            let head = integrate_power_singular(f2, 0.0, 1.0, 2.0 * alpha - 1.0, quad_opts())?;
            let tail = integrate_to_infinity(f2, 1.0, quad_opts())?;
            (1.0, head + tail)
        }
        KernelShape::MlSeries { .. } => (f64::INFINITY, f64::INFINITY),
        KernelShape::Tabulated { times, values } => {
            let end = *times.last().expect("validated");
            (
                tab_integral(times, values, 0.0, end, |_, f| f),
                tab_integral(times, values, 0.0, end, |_, f| f * f),
            )
        }
    })
}

/// `(‖k‖₁, ‖k‖₂²)`.
pub fn kernel_norms(spec: &KernelSpec) -> Result<(f64, f64)> {
    if !spec.l1.is_finite() || !spec.l2_sq.is_finite() {
        return Err(Error::Divergence(format!(
            "kernel {:?} is not integrable on [0, ∞)",
            spec.shape
        )));
    }
    Ok((spec.l1, spec.l2_sq))
}

/// `K = lim α x^α ∫_x^∞ k`, in closed form for the families that have a
/// power-law tail.
pub fn tail_constant(spec: &KernelSpec) -> Result<f64> {
    let w = spec.weight;
    let ts = spec.time_scale;
    match &spec.shape {
        KernelShape::PowerLaw { alpha, .. } => Ok(alpha * w * ts.powf(1.0 + alpha)),
        KernelShape::MlDensity { alpha, sigma } => {
            Ok(alpha * w * ts.powf(1.0 + alpha) / (sigma * gamma(1.0 - alpha)))
        }
        other => Err(Error::NoPowerTail(format!("{other:?}"))),
    }
}

/// Estimates `K = lim α x^α tail(x)` along `x = x0 · 10^j` until two
/// successive estimates agree to 1e-4.
pub fn estimate_tail_constant(
    tail: impl Fn(f64) -> Result<f64>,
    alpha: f64,
    x0: f64,
) -> Result<f64> {
    let mut prev: Option<f64> = None;
    let mut x = x0;
    for _ in 0..14 {
        let est = alpha * x.powf(alpha) * tail(x)?;
        if let Some(p) = prev {
            if est > 0.0 && (est - p).abs() <= 1e-4 * est.max(1.0) {
                return Ok(est);
            }
        }
        prev = Some(est);
        x *= 10.0;
    }
    Err(Error::NoPowerTail(format!(
        "tail estimates did not settle (last {prev:?})"
    )))
}

/// `∫_0^∞ |a − b|`.
pub fn difference_l1(a: &KernelSpec, b: &KernelSpec) -> Result<f64> {
    if a.is_zero() {
        return Ok(b.l1);
    }
    if b.is_zero() {
        return Ok(a.l1);
    }
    if a.same_profile(b) {
        return Ok((a.amplitude() - b.amplitude()).abs() / a.amplitude() * a.l1);
    }
    let f = |u: f64| (a.value(u) - b.value(u)).abs();
    let split = a.time_scale.max(b.time_scale);
    let opts = QuadOptions {
        rel_tol: 1e-9,
        abs_tol: 1e-14,
        max_panels: 4000,
    };
    let head = default_integral(f, 0.0, split)?;
    let tail = integrate_to_infinity(f, split, opts)?;
    Ok(head + tail)
}
