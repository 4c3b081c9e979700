use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Fits with `H` above this are flagged as smooth input.
pub const SMOOTH_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstFit {
    pub h: f64,
    pub r_squared: f64,
    pub lags: Vec<usize>,
    /// Mean squared increment at each lag.
    pub variogram: Vec<f64>,
    pub smooth_warning: bool,
}

/// Dyadic lags `1, 2, 4, …` up to `len / 8`.
pub fn dyadic_lags(len: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut l = 1;
    while l <= len / 8 {
        lags.push(l);
        l *= 2;
    }
    lags
}

/// Variogram estimate of the Hurst exponent: least squares of
/// `log mean |x_{i+τ} − x_i|²` on `log τ`, `H = slope / 2`.
///
/// `lags = None` uses [`dyadic_lags`].
pub fn hurst_estimate(series: &[f64], lags: Option<&[usize]>) -> Result<HurstFit> {
    let n = series.len();
    if n < 256 {
        return param(format!("Hurst estimate needs at least 256 points, got {n}"));
    }
    let lags = match lags {
        Some(l) => l.to_vec(),
        None => dyadic_lags(n),
    };
    if lags.len() < 2 {
        return param("Hurst estimate needs at least two lags");
    }
    for &l in &lags {
        if l == 0 || !l.is_power_of_two() || l > n / 8 {
            return param(format!("lag {l} is not dyadic within [1, {}]", n / 8));
        }
    }
    let mut variogram = Vec::with_capacity(lags.len());
    for &l in &lags {
        let s: f64 = series.windows(l + 1).map(|w| (w[l] - w[0]).powi(2)).sum();
        variogram.push(s / (n - l) as f64);
    }
    if variogram.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Estimation("series is constant at some lag".into()));
    }
    let xs: Vec<f64> = lags.iter().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = variogram.iter().map(|v| v.ln()).collect();
    let (slope, r_squared) = least_squares(&xs, &ys);
    let h = slope / 2.0;
    Ok(HurstFit {
        h,
        r_squared,
        lags,
        variogram,
        smooth_warning: h > SMOOTH_THRESHOLD,
    })
}

/// `(slope, R²)` of the least-squares line through the points.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Exact fractional Brownian motion on `j/n`, `j = 0..=n`, by Cholesky
/// factorization of the increment covariance.
#[derive(Debug, Clone)]
pub struct FbmGenerator {
    n: usize,
    chol: DMatrix<f64>,
}

impl FbmGenerator {
    pub fn new(n: usize, hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return param(format!("Hurst index must lie in (0, 1), got {hurst}"));
        }
        if n < 2 {
            return param("fBm needs at least 2 steps");
        }
        let two_h = 2.0 * hurst;
        let gamma = |k: usize| {
            let k = k as f64;
            0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
        };
        let scale = (1.0 / n as f64).powf(two_h);
        let cov = DMatrix::from_fn(n, n, |i, j| scale * gamma(i.abs_diff(j)));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Estimation("fBm covariance is not positive definite".into()))?
            .unpack();
        Ok(Self { n, chol })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let inc = &self.chol * z;
        let mut out = Vec::with_capacity(self.n + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for d in inc.iter() {
            acc += d;
            out.push(acc);
        }
        out
    }
}

/// One fractional Brownian path; see [`FbmGenerator`] for repeated draws.
pub fn fbm_cholesky(n: usize, hurst: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    Ok(FbmGenerator::new(n, hurst)?.sample(rng))
}
