use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Time-reversal asymmetry of a return series.
///
/// For two windows of `w` returns separated by a gap of `τ − 1` steps,
/// `forward_corr(τ)` is the correlation of the squared trend (summed returns)
/// of the earlier window with the realized variance of the later one;
/// `backward_corr(τ)` swaps the two roles. Reversing time swaps the two
/// curves, so `asymmetry_index = Σ_τ (forward − backward)` changes sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraCurve {
    pub lags: Vec<usize>,
    pub forward_corr: Vec<f64>,
    pub backward_corr: Vec<f64>,
    pub asymmetry_index: f64,
}

/// Sum whose rounding is unchanged when the input is reversed.
fn palindromic_sum(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n / 2 {
        acc += xs[i] + xs[n - 1 - i];
    }
    if n % 2 == 1 {
        acc += xs[n / 2];
    }
    acc
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = palindromic_sum(a) / n;
    let mb = palindromic_sum(b) / n;
    let da: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let db: Vec<f64> = b.iter().map(|x| x - mb).collect();
    let cov: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x * y).collect();
    let va: Vec<f64> = da.iter().map(|x| x * x).collect();
    let vb: Vec<f64> = db.iter().map(|x| x * x).collect();
    let denom = (palindromic_sum(&va) * palindromic_sum(&vb)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (palindromic_sum(&cov) / denom).clamp(-1.0, 1.0)
    }
}

pub fn tra_statistic(returns: &[f64], window: usize, lags: &[usize]) -> Result<TraCurve> {
    if window == 0 {
        return param("TRA window must be positive");
    }
    if lags.is_empty() || lags.contains(&0) {
        return param("TRA lags must be positive");
    }
    let n = returns.len();
    if window > n {
        return Err(Error::Range(format!(
            "window {window} longer than the series ({n} returns)"
        )));
    }
    let max_lag = *lags.iter().max().expect("nonempty");
    if n < 2 * window + max_lag + 2 {
        return Err(Error::Range(format!(
            "{n} returns are too few for window {window} and lag {max_lag}"
        )));
    }
    let starts = n + 1 - window;
    let trend2: Vec<f64> = (0..starts)
        .map(|s| palindromic_sum(&returns[s..s + window]).powi(2))
        .collect();
    let rv: Vec<f64> = (0..starts)
        .map(|s| {
            let sq: Vec<f64> = returns[s..s + window].iter().map(|r| r * r).collect();
            palindromic_sum(&sq)
        })
        .collect();
    let mut forward = Vec::with_capacity(lags.len());
    let mut backward = Vec::with_capacity(lags.len());
    for &tau in lags {
        let offset = window + tau - 1;
        let pairs = starts - offset;
        forward.push(correlation(&trend2[..pairs], &rv[offset..offset + pairs]));
        backward.push(correlation(&rv[..pairs], &trend2[offset..offset + pairs]));
    }
    let diffs: Vec<f64> = forward.iter().zip(&backward).map(|(f, b)| f - b).collect();
    Ok(TraCurve {
        lags: lags.to_vec(),
        forward_corr: forward,
        backward_corr: backward,
        asymmetry_index: diffs.iter().sum(),
    })
}

/// Bootstrap standard error of the mean of `values`.
pub fn bootstrap_mean_se(values: &[f64], reps: usize, seed: u64) -> Result<f64> {
    let n = values.len();
    if n < 2 || reps < 2 {
        return param("bootstrap needs at least two values and two replicates");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let m = means.iter().sum::<f64>() / reps as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(var.sqrt())
}

/// One-sided sign test of `H₀: P(d > 0) = ½` against `P(d > 0) > ½`; zero
/// differences are dropped. Returns `(positives, trials, p-value)`.
pub fn sign_test(diffs: &[f64]) -> (usize, usize, f64) {
    let pos = diffs.iter().filter(|d| **d > 0.0).count();
    let n = diffs.iter().filter(|d| **d != 0.0).count();
    // P(Bin(n, ½) ≥ pos), summed in log space.
    let ln2 = std::f64::consts::LN_2;
    let mut p = 0.0;
    for k in pos..=n {
        p += (ln_choose(n, k) - n as f64 * ln2).exp();
    }
    (pos, n, p.min(1.0))
}

fn ln_choose(n: usize, k: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn reversal_negates_exactly() {
        let r = gaussian(3000, 1);
        let mut rev = r.clone();
        rev.reverse();
        let lags = [1, 2, 4, 8, 16];
        let a = tra_statistic(&r, 16, &lags).unwrap();
        let b = tra_statistic(&rev, 16, &lags).unwrap();
        assert_eq!(a.asymmetry_index, -b.asymmetry_index);
        assert_eq!(a.forward_corr, b.backward_corr);
    }

    #[test]
    fn correlations_in_range_and_errors() {
        let r = gaussian(500, 2);
        let c = tra_statistic(&r, 8, &[1, 3]).unwrap();
        assert!(c.forward_corr.iter().chain(&c.backward_corr).all(|x| x.abs() <= 1.0));
        assert!(matches!(tra_statistic(&r, 600, &[1]), Err(Error::Range(_))));
        assert!(matches!(tra_statistic(&r, 200, &[200]), Err(Error::Range(_))));
    }

    #[test]
    fn iid_returns_are_reversible() {
        let idx: Vec<f64> = (0..200)
            .map(|s| tra_statistic(&gaussian(2000, 100 + s), 16, &[1, 2, 4, 8]).unwrap().asymmetry_index)
            .collect();
        let m = idx.iter().sum::<f64>() / idx.len() as f64;
        let se = bootstrap_mean_se(&idx, 500, 3).unwrap();
        assert!(m.abs() < 3.0 * se, "{m} vs {se}");
    }

    #[test]
    fn sign_test_values() {
        let (pos, n, p) = sign_test(&[1.0, 1.0, 1.0, 0.0]);
        assert_eq!((pos, n), (3, 3));
        assert!((p - 0.125).abs() < 1e-12);
        let (_, _, p) = sign_test(&[1.0, -1.0]);
        assert!((p - 0.75).abs() < 1e-12);
    }
}
