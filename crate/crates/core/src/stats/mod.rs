//! Estimators and Monte Carlo diagnostics for simulated paths.

mod aggregate;
mod covariation;
mod hurst;
mod ks;
mod tra;

pub use aggregate::{mc_aggregate, mean_stderr, ExactSum, McAccumulator, McSummary};
pub use covariation::{covariation_check, BracketComparison, CovariationReport, MartingalePair};
pub use hurst::{dyadic_lags, fbm_cholesky, hurst_estimate, FbmGenerator, HurstFit, SMOOTH_THRESHOLD};
pub use ks::{kolmogorov_sf, ks_critical_value, ks_distance, ks_one_sample};
pub use tra::{bootstrap_mean_se, sign_test, tra_statistic, TraCurve};
