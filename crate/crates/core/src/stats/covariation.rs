use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::grid::GridSeries;
use crate::limit_sde::{brackets, LimitPath};
use crate::qhawkes_sim::ScaledPaths;

use super::aggregate::mean_stderr;

/// Martingales `M*`, `M̄*` and the processes their brackets should match.
pub trait MartingalePair {
    fn m(&self) -> &GridSeries;
    fn m_bar(&self) -> &GridSeries;
    fn x(&self) -> &GridSeries;
    fn x_bar(&self) -> &GridSeries;
}

impl MartingalePair for LimitPath {
    fn m(&self) -> &GridSeries {
        &self.m_star
    }
    fn m_bar(&self) -> &GridSeries {
        &self.m_bar_star
    }
    fn x(&self) -> &GridSeries {
        &self.x
    }
    fn x_bar(&self) -> &GridSeries {
        &self.x_bar
    }
}

impl MartingalePair for ScaledPaths {
    fn m(&self) -> &GridSeries {
        &self.m_star
    }
    fn m_bar(&self) -> &GridSeries {
        &self.m_bar_star
    }
    fn x(&self) -> &GridSeries {
        &self.x
    }
    fn x_bar(&self) -> &GridSeries {
        &self.x_bar
    }
}

/// One bracket identity at the final grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketComparison {
    pub bracket_mean: f64,
    pub bracket_stderr: f64,
    pub target_mean: f64,
    pub target_stderr: f64,
    /// `|mean bracket − mean target| / |mean target|`
    pub rel_error: f64,
    /// Per-path `|bracket − target| / |target|`.
    pub per_path: Vec<f64>,
}

/// `[M*] ≈ X̄`, `[M̄*] ≈ X̄` and `[M*, M̄*] ≈ X` at the final grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariationReport {
    pub t: f64,
    pub paths: usize,
    pub qv: Option<BracketComparison>,
    pub qv_bar: Option<BracketComparison>,
    pub cross: Option<BracketComparison>,
    pub note: Option<String>,
}

impl CovariationReport {
    pub fn max_rel_error(&self) -> Option<f64> {
        [&self.qv, &self.qv_bar, &self.cross]
            .iter()
            .map(|c| c.as_ref().map(|c| c.rel_error))
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.into_iter().fold(0.0, f64::max))
    }
}

fn compare(brackets: &[f64], targets: &[f64]) -> BracketComparison {
    let (bm, bs) = mean_stderr(brackets);
    let (tm, ts) = mean_stderr(targets);
    let per_path = brackets
        .iter()
        .zip(targets)
        .map(|(b, t)| if *t == 0.0 { f64::NAN } else { ((b - t) / t).abs() })
        .collect();
    BracketComparison {
        bracket_mean: bm,
        bracket_stderr: bs,
        target_mean: tm,
        target_stderr: ts,
        rel_error: ((bm - tm) / tm).abs(),
        per_path,
    }
}

pub fn covariation_check<P: MartingalePair>(paths: &[P]) -> Result<CovariationReport> {
    let first = paths.first().ok_or_else(|| crate::error::Error::Parameter("no paths".into()))?;
    let grid = *first.m().grid();
    let (mut q, mut qb, mut qc) = (Vec::new(), Vec::new(), Vec::new());
    let (mut x, mut xb) = (Vec::new(), Vec::new());
    for p in paths {
        first.m().check_same_grid(p.m())?;
        first.m().check_same_grid(p.x())?;
        let (a, b, c) = brackets(p.m(), p.m_bar());
        q.push(a.last());
        qb.push(b.last());
        qc.push(c.last());
        x.push(p.x().last());
        xb.push(p.x_bar().last());
    }
    let zero = |v: &[f64]| v.iter().all(|x| *x == 0.0);
    if zero(&q) && zero(&qb) {
        return Ok(CovariationReport {
            t: grid.end(),
            paths: paths.len(),
            qv: None,
            qv_bar: None,
            cross: None,
            note: Some("all brackets are zero (noise switched off); comparison skipped".into()),
        });
    }
    if paths.len() < 2 {
        return param("covariation check needs at least 2 paths");
    }
    Ok(CovariationReport {
        t: grid.end(),
        paths: paths.len(),
        qv: Some(compare(&q, &xb)),
        qv_bar: Some(compare(&qb, &xb)),
        cross: Some(compare(&qc, &x)),
        note: None,
    })
}
