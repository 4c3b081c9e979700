use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::grid::{Grid, GridSeries};

/// Exact floating-point sum kept as non-overlapping partials (Shewchuk).
///
/// The rounded value depends only on the multiset of added numbers, so
/// merging partial sums in any order gives the same bits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The exact sum correctly rounded to the nearest double.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round half to even across the remaining partials.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Pointwise Monte Carlo mean and standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub grid: Grid,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub paths: usize,
    /// First and last path seed, when known.
    pub seeds: Option<(u64, u64)>,
    pub params_digest: Option<String>,
}

impl McSummary {
    pub fn mean_series(&self) -> GridSeries {
        GridSeries::new(self.grid, self.mean.clone()).expect("grid length")
    }
}

/// Mergeable accumulator of path values on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct McAccumulator {
    grid: Grid,
    sum: Vec<ExactSum>,
    sum_sq: Vec<ExactSum>,
    paths: usize,
}

impl McAccumulator {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            sum: vec![ExactSum::new(); grid.len()],
            sum_sq: vec![ExactSum::new(); grid.len()],
            paths: 0,
        }
    }

    pub fn push(&mut self, path: &GridSeries) -> Result<()> {
        GridSeries::zeros(self.grid).check_same_grid(path)?;
        for (j, v) in path.values().iter().enumerate() {
            self.sum[j].add(*v);
            self.sum_sq[j].add(v * v);
        }
        self.paths += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &McAccumulator) -> Result<()> {
        GridSeries::zeros(self.grid).check_same_grid(&GridSeries::zeros(other.grid))?;
        for j in 0..self.sum.len() {
            self.sum[j].merge(&other.sum[j]);
            self.sum_sq[j].merge(&other.sum_sq[j]);
        }
        self.paths += other.paths;
        Ok(())
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn summary(&self) -> Result<McSummary> {
        if self.paths < 2 {
            return param(format!("need at least 2 paths, got {}", self.paths));
        }
        let n = self.paths as f64;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut stderr = Vec::with_capacity(self.sum.len());
        for (s, q) in self.sum.iter().zip(&self.sum_sq) {
            let (s, q) = (s.value(), q.value());
            let m = s / n;
            let var = ((q - s * m) / (n - 1.0)).max(0.0);
            mean.push(m);
            stderr.push((var / n).sqrt());
        }
        Ok(McSummary {
            grid: self.grid,
            mean,
            stderr,
            paths: self.paths,
            seeds: None,
            params_digest: None,
        })
    }
}

/// Pointwise mean and standard error over paths sharing a grid.
pub fn mc_aggregate(runs: &[GridSeries]) -> Result<McSummary> {
    let first = runs.first().ok_or_else(|| crate::error::Error::Parameter("no paths".into()))?;
    let mut acc = McAccumulator::new(*first.grid());
    for r in runs {
        acc.push(r)?;
    }
    acc.summary()
}

/// Mean and standard error of scalar samples.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = ExactSum::new();
    xs.iter().for_each(|x| s.add(*x));
    let m = s.value() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let mut q = ExactSum::new();
    xs.iter().for_each(|x| q.add((x - m) * (x - m)));
    (m, (q.value() / (n - 1.0) / n).sqrt())
}
