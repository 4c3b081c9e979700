use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Uniform time grid `t0, t0 + dt, ..., t0 + n dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    /// Number of cells; the grid has `cells + 1` points.
    pub cells: usize,
}

impl Grid {
    pub fn new(t0: f64, dt: f64, cells: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return param(format!("grid spacing must be positive, got {dt}"));
        }
        if cells == 0 {
            return param("grid needs at least one cell");
        }
        Ok(Self { t0, dt, cells })
    }

    /// `cells` equal cells covering `[0, span]`.
    pub fn span(span: f64, cells: usize) -> Result<Self> {
        if cells == 0 {
            return param("grid needs at least one cell");
        }
        Self::new(0.0, span / cells as f64, cells)
    }

    pub fn unit(cells: usize) -> Result<Self> {
        Self::span(1.0, cells)
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.cells)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.time(j))
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.cells == other.cells
            && (self.t0 - other.t0).abs() <= 1e-12 * self.dt
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// Values sampled on a uniform [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSeries {
    grid: Grid,
    values: Vec<f64>,
}

impl GridSeries {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return param(format!(
                "grid has {} points but {} values were given",
                grid.len(),
                values.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("grid series has at least two points")
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.times().zip(self.values.iter().copied())
    }

    pub fn check_same_grid(&self, other: &GridSeries) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            param(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            ))
        }
    }

    pub fn zip_with(&self, other: &GridSeries, f: impl Fn(f64, f64) -> f64) -> Result<GridSeries> {
        self.check_same_grid(other)?;
        Ok(GridSeries {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &GridSeries) -> Result<GridSeries> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridSeries {
        GridSeries {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Forward differences `x[j+1] - x[j]`.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Trapezoid running integral, starting at zero.
    pub fn cumulative_trapezoid(&self) -> GridSeries {
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * self.grid.dt * (w[0] + w[1]);
            out.push(acc);
        }
        GridSeries {
            grid: self.grid,
            values: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points() {
        let g = Grid::span(10.0, 4).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.times().collect::<Vec<_>>(), vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        assert!(Grid::new(0.0, 0.0, 3).is_err());
        assert!(Grid::new(0.0, 1.0, 0).is_err());
        assert!(Grid::span(1.0, 0).is_err());
    }

    #[test]
    fn series_length_checked() {
        let g = Grid::unit(3).unwrap();
        assert!(GridSeries::new(g, vec![0.0; 3]).is_err());
        assert!(GridSeries::new(g, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn trapezoid_is_exact_for_lines() {
        let g = Grid::span(2.0, 8).unwrap();
        let x = GridSeries::from_fn(g, |t| 3.0 * t + 1.0).cumulative_trapezoid();
        for (t, v) in x.iter() {
            assert!((v - (1.5 * t * t + t)).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_grids() {
        let a = GridSeries::zeros(Grid::unit(4).unwrap());
        let b = GridSeries::zeros(Grid::span(2.0, 4).unwrap());
        assert!(a.sub(&b).is_err());
        assert_eq!(a.increments().len(), 4);
        assert_eq!(b.map(|v| v - 2.0).sup_norm(), 2.0);
    }
}
