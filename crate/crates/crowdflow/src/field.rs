//! Per-cell scalar and vector fields, stored row-major ((iy * m) + ix).

use crate::grid::Grid;

/// Nonnegative pedestrian density, the Radon-Nikodym density of the
/// occupancy measure at one time step. Mass of cell (ix, iy) is rho·h².
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    m: usize,
    pub rho: Vec<f64>,
}

impl DensityField {
    pub fn zeros(grid: &Grid) -> Self {
        DensityField {
            m: grid.m(),
            rho: vec![0.0; grid.m() * grid.m()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let m = grid.m();
        let mut rho = vec![0.0; m * m];
        for iy in 0..m {
            for ix in 0..m {
                rho[iy * m + ix] = f(ix, iy);
            }
        }
        DensityField { m, rho }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.rho[iy * self.m + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        self.rho[iy * self.m + ix] = v;
    }

    /// Total mass sum rho·h², accumulated row-major.
    pub fn total_mass(&self, grid: &Grid) -> f64 {
        let h2 = grid.h() * grid.h();
        self.rho.iter().sum::<f64>() * h2
    }

    pub fn max_density(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_density(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Planar velocity field (domain lengths per unit time).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    m: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::new(grid.m())
    }

    pub fn new(m: usize) -> Self {
        VectorField {
            m,
            x: vec![0.0; m * m],
            y: vec![0.0; m * m],
        }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> [f64; 2] {
        let i = iy * self.m + ix;
        [self.x[i], self.y[i]]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: [f64; 2]) {
        let i = iy * self.m + ix;
        self.x[i] = v[0];
        self.y[i] = v[1];
    }

    /// Max over cells of the larger velocity component magnitude.
    pub fn max_component(&self) -> f64 {
        self.x
            .iter()
            .zip(self.y.iter())
            .map(|(vx, vy)| vx.abs().max(vy.abs()))
            .fold(0.0, f64::max)
    }
}
