//! Navigation potential and desired velocity.
//!
//! The scalar potential u solves Delta u = 0 on the walkable cells with
//! mixed boundary conditions: Dirichlet values on walls and exits, optional
//! zero-Neumann (free sliding) faces on obstacles and inlets. The desired
//! velocity is the alpha-normalized gradient of u, so pedestrians walk up
//! the potential toward the exits at constant speed.
//!
//! Discretization: five-point stencil at cell centers. A Dirichlet face with
//! value v contributes a ghost value 2v - u (second-order face value); a
//! zero-Neumann face mirrors the cell value. The solve is red-black SOR with
//! the optimal relaxation factor for the five-point Laplacian.

use crate::grid::{CellKind, Grid, Side};

/// Boundary condition on one face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaceBc {
    Dirichlet(f64),
    NeumannZero,
}

/// Full boundary-condition assignment for one potential solve.
///
/// `walls` apply to outer faces of the boundary ring, per side. Target-run
/// outer faces get `target_value` when the run id is listed in `target_ids`
/// (an empty list selects every target run); other populations' target runs
/// fall back to the wall value. Inlet outer faces default to zero-Neumann
/// unless overridden per inlet population.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConditionSet {
    pub walls: [FaceBc; 4],
    pub target_value: f64,
    pub target_ids: Vec<u32>,
    pub obstacles: Vec<FaceBc>,
    pub inlet_overrides: Vec<(u32, FaceBc)>,
}

impl Default for BoundaryConditionSet {
    fn default() -> Self {
        BoundaryConditionSet {
            walls: [FaceBc::Dirichlet(0.0); 4],
            target_value: 1.0,
            target_ids: Vec::new(),
            obstacles: Vec::new(),
            inlet_overrides: Vec::new(),
        }
    }
}

impl BoundaryConditionSet {
    pub fn obstacle_bc(&self, id: u32) -> FaceBc {
        self.obstacles
            .get(id as usize)
            .copied()
            .unwrap_or(FaceBc::Dirichlet(0.0))
    }

    pub fn inlet_bc(&self, population: u32) -> FaceBc {
        self.inlet_overrides
            .iter()
            .find(|(p, _)| *p == population)
            .map(|&(_, bc)| bc)
            .unwrap_or(FaceBc::NeumannZero)
    }

    fn targets_run(&self, id: u32) -> bool {
        self.target_ids.is_empty() || self.target_ids.contains(&id)
    }
}

/// Degenerate or failed solves, reported as flags alongside the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveIssue {
    /// All imposed Dirichlet data equal (or none at all): u is constant and
    /// carries no navigation information.
    NoTarget,
    /// Residual still above tolerance at the iteration cap.
    NonConvergence,
}

/// Solved potential with solver diagnostics.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub u: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub issue: Option<SolveIssue>,
}

pub const DEFAULT_TOL: f64 = 1e-8;

pub fn default_max_iter(m: usize) -> usize {
    200 * m * m
}

/// What closes one face of the stencil.
enum Closure {
    Coupled(usize),
    Dirichlet(f64),
    Neumann,
}

fn face_closure(grid: &Grid, bcs: &BoundaryConditionSet, ix: usize, iy: usize, side: Side) -> Closure {
    let m = grid.m();
    let neighbor = match side {
        Side::Left if ix > 0 => Some((ix - 1, iy)),
        Side::Right if ix + 1 < m => Some((ix + 1, iy)),
        Side::Bottom if iy > 0 => Some((ix, iy - 1)),
        Side::Top if iy + 1 < m => Some((ix, iy + 1)),
        _ => None,
    };
    match neighbor {
        Some((nx, ny)) => match grid.kind(nx, ny) {
            CellKind::Obstacle(id) => match bcs.obstacle_bc(id) {
                FaceBc::Dirichlet(v) => Closure::Dirichlet(v),
                FaceBc::NeumannZero => Closure::Neumann,
            },
            _ => Closure::Coupled(grid.idx(nx, ny)),
        },
        None => {
            let wall = bcs.walls[side.index()];
            let face_bc = match grid.kind(ix, iy) {
                CellKind::Target { id, side: s } if s == side && bcs.targets_run(id) => {
                    FaceBc::Dirichlet(bcs.target_value)
                }
                CellKind::Inlet { population, side: s } if s == side => bcs.inlet_bc(population),
                _ => wall,
            };
            match face_bc {
                FaceBc::Dirichlet(v) => Closure::Dirichlet(v),
                FaceBc::NeumannZero => Closure::Neumann,
            }
        }
    }
}

const NO_NB: u32 = u32::MAX;

struct CellEq {
    // Neighbor linear indices in fixed order E, W, N, S; NO_NB when the face
    // is closed by a boundary condition.
    nb: [u32; 4],
    diag: f64,
    rhs: f64,
}

fn build_equations(grid: &Grid, bcs: &BoundaryConditionSet) -> (Vec<Option<CellEq>>, Option<SolveIssue>) {
    let m = grid.m();
    let mut eqs: Vec<Option<CellEq>> = Vec::with_capacity(m * m);
    let mut dirichlet_min = f64::INFINITY;
    let mut dirichlet_max = f64::NEG_INFINITY;
    let mut dirichlet_seen = false;
    for iy in 0..m {
        for ix in 0..m {
            if !grid.is_walkable(ix, iy) {
                eqs.push(None);
                continue;
            }
            let mut nb = [NO_NB; 4];
            let mut diag = 4.0;
            let mut rhs = 0.0;
            for (slot, side) in [Side::Right, Side::Left, Side::Top, Side::Bottom]
                .into_iter()
                .enumerate()
            {
                match face_closure(grid, bcs, ix, iy, side) {
                    Closure::Coupled(j) => nb[slot] = j as u32,
                    Closure::Dirichlet(v) => {
                        diag += 1.0;
                        rhs += 2.0 * v;
                        dirichlet_seen = true;
                        dirichlet_min = dirichlet_min.min(v);
                        dirichlet_max = dirichlet_max.max(v);
                    }
                    Closure::Neumann => diag -= 1.0,
                }
            }
            if diag <= 0.0 {
                // Isolated pocket closed by Neumann faces on all sides; pin it.
                diag = 1.0;
                rhs = 0.0;
                nb = [NO_NB; 4];
            }
            eqs.push(Some(CellEq { nb, diag, rhs }));
        }
    }
    let issue = if !dirichlet_seen || dirichlet_min == dirichlet_max {
        Some(SolveIssue::NoTarget)
    } else {
        None
    };
    (eqs, issue)
}

/// Solves the discrete Laplace problem by red-black SOR until the max-norm
/// residual of the discrete Laplacian drops to `tol` or `max_iter` sweeps
/// have run. Returns the field with diagnostics; degenerate boundary data is
/// flagged rather than treated as an error.
pub fn solve_laplace(
    grid: &Grid,
    bcs: &BoundaryConditionSet,
    tol: f64,
    max_iter: usize,
) -> PotentialField {
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    let m = grid.m();
    let (eqs, issue) = build_equations(grid, bcs);
    let mut u = vec![0.0f64; m * m];
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / m as f64).sin());
    let h2 = grid.h() * grid.h();

    let nb_sum = |u: &[f64], eq: &CellEq| -> f64 {
        let v = |j: u32| if j == NO_NB { 0.0 } else { u[j as usize] };
        (v(eq.nb[0]) + v(eq.nb[1])) + (v(eq.nb[2]) + v(eq.nb[3]))
    };

    let residual_of = |u: &[f64]| -> f64 {
        let mut worst = 0.0f64;
        for (i, eq) in eqs.iter().enumerate() {
            if let Some(eq) = eq {
                let r = (nb_sum(u, eq) + eq.rhs) - eq.diag * u[i];
                worst = worst.max(r.abs());
            }
        }
        worst / h2
    };

    let mut residual = residual_of(&u);
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        for color in 0..2usize {
            for iy in 0..m {
                for ix in 0..m {
                    if (ix + iy) % 2 != color {
                        continue;
                    }
                    let i = iy * m + ix;
                    if let Some(eq) = &eqs[i] {
                        let gs = (nb_sum(&u, eq) + eq.rhs) / eq.diag;
                        u[i] += omega * (gs - u[i]);
                    }
                }
            }
        }
        iterations += 1;
        residual = residual_of(&u);
    }

    let issue = match issue {
        Some(flag) => Some(flag),
        None if residual > tol => Some(SolveIssue::NonConvergence),
        None => None,
    };
    PotentialField {
        u,
        residual,
        iterations,
        issue,
    }
}

/// Desired velocity field: magnitude alpha everywhere the potential has a
/// usable gradient, plus the stored unit direction and the degeneracy mask.
#[derive(Clone, Debug)]
pub struct DesiredVelocityField {
    pub alpha: f64,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    /// Unit direction of the desired velocity (zero where unrepairable).
    pub dir_x: Vec<f64>,
    pub dir_y: Vec<f64>,
    /// Cells whose raw gradient fell below the degeneracy threshold,
    /// including those repaired from neighbor directions.
    pub degenerate: Vec<bool>,
}

impl DesiredVelocityField {
    pub fn n_degenerate(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }

    pub fn direction(&self, ix: usize, iy: usize, m: usize) -> [f64; 2] {
        let i = iy * m + ix;
        [self.dir_x[i], self.dir_y[i]]
    }
}

pub fn default_grad_eps(alpha: f64, m: usize) -> f64 {
    1e-6 * alpha * m as f64
}

/// Derives v_d = alpha * grad u / |grad u| from a solved potential.
///
/// Central differences on interior cells; one-sided differences next to
/// obstacles and on the boundary ring. Cells with |grad u| below `grad_eps`
/// are flagged degenerate and repaired with the alpha-normalized average of
/// the non-degenerate 4-neighbor directions; unrepairable cells get v_d = 0.
pub fn desired_velocity(
    field: &PotentialField,
    grid: &Grid,
    alpha: f64,
    grad_eps: f64,
) -> DesiredVelocityField {
    assert!(alpha > 0.0 && grad_eps > 0.0);
    let m = grid.m();
    let h = grid.h();
    let u = &field.u;
    let n = m * m;
    let mut dir_x = vec![0.0; n];
    let mut dir_y = vec![0.0; n];
    let mut degenerate = vec![false; n];

    let usable = |ix: usize, iy: usize| grid.is_walkable(ix, iy);
    for iy in 0..m {
        for ix in 0..m {
            if !grid.is_walkable(ix, iy) {
                continue;
            }
            let i = iy * m + ix;
            let c = u[i];
            let l = ix > 0 && usable(ix - 1, iy);
            let r = ix + 1 < m && usable(ix + 1, iy);
            let gx = match (l, r) {
                (true, true) => (u[i + 1] - u[i - 1]) / (2.0 * h),
                (false, true) => (u[i + 1] - c) / h,
                (true, false) => (c - u[i - 1]) / h,
                (false, false) => 0.0,
            };
            let b = iy > 0 && usable(ix, iy - 1);
            let t = iy + 1 < m && usable(ix, iy + 1);
            let gy = match (b, t) {
                (true, true) => (u[i + m] - u[i - m]) / (2.0 * h),
                (false, true) => (u[i + m] - c) / h,
                (true, false) => (c - u[i - m]) / h,
                (false, false) => 0.0,
            };
            let norm = (gx * gx + gy * gy).sqrt();
            if norm >= grad_eps {
                dir_x[i] = gx / norm;
                dir_y[i] = gy / norm;
            } else {
                degenerate[i] = true;
            }
        }
    }

    // Repair pass: average the surviving neighbor directions.
    let mut rep_x = vec![0.0; n];
    let mut rep_y = vec![0.0; n];
    for iy in 0..m {
        for ix in 0..m {
            let i = iy * m + ix;
            if !degenerate[i] || !grid.is_walkable(ix, iy) {
                continue;
            }
            let pick = |jx: usize, jy: usize| -> [f64; 2] {
                let j = jy * m + jx;
                if grid.is_walkable(jx, jy) && !degenerate[j] {
                    [dir_x[j], dir_y[j]]
                } else {
                    [0.0, 0.0]
                }
            };
            let e = if ix + 1 < m { pick(ix + 1, iy) } else { [0.0; 2] };
            let w = if ix > 0 { pick(ix - 1, iy) } else { [0.0; 2] };
            let t = if iy + 1 < m { pick(ix, iy + 1) } else { [0.0; 2] };
            let b = if iy > 0 { pick(ix, iy - 1) } else { [0.0; 2] };
            let sx = (e[0] + w[0]) + (t[0] + b[0]);
            let sy = (e[1] + w[1]) + (t[1] + b[1]);
            let norm = (sx * sx + sy * sy).sqrt();
            if norm > 0.0 {
                rep_x[i] = sx / norm;
                rep_y[i] = sy / norm;
            }
        }
    }
    for i in 0..n {
        if degenerate[i] {
            dir_x[i] = rep_x[i];
            dir_y[i] = rep_y[i];
        }
    }

    let vx: Vec<f64> = dir_x.iter().map(|d| alpha * d).collect();
    let vy: Vec<f64> = dir_y.iter().map(|d| alpha * d).collect();
    DesiredVelocityField {
        alpha,
        vx,
        vy,
        dir_x,
        dir_y,
        degenerate,
    }
}
