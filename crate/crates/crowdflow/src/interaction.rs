//! Nonlocal interaction velocity and velocity closure.
//!
//! Each pedestrian evaluates the occupancy of a forward visibility
//! neighborhood and steers away from its weighted center of mass:
//!
//!   nu(x) = (1/R) * sum_{y in B_R^+(x)} (x - y) * (sum_j beta_ij rho_j(y)) * h^2
//!
//! Obstacle cells and ghost cells beyond the walls carry an effective wall
//! density so that walls repel through the same term. In the single
//! population mass-dependent form the neighborhood-mass normalizer cancels
//! algebraically against the interaction strength, so every mode reduces to
//! the moment sum above; the cancelled form avoids a 0/0 at empty
//! neighborhoods.
//!
//! Summation order is deterministic and mirror-consistent: offsets are
//! enumerated row by row, and within a row starting from the facing axis and
//! alternating outward (+-1, +-2, ... relative to the facing x-direction).
//! Mirrored inputs therefore produce exactly mirrored outputs, and fully
//! symmetric rows cancel the x-moment exactly.

use std::collections::HashMap;

use thiserror::Error;

use crate::field::{DensityField, VectorField};
use crate::grid::{Grid, NeighborhoodSpec};
use crate::potential::DesiredVelocityField;

/// Interaction strength parameterization. Both options evaluate to the same
/// moment sum (see module docs); the distinction is kept for scenario
/// fidelity and for the bound diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionMode {
    MassDependent,
    MassIndependent,
}

#[derive(Clone, Debug)]
pub struct InteractionParams {
    pub neighborhood: NeighborhoodSpec,
    pub mode: InteractionMode,
    /// Coupling matrix; row i holds the strengths population i feels from
    /// every population j. Off-diagonal entries must be nonnegative.
    pub beta: Vec<Vec<f64>>,
    /// Equivalent density prescribed on obstacle and exterior ghost cells.
    pub wall_density: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InteractionError {
    #[error("beta matrix has {rows} rows / {cols} cols but there are {populations} populations")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        populations: usize,
    },
}

const NO_STENCIL: u32 = u32::MAX;

struct Term {
    /// Index delta within the padded combined-density array.
    didx: i32,
    dx: f64,
    dy: f64,
}

/// Precomputed per-cell visibility stencils for one population.
///
/// The stencil of a cell depends only on the (static) desired direction and
/// the neighborhood spec, so it is built once and reused every step. Cells
/// sharing the same member set and facing sign share one stencil table.
pub struct InteractionKernel {
    m: usize,
    reach: i64,
    pad_w: usize,
    scale: f64,
    stencil_id: Vec<u32>,
    stencils: Vec<Vec<Term>>,
}

impl InteractionKernel {
    pub fn new(grid: &Grid, desired: &DesiredVelocityField, spec: &NeighborhoodSpec) -> Self {
        let m = grid.m();
        let h = grid.h();
        let reach = (spec.radius / h).ceil() as i64;
        let pad_w = m + 2 * reach as usize;
        let r2 = spec.radius * spec.radius;
        let cos_theta = spec.cos_theta();

        // Candidate offsets in the deterministic enumeration order shared by
        // every cell: rows by dy ascending; within a row dx = 0, then +-1,
        // +-2, ... with the sign pattern anchored to the facing direction.
        let mut candidates: Vec<(i64, i64)> = Vec::new();
        for dy in -reach..=reach {
            candidates.push((0, dy));
            for j in 1..=reach {
                candidates.push((j, dy));
                candidates.push((-j, dy));
            }
        }

        let mut dedup: HashMap<(Vec<u64>, i8), u32> = HashMap::new();
        let mut stencils: Vec<Vec<Term>> = Vec::new();
        let mut stencil_id = vec![NO_STENCIL; m * m];
        let words = (candidates.len() + 63) / 64;

        for iy in 0..m {
            for ix in 0..m {
                if !grid.is_walkable(ix, iy) {
                    continue;
                }
                let i = iy * m + ix;
                let dir = [desired.dir_x[i], desired.dir_y[i]];
                let sx: i64 = if spec.anisotropic && dir[0] < 0.0 { -1 } else { 1 };
                let mut mask = vec![0u64; words];
                for (pos, &(step, dy)) in candidates.iter().enumerate() {
                    let dx = step * sx;
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let d2 = ((dx * dx + dy * dy) as f64) * (h * h);
                    if d2 > r2 {
                        continue;
                    }
                    if spec.anisotropic {
                        let dot = (dx as f64) * h * dir[0] + (dy as f64) * h * dir[1];
                        if dot < d2.sqrt() * cos_theta {
                            continue;
                        }
                    }
                    mask[pos / 64] |= 1 << (pos % 64);
                }
                let id = *dedup.entry((mask.clone(), sx as i8)).or_insert_with(|| {
                    let mut terms = Vec::new();
                    for (pos, &(step, dy)) in candidates.iter().enumerate() {
                        if mask[pos / 64] & (1 << (pos % 64)) == 0 {
                            continue;
                        }
                        let dx = step * sx;
                        terms.push(Term {
                            didx: (dy * pad_w as i64 + dx) as i32,
                            dx: dx as f64,
                            dy: dy as f64,
                        });
                    }
                    stencils.push(terms);
                    (stencils.len() - 1) as u32
                });
                stencil_id[i] = id;
            }
        }

        InteractionKernel {
            m,
            reach,
            pad_w,
            scale: -(h * h * h) / spec.radius,
            stencil_id,
            stencils,
        }
    }

    /// Evaluates nu for one population against the frozen densities.
    ///
    /// `active`, when given, limits evaluation to marked cells (the engine
    /// passes the support of the population's own density; velocities on
    /// massless cells never move mass). Unmarked and obstacle cells get
    /// nu = 0.
    pub fn evaluate(
        &self,
        grid: &Grid,
        densities: &[&DensityField],
        beta_row: &[f64],
        wall_density: f64,
        active: Option<&[bool]>,
        out: &mut VectorField,
    ) {
        let m = self.m;
        let k = self.reach as usize;
        let pw = self.pad_w;

        // Effective combined density: beta-weighted sum of the populations
        // on walkable cells, the wall value on obstacle and exterior cells.
        let mut c_wall = 0.0;
        for &b in beta_row {
            c_wall += wall_density * b;
        }
        let mut cpad = vec![c_wall; pw * pw];
        for iy in 0..m {
            let row = (iy + k) * pw + k;
            for ix in 0..m {
                if grid.is_walkable(ix, iy) {
                    let i = iy * m + ix;
                    let mut c = 0.0;
                    for (j, &b) in beta_row.iter().enumerate() {
                        c += b * densities[j].rho[i];
                    }
                    cpad[row + ix] = c;
                }
            }
        }

        out.x.iter_mut().for_each(|v| *v = 0.0);
        out.y.iter_mut().for_each(|v| *v = 0.0);
        for iy in 0..m {
            for ix in 0..m {
                let i = iy * m + ix;
                if let Some(mask) = active {
                    if !mask[i] {
                        continue;
                    }
                }
                let id = self.stencil_id[i];
                if id == NO_STENCIL {
                    continue;
                }
                let base = ((iy + k) * pw + ix + k) as i64;
                let mut sx = 0.0f64;
                let mut sy = 0.0f64;
                for t in &self.stencils[id as usize] {
                    let c = cpad[(base + t.didx as i64) as usize];
                    sx += c * t.dx;
                    sy += c * t.dy;
                }
                out.x[i] = self.scale * sx;
                out.y[i] = self.scale * sy;
            }
        }
    }
}

fn check_dims(params: &InteractionParams, populations: usize) -> Result<(), InteractionError> {
    let rows = params.beta.len();
    let cols = params.beta.first().map_or(0, |r| r.len());
    if rows != populations || params.beta.iter().any(|r| r.len() != populations) {
        return Err(InteractionError::DimensionMismatch {
            rows,
            cols,
            populations,
        });
    }
    Ok(())
}

/// One-shot interaction velocity for population `self_index`. The engine
/// precomputes an [`InteractionKernel`] instead; this entry point builds one
/// on the fly and evaluates the full field.
pub fn interaction_velocity(
    densities: &[&DensityField],
    self_index: usize,
    desired: &DesiredVelocityField,
    grid: &Grid,
    params: &InteractionParams,
) -> Result<VectorField, InteractionError> {
    check_dims(params, densities.len())?;
    let kernel = InteractionKernel::new(grid, desired, &params.neighborhood);
    let mut out = VectorField::zeros(grid);
    kernel.evaluate(
        grid,
        densities,
        &params.beta[self_index],
        params.wall_density,
        None,
        &mut out,
    );
    Ok(out)
}

/// Total velocity v = v_d + nu, with the optional retrograde guard.
///
/// With the guard on, any cell whose total velocity points against its own
/// desired direction has the retrograde component removed (the projection on
/// -v_d is truncated to zero, sideways deflection preserved). Returns the
/// field and the number of guarded cells.
pub fn total_velocity(
    desired: &DesiredVelocityField,
    nu: &VectorField,
    retrograde_guard: bool,
) -> (VectorField, usize) {
    let n = desired.vx.len();
    let mut out = VectorField::new(nu.m());
    debug_assert_eq!(n, out.x.len());
    let mut guarded = 0usize;
    for i in 0..n {
        let mut vx = desired.vx[i] + nu.x[i];
        let mut vy = desired.vy[i] + nu.y[i];
        if retrograde_guard {
            let dot = vx * desired.dir_x[i] + vy * desired.dir_y[i];
            if dot < 0.0 {
                vx -= dot * desired.dir_x[i];
                vy -= dot * desired.dir_y[i];
                guarded += 1;
            }
        }
        out.x[i] = vx;
        out.y[i] = vy;
    }
    (out, guarded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::NeighborhoodSpec;
    use crate::potential::DesiredVelocityField;
    use std::f64::consts::FRAC_PI_2;

    fn uniform_desired(grid: &Grid, dir: [f64; 2], alpha: f64) -> DesiredVelocityField {
        let n = grid.m() * grid.m();
        DesiredVelocityField {
            alpha,
            vx: vec![alpha * dir[0]; n],
            vy: vec![alpha * dir[1]; n],
            dir_x: vec![dir[0]; n],
            dir_y: vec![dir[1]; n],
            degenerate: vec![false; n],
        }
    }

    fn single_pop_params(radius: f64, anisotropic: bool, beta: f64, wall: f64) -> InteractionParams {
        InteractionParams {
            neighborhood: NeighborhoodSpec {
                radius,
                theta_max: FRAC_PI_2,
                anisotropic,
            },
            mode: InteractionMode::MassIndependent,
            beta: vec![vec![beta]],
            wall_density: wall,
        }
    }

    #[test]
    fn uniform_density_symmetric_neighborhood_gives_zero() {
        let grid = Grid::build(20, &[], &[], &[]).unwrap();
        let rho = DensityField::from_fn(&grid, |_, _| 0.7);
        let desired = uniform_desired(&grid, [1.0, 0.0], 1.0);
        let params = single_pop_params(0.15, false, 0.5, 0.7);
        let nu = interaction_velocity(&[&rho], 0, &desired, &grid, &params).unwrap();
        // Interior cell far from the walls: the x-moment cancels exactly by
        // the paired enumeration; the y-moment cancels up to roundoff.
        let v = nu.get(10, 10);
        assert_eq!(v[0], 0.0);
        assert!(v[1].abs() < 1e-13, "vy = {}", v[1]);
    }

    #[test]
    fn zero_density_zero_wall_gives_zero_everywhere() {
        let grid = Grid::build(16, &[], &[], &[]).unwrap();
        let rho = DensityField::zeros(&grid);
        let desired = uniform_desired(&grid, [1.0, 0.0], 1.0);
        let params = single_pop_params(0.2, true, 1.0, 0.0);
        let nu = interaction_velocity(&[&rho], 0, &desired, &grid, &params).unwrap();
        assert!(nu.x.iter().chain(nu.y.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn point_mass_matches_brute_force_sum() {
        // Point mass three cells directly ahead at distance 0.15 with
        // h = 0.05, R = 0.25, beta = 0.5: nu = (beta/R)(x-y) rho h².
        let grid = Grid::build(20, &[], &[], &[]).unwrap();
        let mut rho = DensityField::zeros(&grid);
        let rho_val = 2.3;
        rho.set(13, 10, rho_val);
        let desired = uniform_desired(&grid, [1.0, 0.0], 1.0);
        let params = single_pop_params(0.25, true, 0.5, 0.0);
        let nu = interaction_velocity(&[&rho], 0, &desired, &grid, &params).unwrap();
        let h = grid.h();
        let expected_x = -(0.5 / 0.25) * 0.15 * rho_val * h * h;
        let got = nu.get(10, 10);
        assert!((got[0] - expected_x).abs() <= 1e-15 * expected_x.abs());
        assert_eq!(got[1], 0.0);

        // Independent brute-force kernel sum over every cell of the grid.
        let (cx, cy) = grid.center(10, 10);
        let mut brute = [0.0f64; 2];
        for (ix, iy) in grid.cells() {
            let (x, y) = grid.center(ix, iy);
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            if d == 0.0 || d > 0.25 {
                continue;
            }
            if (x - cx) * 1.0 + (y - cy) * 0.0 < 0.0 {
                continue;
            }
            let c = 0.5 * rho.get(ix, iy);
            brute[0] += (cx - x) * c * h * h / 0.25;
            brute[1] += (cy - y) * c * h * h / 0.25;
        }
        assert!((got[0] - brute[0]).abs() <= 1e-15 + 1e-12 * brute[0].abs());
        assert!((got[1] - brute[1]).abs() <= 1e-15);
    }

    #[test]
    fn mass_strictly_behind_never_contributes() {
        let grid = Grid::build(20, &[], &[], &[]).unwrap();
        let desired = uniform_desired(&grid, [0.0, 1.0], 1.0);
        let params = single_pop_params(0.2, true, 1.0, 0.0);
        let empty = DensityField::zeros(&grid);
        let nu0 = interaction_velocity(&[&empty], 0, &desired, &grid, &params).unwrap();
        let mut rho = DensityField::zeros(&grid);
        rho.set(10, 7, 5.0); // strictly behind a cell looking up from (10, 10)
        rho.set(9, 8, 3.0);
        let nu1 = interaction_velocity(&[&rho], 0, &desired, &grid, &params).unwrap();
        assert_eq!(nu0.get(10, 10), nu1.get(10, 10));
    }

    #[test]
    fn magnitude_bound_holds_cellwise() {
        // |nu| <= (pi/2) R rho_max sum_j |beta_ij| for bounded densities.
        let grid = Grid::build(24, &[], &[], &[]).unwrap();
        let rho = DensityField::from_fn(&grid, |ix, iy| ((ix * 7 + iy * 3) % 5) as f64 * 0.5);
        let rho_max = rho.max_density().max(1.2); // wall density below this
        let desired = uniform_desired(&grid, [0.6, 0.8], 1.0);
        let params = single_pop_params(0.2, true, 0.9, 1.2);
        let nu = interaction_velocity(&[&rho], 0, &desired, &grid, &params).unwrap();
        let bound = (std::f64::consts::PI / 2.0) * 0.2 * rho_max * 0.9;
        // Discrete neighborhoods overshoot the half-disk area by O(h); allow
        // that margin on top of the analytic bound.
        let slack = 1.0 + 4.0 * grid.h() / 0.2;
        for i in 0..nu.x.len() {
            let mag = (nu.x[i].powi(2) + nu.y[i].powi(2)).sqrt();
            assert!(mag <= bound * slack, "|nu| = {mag} > {}", bound * slack);
        }
    }

    #[test]
    fn two_population_swap_is_bit_exact() {
        let grid = Grid::build(18, &[], &[], &[]).unwrap();
        let rho_a = DensityField::from_fn(&grid, |ix, iy| ((ix + 2 * iy) % 4) as f64 * 0.3);
        let rho_b = DensityField::from_fn(&grid, |ix, iy| ((3 * ix + iy) % 5) as f64 * 0.2);
        let desired = uniform_desired(&grid, [1.0, 0.0], 1.0);
        let beta = [[0.1, 0.7], [0.4, -0.2]];
        let params = |b: [[f64; 2]; 2]| InteractionParams {
            neighborhood: NeighborhoodSpec {
                radius: 0.18,
                theta_max: FRAC_PI_2,
                anisotropic: true,
            },
            mode: InteractionMode::MassIndependent,
            beta: b.iter().map(|r| r.to_vec()).collect(),
            wall_density: 0.5,
        };
        let nu_1 =
            interaction_velocity(&[&rho_a, &rho_b], 0, &desired, &grid, &params(beta)).unwrap();
        // Swap the labels and transpose beta: population 2 of the swapped
        // problem is population 1 of the original.
        let swapped = [[beta[1][1], beta[1][0]], [beta[0][1], beta[0][0]]];
        let nu_2 =
            interaction_velocity(&[&rho_b, &rho_a], 1, &desired, &grid, &params(swapped)).unwrap();
        assert_eq!(nu_1, nu_2);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let grid = Grid::build(8, &[], &[], &[]).unwrap();
        let rho = DensityField::zeros(&grid);
        let desired = uniform_desired(&grid, [1.0, 0.0], 1.0);
        let params = single_pop_params(0.2, true, 1.0, 0.0); // 1x1 beta
        let err = interaction_velocity(&[&rho, &rho], 0, &desired, &grid, &params).unwrap_err();
        assert!(matches!(err, InteractionError::DimensionMismatch { .. }));
    }

    #[test]
    fn total_velocity_identity_without_interaction() {
        let grid = Grid::build(8, &[], &[], &[]).unwrap();
        let desired = uniform_desired(&grid, [0.6, -0.8], 1.3);
        let nu = VectorField::zeros(&grid);
        let (v, guarded) = total_velocity(&desired, &nu, true);
        assert_eq!(guarded, 0);
        assert_eq!(v.x, desired.vx);
        assert_eq!(v.y, desired.vy);
    }

    #[test]
    fn retrograde_truncation_keeps_sideways_part() {
        let grid = Grid::build(4, &[], &[], &[]).unwrap();
        let alpha = 1.0;
        let desired = uniform_desired(&grid, [1.0, 0.0], alpha);
        let mut nu = VectorField::zeros(&grid);
        for iy in 0..4 {
            for ix in 0..4 {
                nu.set(ix, iy, [-2.0 * alpha, alpha]);
            }
        }
        let (v, guarded) = total_velocity(&desired, &nu, true);
        assert_eq!(guarded, 16);
        assert_eq!(v.get(1, 1), [0.0, alpha]);
        let (raw, none) = total_velocity(&desired, &nu, false);
        assert_eq!(none, 0);
        assert_eq!(raw.get(1, 1), [-alpha, alpha]);
    }
}
