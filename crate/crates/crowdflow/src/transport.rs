//! One-step density transport by push-forward of the occupancy measure.
//!
//! The motion mapping translates each cell by its own velocity times dt.
//! Under the CFL bound |U|dt <= h per axis, the translated cell overlaps at
//! most the 3x3 neighborhood of its origin, and the overlap areas factor
//! into per-axis lengths:
//!
//!   [U1+ dt, h - |U1| dt, U1- dt] x [U2+ dt, h - |U2| dt, U2- dt]
//!
//! The new density is the area-weighted gather of the old one, scaled by
//! 1/h² so that cell masses rho h² obey the push-forward identity exactly
//! (the identity velocity maps a density to itself bit-for-bit).
//!
//! Walls: a velocity component that would push mass across a face shared
//! with an obstacle or across an outer wall (not an exit or inlet face) is
//! zeroed before transport. Mass that would land diagonally inside an
//! obstacle stays in its source cell. Mass reaching exit cells, or crossing
//! the outer boundary through exit/inlet faces, leaves the domain and is
//! accounted separately.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{DensityField, VectorField};
use crate::grid::{CellKind, Grid, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("CFL violated: max |U| dt / h = {ratio} > 1")]
    CflViolation { ratio: f64 },
    #[error("negative input density {value} at cell {cell:?}")]
    NegativeDensity { cell: (usize, usize), value: f64 },
    #[error("density has no mass to sample")]
    ZeroMass,
}

/// Per-step accounting and diagnostics.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub mass_before: f64,
    pub mass_after: f64,
    /// Mass absorbed at exit cells or gone through open boundary faces.
    pub mass_exited: f64,
    /// Diagnostic estimate of mass whose wall-crossing velocity component
    /// was zeroed (the mass itself stays in the domain).
    pub mass_blocked: f64,
    pub max_density: f64,
    pub cfl_ratio: f64,
    /// Exit mass split by target id (absorption only; open-face outflow has
    /// no target attached).
    pub exited_by_target: Vec<(u32, f64)>,
}

/// CFL ratio dt * max(|U1|, |U2|) / h over all cells; <= 1 is admissible.
pub fn check_cfl(velocity: &VectorField, dt: f64, grid: &Grid) -> f64 {
    assert!(dt > 0.0);
    velocity.max_component() * dt / grid.h()
}

#[inline]
fn axis_weights(u: f64, dt: f64, h: f64) -> [f64; 3] {
    // [toward -1, stay, toward +1]
    let plus = u.max(0.0) * dt;
    let minus = (-u).max(0.0) * dt;
    [minus, h - (plus + minus), plus]
}

/// Overlap areas of a translated cell against the grid, as nine
/// (offset, area) pairs; offsets point from the source toward the
/// destination (U1 > 0 sends mass to offset +1 in x). Areas are nonnegative
/// and sum to h² up to rounding.
pub fn overlap_coefficients(
    u: [f64; 2],
    dt: f64,
    h: f64,
) -> Result<[((i32, i32), f64); 9], TransportError> {
    for c in u {
        let ratio = c.abs() * dt / h;
        if ratio > 1.0 {
            return Err(TransportError::CflViolation { ratio });
        }
    }
    let wx = axis_weights(u[0], dt, h);
    let wy = axis_weights(u[1], dt, h);
    let mut out = [((0, 0), 0.0); 9];
    let mut k = 0;
    for oy in -1i32..=1 {
        for ox in -1i32..=1 {
            out[k] = ((ox, oy), wx[(ox + 1) as usize] * wy[(oy + 1) as usize]);
            k += 1;
        }
    }
    Ok(out)
}

/// True when mass may cross the given face of cell (ix, iy) outward.
fn face_open(grid: &Grid, ix: usize, iy: usize, side: Side) -> bool {
    let m = grid.m();
    match side {
        Side::Left if ix == 0 => grid.outer_face_open(ix, iy, side),
        Side::Right if ix + 1 == m => grid.outer_face_open(ix, iy, side),
        Side::Bottom if iy == 0 => grid.outer_face_open(ix, iy, side),
        Side::Top if iy + 1 == m => grid.outer_face_open(ix, iy, side),
        Side::Left => !grid.is_obstacle(ix - 1, iy),
        Side::Right => !grid.is_obstacle(ix + 1, iy),
        Side::Bottom => !grid.is_obstacle(ix, iy - 1),
        Side::Top => !grid.is_obstacle(ix, iy + 1),
    }
}

/// Zeroes wall-crossing velocity components. Returns the clamped field and
/// the blocked-mass diagnostic sum(rho * h * |U| dt) over blocked faces.
fn clamp_at_walls(
    grid: &Grid,
    velocity: &VectorField,
    rho: &[f64],
    dt: f64,
) -> (VectorField, f64) {
    let m = grid.m();
    let h = grid.h();
    let mut v = velocity.clone();
    let mut blocked = 0.0;
    for iy in 0..m {
        for ix in 0..m {
            let i = iy * m + ix;
            if grid.is_obstacle(ix, iy) {
                v.x[i] = 0.0;
                v.y[i] = 0.0;
                continue;
            }
            if v.x[i] > 0.0 && !face_open(grid, ix, iy, Side::Right) {
                blocked += rho[i] * h * (v.x[i] * dt);
                v.x[i] = 0.0;
            } else if v.x[i] < 0.0 && !face_open(grid, ix, iy, Side::Left) {
                blocked += rho[i] * h * (-v.x[i] * dt);
                v.x[i] = 0.0;
            }
            if v.y[i] > 0.0 && !face_open(grid, ix, iy, Side::Top) {
                blocked += rho[i] * h * (v.y[i] * dt);
                v.y[i] = 0.0;
            } else if v.y[i] < 0.0 && !face_open(grid, ix, iy, Side::Bottom) {
                blocked += rho[i] * h * (-v.y[i] * dt);
                v.y[i] = 0.0;
            }
        }
    }
    (v, blocked)
}

/// Advances the density one step. See the module docs for the scheme; the
/// returned report carries closed mass accounting
/// (mass_after + mass_exited = mass_before up to rounding).
pub fn push_forward_step(
    density: &DensityField,
    velocity: &VectorField,
    dt: f64,
    grid: &Grid,
) -> Result<(DensityField, StepReport), TransportError> {
    let m = grid.m();
    let h = grid.h();
    let h2 = h * h;
    for iy in 0..m {
        for ix in 0..m {
            let r = density.rho[iy * m + ix];
            if r < 0.0 {
                return Err(TransportError::NegativeDensity {
                    cell: (ix, iy),
                    value: r,
                });
            }
        }
    }
    let cfl_ratio = check_cfl(velocity, dt, grid);
    if cfl_ratio > 1.0 {
        return Err(TransportError::CflViolation { ratio: cfl_ratio });
    }

    let rho = &density.rho;
    let (v_eff, mass_blocked) = clamp_at_walls(grid, velocity, rho, dt);

    // Per-cell axis weights of the clamped field.
    let mut wx = vec![[0.0f64; 3]; m * m];
    let mut wy = vec![[0.0f64; 3]; m * m];
    for i in 0..m * m {
        wx[i] = axis_weights(v_eff.x[i], dt, h);
        wy[i] = axis_weights(v_eff.y[i], dt, h);
    }

    // Outflow through open boundary faces, accumulated source-major.
    let mut exited_boundary = 0.0;
    for iy in 0..m {
        for ix in 0..m {
            let i = iy * m + ix;
            if rho[i] == 0.0 {
                continue;
            }
            if ix > 0 && ix + 1 < m && iy > 0 && iy + 1 < m {
                continue;
            }
            for oy in -1i64..=1 {
                for ox in -1i64..=1 {
                    let tx = ix as i64 + ox;
                    let ty = iy as i64 + oy;
                    if tx < 0 || ty < 0 || tx >= m as i64 || ty >= m as i64 {
                        exited_boundary +=
                            rho[i] * wx[i][(ox + 1) as usize] * wy[i][(oy + 1) as usize];
                    }
                }
            }
        }
    }

    // Destination-major gather. The x-offsets are enumerated relative to the
    // sign bit of the destination's velocity so that mirror-image problems
    // accumulate their sums in exactly corresponding order.
    let mut out = DensityField::zeros(grid);
    let mut exited_targets: BTreeMap<u32, f64> = BTreeMap::new();
    let mut exited_target_total = 0.0;
    for iy in 0..m {
        for ix in 0..m {
            let i = iy * m + ix;
            if grid.is_obstacle(ix, iy) {
                continue;
            }
            let sxn: i64 = if v_eff.x[i].is_sign_negative() { -1 } else { 1 };
            let mut acc = 0.0f64;
            for oy in -1i64..=1 {
                for oxr in -1i64..=1 {
                    let ox = oxr * sxn;
                    let sx_ = ix as i64 - ox;
                    let sy_ = iy as i64 - oy;
                    if sx_ < 0 || sy_ < 0 || sx_ >= m as i64 || sy_ >= m as i64 {
                        continue;
                    }
                    let s = sy_ as usize * m + sx_ as usize;
                    if rho[s] == 0.0 {
                        continue;
                    }
                    acc += rho[s] * wx[s][(ox + 1) as usize] * wy[s][(oy + 1) as usize];
                }
            }
            // Mass of this cell aimed diagonally into an obstacle stays put.
            if rho[i] != 0.0 {
                for oy in -1i64..=1 {
                    for oxr in -1i64..=1 {
                        let ox = oxr * sxn;
                        let tx = ix as i64 + ox;
                        let ty = iy as i64 + oy;
                        if tx < 0 || ty < 0 || tx >= m as i64 || ty >= m as i64 {
                            continue;
                        }
                        if grid.is_obstacle(tx as usize, ty as usize) {
                            acc += rho[i] * wx[i][(ox + 1) as usize] * wy[i][(oy + 1) as usize];
                        }
                    }
                }
            }
            if let CellKind::Target { id, .. } = grid.kind(ix, iy) {
                if acc != 0.0 {
                    *exited_targets.entry(id).or_insert(0.0) += acc;
                    exited_target_total += acc;
                }
            } else {
                out.rho[i] = acc / h2;
            }
        }
    }

    let mass_before = density.total_mass(grid);
    let mass_after = out.total_mass(grid);
    let mass_exited = exited_target_total + exited_boundary;
    let report = StepReport {
        mass_before,
        mass_after,
        mass_exited,
        mass_blocked,
        max_density: out.max_density(),
        cfl_ratio,
        exited_by_target: exited_targets.into_iter().collect(),
    };
    debug_assert!(
        (report.mass_after + report.mass_exited - report.mass_before).abs()
            <= 1e-12 * report.mass_before.max(1e-300),
        "mass accounting broken: {} + {} vs {}",
        report.mass_after,
        report.mass_exited,
        report.mass_before
    );
    Ok((out, report))
}

fn van_der_corput(mut j: u64, base: u64) -> f64 {
    let mut r = 0.0;
    let mut f = 1.0 / base as f64;
    while j > 0 {
        r += (j % base) as f64 * f;
        j /= base;
        f /= base as f64;
    }
    r
}

/// Monte Carlo validation oracle for one transport step.
///
/// Samples `n_particles` positions from the density (proportional per-cell
/// allocation by largest remainder; low-discrepancy positions within each
/// cell, rotated by a seeded offset), advects each by the same
/// piecewise-constant clamped velocity, re-bins to cells and rescales to the
/// input mass. Particles landing in an obstacle cell stay at their source;
/// particles leaving the domain are dropped (their mass counts as exited).
/// Deterministic given the seed.
pub fn particle_oracle(
    density: &DensityField,
    velocity: &VectorField,
    dt: f64,
    grid: &Grid,
    n_particles: usize,
    seed: u64,
) -> Result<DensityField, TransportError> {
    assert!(n_particles >= 1);
    let m = grid.m();
    let h = grid.h();
    let total = density.total_mass(grid);
    if !(total > 0.0) {
        return Err(TransportError::ZeroMass);
    }
    let ratio = check_cfl(velocity, dt, grid);
    if ratio > 1.0 {
        return Err(TransportError::CflViolation { ratio });
    }
    let (v_eff, _) = clamp_at_walls(grid, velocity, &density.rho, dt);

    // Largest-remainder allocation of particles to cells.
    let h2 = h * h;
    let n = m * m;
    let mut counts = vec![0u64; n];
    let mut remainders: Vec<(f64, usize)> = Vec::new();
    let mut assigned: u64 = 0;
    for i in 0..n {
        if density.rho[i] <= 0.0 {
            continue;
        }
        let quota = n_particles as f64 * (density.rho[i] * h2) / total;
        let base = quota.floor();
        counts[i] = base as u64;
        assigned += base as u64;
        remainders.push((quota - base, i));
    }
    let mut leftover = (n_particles as u64).saturating_sub(assigned);
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut binned = vec![0u64; n];
    for iy in 0..m {
        for ix in 0..m {
            let i = iy * m + ix;
            let k = counts[i];
            if k == 0 {
                continue;
            }
            let shift: (f64, f64) = (rng.gen(), rng.gen());
            let vx = v_eff.x[i] * dt;
            let vy = v_eff.y[i] * dt;
            for j in 1..=k {
                let u1 = (van_der_corput(j, 2) + shift.0).fract();
                let u2 = (van_der_corput(j, 3) + shift.1).fract();
                let px = (ix as f64 + u1) * h + vx;
                let py = (iy as f64 + u2) * h + vy;
                let cx = (px / h).floor();
                let cy = (py / h).floor();
                if cx < 0.0 || cy < 0.0 || cx >= m as f64 || cy >= m as f64 {
                    continue; // left the domain
                }
                let (cx, cy) = (cx as usize, cy as usize);
                if grid.is_obstacle(cx, cy) {
                    binned[i] += 1;
                } else {
                    binned[cy * m + cx] += 1;
                }
            }
        }
    }

    let particle_mass = total / n_particles as f64;
    let mut out = DensityField::zeros(grid);
    for i in 0..n {
        out.rho[i] = binned[i] as f64 * particle_mass / h2;
    }
    Ok(out)
}
