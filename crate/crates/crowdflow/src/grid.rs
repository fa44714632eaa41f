//! Discretized walking area: uniform grid over the unit square.
//!
//! The domain [0,1]² is split into m×m square cells of edge h = 1/m. Cell
//! (ix, iy) has center ((ix+0.5)h, (iy+0.5)h), with iy increasing upward.
//! Obstacles are unions of whole cells; exits (targets) and inlets are runs
//! of cells along the outer boundary ring. Everything here is immutable
//! after construction.

use thiserror::Error;

/// Which wall of the unit square a boundary run lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Stable index used for per-wall tables.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

/// Inclusive rectangle of cell indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        CellRect { x0, y0, x1, y1 }
    }

    pub fn in_bounds(&self, m: usize) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1 && self.x1 < m && self.y1 < m
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (x0, x1, y0, y1) = (self.x0, self.x1, self.y0, self.y1);
        (y0..=y1).flat_map(move |iy| (x0..=x1).map(move |ix| (ix, iy)))
    }
}

/// Run of cells along one wall; `lo..=hi` indexes along the wall
/// (y-range for Left/Right, x-range for Bottom/Top).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryRun {
    pub id: u32,
    pub side: Side,
    pub lo: usize,
    pub hi: usize,
}

impl BoundaryRun {
    pub fn in_bounds(&self, m: usize) -> bool {
        self.lo <= self.hi && self.hi < m
    }

    pub fn cells(&self, m: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (side, lo, hi) = (self.side, self.lo, self.hi);
        (lo..=hi).map(move |k| match side {
            Side::Left => (0, k),
            Side::Right => (m - 1, k),
            Side::Bottom => (k, 0),
            Side::Top => (k, m - 1),
        })
    }
}

/// Classification of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Free,
    Obstacle(u32),
    /// Exit cell: absorbs mass, Dirichlet face for the potential solve.
    Target { id: u32, side: Side },
    /// Inflow cell: open outer face, mass may be injected here.
    Inlet { population: u32, side: Side },
}

impl CellKind {
    fn describe(&self) -> String {
        match self {
            CellKind::Free => "free".to_string(),
            CellKind::Obstacle(id) => format!("obstacle {id}"),
            CellKind::Target { id, .. } => format!("target {id}"),
            CellKind::Inlet { population, .. } => format!("inlet for population {population}"),
        }
    }
}

/// Visibility neighborhood parameters: radius R, half-angle, and whether the
/// neighborhood is the forward half-ball/sector or the full ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborhoodSpec {
    pub radius: f64,
    pub theta_max: f64,
    pub anisotropic: bool,
}

impl NeighborhoodSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius > 0.0) {
            return Err("neighborhood radius must be positive".into());
        }
        if !(self.theta_max > 0.0 && self.theta_max <= std::f64::consts::FRAC_PI_2) {
            return Err("theta_max must lie in (0, pi/2]".into());
        }
        Ok(())
    }

    /// cos(theta_max), with the half-ball case pinned to exactly 0 so that
    /// cells orthogonal to the facing direction stay inside the neighborhood.
    #[inline]
    pub fn cos_theta(&self) -> f64 {
        if self.theta_max == std::f64::consts::FRAC_PI_2 {
            0.0
        } else {
            self.theta_max.cos()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("grid size m = {m} is too small (need m >= 4)")]
    GridTooSmall { m: usize },
    #[error("{what} lies outside the {m}x{m} grid")]
    OutOfBounds { what: String, m: usize },
    #[error("cell {cell:?} claimed by both {first} and {second}")]
    OverlapConflict {
        cell: (usize, usize),
        first: String,
        second: String,
    },
    #[error("no free 4-connected path from cell {from:?} to any target")]
    DisconnectedDomain { from: (usize, usize) },
    #[error("grid has no free cells")]
    NoFreeCells,
}

/// Uniform m×m grid with per-cell kind labels.
#[derive(Clone, Debug)]
pub struct Grid {
    m: usize,
    h: f64,
    kind: Vec<CellKind>,
    obstacles: Vec<CellRect>,
    targets: Vec<BoundaryRun>,
    inlets: Vec<BoundaryRun>,
}

impl Grid {
    /// Builds the grid and assigns cell kinds. Obstacles must be
    /// cell-aligned rectangles; targets and inlets are boundary runs. Every
    /// cell may be claimed at most once, and when targets exist each inlet
    /// must have a 4-connected walkable path to some target.
    pub fn build(
        m: usize,
        obstacles: &[CellRect],
        targets: &[BoundaryRun],
        inlets: &[BoundaryRun],
    ) -> Result<Grid, GeometryError> {
        if m < 4 {
            return Err(GeometryError::GridTooSmall { m });
        }
        let mut kind = vec![CellKind::Free; m * m];
        let claim = |cells: &mut Vec<CellKind>,
                         cell: (usize, usize),
                         new: CellKind|
         -> Result<(), GeometryError> {
            let idx = cell.1 * m + cell.0;
            match cells[idx] {
                CellKind::Free => {
                    cells[idx] = new;
                    Ok(())
                }
                old => Err(GeometryError::OverlapConflict {
                    cell,
                    first: old.describe(),
                    second: new.describe(),
                }),
            }
        };

        for (k, rect) in obstacles.iter().enumerate() {
            if !rect.in_bounds(m) {
                return Err(GeometryError::OutOfBounds {
                    what: format!("obstacle {k}"),
                    m,
                });
            }
            for cell in rect.cells() {
                claim(&mut kind, cell, CellKind::Obstacle(k as u32))?;
            }
        }
        for run in targets {
            if !run.in_bounds(m) {
                return Err(GeometryError::OutOfBounds {
                    what: format!("target {}", run.id),
                    m,
                });
            }
            for cell in run.cells(m) {
                claim(
                    &mut kind,
                    cell,
                    CellKind::Target {
                        id: run.id,
                        side: run.side,
                    },
                )?;
            }
        }
        for run in inlets {
            if !run.in_bounds(m) {
                return Err(GeometryError::OutOfBounds {
                    what: format!("inlet for population {}", run.id),
                    m,
                });
            }
            for cell in run.cells(m) {
                claim(
                    &mut kind,
                    cell,
                    CellKind::Inlet {
                        population: run.id,
                        side: run.side,
                    },
                )?;
            }
        }

        let grid = Grid {
            m,
            h: 1.0 / m as f64,
            kind,
            obstacles: obstacles.to_vec(),
            targets: targets.to_vec(),
            inlets: inlets.to_vec(),
        };
        if !grid.kind.iter().any(|k| matches!(k, CellKind::Free)) {
            return Err(GeometryError::NoFreeCells);
        }
        if !targets.is_empty() {
            let sources: Vec<(usize, usize)> = inlets
                .iter()
                .flat_map(|run| run.cells(m).collect::<Vec<_>>())
                .collect();
            grid.check_paths_to_targets(sources.iter().copied())?;
        }
        Ok(grid)
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Cell edge length, always 1/m.
    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.m && iy < self.m);
        iy * self.m + ix
    }

    #[inline]
    pub fn kind(&self, ix: usize, iy: usize) -> CellKind {
        self.kind[self.idx(ix, iy)]
    }

    #[inline]
    pub fn is_obstacle(&self, ix: usize, iy: usize) -> bool {
        matches!(self.kind(ix, iy), CellKind::Obstacle(_))
    }

    /// Walkable = anything mass can occupy or traverse (free, target, inlet).
    #[inline]
    pub fn is_walkable(&self, ix: usize, iy: usize) -> bool {
        !self.is_obstacle(ix, iy)
    }

    #[inline]
    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        ((ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h)
    }

    pub fn obstacles(&self) -> &[CellRect] {
        &self.obstacles
    }

    pub fn targets(&self) -> &[BoundaryRun] {
        &self.targets
    }

    pub fn inlets(&self) -> &[BoundaryRun] {
        &self.inlets
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.m;
        (0..m).flat_map(move |iy| (0..m).map(move |ix| (ix, iy)))
    }

    /// True if the outer face of cell (ix, iy) on `side` lets mass leave the
    /// domain (target and inlet cells have an open face on their own wall).
    pub fn outer_face_open(&self, ix: usize, iy: usize, side: Side) -> bool {
        match self.kind(ix, iy) {
            CellKind::Target { side: s, .. } | CellKind::Inlet { side: s, .. } => s == side,
            _ => false,
        }
    }

    /// BFS over walkable cells with 4-connectivity; every source must reach
    /// some target cell. Used both at build time (inlets) and by the engine
    /// for initial-mass placements.
    pub fn check_paths_to_targets(
        &self,
        sources: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(), GeometryError> {
        let m = self.m;
        // Flood from all target cells, then test sources against the marks.
        let mut reach = vec![false; m * m];
        let mut queue = std::collections::VecDeque::new();
        for (ix, iy) in self.cells() {
            if matches!(self.kind(ix, iy), CellKind::Target { .. }) {
                reach[self.idx(ix, iy)] = true;
                queue.push_back((ix, iy));
            }
        }
        while let Some((ix, iy)) = queue.pop_front() {
            let visit = |nx: usize, ny: usize, reach: &mut Vec<bool>, q: &mut std::collections::VecDeque<(usize, usize)>| {
                let idx = self.idx(nx, ny);
                if !reach[idx] && self.is_walkable(nx, ny) {
                    reach[idx] = true;
                    q.push_back((nx, ny));
                }
            };
            if ix > 0 {
                visit(ix - 1, iy, &mut reach, &mut queue);
            }
            if ix + 1 < m {
                visit(ix + 1, iy, &mut reach, &mut queue);
            }
            if iy > 0 {
                visit(ix, iy - 1, &mut reach, &mut queue);
            }
            if iy + 1 < m {
                visit(ix, iy + 1, &mut reach, &mut queue);
            }
        }
        for (ix, iy) in sources {
            if !reach[self.idx(ix, iy)] {
                return Err(GeometryError::DisconnectedDomain { from: (ix, iy) });
            }
        }
        Ok(())
    }
}

/// Enumerates the cells of the visibility neighborhood of `center`.
///
/// Membership is decided by the cell-center test: a cell at signed offset
/// (dx, dy) belongs to the neighborhood when 0 < |(dx,dy)|·h <= R and, for
/// anisotropic specs, (dx,dy)·direction >= |(dx,dy)|·cos(theta_max).
/// Boundary ties of the sector test are included. Returned coordinates may
/// lie outside the grid (ghost cells beyond the walls); the weight is the
/// full cell area h².
///
/// Enumeration order is deterministic: rows by dy ascending, within a row by
/// dx ascending when direction.x >= 0 and descending otherwise. Mirror-image
/// inputs therefore enumerate mirror-image cells in the same sequence.
pub fn neighborhood_cells(
    grid: &Grid,
    center: (usize, usize),
    direction: [f64; 2],
    spec: &NeighborhoodSpec,
) -> Vec<((i64, i64), f64)> {
    debug_assert!(grid.is_walkable(center.0, center.1));
    let h = grid.h();
    let r2 = spec.radius * spec.radius;
    let reach = (spec.radius / h).ceil() as i64;
    let cos_theta = spec.cos_theta();
    let sx: i64 = if spec.anisotropic && direction[0] < 0.0 {
        -1
    } else {
        1
    };
    let weight = h * h;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for step in -reach..=reach {
            let dx = step * sx;
            if dx == 0 && dy == 0 {
                continue;
            }
            let d2 = ((dx * dx + dy * dy) as f64) * (h * h);
            if d2 > r2 {
                continue;
            }
            if spec.anisotropic {
                let dot = (dx as f64) * h * direction[0] + (dy as f64) * h * direction[1];
                if dot < d2.sqrt() * cos_theta {
                    continue;
                }
            }
            out.push((
                (center.0 as i64 + dx, center.1 as i64 + dy),
                weight,
            ));
        }
    }
    out
}
