//! The robot-frame view: visibility square, fence, atomic safe sets and
//! per-step sensing.

use std::f64::consts::PI;

use crate::dubins::DubinsParams;
use crate::error::{Error, Result};
use crate::grid::{CellId, GridSpec, InputGrid, SNAP};
use crate::shield::AtomicSpecId;
use crate::stateset::StateSet;

use super::world::{Rect, WorldMap};

/// Where the robot frame is anchored each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameAlignment {
    /// At the grid point of the global lattice `η_x Z × η_y Z` nearest to the
    /// robot, so cells cover the same ground every step and obstacles are
    /// over-approximated the same way from one step to the next.
    #[default]
    Lattice,
    /// Exactly at the robot's position.
    Exact,
}

/// Visibility and shield-grid configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingConfig {
    pub d: f64,
    pub epsilon: f64,
    /// Grid over `[-d-ε, d+ε]² × [-π, π)` in the robot frame.
    pub grid: GridSpec,
    pub inputs: InputGrid,
    pub params: DubinsParams,
    pub alignment: FrameAlignment,
}

impl SensingConfig {
    /// The shield grid uses the coarsest tiling with widths at most
    /// `state_eta`; inputs are the grid over `[-0.4, 0.4] × [-4, 4]`.
    pub fn new(d: f64, epsilon: f64, state_eta: [f64; 3], input_eta: [f64; 2], params: DubinsParams) -> Result<Self> {
        let r = d + epsilon;
        let grid = GridSpec::with_max_eta(vec![-r, -r, -PI], vec![r, r, PI], &state_eta, vec![false, false, true])?;
        let inputs = InputGrid::from_box(&[-0.4, -4.0], &[0.4, 4.0], &input_eta)?;
        Self::from_parts(d, epsilon, grid, inputs, params)
    }

    pub fn from_parts(d: f64, epsilon: f64, grid: GridSpec, inputs: InputGrid, params: DubinsParams) -> Result<Self> {
        if !(d > 0.0 && epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("need d > 0 and epsilon > 0, got d = {d}, epsilon = {epsilon}")));
        }
        let v_max = inputs.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        let w = params.disturbance().radius();
        let step = v_max * params.tau() + w[0].max(w[1]);
        if step >= epsilon {
            return Err(Error::InvalidConfig(format!(
                "fence thickness {epsilon} does not exceed the per-step displacement bound {step}"
            )));
        }
        let cfg = Self { d, epsilon, grid, inputs, params, alignment: FrameAlignment::default() };
        cfg.check_grid()?;
        Ok(cfg)
    }

    fn check_grid(&self) -> Result<()> {
        let g = &self.grid;
        let r = self.d + self.epsilon;
        let tol = 1e-9 * r;
        let ok = g.dims() == 3
            && !g.periodic()[0]
            && !g.periodic()[1]
            && g.periodic()[2]
            && (0..2).all(|k| (g.lower()[k] + r).abs() < tol && (g.upper()[k] - r).abs() < tol);
        if !ok {
            return Err(Error::GridMismatch(format!("shield grid must cover [-{r}, {r}]² × periodic heading")));
        }
        Ok(())
    }

    pub fn with_alignment(mut self, alignment: FrameAlignment) -> Self {
        self.alignment = alignment;
        self
    }

    /// Global position of the robot frame's origin for a robot at `(x, y)`.
    pub fn frame_origin(&self, x: f64, y: f64) -> (f64, f64) {
        match self.alignment {
            FrameAlignment::Exact => (x, y),
            FrameAlignment::Lattice => {
                let (ex, ey) = (self.grid.eta()[0], self.grid.eta()[1]);
                ((x / ex).round() * ex, (y / ey).round() * ey)
            }
        }
    }

    /// The robot's cell in its own frame.
    pub fn robot_cell(&self, pose: [f64; 3]) -> Result<CellId> {
        let (ox, oy) = self.frame_origin(pose[0], pose[1]);
        self.grid.quantize(&[pose[0] - ox, pose[1] - oy, pose[2]])
    }

    /// Largest forward or backward speed on the input grid.
    pub fn max_speed(&self) -> f64 {
        self.inputs.iter().map(|p| p[0].abs()).fold(0.0, f64::max)
    }
}

/// Which X-Y columns of the shield grid are fence and which atomic id
/// guards each interior column. Id 0 is the fence-only specification.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicLayout {
    nx: usize,
    ny: usize,
    ntheta: usize,
    fence: Vec<bool>,
    /// Column of atomic id `k` is `columns[k - 1]`.
    columns: Vec<usize>,
    ids: Vec<Option<AtomicSpecId>>,
    fence_cells: StateSet,
}

impl AtomicLayout {
    pub fn new(grid: &GridSpec, d: f64) -> Result<Self> {
        if grid.dims() != 3 || !grid.periodic()[2] {
            return Err(Error::GridMismatch("atomic layout needs an (x, y, periodic heading) grid".into()));
        }
        let (nx, ny, ntheta) = (grid.counts()[0], grid.counts()[1], grid.counts()[2]);
        let inside = |dim: usize, i: usize| {
            let iv = grid.axis_interval(dim, i);
            let tol = SNAP * grid.eta()[dim];
            iv.lo >= -d - tol && iv.hi <= d + tol
        };
        let mut fence = vec![false; nx * ny];
        let mut ids = vec![None; nx * ny];
        let mut columns = Vec::new();
        let mut fence_cells = StateSet::empty(grid.total());
        for i in 0..nx {
            for j in 0..ny {
                let c = i * ny + j;
                if inside(0, i) && inside(1, j) {
                    columns.push(c);
                    ids[c] = Some(AtomicSpecId(columns.len()));
                } else {
                    fence[c] = true;
                    fence_cells.insert_range(c * ntheta, ntheta);
                }
            }
        }
        if columns.is_empty() {
            return Err(Error::GridMismatch("no grid column lies inside the visible square".into()));
        }
        Ok(Self { nx, ny, ntheta, fence, columns, ids, fence_cells })
    }

    /// Number of atomic ids, the fence-only one included.
    pub fn len(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interior_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn fence_columns(&self) -> usize {
        self.fence.iter().filter(|&&f| f).count()
    }

    pub fn is_fence(&self, i: usize, j: usize) -> bool {
        self.fence[i * self.ny + j]
    }

    pub fn id_of(&self, i: usize, j: usize) -> Option<AtomicSpecId> {
        self.ids[i * self.ny + j]
    }

    /// Column `(i, j)` guarded by an interior atomic id.
    pub fn column_of(&self, id: AtomicSpecId) -> Option<(usize, usize)> {
        let c = *self.columns.get(id.0.checked_sub(1)?)?;
        Some((c / self.ny, c % self.ny))
    }

    pub fn fence_cells(&self) -> &StateSet {
        &self.fence_cells
    }

    /// Universe minus the fence and, for interior ids, minus the column.
    pub fn safe_set(&self, id: AtomicSpecId) -> Result<StateSet> {
        let mut safe = self.fence_cells.complement();
        if id.0 > 0 {
            let (i, j) = self.column_of(id).ok_or(Error::UnknownAtomic(id.0))?;
            let c = i * self.ny + j;
            let mut col = StateSet::empty(safe.universe());
            col.insert_range(c * self.ntheta, self.ntheta);
            safe.difference_with(&col);
        }
        Ok(safe)
    }

    pub fn safe_sets(&self) -> Vec<StateSet> {
        (0..self.len()).map(|k| self.safe_set(AtomicSpecId(k)).expect("id in range")).collect()
    }

    pub fn grid_shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.ntheta)
    }
}

/// One atomic safe set per interior X-Y column plus the fence-only set at
/// index 0.
pub fn make_atomics(grid: &GridSpec, d: f64, epsilon: f64) -> Result<Vec<StateSet>> {
    let r = d + epsilon;
    let tol = 1e-9 * r;
    if grid.dims() != 3 || (0..2).any(|k| (grid.lower()[k] + r).abs() > tol || (grid.upper()[k] - r).abs() > tol) {
        return Err(Error::GridMismatch(format!("grid does not cover [-{r}, {r}]² in x and y")));
    }
    Ok(AtomicLayout::new(grid, d)?.safe_sets())
}

/// What the robot sees from one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleSnapshot {
    /// Always starts with the fence-only id 0, then unsafe columns in id order.
    pub active: Vec<AtomicSpecId>,
}

impl VisibleSnapshot {
    /// Number of obstacle columns seen.
    pub fn unsafe_columns(&self) -> usize {
        self.active.len() - 1
    }
}

/// Translates the world into the robot frame and marks every interior
/// column that touches an obstacle or leaves the world bounds.
pub fn sense(world: &WorldMap, pose: [f64; 3], cfg: &SensingConfig, layout: &AtomicLayout) -> VisibleSnapshot {
    let (px, py) = cfg.frame_origin(pose[0], pose[1]);
    let shift = |r: &Rect| Rect { x0: r.x0 - px, y0: r.y0 - py, x1: r.x1 - px, y1: r.y1 - py };
    let bounds = shift(&world.bounds);
    let view = Rect { x0: -cfg.d, y0: -cfg.d, x1: cfg.d, y1: cfg.d };
    let obstacles: Vec<Rect> = world.obstacles.iter().map(shift).filter(|o| o.intersects(&view)).collect();
    let mut active = vec![AtomicSpecId(0)];
    for k in 1..layout.len() {
        let id = AtomicSpecId(k);
        let (i, j) = layout.column_of(id).expect("interior id");
        let xi = cfg.grid.axis_interval(0, i);
        let yj = cfg.grid.axis_interval(1, j);
        let cell = Rect { x0: xi.lo, y0: yj.lo, x1: xi.hi, y1: yj.hi };
        if !bounds.contains_rect(&cell) || obstacles.iter().any(|o| o.intersects(&cell)) {
            active.push(id);
        }
    }
    VisibleSnapshot { active }
}
