//! Obstacle worlds: text format and seeded random generation.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Axis-aligned closed rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidConfig(format!("degenerate rectangle ({x0}, {y0}, {x1}, {y1})")));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x <= self.x1 && self.y0 <= y && y <= self.y1
    }

    /// Closed intersection: touching rectangles intersect.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x0 <= other.x0 && other.x1 <= self.x1 && self.y0 <= other.y0 && other.y1 <= self.y1
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 - x).max(0.0).max(x - self.x1);
        let dy = (self.y0 - y).max(0.0).max(y - self.y1);
        dx.hypot(dy)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// A static obstacle world. Everything outside `bounds` counts as obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub bounds: Rect,
    pub obstacles: Vec<Rect>,
    pub goal: Rect,
    /// `(x, y, theta)`
    pub start: [f64; 3],
}

impl WorldMap {
    pub fn new(bounds: Rect, obstacles: Vec<Rect>, goal: Rect, start: [f64; 3]) -> Result<Self> {
        let world = Self { bounds, obstacles, goal, start };
        if world.collides(start[0], start[1]) {
            return Err(Error::InvalidConfig("start pose lies in an obstacle or outside the bounds".into()));
        }
        if !bounds.contains_rect(&goal) {
            return Err(Error::InvalidConfig("goal must lie inside the bounds".into()));
        }
        Ok(world)
    }

    /// Is the point inside an obstacle or outside the world?
    pub fn collides(&self, x: f64, y: f64) -> bool {
        !self.bounds.contains(x, y) || self.obstacles.iter().any(|o| o.contains(x, y))
    }

    /// Does the rectangle meet an obstacle or leave the world?
    pub fn blocked(&self, r: &Rect) -> bool {
        !self.bounds.contains_rect(r) || self.obstacles.iter().any(|o| o.intersects(r))
    }

    /// Distance to the nearest obstacle or world boundary.
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        let walls = (x - self.bounds.x0).min(self.bounds.x1 - x).min(y - self.bounds.y0).min(self.bounds.y1 - y);
        self.obstacles.iter().map(|o| o.distance(x, y)).fold(walls, f64::min)
    }
}

fn fmt_rect(f: &mut fmt::Formatter<'_>, tag: &str, r: &Rect) -> fmt::Result {
    writeln!(f, "{tag} {} {} {} {}", r.x0, r.y0, r.x1, r.y1)
}

impl fmt::Display for WorldMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_rect(f, "bounds", &self.bounds)?;
        for o in &self.obstacles {
            fmt_rect(f, "obstacle", o)?;
        }
        fmt_rect(f, "goal", &self.goal)?;
        writeln!(f, "start {} {} {}", self.start[0], self.start[1], self.start[2])
    }
}

impl FromStr for WorldMap {
    type Err = Error;

    /// One record per line: `bounds x0 y0 x1 y1`, `obstacle x0 y0 x1 y1`,
    /// `goal x0 y0 x1 y1`, `start x y theta`. Blank lines and `#` comments
    /// are ignored.
    fn from_str(s: &str) -> Result<Self> {
        let (mut bounds, mut goal, mut start) = (None, None, None);
        let mut obstacles = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let mut fields = text.split_whitespace();
            let tag = fields.next().unwrap_or_default();
            let nums = fields
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("bad number `{t}`") }))
                .collect::<Result<Vec<_>>>()?;
            let arity = if tag == "start" { 3 } else { 4 };
            if nums.len() != arity {
                return Err(Error::Parse { line, message: format!("`{tag}` takes {arity} numbers, got {}", nums.len()) });
            }
            let rect = || Rect::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| Error::Parse { line, message: e.to_string() });
            match tag {
                "bounds" => bounds = Some(rect()?),
                "obstacle" => obstacles.push(rect()?),
                "goal" => goal = Some(rect()?),
                "start" => start = Some([nums[0], nums[1], nums[2]]),
                other => return Err(Error::Parse { line, message: format!("unknown record `{other}`") }),
            }
        }
        let missing = |what: &str| Error::Parse { line: s.lines().count(), message: format!("missing `{what}` record") };
        Self::new(
            bounds.ok_or_else(|| missing("bounds"))?,
            obstacles,
            goal.ok_or_else(|| missing("goal"))?,
            start.ok_or_else(|| missing("start"))?,
        )
    }
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    /// Side length of the square world `[0, size]²`.
    pub size: f64,
    pub obstacle_count: (usize, usize),
    /// Range of obstacle side lengths.
    pub obstacle_side: (f64, f64),
    /// Minimum distance from start and goal center to any obstacle or wall.
    pub min_clearance: f64,
    pub min_start_goal_distance: f64,
    pub goal_half_width: f64,
    /// Cell size of the connectivity check.
    pub corridor_cell: f64,
    /// Required free corridor width, in cells.
    pub corridor_width: usize,
    pub max_attempts: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            size: 5.0,
            obstacle_count: (4, 9),
            obstacle_side: (0.3, 1.0),
            min_clearance: 0.5,
            min_start_goal_distance: 2.5,
            goal_half_width: 0.2,
            corridor_cell: 0.1,
            corridor_width: 3,
            max_attempts: 1000,
        }
    }
}

/// Is there a path of corridor-wide free cells from start to goal?
fn connected(world: &WorldMap, cell: f64, width: usize) -> bool {
    let b = world.bounds;
    let nx = ((b.x1 - b.x0) / cell).floor() as usize;
    let ny = ((b.y1 - b.y0) / cell).floor() as usize;
    if nx == 0 || ny == 0 {
        return false;
    }
    let free: Vec<bool> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k / ny, k % ny);
            let r = Rect { x0: b.x0 + i as f64 * cell, y0: b.y0 + j as f64 * cell, x1: b.x0 + (i + 1) as f64 * cell, y1: b.y0 + (j + 1) as f64 * cell };
            !world.obstacles.iter().any(|o| o.intersects(&r))
        })
        .collect();
    // A cell is passable when the width×width block around it is free.
    let half = (width / 2) as isize;
    let passable = |i: usize, j: usize| {
        (-half..=half).all(|di| {
            (-half..=half).all(|dj| {
                let (a, c) = (i as isize + di, j as isize + dj);
                a >= 0 && c >= 0 && (a as usize) < nx && (c as usize) < ny && free[a as usize * ny + c as usize]
            })
        })
    };
    let locate = |x: f64, y: f64| {
        let i = (((x - b.x0) / cell) as usize).min(nx - 1);
        let j = (((y - b.y0) / cell) as usize).min(ny - 1);
        (i, j)
    };
    let start = locate(world.start[0], world.start[1]);
    let (gx, gy) = world.goal.center();
    let goal = locate(gx, gy);
    if !passable(start.0, start.1) || !passable(goal.0, goal.1) {
        return false;
    }
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([start]);
    seen[start.0 * ny + start.1] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == goal {
            return true;
        }
        let neighbours = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
        for (a, c) in neighbours {
            if a < nx && c < ny && !seen[a * ny + c] && passable(a, c) {
                seen[a * ny + c] = true;
                queue.push_back((a, c));
            }
        }
    }
    false
}

/// Rejection-samples a world with clear start and goal and a wide corridor
/// between them. Deterministic per seed.
pub fn random_world(seed: u64, params: &WorldParams) -> Result<WorldMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = params.size;
    let bounds = Rect::new(0.0, 0.0, s, s)?;
    let margin = params.min_clearance.max(params.goal_half_width);
    if 2.0 * margin >= s {
        return Err(Error::InvalidConfig("world too small for the requested clearance".into()));
    }
    for _ in 0..params.max_attempts {
        let start = [
            rng.gen_range(margin..s - margin),
            rng.gen_range(margin..s - margin),
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        ];
        let (gx, gy) = (rng.gen_range(margin..s - margin), rng.gen_range(margin..s - margin));
        if (gx - start[0]).hypot(gy - start[1]) < params.min_start_goal_distance {
            continue;
        }
        let h = params.goal_half_width;
        let goal = Rect::new(gx - h, gy - h, gx + h, gy + h)?;
        let (lo, hi) = params.obstacle_count;
        let count = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let obstacles = (0..count)
            .map(|_| {
                let (a, b) = params.obstacle_side;
                let w = if b > a { rng.gen_range(a..b) } else { a };
                let hgt = if b > a { rng.gen_range(a..b) } else { a };
                let x0 = rng.gen_range(0.0..s - w);
                let y0 = rng.gen_range(0.0..s - hgt);
                Rect { x0, y0, x1: x0 + w, y1: y0 + hgt }
            })
            .collect::<Vec<_>>();
        let world = WorldMap { bounds, obstacles, goal, start };
        if world.clearance(start[0], start[1]) < params.min_clearance
            || world.clearance(gx, gy) < params.min_clearance
            || world.obstacles.iter().any(|o| o.intersects(&goal))
        {
            continue;
        }
        if count > 0 && !connected(&world, params.corridor_cell, params.corridor_width) {
            continue;
        }
        return Ok(world);
    }
    Err(Error::GenerationFailed { attempts: params.max_attempts })
}
