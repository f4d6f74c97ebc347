//! Uniform hyper-rectangular grids over state and input boxes.
//!
//! Cells are half-open, `[lo + k*eta, lo + (k+1)*eta)`, except that the top
//! face of a non-periodic dimension belongs to the last cell so quantization
//! is total on the closed box. Periodic dimensions wrap on `[lower, upper)`.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance, in cell units, under which a coordinate is considered to sit
/// exactly on a grid line. Absorbs the rounding of `lo + k*eta`.
pub const SNAP: f64 = 1e-9;

/// Index of the cell whose half-open interval contains the coordinate `q`
/// (expressed in cell units from the lower bound).
#[inline]
pub(crate) fn lower_index(q: f64) -> i64 {
    let n = q.round();
    if (q - n).abs() < SNAP {
        n as i64
    } else {
        q.floor() as i64
    }
}

/// Index of the last cell intersecting a half-open range that ends at `q`.
#[inline]
pub(crate) fn upper_index(q: f64) -> i64 {
    let n = q.round();
    if (q - n).abs() < SNAP {
        n as i64 - 1
    } else {
        q.floor() as i64
    }
}

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Axis-aligned box, one interval per dimension.
pub type IntervalBox = Vec<Interval>;

/// Flat index of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub u32);

impl CellId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Uniform partition of a box into `counts[0] * ... * counts[d-1]` cells,
/// flattened in row-major order (the last dimension is contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    eta: Vec<f64>,
    periodic: Vec<bool>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl GridSpec {
    /// Builds a grid whose cell widths tile the box exactly.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, eta: Vec<f64>, periodic: Vec<bool>) -> Result<Self> {
        let dims = lower.len();
        if dims == 0 {
            return Err(Error::GridMismatch("grid needs at least one dimension".into()));
        }
        if upper.len() != dims || eta.len() != dims || periodic.len() != dims {
            return Err(Error::GridMismatch(format!(
                "dimension vectors disagree: lower {}, upper {}, eta {}, periodic {}",
                dims,
                upper.len(),
                eta.len(),
                periodic.len()
            )));
        }
        let mut counts = Vec::with_capacity(dims);
        for i in 0..dims {
            let extent = upper[i] - lower[i];
            if !(extent > 0.0) || !extent.is_finite() {
                return Err(Error::GridMismatch(format!("dimension {i}: upper must exceed lower")));
            }
            if !(eta[i] > 0.0) {
                return Err(Error::GridMismatch(format!("dimension {i}: eta must be positive")));
            }
            let n = (extent / eta[i]).round();
            if n < 1.0 || (n * eta[i] - extent).abs() > 1e-9 * extent {
                return Err(Error::GridMismatch(format!(
                    "dimension {i}: eta {} does not tile [{}, {}]",
                    eta[i], lower[i], upper[i]
                )));
            }
            counts.push(n as usize);
        }
        let mut strides = vec![1usize; dims];
        let mut total: usize = 1;
        for i in (0..dims).rev() {
            strides[i] = total;
            total = total
                .checked_mul(counts[i])
                .filter(|&t| t <= u32::MAX as usize)
                .ok_or_else(|| Error::GridMismatch("cell count exceeds the flat index range".into()))?;
        }
        Ok(Self { lower, upper, eta, periodic, counts, strides, total })
    }

    /// Builds the grid with the fewest cells per dimension whose width does
    /// not exceed `max_eta`. Exact tilings keep their nominal width.
    pub fn with_max_eta(lower: Vec<f64>, upper: Vec<f64>, max_eta: &[f64], periodic: Vec<bool>) -> Result<Self> {
        if max_eta.len() != lower.len() || upper.len() != lower.len() {
            return Err(Error::GridMismatch("dimension vectors disagree".into()));
        }
        let eta = lower
            .iter()
            .zip(&upper)
            .zip(max_eta)
            .map(|((lo, hi), &e)| {
                let extent = hi - lo;
                let n = (extent / e - SNAP).ceil().max(1.0);
                extent / n
            })
            .collect();
        Self::new(lower, upper, eta, periodic)
    }

    /// A one-dimensional grid `[0, n)` with unit cells. Used to host
    /// abstract systems that have no geometric meaning.
    pub fn line(n: usize) -> Result<Self> {
        Self::new(vec![0.0], vec![n as f64], vec![1.0], vec![false])
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn multi(&self, cell: CellId) -> Vec<usize> {
        let mut rest = cell.index();
        self.strides
            .iter()
            .map(|&s| {
                let m = rest / s;
                rest %= s;
                m
            })
            .collect()
    }

    pub fn flat(&self, multi: &[usize]) -> Result<CellId> {
        if multi.len() != self.dims() {
            return Err(Error::GridMismatch(format!("expected {} indices, got {}", self.dims(), multi.len())));
        }
        let mut flat = 0;
        for (i, (&m, &n)) in multi.iter().zip(&self.counts).enumerate() {
            if m >= n {
                return Err(Error::GridMismatch(format!("index {m} out of range in dimension {i}")));
            }
            flat += m * self.strides[i];
        }
        Ok(CellId(flat as u32))
    }

    /// Wraps a coordinate of a periodic dimension into `[lower, upper)`.
    pub fn wrap(&self, dim: usize, x: f64) -> f64 {
        let extent = self.upper[dim] - self.lower[dim];
        let w = self.lower[dim] + (x - self.lower[dim]).rem_euclid(extent);
        if w >= self.upper[dim] {
            self.lower[dim]
        } else {
            w
        }
    }

    /// Index of the cell containing `x` along one dimension.
    pub fn axis_index(&self, dim: usize, x: f64) -> Option<usize> {
        if !x.is_finite() {
            return None;
        }
        let n = self.counts[dim] as i64;
        if self.periodic[dim] {
            let x = self.wrap(dim, x);
            let idx = lower_index((x - self.lower[dim]) / self.eta[dim]);
            Some(idx.rem_euclid(n) as usize)
        } else {
            if x < self.lower[dim] || x > self.upper[dim] {
                return None;
            }
            let idx = lower_index((x - self.lower[dim]) / self.eta[dim]);
            Some(idx.clamp(0, n - 1) as usize)
        }
    }

    /// The quantizer: maps a point of the box to the unique cell containing it.
    pub fn quantize(&self, point: &[f64]) -> Result<CellId> {
        if point.len() != self.dims() {
            return Err(Error::GridMismatch(format!("expected a {}-d point, got {}", self.dims(), point.len())));
        }
        let mut flat = 0;
        for (dim, &x) in point.iter().enumerate() {
            let idx = self
                .axis_index(dim, x)
                .ok_or_else(|| Error::PointOutOfDomain { point: point.to_vec(), dim })?;
            flat += idx * self.strides[dim];
        }
        Ok(CellId(flat as u32))
    }

    pub fn axis_interval(&self, dim: usize, idx: usize) -> Interval {
        let lo = self.lower[dim] + idx as f64 * self.eta[dim];
        let hi = if idx + 1 == self.counts[dim] {
            self.upper[dim]
        } else {
            self.lower[dim] + (idx + 1) as f64 * self.eta[dim]
        };
        Interval::new(lo, hi)
    }

    pub fn cell_box(&self, cell: CellId) -> IntervalBox {
        self.multi(cell)
            .into_iter()
            .enumerate()
            .map(|(dim, m)| self.axis_interval(dim, m))
            .collect()
    }

    pub fn cell_center(&self, cell: CellId) -> Vec<f64> {
        self.cell_box(cell).iter().map(Interval::center).collect()
    }
}

/// Finite, ordered set of input vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrid {
    dim: usize,
    coords: Vec<f64>,
}

impl InputGrid {
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidConfig("input grid must have at least one point of positive dimension".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidConfig("input points have inconsistent dimension".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(Error::InvalidConfig(format!("duplicate input point {p:?}")));
            }
        }
        Ok(Self { dim, coords: points.concat() })
    }

    /// Cartesian product of per-dimension value lists, lexicographic with the
    /// first dimension varying slowest.
    pub fn from_axes(axes: &[Vec<f64>]) -> Result<Self> {
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Self::from_points(points)
    }

    /// Equidistant points from `lower` to `upper` inclusive in every
    /// dimension, rounded to 12 decimals so that `0.2` reads as `0.2`.
    pub fn from_box(lower: &[f64], upper: &[f64], eta: &[f64]) -> Result<Self> {
        let axes = lower
            .iter()
            .zip(upper)
            .zip(eta)
            .map(|((&lo, &hi), &e)| {
                let steps = ((hi - lo) / e).round() as usize;
                (0..=steps).map(|k| ((lo + k as f64 * e) * 1e12).round() / 1e12).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        Self::from_axes(&axes)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Index of the grid point closest to `p` in Euclidean distance; ties go
    /// to the lowest index.
    pub fn nearest(&self, p: &[f64]) -> usize {
        self.nearest_among(p, 0..self.len()).expect("input grid is never empty")
    }

    /// Closest point among a candidate subset, ties to the lowest index.
    pub fn nearest_among(&self, p: &[f64], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in candidates {
            let d2: f64 = self.point(i).iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            match best {
                Some((bi, bd)) if bd < d2 || (bd == d2 && bi < i) => {}
                _ => best = Some((i, d2)),
            }
        }
        best.map(|(i, _)| i)
    }
}
