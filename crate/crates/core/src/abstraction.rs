//! Finite abstractions `(cells, inputs, post)` of perturbed control systems.
//!
//! Successor sets of grid abstractions are axis-aligned boxes of cells, so
//! they are stored as per-dimension index ranges and enumerated as runs of
//! consecutive flat indices along the last (contiguous) dimension. Systems
//! without geometry, such as hand-written automata or randomly generated
//! games, store explicit successor lists instead.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::OnceLock;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dubins::{step_displacement, DubinsParams};
use crate::error::{Error, Result};
use crate::grid::{lower_index, upper_index, CellId, GridSpec, InputGrid, Interval};
use crate::stateset::StateSet;

const MAGIC: &[u8; 5] = b"PSHD1";
const MAX_DIMS: usize = 8;

/// Content hash of an abstraction, used to key controller and bank files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AbstractionHash(pub [u8; 32]);

impl AbstractionHash {
    pub fn to_hex(&self) -> String {
        self.0.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Debug, Clone)]
enum Relation {
    Explicit {
        offsets: Vec<u32>,
        successors: Vec<u32>,
    },
    Boxes {
        /// `[start, len]` per pair and dimension; `start < count`, `len <= count`.
        ranges: Vec<[u16; 2]>,
        /// Per dimension, the extreme signed offsets of successor indices
        /// relative to their source cell.
        reach: Vec<(i64, i64)>,
    },
}

/// The finite transition system: `post(cell, input)` is a set of cells, with
/// the `out` flag set when the over-approximated image leaves the box.
#[derive(Debug)]
pub struct AbstractSystem {
    grid: GridSpec,
    inputs: InputGrid,
    relation: Relation,
    out: StateSet,
    hash: OnceLock<AbstractionHash>,
    predecessors: OnceLock<(Vec<u32>, Vec<u32>)>,
}

/// Enumerates the runs of consecutive flat indices covered by a box given as
/// per-dimension `(start, len)` ranges; periodic dimensions wrap, every other
/// range must already be clipped. Stops as soon as `f` returns false.
#[inline]
fn for_each_run(counts: &[usize], strides: &[usize], ranges: &[[u16; 2]], mut f: impl FnMut(usize, usize) -> bool) -> bool {
    let dims = counts.len();
    debug_assert!(dims <= MAX_DIMS);
    if ranges.iter().any(|r| r[1] == 0) {
        return true;
    }
    let last = dims - 1;
    let n_last = counts[last];
    let [s_last, l_last] = [ranges[last][0] as usize, ranges[last][1] as usize];
    let (first_len, second_len) = if s_last + l_last > n_last {
        (n_last - s_last, s_last + l_last - n_last)
    } else {
        (l_last, 0)
    };
    let mut k = [0usize; MAX_DIMS];
    loop {
        let mut base = 0;
        for d in 0..last {
            let idx = (ranges[d][0] as usize + k[d]) % counts[d];
            base += idx * strides[d];
        }
        if !f(base + s_last, first_len) {
            return false;
        }
        if second_len > 0 && !f(base, second_len) {
            return false;
        }
        // odometer over the outer dimensions
        let mut d = last;
        loop {
            if d == 0 {
                return true;
            }
            d -= 1;
            k[d] += 1;
            if k[d] < ranges[d][1] as usize {
                break;
            }
            k[d] = 0;
        }
    }
}

/// Per-dimension index range of the cells meeting the half-open image
/// `[lo, hi)`; the flag reports that the image leaves a non-periodic box.
fn image_range(grid: &GridSpec, dim: usize, iv: Interval) -> ([u16; 2], bool) {
    let n = grid.counts()[dim] as i64;
    let lo = grid.lower()[dim];
    let eta = grid.eta()[dim];
    let i0 = lower_index((iv.lo - lo) / eta);
    let i1 = upper_index((iv.hi - lo) / eta);
    if grid.periodic()[dim] {
        let count = i1 - i0 + 1;
        if count >= n {
            ([0, n as u16], false)
        } else {
            ([i0.rem_euclid(n) as u16, count.max(0) as u16], false)
        }
    } else {
        let out = i0 < 0 || i1 > n - 1;
        let a = i0.max(0);
        let b = i1.min(n - 1);
        let len = if b >= a { b - a + 1 } else { 0 };
        ([a.min(n - 1) as u16, len as u16], out)
    }
}

impl AbstractSystem {
    /// Explicit system over `n` states and `m` inputs, hosted on a unit line
    /// grid. `post(x, u)` returns the successors and the out flag; a pair
    /// must have successors unless it is flagged out.
    pub fn from_fn(n: usize, m: usize, post: impl FnMut(usize, usize) -> (Vec<usize>, bool)) -> Result<Self> {
        let grid = GridSpec::line(n)?;
        let inputs = InputGrid::from_points((0..m).map(|u| vec![u as f64]).collect())?;
        Self::explicit_on(grid, inputs, post)
    }

    /// Explicit system on a given state grid and input grid.
    pub fn explicit_on(
        grid: GridSpec,
        inputs: InputGrid,
        mut post: impl FnMut(usize, usize) -> (Vec<usize>, bool),
    ) -> Result<Self> {
        let n = grid.total();
        let m = inputs.len();
        let mut lists = Vec::with_capacity(n * m);
        let mut out = StateSet::empty(n * m);
        for x in 0..n {
            for u in 0..m {
                let (succ, is_out) = post(x, u);
                if succ.is_empty() && !is_out {
                    return Err(Error::InvalidConfig(format!("pair ({x}, {u}) has no successor and is not flagged out")));
                }
                if let Some(bad) = succ.iter().find(|&&s| s >= n) {
                    return Err(Error::InvalidConfig(format!("successor {bad} of ({x}, {u}) outside {n} states")));
                }
                if is_out {
                    out.insert(x * m + u);
                }
                lists.push(succ);
            }
        }
        Ok(Self::explicit(grid, inputs, lists, out))
    }

    fn explicit(grid: GridSpec, inputs: InputGrid, lists: Vec<Vec<usize>>, out: StateSet) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut successors = Vec::new();
        offsets.push(0u32);
        for list in lists {
            let sorted: BTreeSet<usize> = list.into_iter().collect();
            successors.extend(sorted.into_iter().map(|s| s as u32));
            offsets.push(successors.len() as u32);
        }
        Self {
            grid,
            inputs,
            relation: Relation::Explicit { offsets, successors },
            out,
            hash: OnceLock::new(),
            predecessors: OnceLock::new(),
        }
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.grid.total()
    }

    #[inline]
    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn inputs(&self) -> &InputGrid {
        &self.inputs
    }

    #[inline]
    fn pair(&self, x: usize, u: usize) -> usize {
        x * self.num_inputs() + u
    }

    /// Does the image of `(x, u)` leave the state box?
    #[inline]
    pub fn is_out(&self, x: usize, u: usize) -> bool {
        self.out.contains(self.pair(x, u))
    }

    /// `post(x, u) ⊆ set` and the pair is not flagged out.
    #[inline]
    pub fn post_within(&self, x: usize, u: usize, set: &StateSet) -> bool {
        let p = self.pair(x, u);
        if self.out.contains(p) {
            return false;
        }
        match &self.relation {
            Relation::Explicit { offsets, successors } => successors[offsets[p] as usize..offsets[p + 1] as usize]
                .iter()
                .all(|&s| set.contains(s as usize)),
            Relation::Boxes { ranges, .. } => {
                let d = self.grid.dims();
                for_each_run(self.grid.counts(), self.grid.strides(), &ranges[p * d..(p + 1) * d], |s, l| {
                    set.contains_range(s, l)
                })
            }
        }
    }

    /// Sorted successor cells of `(x, u)`, excluding the out marker.
    pub fn post(&self, x: usize, u: usize) -> Vec<usize> {
        let p = self.pair(x, u);
        match &self.relation {
            Relation::Explicit { offsets, successors } => successors[offsets[p] as usize..offsets[p + 1] as usize]
                .iter()
                .map(|&s| s as usize)
                .collect(),
            Relation::Boxes { ranges, .. } => {
                let d = self.grid.dims();
                let mut v = Vec::new();
                for_each_run(self.grid.counts(), self.grid.strides(), &ranges[p * d..(p + 1) * d], |s, l| {
                    v.extend(s..s + l);
                    true
                });
                v.sort_unstable();
                v
            }
        }
    }

    /// A superset of `{x | ∃u. post(x, u) ∩ cells ≠ ∅}`. Exact for explicit
    /// systems; for grid abstractions, the cells within the maximal one-step
    /// index reach of `cells`.
    pub fn predecessors_overapprox(&self, cells: &StateSet) -> StateSet {
        let n = self.num_states();
        let mut pre = StateSet::empty(n);
        match &self.relation {
            Relation::Explicit { .. } => {
                let (offsets, preds) = self.predecessors.get_or_init(|| self.reverse_index());
                for y in cells {
                    for &x in &preds[offsets[y] as usize..offsets[y + 1] as usize] {
                        pre.insert(x as usize);
                    }
                }
            }
            Relation::Boxes { reach, .. } => {
                let counts = self.grid.counts();
                let dims = counts.len();
                let mut window = [[0u16; 2]; MAX_DIMS];
                let mut volume = 1usize;
                let mut spans = [(0i64, 0usize); MAX_DIMS];
                for d in 0..dims {
                    let (lo, hi) = reach[d];
                    // x + lo <= y <= x + hi  <=>  y - hi <= x <= y - lo
                    let width = ((hi - lo + 1) as usize).min(counts[d]);
                    spans[d] = (-hi, width);
                    volume *= width;
                }
                if cells.len().saturating_mul(volume) >= n {
                    return StateSet::full(n);
                }
                for y in cells {
                    let multi = self.grid.multi(CellId(y as u32));
                    for d in 0..dims {
                        let nd = counts[d] as i64;
                        let (off, width) = spans[d];
                        let start = multi[d] as i64 + off;
                        if self.grid.periodic()[d] || width as i64 >= nd {
                            let s = if width as i64 >= nd { 0 } else { start.rem_euclid(nd) };
                            window[d] = [s as u16, width as u16];
                        } else {
                            let a = start.max(0);
                            let b = (start + width as i64 - 1).min(nd - 1);
                            window[d] = [a as u16, (b - a + 1).max(0) as u16];
                        }
                    }
                    for_each_run(counts, self.grid.strides(), &window[..dims], |s, l| {
                        pre.insert_range(s, l);
                        true
                    });
                }
            }
        }
        pre
    }

    fn reverse_index(&self) -> (Vec<u32>, Vec<u32>) {
        let n = self.num_states();
        let m = self.num_inputs();
        let mut buckets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
        for x in 0..n {
            for u in 0..m {
                for y in self.post(x, u) {
                    buckets[y].insert(x as u32);
                }
            }
        }
        let mut offsets = vec![0u32];
        let mut preds = Vec::new();
        for b in buckets {
            preds.extend(b);
            offsets.push(preds.len() as u32);
        }
        (offsets, preds)
    }

    /// Hash of the canonical binary serialization.
    pub fn content_hash(&self) -> AbstractionHash {
        *self.hash.get_or_init(|| {
            let mut hasher = HashWriter(Sha256::new());
            self.write_binary(&mut hasher).expect("hashing cannot fail");
            AbstractionHash(hasher.0.finalize().into())
        })
    }

    /// Binary format: magic `PSHD1`, grid spec, input grid, then per
    /// `(cell, input)` in cell-major order a `u32` count, the sorted `u32`
    /// successor indices and one out byte. Little endian throughout.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_grid(&mut w, &self.grid)?;
        write_inputs(&mut w, &self.inputs)?;
        let m = self.num_inputs();
        let mut buf = Vec::new();
        for x in 0..self.num_states() {
            for u in 0..m {
                buf.clear();
                let post = self.post(x, u);
                buf.extend_from_slice(&(post.len() as u32).to_le_bytes());
                for s in post {
                    buf.extend_from_slice(&(s as u32).to_le_bytes());
                }
                buf.push(self.is_out(x, u) as u8);
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an abstraction file (bad magic)".into()));
        }
        let grid = read_grid(&mut r)?;
        let inputs = read_inputs(&mut r)?;
        let n = grid.total();
        let m = inputs.len();
        let mut lists = Vec::with_capacity(n * m);
        let mut out = StateSet::empty(n * m);
        for p in 0..n * m {
            let len = read_u32(&mut r)? as usize;
            if len > n {
                return Err(Error::Format(format!("successor count {len} exceeds {n} states")));
            }
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let s = read_u32(&mut r)? as usize;
                if s >= n {
                    return Err(Error::Format(format!("successor {s} out of range")));
                }
                list.push(s);
            }
            match read_u8(&mut r)? {
                0 => {}
                1 => {
                    out.insert(p);
                }
                b => return Err(Error::Format(format!("bad out flag {b}"))),
            }
            lists.push(list);
        }
        Ok(Self::explicit(grid, inputs, lists, out))
    }

    /// One line per `(cell, input)`: `(multi) u<index> -> successors [OUT]`.
    pub fn dump_text<W: Write>(&self, mut w: W) -> Result<()> {
        for x in 0..self.num_states() {
            let multi = self.grid.multi(CellId(x as u32));
            for u in 0..self.num_inputs() {
                let succ: Vec<String> = self.post(x, u).iter().map(|s| s.to_string()).collect();
                write!(w, "({}) u{} -> [{}]", join(&multi), u, succ.join(" "))?;
                if self.is_out(x, u) {
                    write!(w, " OUT")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Same grid, inputs, successor sets and out flags.
    pub fn same_relation(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.inputs == other.inputs
            && (0..self.num_states()).all(|x| {
                (0..self.num_inputs()).all(|u| self.is_out(x, u) == other.is_out(x, u) && self.post(x, u) == other.post(x, u))
            })
    }
}

pub(crate) fn join(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Builds the grid abstraction of the Dubins vehicle: every `(cell, input)`
/// pair maps to the cells meeting the interval image of the cell, with the
/// out flag when the image leaves the box in `x` or `y`.
///
/// The grid must be `(x, y, theta)` with only `theta` periodic; inputs are
/// `(v, a)` pairs.
pub fn build_abstraction(grid: &GridSpec, inputs: &InputGrid, params: &DubinsParams) -> Result<AbstractSystem> {
    if grid.dims() != 3 || grid.periodic() != [false, false, true] {
        return Err(Error::GridMismatch("Dubins abstraction needs an (x, y, theta) grid with periodic theta".into()));
    }
    if inputs.dim() != 2 {
        return Err(Error::GridMismatch("Dubins inputs are (v, a) pairs".into()));
    }
    if grid.counts().iter().any(|&c| c > u16::MAX as usize) {
        return Err(Error::GridMismatch("too many cells along one dimension".into()));
    }
    let n = grid.total();
    let m = inputs.len();
    let n_theta = grid.counts()[2];

    // The displacement depends only on the heading cell and the input.
    let displacement: Vec<[Interval; 3]> = (0..n_theta)
        .flat_map(|k| {
            let theta = grid.axis_interval(2, k);
            inputs.iter().map(move |u| step_displacement(theta, [u[0], u[1]], params))
        })
        .collect();

    let mut ranges = vec![[0u16; 2]; n * m * 3];
    let out_flags: Vec<bool> = ranges
        .par_chunks_mut(m * 3)
        .enumerate()
        .flat_map_iter(|(x, slot)| {
            let cell = grid.cell_box(CellId(x as u32));
            let k = grid.multi(CellId(x as u32))[2];
            let disp = &displacement[k * m..(k + 1) * m];
            let mut flags = Vec::with_capacity(m);
            for (u, d) in disp.iter().enumerate() {
                let mut out = false;
                for dim in 0..3 {
                    let image = Interval::new(cell[dim].lo + d[dim].lo, cell[dim].hi + d[dim].hi);
                    let (r, o) = image_range(grid, dim, image);
                    slot[u * 3 + dim] = r;
                    out |= o;
                }
                flags.push(out);
            }
            flags
        })
        .collect();
    let out = StateSet::from_indices(n * m, out_flags.iter().enumerate().filter(|(_, &o)| o).map(|(p, _)| p));

    let mut reach = vec![(i64::MAX, i64::MIN); 3];
    for x in 0..n {
        let multi = grid.multi(CellId(x as u32));
        for u in 0..m {
            for d in 0..3 {
                let [s, l] = ranges[(x * m + u) * 3 + d];
                if l == 0 {
                    continue;
                }
                let nd = grid.counts()[d] as i64;
                let mut lo = s as i64 - multi[d] as i64;
                if grid.periodic()[d] {
                    lo = lo.rem_euclid(nd);
                    if lo > nd / 2 {
                        lo -= nd;
                    }
                }
                let hi = lo + l as i64 - 1;
                reach[d].0 = reach[d].0.min(lo);
                reach[d].1 = reach[d].1.max(hi);
            }
        }
    }
    for r in &mut reach {
        if r.0 > r.1 {
            *r = (0, 0);
        }
    }

    Ok(AbstractSystem {
        grid: grid.clone(),
        inputs: inputs.clone(),
        relation: Relation::Boxes { ranges, reach },
        out,
        hash: OnceLock::new(),
        predecessors: OnceLock::new(),
    })
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn write_grid<W: Write>(w: &mut W, g: &GridSpec) -> Result<()> {
    w.write_all(&(g.dims() as u32).to_le_bytes())?;
    for d in 0..g.dims() {
        w.write_all(&g.lower()[d].to_le_bytes())?;
        w.write_all(&g.upper()[d].to_le_bytes())?;
        w.write_all(&g.eta()[d].to_le_bytes())?;
        w.write_all(&[g.periodic()[d] as u8])?;
    }
    Ok(())
}

fn read_grid<R: Read>(r: &mut R) -> Result<GridSpec> {
    let dims = read_u32(r)? as usize;
    if dims == 0 || dims > MAX_DIMS {
        return Err(Error::Format(format!("unsupported dimension count {dims}")));
    }
    let (mut lo, mut hi, mut eta, mut per) = (vec![], vec![], vec![], vec![]);
    for _ in 0..dims {
        lo.push(read_f64(r)?);
        hi.push(read_f64(r)?);
        eta.push(read_f64(r)?);
        per.push(read_u8(r)? != 0);
    }
    GridSpec::new(lo, hi, eta, per)
}

fn write_inputs<W: Write>(w: &mut W, u: &InputGrid) -> Result<()> {
    w.write_all(&(u.len() as u32).to_le_bytes())?;
    w.write_all(&(u.dim() as u32).to_le_bytes())?;
    for p in u.iter() {
        for c in p {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_inputs<R: Read>(r: &mut R) -> Result<InputGrid> {
    let len = read_u32(r)? as usize;
    let dim = read_u32(r)? as usize;
    if len == 0 || dim == 0 || len > 1 << 16 || dim > MAX_DIMS {
        return Err(Error::Format(format!("bad input grid header ({len} points of dimension {dim})")));
    }
    let mut points = Vec::with_capacity(len);
    for _ in 0..len {
        points.push((0..dim).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?);
    }
    InputGrid::from_points(points)
}
