//! Set-valued state-feedback controllers over an abstraction.

use std::io::{Read, Write};

use crate::abstraction::{join, read_u32, read_u64, AbstractSystem, AbstractionHash};
use crate::error::{Error, Result};
use crate::grid::{CellId, GridSpec};
use crate::stateset::StateSet;

const MAGIC: &[u8; 5] = b"PSHC1";

/// Allowed-input sets per cell. A cell is either undefined, or defined with
/// a (possibly empty) set of input indices; defined-but-empty cells are the
/// blocking cells a raw product may carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerTable {
    num_inputs: usize,
    words_per_cell: usize,
    defined: StateSet,
    allowed: Vec<u64>,
}

impl ControllerTable {
    pub fn empty(num_states: usize, num_inputs: usize) -> Self {
        let words_per_cell = num_inputs.div_ceil(64).max(1);
        Self {
            num_inputs,
            words_per_cell,
            defined: StateSet::empty(num_states),
            allowed: vec![0; num_states * words_per_cell],
        }
    }

    /// Every input allowed at every cell of `domain`.
    pub fn full_on(domain: &StateSet, num_inputs: usize) -> Self {
        let mut t = Self::empty(domain.universe(), num_inputs);
        let row = t.full_row();
        for x in domain {
            t.defined.insert(x);
            t.row_mut(x).copy_from_slice(&row);
        }
        t
    }

    fn full_row(&self) -> Vec<u64> {
        (0..self.words_per_cell)
            .map(|w| {
                let bits = self.num_inputs.saturating_sub(w * 64).min(64);
                if bits == 64 {
                    !0
                } else {
                    (1u64 << bits) - 1
                }
            })
            .collect()
    }

    pub fn num_states(&self) -> usize {
        self.defined.universe()
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub(crate) fn words_per_cell(&self) -> usize {
        self.words_per_cell
    }

    #[inline]
    pub(crate) fn row(&self, x: usize) -> &[u64] {
        &self.allowed[x * self.words_per_cell..(x + 1) * self.words_per_cell]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, x: usize) -> &mut [u64] {
        &mut self.allowed[x * self.words_per_cell..(x + 1) * self.words_per_cell]
    }

    /// Cells where the controller is defined, blocking cells included.
    pub fn domain(&self) -> &StateSet {
        &self.defined
    }

    #[inline]
    pub fn is_defined(&self, x: usize) -> bool {
        self.defined.contains(x)
    }

    #[inline]
    pub fn allows(&self, x: usize, u: usize) -> bool {
        self.row(x)[u / 64] >> (u % 64) & 1 == 1
    }

    pub fn allowed(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(x).iter().enumerate().flat_map(|(w, &bits)| {
            let mut b = bits;
            std::iter::from_fn(move || {
                if b == 0 {
                    return None;
                }
                let i = b.trailing_zeros() as usize;
                b &= b - 1;
                Some(w * 64 + i)
            })
        })
    }

    pub fn allowed_count(&self, x: usize) -> usize {
        self.row(x).iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_blocking_at(&self, x: usize) -> bool {
        self.row(x).iter().all(|&w| w == 0)
    }

    /// Defines `x` with exactly the given inputs.
    pub fn define(&mut self, x: usize, inputs: impl IntoIterator<Item = usize>) {
        self.defined.insert(x);
        let m = self.num_inputs;
        let row = self.row_mut(x);
        row.fill(0);
        for u in inputs {
            assert!(u < m, "input {u} out of range");
            row[u / 64] |= 1 << (u % 64);
        }
    }

    pub fn undefine(&mut self, x: usize) {
        self.defined.remove(x);
        self.row_mut(x).fill(0);
    }

    pub fn disallow(&mut self, x: usize, u: usize) {
        self.row_mut(x)[u / 64] &= !(1u64 << (u % 64));
    }

    /// Cells with at least one allowed input.
    pub fn nonblocking_domain(&self) -> StateSet {
        StateSet::from_indices(self.num_states(), self.defined.iter().filter(|&x| !self.is_blocking_at(x)))
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.num_states() != other.num_states() {
            return Err(Error::UniverseMismatch { expected: self.num_states(), found: other.num_states() });
        }
        if self.num_inputs != other.num_inputs {
            return Err(Error::UniverseMismatch { expected: self.num_inputs, found: other.num_inputs });
        }
        Ok(())
    }

    pub fn check_against(&self, sys: &AbstractSystem) -> Result<()> {
        if self.num_states() != sys.num_states() {
            return Err(Error::UniverseMismatch { expected: sys.num_states(), found: self.num_states() });
        }
        if self.num_inputs != sys.num_inputs() {
            return Err(Error::UniverseMismatch { expected: sys.num_inputs(), found: self.num_inputs });
        }
        Ok(())
    }

    /// The controller product: defined on the intersection of the domains,
    /// allowing the intersection of the allowed sets there. Empty
    /// intersections stay defined.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut t = self.clone();
        t.defined.intersect_with(&other.defined);
        t.allowed.iter_mut().zip(&other.allowed).for_each(|(a, b)| *a &= b);
        // Inputs of cells dropped from the domain must not linger.
        for x in self.defined.difference(&t.defined).iter() {
            t.row_mut(x).fill(0);
        }
        Ok(t)
    }

    /// `self ⊑ other`: smaller domain and pointwise smaller allowed sets.
    pub fn is_sub_controller_of(&self, other: &Self) -> Result<bool> {
        self.check_shape(other)?;
        Ok(self.defined.is_subset(&other.defined) && self.allowed.iter().zip(&other.allowed).all(|(a, b)| a & !b == 0))
    }

    /// Every defined cell has an allowed input and every allowed input keeps
    /// the abstraction inside the domain.
    pub fn is_closed_nonblocking(&self, sys: &AbstractSystem) -> bool {
        self.defined
            .iter()
            .all(|x| !self.is_blocking_at(x) && self.allowed(x).all(|u| sys.post_within(x, u, &self.defined)))
    }

    /// Controller file: magic `PSHC1`, the abstraction hash, state and input
    /// counts, then the domain and allowed-input bit words.
    pub fn write_binary<W: Write>(&self, hash: AbstractionHash, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        self.write_body(hash, &mut w)
    }

    pub(crate) fn write_body<W: Write>(&self, hash: AbstractionHash, w: &mut W) -> Result<()> {
        w.write_all(&hash.0)?;
        w.write_all(&(self.num_states() as u32).to_le_bytes())?;
        w.write_all(&(self.num_inputs as u32).to_le_bytes())?;
        for word in self.defined.words().iter().chain(&self.allowed) {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    /// Loads a controller, rejecting files written for another abstraction.
    pub fn read_binary<R: Read>(sys: &AbstractSystem, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a controller file (bad magic)".into()));
        }
        Self::read_body(sys, &mut r)
    }

    pub(crate) fn read_body<R: Read>(sys: &AbstractSystem, r: &mut R) -> Result<Self> {
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let expected = sys.content_hash();
        if hash != expected.0 {
            return Err(Error::HashMismatch { expected: expected.to_hex(), found: AbstractionHash(hash).to_hex() });
        }
        let n = read_u32(r)? as usize;
        let m = read_u32(r)? as usize;
        if n != sys.num_states() || m != sys.num_inputs() {
            return Err(Error::Format("controller shape disagrees with the abstraction".into()));
        }
        let mut t = Self::empty(n, m);
        let words = (0..n.div_ceil(64)).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
        t.defined = StateSet::from_words(n, words).ok_or_else(|| Error::Format("bad domain".into()))?;
        for w in t.allowed.iter_mut() {
            *w = read_u64(r)?;
        }
        let full = t.full_row();
        for x in 0..n {
            let row = t.row(x);
            let stray = row.iter().zip(&full).any(|(a, f)| a & !f != 0);
            if stray || (!t.defined.contains(x) && row.iter().any(|&w| w != 0)) {
                return Err(Error::Format(format!("inconsistent allowed set at cell {x}")));
            }
        }
        Ok(t)
    }

    /// `(multi-index) : [sorted inputs]` for every defined cell.
    pub fn dump_text<W: Write>(&self, grid: &GridSpec, mut w: W) -> Result<()> {
        for x in &self.defined {
            let inputs: Vec<usize> = self.allowed(x).collect();
            writeln!(w, "({}) : [{}]", join(&grid.multi(CellId(x as u32))), join(&inputs))?;
        }
        Ok(())
    }
}

/// Same domain and the same allowed set at every cell.
pub fn controller_equal(a: &ControllerTable, b: &ControllerTable) -> Result<bool> {
    a.check_shape(b)?;
    Ok(a == b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, m: usize, rows: &[(usize, &[usize])]) -> ControllerTable {
        let mut t = ControllerTable::empty(n, m);
        for (x, us) in rows {
            t.define(*x, us.iter().copied());
        }
        t
    }

    #[test]
    fn product_keeps_blocking_cells() {
        let a = table(4, 2, &[(0, &[0, 1]), (1, &[0]), (2, &[1])]);
        let b = table(4, 2, &[(0, &[1]), (1, &[1]), (3, &[0])]);
        let p = a.product(&b).unwrap();
        assert_eq!(p.domain().iter().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(p.allowed(0).collect::<Vec<_>>(), vec![1]);
        assert!(p.is_defined(1) && p.is_blocking_at(1));
        assert_eq!(p.nonblocking_domain().iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn product_identity_and_idempotence() {
        let a = table(5, 70, &[(0, &[0, 65, 69]), (3, &[2]), (4, &[])]);
        assert_eq!(a.product(&a).unwrap(), a);
        let full = ControllerTable::full_on(a.domain(), 70);
        assert_eq!(a.product(&full).unwrap(), a);
        assert_eq!(full.allowed_count(0), 70);
    }

    #[test]
    fn equality_and_shape_errors() {
        let a = table(3, 2, &[(0, &[0])]);
        let mut b = a.clone();
        assert!(controller_equal(&a, &b).unwrap());
        b.define(0, [1]);
        assert!(!controller_equal(&a, &b).unwrap());
        let c = ControllerTable::empty(4, 2);
        assert!(matches!(controller_equal(&a, &c), Err(Error::UniverseMismatch { .. })));
        assert!(a.product(&ControllerTable::empty(3, 3)).is_err());
    }

    #[test]
    fn sub_controller_order() {
        let a = table(3, 2, &[(0, &[0, 1]), (1, &[0])]);
        let b = table(3, 2, &[(0, &[1])]);
        assert!(b.is_sub_controller_of(&a).unwrap());
        assert!(!a.is_sub_controller_of(&b).unwrap());
    }
}
