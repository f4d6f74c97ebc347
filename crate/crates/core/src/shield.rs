//! Dynamic shields: an offline bank of atomic safety controllers, composed
//! online into the maximally permissive shield for any conjunction of
//! atomic safe sets.
//!
//! Every atomic controller is a sub-controller of the controller for the
//! union of all atomic safe sets, so the bank stores that union controller
//! once and each atomic controller as the cells and inputs it removes from
//! it. Composition replays the removals of the active atomics on a copy of
//! the union controller, which yields their product, and then prunes the
//! product to its largest nonblocking sub-controller. Only blocking cells and
//! their predecessors need to be revisited, because every input allowed by
//! the product already stays inside the product's domain.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::abstraction::{read_u32, read_u64, AbstractSystem};
use crate::controller::ControllerTable;
use crate::error::{Error, Result};
use crate::grid::CellId;
use crate::stateset::StateSet;
use crate::synthesis::{
    largest_nonblocking_of_closed_product, safety_control, safety_control_within, FixpointTrace, SafetySpec,
};

const MAGIC: &[u8; 5] = b"PSHB1";

/// Index of an atomic safe set in a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomicSpecId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
struct AtomicEntry {
    safe: StateSet,
    /// Cells of the union controller's domain outside this controller's.
    removed_cells: Vec<u32>,
    /// Cells keeping their definition but losing inputs, with the lost inputs.
    masked_cells: Vec<u32>,
    masks: Vec<u64>,
}

/// Atomic maximally permissive safety controllers over one abstraction.
#[derive(Debug, Clone)]
pub struct AtomicShieldBank {
    sys: Arc<AbstractSystem>,
    base: ControllerTable,
    atomics: Vec<AtomicEntry>,
}

fn diff_against(base: &ControllerTable, table: &ControllerTable, safe: StateSet) -> AtomicEntry {
    assert!(
        table.is_sub_controller_of(base).expect("same shape"),
        "atomic controller must refine the union controller"
    );
    let removed_cells = base.domain().difference(table.domain()).iter().map(|x| x as u32).collect();
    let mut masked_cells = Vec::new();
    let mut masks = Vec::new();
    for x in table.domain() {
        let lost: Vec<u64> = base.row(x).iter().zip(table.row(x)).map(|(b, t)| b & !t).collect();
        if lost.iter().any(|&w| w != 0) {
            masked_cells.push(x as u32);
            masks.extend(lost);
        }
    }
    AtomicEntry { safe, removed_cells, masked_cells, masks }
}

impl AtomicShieldBank {
    /// One safety synthesis per atomic safe set. Each runs incrementally from
    /// the union controller, which reaches the same fixed point as a run
    /// from scratch.
    pub fn synthesize(sys: Arc<AbstractSystem>, atomics: Vec<StateSet>) -> Result<Self> {
        if atomics.is_empty() {
            return Err(Error::InvalidConfig("a bank needs at least one atomic safe set".into()));
        }
        let mut union = StateSet::empty(sys.num_states());
        for g in &atomics {
            if g.universe() != sys.num_states() {
                return Err(Error::UniverseMismatch { expected: sys.num_states(), found: g.universe() });
            }
            union.union_with(g);
        }
        let base = safety_control(&sys, &SafetySpec::new(union))?;
        let entries = atomics
            .into_par_iter()
            .map(|safe| {
                let table = safety_control_within(&sys, &base, &safe);
                Ok(diff_against(&base, &table, safe))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sys, base, atomics: entries })
    }

    pub fn system(&self) -> &Arc<AbstractSystem> {
        &self.sys
    }

    pub fn len(&self) -> usize {
        self.atomics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomics.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = AtomicSpecId> {
        (0..self.len()).map(AtomicSpecId)
    }

    fn entry(&self, id: AtomicSpecId) -> Result<&AtomicEntry> {
        self.atomics.get(id.0).ok_or(Error::UnknownAtomic(id.0))
    }

    pub fn safe_set(&self, id: AtomicSpecId) -> Result<&StateSet> {
        Ok(&self.entry(id)?.safe)
    }

    /// Number of stored removals, a measure of the bank's footprint.
    pub fn stored_entries(&self) -> usize {
        self.atomics.iter().map(|a| a.removed_cells.len() + a.masked_cells.len()).sum()
    }

    fn remove_atomic(&self, table: &mut ControllerTable, entry: &AtomicEntry) {
        let wpc = table.words_per_cell();
        for &x in &entry.removed_cells {
            table.undefine(x as usize);
        }
        for (&x, mask) in entry.masked_cells.iter().zip(entry.masks.chunks_exact(wpc)) {
            table.row_mut(x as usize).iter_mut().zip(mask).for_each(|(a, m)| *a &= !m);
        }
    }

    /// The atomic controller for `id`, materialized.
    pub fn table(&self, id: AtomicSpecId) -> Result<ControllerTable> {
        let entry = self.entry(id)?;
        let mut t = self.base.clone();
        self.remove_atomic(&mut t, entry);
        Ok(t)
    }

    /// Recomputes the atomic controller from scratch and compares.
    pub fn verify_atomic(&self, id: AtomicSpecId) -> Result<bool> {
        let fresh = safety_control(&self.sys, &SafetySpec::new(self.entry(id)?.safe.clone()))?;
        Ok(fresh == self.table(id)?)
    }

    /// Product of the active atomic controllers, blocking cells kept.
    pub fn product(&self, active: &[AtomicSpecId]) -> Result<ControllerTable> {
        if active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        let mut table = self.base.clone();
        for &id in active {
            let entry = self.entry(id)?;
            self.remove_atomic(&mut table, entry);
        }
        Ok(table)
    }

    /// Composes the shield for the conjunction of the active atomic safe sets.
    pub fn compose(&self, active: &[AtomicSpecId]) -> Result<Shield> {
        self.compose_traced(active).map(|(s, _)| s)
    }

    pub fn compose_traced(&self, active: &[AtomicSpecId]) -> Result<(Shield, FixpointTrace)> {
        let mut table = self.product(active)?;
        let trace = largest_nonblocking_of_closed_product(&self.sys, &mut table);
        let mut provenance = active.to_vec();
        provenance.sort_unstable();
        provenance.dedup();
        Ok((Shield { sys: Arc::clone(&self.sys), table, provenance }, trace))
    }

    /// Bank file: magic `PSHB1`, the union controller (abstraction hash
    /// included), then per atomic its safe set and its removals.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        self.base.write_body(self.sys.content_hash(), &mut w)?;
        w.write_all(&(self.atomics.len() as u32).to_le_bytes())?;
        for a in &self.atomics {
            for word in a.safe.words() {
                w.write_all(&word.to_le_bytes())?;
            }
            w.write_all(&(a.removed_cells.len() as u32).to_le_bytes())?;
            for x in &a.removed_cells {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&(a.masked_cells.len() as u32).to_le_bytes())?;
            for x in &a.masked_cells {
                w.write_all(&x.to_le_bytes())?;
            }
            for m in &a.masks {
                w.write_all(&m.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loads a bank written for `sys`. The first and last atomic controllers
    /// are re-synthesized and compared as a spot check.
    pub fn read_binary<R: Read>(sys: Arc<AbstractSystem>, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a bank file (bad magic)".into()));
        }
        let base = ControllerTable::read_body(&sys, &mut r)?;
        let n = sys.num_states();
        let wpc = base.words_per_cell();
        let count = read_u32(&mut r)? as usize;
        let read_cells = |r: &mut R| -> Result<Vec<u32>> {
            let len = read_u32(r)? as usize;
            if len > n {
                return Err(Error::Format("too many cells in atomic entry".into()));
            }
            let cells = (0..len).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
            if cells.iter().any(|&x| x as usize >= n) {
                return Err(Error::Format("cell index out of range".into()));
            }
            Ok(cells)
        };
        let mut atomics = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let words = (0..n.div_ceil(64)).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
            let safe = StateSet::from_words(n, words).ok_or_else(|| Error::Format("bad safe set".into()))?;
            let removed_cells = read_cells(&mut r)?;
            let masked_cells = read_cells(&mut r)?;
            let masks = (0..masked_cells.len() * wpc).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
            atomics.push(AtomicEntry { safe, removed_cells, masked_cells, masks });
        }
        let bank = Self { sys, base, atomics };
        if bank.is_empty() {
            return Err(Error::Format("bank holds no atomic controllers".into()));
        }
        for id in [AtomicSpecId(0), AtomicSpecId(bank.len() - 1)] {
            if !bank.verify_atomic(id)? {
                return Err(Error::Format(format!("atomic controller {} does not match its safe set", id.0)));
            }
        }
        Ok(bank)
    }
}

/// Offline phase: one maximally permissive controller per atomic safe set.
pub fn synthesize_bank(sys: Arc<AbstractSystem>, atomics: Vec<StateSet>) -> Result<AtomicShieldBank> {
    AtomicShieldBank::synthesize(sys, atomics)
}

/// Online phase: product of the active atomic controllers, then the largest
/// nonblocking sub-controller of the product.
pub fn compose(bank: &AtomicShieldBank, active: &[AtomicSpecId]) -> Result<Shield> {
    bank.compose(active)
}

/// Baseline: synthesizes the shield for the intersection of the given safe
/// sets from scratch.
pub fn pure_online_shield(sys: &Arc<AbstractSystem>, safe_sets: &[&StateSet]) -> Result<Shield> {
    let (first, rest) = safe_sets.split_first().ok_or(Error::EmptyActiveSet)?;
    let mut safe = (*first).clone();
    for s in rest {
        if s.universe() != safe.universe() {
            return Err(Error::UniverseMismatch { expected: safe.universe(), found: s.universe() });
        }
        safe.intersect_with(s);
    }
    let table = safety_control(sys, &SafetySpec::new(safe))?;
    Ok(Shield { sys: Arc::clone(sys), table, provenance: Vec::new() })
}

/// Outcome of filtering one proposed input.
#[derive(Debug, Clone, PartialEq)]
pub struct ShieldDecision {
    /// Index of the executed input in the input grid.
    pub chosen: usize,
    pub chosen_input: Vec<f64>,
    /// Grid index the proposal was snapped to.
    pub proposed_index: usize,
    pub proposed_allowed: bool,
    pub intervened: bool,
}

/// A composed shield: a nonblocking controller plus the override rule.
#[derive(Debug, Clone)]
pub struct Shield {
    sys: Arc<AbstractSystem>,
    table: ControllerTable,
    provenance: Vec<AtomicSpecId>,
}

impl Shield {
    pub fn table(&self) -> &ControllerTable {
        &self.table
    }

    pub fn domain(&self) -> &StateSet {
        self.table.domain()
    }

    /// Atomic ids this shield was composed from; empty for baseline shields.
    pub fn provenance(&self) -> &[AtomicSpecId] {
        &self.provenance
    }

    pub fn contains(&self, cell: CellId) -> bool {
        self.table.is_defined(cell.index())
    }

    /// Passes the proposal through when its snapped grid input is allowed,
    /// otherwise overrides it with the allowed input closest to it (ties go
    /// to the lowest input index).
    pub fn apply(&self, cell: CellId, proposed: &[f64]) -> Result<ShieldDecision> {
        let x = cell.index();
        if x >= self.table.num_states() || !self.table.is_defined(x) || self.table.is_blocking_at(x) {
            return Err(Error::DomainViolation { cell: cell.0 });
        }
        let inputs = self.sys.inputs();
        if proposed.len() != inputs.dim() {
            return Err(Error::InvalidConfig(format!("proposed input must have {} components", inputs.dim())));
        }
        let snapped = inputs.nearest(proposed);
        let proposed_allowed = self.table.allows(x, snapped);
        let chosen = if proposed_allowed {
            snapped
        } else {
            inputs
                .nearest_among(proposed, self.table.allowed(x))
                .expect("nonblocking cells allow some input")
        };
        Ok(ShieldDecision {
            chosen,
            chosen_input: inputs.point(chosen).to_vec(),
            proposed_index: snapped,
            proposed_allowed,
            intervened: !proposed_allowed,
        })
    }
}

pub fn shield_apply(shield: &Shield, cell: CellId, proposed: &[f64]) -> Result<ShieldDecision> {
    shield.apply(cell, proposed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::controller_equal;
    use crate::fixtures::figure_one;
    use crate::grid::InputGrid;

    #[test]
    fn atomics_match_synthesis_from_scratch() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let sys = Arc::new(crate::fixtures::random_system(&mut rng, 40, 3, 3, 0.05));
            let sets: Vec<StateSet> = (0..3).map(|_| crate::fixtures::random_set(&mut rng, 40, 0.8)).collect();
            let bank = AtomicShieldBank::synthesize(Arc::clone(&sys), sets).unwrap();
            for id in bank.ids() {
                assert!(bank.verify_atomic(id).unwrap());
            }
        }
    }

    fn fig_bank() -> (AtomicShieldBank, [usize; 7]) {
        let (sys, ids @ [a, b, c, d, e, f, g]) = figure_one();
        let gs = StateSet::from_indices(7, [a, b, c, d, e, f]);
        let hs = StateSet::from_indices(7, [a, b, c, d, e, g]);
        (AtomicShieldBank::synthesize(Arc::new(sys), vec![gs, hs]).unwrap(), ids)
    }

    #[test]
    fn figure_one_bank_and_composition() {
        let (bank, [a, b, c, d, e, f, g]) = fig_bank();
        let cg = bank.table(AtomicSpecId(0)).unwrap();
        assert_eq!(cg.domain(), &StateSet::from_indices(7, [a, b, c, d, e, f]));
        let ch = bank.table(AtomicSpecId(1)).unwrap();
        assert_eq!(ch.domain(), &StateSet::from_indices(7, [a, b, c, d, e, g]));

        let p = bank.product(&[AtomicSpecId(0), AtomicSpecId(1)]).unwrap();
        assert_eq!(p, cg.product(&ch).unwrap());

        let s = bank.compose(&[AtomicSpecId(1), AtomicSpecId(0)]).unwrap();
        assert_eq!(s.domain(), &StateSet::from_indices(7, [a, b, c, d]));
        assert_eq!(s.provenance(), &[AtomicSpecId(0), AtomicSpecId(1)]);

        // u2 at a leads to e, which left the domain: overridden by u1.
        let dec = s.apply(CellId(a as u32), &[1.0]).unwrap();
        assert!(dec.intervened && !dec.proposed_allowed);
        assert_eq!(dec.chosen, 0);
        let dec = s.apply(CellId(a as u32), &[0.0]).unwrap();
        assert!(!dec.intervened && dec.chosen == 0);
        assert!(matches!(s.apply(CellId(e as u32), &[0.0]), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn single_atomic_composition_is_the_atomic() {
        let (bank, _) = fig_bank();
        let s = bank.compose(&[AtomicSpecId(0)]).unwrap();
        assert!(controller_equal(s.table(), &bank.table(AtomicSpecId(0)).unwrap()).unwrap());
        assert!(matches!(bank.compose(&[]), Err(Error::EmptyActiveSet)));
        assert!(matches!(bank.compose(&[AtomicSpecId(9)]), Err(Error::UnknownAtomic(9))));
    }

    #[test]
    fn pure_online_matches_composition() {
        let (bank, _) = fig_bank();
        let sets = [bank.safe_set(AtomicSpecId(0)).unwrap(), bank.safe_set(AtomicSpecId(1)).unwrap()];
        let online = pure_online_shield(bank.system(), &sets).unwrap();
        let dynamic = bank.compose(&[AtomicSpecId(0), AtomicSpecId(1)]).unwrap();
        assert_eq!(online.table(), dynamic.table());
        let all = StateSet::full(7);
        let free = pure_online_shield(bank.system(), &[&all]).unwrap();
        assert_eq!(free.table(), &ControllerTable::full_on(&all, 2));
    }

    #[test]
    fn universe_bank_is_all_permissive() {
        let (sys, _) = figure_one();
        let bank = AtomicShieldBank::synthesize(Arc::new(sys), vec![StateSet::full(7)]).unwrap();
        assert_eq!(bank.table(AtomicSpecId(0)).unwrap(), ControllerTable::full_on(&StateSet::full(7), 2));
    }

    #[test]
    fn override_uses_distance_then_index() {
        let inputs = InputGrid::from_points(vec![vec![-0.2, 0.0], vec![0.0, 0.0], vec![0.2, 0.0]]).unwrap();
        let grid = crate::grid::GridSpec::line(1).unwrap();
        let sys = Arc::new(AbstractSystem::explicit_on(grid, inputs, |_, _| (vec![0], false)).unwrap());
        let mut table = ControllerTable::empty(1, 3);
        table.define(0, [0, 2]);
        let shield = Shield { sys, table, provenance: vec![] };
        let d = shield.apply(CellId(0), &[0.1, 0.0]).unwrap();
        assert_eq!(d.chosen_input, vec![0.2, 0.0]);
        assert!(d.intervened);
        let d = shield.apply(CellId(0), &[0.0, 0.0]).unwrap();
        assert_eq!(d.chosen_input, vec![-0.2, 0.0]);
        let d = shield.apply(CellId(0), &[0.21, 0.0]).unwrap();
        assert!(!d.intervened && d.chosen == 2);
    }

    #[test]
    fn bank_round_trip() {
        let (bank, _) = fig_bank();
        let mut bytes = Vec::new();
        bank.write_binary(&mut bytes).unwrap();
        let back = AtomicShieldBank::read_binary(Arc::clone(bank.system()), bytes.as_slice()).unwrap();
        for id in bank.ids() {
            assert_eq!(back.table(id).unwrap(), bank.table(id).unwrap());
        }
        let other = Arc::new(AbstractSystem::from_fn(7, 2, |x, _| (vec![x], false)).unwrap());
        assert!(matches!(
            AtomicShieldBank::read_binary(other, bytes.as_slice()),
            Err(Error::HashMismatch { .. })
        ));
    }
}
