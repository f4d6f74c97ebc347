//! Safety games on abstractions: the controllable predecessor, maximally
//! permissive safety controllers and largest nonblocking sub-controllers.
//!
//! Both fixed points run on one pruning engine. The engine holds a candidate
//! domain `D` and allowed sets `A`; each synchronous sweep drops every input
//! whose successors leave `D` and then every cell left without inputs. A
//! sweep only revisits cells that may reach a cell removed by the previous
//! sweep: inputs of other cells were already checked against a domain that
//! has not changed along their successors.

use crate::abstraction::AbstractSystem;
use crate::controller::ControllerTable;
use crate::error::{Error, Result};
use crate::stateset::StateSet;

/// The safe set of a safety objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetySpec {
    pub safe: StateSet,
}

impl SafetySpec {
    pub fn new(safe: StateSet) -> Self {
        Self { safe }
    }
}

/// Domain sizes seen by a fixed-point computation: the starting candidate,
/// then one entry per sweep.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixpointTrace {
    pub domain_sizes: Vec<usize>,
}

impl FixpointTrace {
    /// Number of sweeps. Every sweep but possibly the last removes a cell,
    /// and the last one only runs if a cell is left to recheck, so this
    /// never exceeds the size of the starting candidate (or 1 if empty).
    pub fn iterations(&self) -> usize {
        self.domain_sizes.len().saturating_sub(1)
    }
}

fn check_universe(sys: &AbstractSystem, set: &StateSet) -> Result<()> {
    if set.universe() != sys.num_states() {
        return Err(Error::UniverseMismatch { expected: sys.num_states(), found: set.universe() });
    }
    Ok(())
}

/// `{ x | ∃u. post(x, u) ⊆ s and (x, u) is not out }`.
pub fn cpre(sys: &AbstractSystem, s: &StateSet) -> Result<StateSet> {
    check_universe(sys, s)?;
    let m = sys.num_inputs();
    Ok(StateSet::from_indices(
        sys.num_states(),
        (0..sys.num_states()).filter(|&x| (0..m).any(|u| sys.post_within(x, u, s))),
    ))
}

/// Prunes `table` to its largest closed, nonblocking sub-controller.
///
/// Precondition: every allowed input of a defined cell outside `dirty`
/// already maps into the current domain.
pub(crate) fn prune(sys: &AbstractSystem, table: &mut ControllerTable, mut dirty: StateSet) -> FixpointTrace {
    let mut trace = FixpointTrace::default();
    let wpc = table.words_per_cell();
    let mut domain = table.domain().clone();
    dirty.intersect_with(&domain);
    trace.domain_sizes.push(domain.len());
    loop {
        let mut removed = StateSet::empty(domain.universe());
        for x in &dirty {
            for w in 0..wpc {
                let mut bits = table.row(x)[w];
                let mut keep = bits;
                while bits != 0 {
                    let i = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let u = w * 64 + i;
                    if !sys.post_within(x, u, &domain) {
                        keep &= !(1u64 << i);
                    }
                }
                table.row_mut(x)[w] = keep;
            }
            if table.is_blocking_at(x) {
                removed.insert(x);
            }
        }
        for x in &removed {
            table.undefine(x);
        }
        domain.difference_with(&removed);
        trace.domain_sizes.push(domain.len());
        if removed.is_empty() {
            break;
        }
        dirty = sys.predecessors_overapprox(&removed);
        dirty.intersect_with(&domain);
        if dirty.is_empty() {
            break;
        }
    }
    debug_assert_eq!(&domain, table.domain());
    trace
}

/// The maximally permissive safety controller of the abstraction, with the
/// sizes of the shrinking candidate sets.
pub fn safety_control_traced(sys: &AbstractSystem, spec: &SafetySpec) -> Result<(ControllerTable, FixpointTrace)> {
    check_universe(sys, &spec.safe)?;
    let mut table = ControllerTable::full_on(&spec.safe, sys.num_inputs());
    let trace = prune(sys, &mut table, spec.safe.clone());
    Ok((table, trace))
}

/// The maximally permissive (with respect to the abstraction) safety
/// controller: its domain is the greatest fixed point of
/// `S ↦ cpre(S) ∩ safe` and it allows exactly the inputs keeping every
/// successor inside that set.
pub fn safety_control(sys: &AbstractSystem, spec: &SafetySpec) -> Result<ControllerTable> {
    safety_control_traced(sys, spec).map(|(t, _)| t)
}

/// The maximally permissive controller for `safe`, computed from the one
/// for a superset of `safe`: its domain is cut down to `safe` and pruned.
/// Equal to [`safety_control`] on `safe` because the invariant set of a
/// smaller safe set lies inside that of the larger one.
pub(crate) fn safety_control_within(sys: &AbstractSystem, sup: &ControllerTable, safe: &StateSet) -> ControllerTable {
    let mut table = sup.clone();
    let removed = sup.domain().difference(safe);
    for x in &removed {
        table.undefine(x);
    }
    let dirty = sys.predecessors_overapprox(&removed);
    prune(sys, &mut table, dirty);
    table
}

/// Largest nonblocking sub-controller of `c`: inputs outside `c` are treated
/// as leading to a sink, and the safety fixed point is solved for staying out
/// of it.
pub fn largest_nonblocking(sys: &AbstractSystem, c: &ControllerTable) -> Result<ControllerTable> {
    c.check_against(sys)?;
    let mut table = c.clone();
    let dirty = table.domain().clone();
    prune(sys, &mut table, dirty);
    Ok(table)
}

/// Like [`largest_nonblocking`], for a table known to be closed everywhere
/// except at its blocking cells (a product of closed controllers).
pub(crate) fn largest_nonblocking_of_closed_product(sys: &AbstractSystem, table: &mut ControllerTable) -> FixpointTrace {
    let blocking = StateSet::from_indices(
        table.num_states(),
        table.domain().iter().filter(|&x| table.is_blocking_at(x)),
    );
    prune(sys, table, blocking)
}
