//! Small hand-written and randomly generated abstract systems for tests,
//! oracle suites and debugging.

use rand::Rng;

use crate::abstraction::AbstractSystem;
use crate::stateset::StateSet;

/// The seven-state, two-input automaton used to illustrate composition:
/// `a -u1-> b`, `a -u2-> e`, `b -u1-> c`, `b -u2-> d`, `e -u1-> f`,
/// `e -u2-> g`, and self-loops on `c, d, f, g` under both inputs.
///
/// Returns the system and the indices of `a..g`; inputs `u1, u2` are 0 and 1.
pub fn figure_one() -> (AbstractSystem, [usize; 7]) {
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    const E: usize = 4;
    const F: usize = 5;
    const G: usize = 6;
    let sys = AbstractSystem::from_fn(7, 2, |x, u| {
        let next = match (x, u) {
            (A, 0) => B,
            (A, _) => E,
            (B, 0) => C,
            (B, _) => D,
            (E, 0) => F,
            (E, _) => G,
            (s, _) => s,
        };
        (vec![next], false)
    })
    .expect("well-formed automaton");
    (sys, [A, B, C, D, E, F, G])
}

/// Random explicit system: every pair gets 1 to `max_succ` successors and is
/// flagged out with probability `p_out`.
pub fn random_system<R: Rng>(rng: &mut R, n: usize, m: usize, max_succ: usize, p_out: f64) -> AbstractSystem {
    AbstractSystem::from_fn(n, m, |_, _| {
        let k = rng.gen_range(1..=max_succ);
        let succ = (0..k).map(|_| rng.gen_range(0..n)).collect();
        (succ, rng.gen_bool(p_out))
    })
    .expect("generated successors are in range")
}

/// Random subset containing each state with probability `p`.
pub fn random_set<R: Rng>(rng: &mut R, n: usize, p: f64) -> StateSet {
    StateSet::from_indices(n, (0..n).filter(|_| rng.gen_bool(p)))
}
