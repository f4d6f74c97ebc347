//! Reference implementations kept deliberately naive: plain vectors of
//! booleans and the textbook iteration, sharing no code with the library's
//! bitsets or pruning engine.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use parashield::dubins::dubins_step;
use parashield::navsim::SensingConfig;
use parashield::{AbstractSystem, CellId, ControllerTable, StateSet};

/// Maximal controlled invariant subset of `safe`, by iterating
/// `W := safe ∩ {x | some non-out input keeps every successor in W}`
/// from the full state space until nothing changes.
pub fn brute_invariant(sys: &AbstractSystem, safe: &[bool]) -> Vec<bool> {
    let n = sys.num_states();
    let posts: Vec<Vec<Option<Vec<usize>>>> = (0..n)
        .map(|x| {
            (0..sys.num_inputs())
                .map(|u| if sys.is_out(x, u) { None } else { Some(sys.post(x, u)) })
                .collect()
        })
        .collect();
    let mut w = vec![true; n];
    loop {
        let next: Vec<bool> = (0..n)
            .map(|x| safe[x] && posts[x].iter().flatten().any(|succ| succ.iter().all(|&y| w[y])))
            .collect();
        if next == w {
            return w;
        }
        w = next;
    }
}

/// The maximally permissive controller as `(domain, allowed inputs)` lists.
pub fn brute_controller(sys: &AbstractSystem, safe: &[bool]) -> Vec<Option<Vec<usize>>> {
    let w = brute_invariant(sys, safe);
    (0..sys.num_states())
        .map(|x| {
            w[x].then(|| {
                (0..sys.num_inputs())
                    .filter(|&u| !sys.is_out(x, u) && sys.post(x, u).iter().all(|&y| w[y]))
                    .collect()
            })
        })
        .collect()
}

pub fn table_as_lists(t: &ControllerTable) -> Vec<Option<Vec<usize>>> {
    (0..t.num_states()).map(|x| t.is_defined(x).then(|| t.allowed(x).collect())).collect()
}

pub fn to_bools(s: &StateSet) -> Vec<bool> {
    (0..s.universe()).map(|i| s.contains(i)).collect()
}

/// Controllers equal as relations, compared through plain lists.
pub fn same_controller(a: &ControllerTable, b: &[Option<Vec<usize>>]) -> bool {
    table_as_lists(a) == b
}

/// Samples a point of a random cell, a random input and a random
/// disturbance, integrates the concrete dynamics, and counts samples whose
/// successor cell is missing from the abstract successors (or that leave the
/// box without the pair being flagged out).
pub fn frr_violations(cfg: &SensingConfig, sys: &AbstractSystem, samples: usize, seed: u64) -> usize {
    let w = cfg.params.disturbance().radius().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let x = rng.gen_range(0..sys.num_states());
        let u = rng.gen_range(0..sys.num_inputs());
        let cell = cfg.grid.cell_box(CellId(x as u32));
        let s: Vec<f64> = cell.iter().map(|iv| rng.gen_range(iv.lo..iv.hi)).collect();
        let dist = [rng.gen_range(-w[0]..=w[0]), rng.gen_range(-w[1]..=w[1]), rng.gen_range(-w[2]..=w[2])];
        let input = cfg.inputs.point(u);
        let next = dubins_step([s[0], s[1], s[2]], [input[0], input[1]], dist, &cfg.params);
        let ok = match cfg.grid.quantize(&next) {
            Ok(c) => sys.post(x, u).contains(&c.index()),
            Err(_) => sys.is_out(x, u),
        };
        if !ok {
            violations += 1;
        }
    }
    violations
}
