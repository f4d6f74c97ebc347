mod common;

use parashield::bench::GridPreset;
use parashield::build_abstraction;

fn sampled_soundness(preset: GridPreset, samples: usize, seed: u64) -> usize {
    let cfg = preset.sensing().unwrap();
    let sys = build_abstraction(&cfg.grid, &cfg.inputs, &cfg.params).unwrap();
    common::frr_violations(&cfg, &sys, samples, seed)
}

#[test]
fn coarse_abstraction_is_sound() {
    assert_eq!(sampled_soundness(GridPreset::Coarse, 10_000, 1), 0);
}

#[test]
fn medium_abstraction_is_sound() {
    assert_eq!(sampled_soundness(GridPreset::Medium, 10_000, 2), 0);
}

#[test]
fn fine_abstraction_is_sound() {
    assert_eq!(sampled_soundness(GridPreset::Fine, 10_000, 3), 0);
}
