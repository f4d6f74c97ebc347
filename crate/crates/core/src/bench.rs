//! Benchmark protocol: grid presets, per-instance comparison of composed and
//! from-scratch shields, and the results CSV.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::controller_equal;
use crate::dubins::DubinsParams;
use crate::error::{Error, Result};
use crate::fixtures::{random_set, random_system};
use crate::navsim::{check_handover, random_world, run_episode, Mode, SensingConfig, ShieldSetup, WorldParams};
use crate::shield::AtomicShieldBank;
use crate::stateset::StateSet;
use crate::synthesis::{safety_control, SafetySpec};

pub const RESULTS_HEADER: &str = "instance_id,avg_computationAdaptive,avg_computationBaseline,steps,interventions,safe";

/// Input grid widths for `(v, a)`.
pub const INPUT_ETA: [f64; 2] = [0.2, 0.5];
/// Visibility half-width.
pub const VISIBILITY: f64 = 1.0;
/// Fence thickness.
pub const FENCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridPreset {
    Coarse,
    Medium,
    Fine,
}

impl GridPreset {
    pub const ALL: [GridPreset; 3] = [GridPreset::Coarse, GridPreset::Medium, GridPreset::Fine];

    /// Nominal state cell widths `(x, y, θ)`.
    pub fn state_eta(self) -> [f64; 3] {
        match self {
            GridPreset::Coarse => [0.10, 0.10, 0.30],
            GridPreset::Medium => [0.08, 0.08, 0.25],
            GridPreset::Fine => [0.06, 0.06, 0.20],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GridPreset::Coarse => "coarse",
            GridPreset::Medium => "medium",
            GridPreset::Fine => "fine",
        }
    }

    pub fn sensing(self) -> Result<SensingConfig> {
        SensingConfig::new(VISIBILITY, FENCE, self.state_eta(), INPUT_ETA, DubinsParams::standard())
    }
}

impl fmt::Display for GridPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GridPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown grid preset `{s}` (coarse, medium, fine)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub preset: GridPreset,
    pub instances: usize,
    /// Instance `i` uses world and disturbance seed `seed + i`.
    pub seed: u64,
    pub max_steps: usize,
    /// Worker threads for the parallel offline stages.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub world: WorldParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            preset: GridPreset::Coarse,
            instances: 70,
            seed: 0,
            max_steps: 400,
            threads: 1,
            out_dir: PathBuf::from("out"),
            world: WorldParams::default(),
        }
    }
}

impl BenchConfig {
    pub fn instance_seed(&self, instance: usize) -> u64 {
        self.seed.wrapping_add(instance as u64)
    }

    pub fn results_path(&self) -> PathBuf {
        self.out_dir.join(format!("results-{}.csv", self.preset))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance_id: usize,
    /// Mean per-step compose time, seconds.
    pub avg_adaptive: f64,
    /// Mean per-step from-scratch synthesis time, seconds.
    pub avg_baseline: f64,
    pub steps: usize,
    pub interventions: usize,
    pub safe: bool,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.avg_baseline / self.avg_adaptive
    }
}

/// Runs one instance in both shielded modes on the same seed and checks
/// that they take the same decisions.
pub fn run_instance(setup: &ShieldSetup, cfg: &BenchConfig, instance: usize) -> Result<BenchRow> {
    let seed = cfg.instance_seed(instance);
    let world = random_world(seed, &cfg.world)?;
    let dynamic = run_episode(&world, setup, Mode::Dynamic, seed, cfg.max_steps)?;
    let baseline = run_episode(&world, setup, Mode::PureOnline, seed, cfg.max_steps)?;
    if let Some(step) = dynamic.steps.iter().zip(&baseline.steps).position(|(a, b)| a.decision != b.decision) {
        return Err(Error::DecisionMismatch { instance, step });
    }
    if dynamic.steps.len() != baseline.steps.len() {
        return Err(Error::DecisionMismatch { instance, step: dynamic.steps.len().min(baseline.steps.len()) });
    }
    let safe = [&dynamic, &baseline].iter().all(|t| !t.status.is_failure() && check_handover(t));
    Ok(BenchRow {
        instance_id: instance,
        avg_adaptive: dynamic.mean_update_seconds(),
        avg_baseline: baseline.mean_update_seconds(),
        steps: dynamic.steps.len(),
        interventions: dynamic.interventions(),
        safe,
    })
}

/// All instances, one after the other.
pub fn run_bench(setup: &ShieldSetup, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    (0..cfg.instances)
        .map(|i| {
            let row = run_instance(setup, cfg, i)?;
            log::info!(
                "instance {i}: {} steps, adaptive {:.3e} s, baseline {:.3e} s",
                row.steps,
                row.avg_adaptive,
                row.avg_baseline
            );
            Ok(row)
        })
        .collect()
}

/// Writes the results CSV. Refuses to write an empty table.
pub fn emit_results(rows: &[BenchRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no benchmark rows to write".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(RESULTS_HEADER.split(',')).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.instance_id.to_string(),
            format!("{:e}", r.avg_adaptive),
            format!("{:e}", r.avg_baseline),
            r.steps.to_string(),
            r.interventions.to_string(),
            r.safe.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Reads a results CSV written by [`emit_results`].
pub fn read_results(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    if r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(Error::Parse { line: 1, message: "unexpected header".into() });
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| {
                let name = RESULTS_HEADER.split(',').nth(k).unwrap_or_default();
                rec.get(k).ok_or_else(|| Error::Parse { line, message: format!("missing `{name}`") }).map(|v| (v, name))
            };
            let bad = |name: &str| Error::Parse { line, message: format!("bad value in `{name}`") };
            macro_rules! parse {
                ($k:expr) => {{
                    let (v, name) = field($k)?;
                    v.parse().map_err(|_| bad(name))?
                }};
            }
            Ok(BenchRow {
                instance_id: parse!(0),
                avg_adaptive: parse!(1),
                avg_baseline: parse!(2),
                steps: parse!(3),
                interventions: parse!(4),
                safe: parse!(5),
            })
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Outcome of the random composition-equals-synthesis suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleReport {
    pub trials: usize,
    pub equal: usize,
}

/// Random systems with at most 64 states and 4 inputs, each with two or
/// three random safe sets: the composed shield must equal the controller
/// synthesized for the intersection.
pub fn verify_oracle(trials: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut equal = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=64);
        let m = rng.gen_range(1..=4);
        let p_out = rng.gen_range(0.0..0.2);
        let sys = Arc::new(random_system(&mut rng, n, m, 4, p_out));
        let k = rng.gen_range(2..=3);
        let density = rng.gen_range(0.5..1.0);
        let sets: Vec<StateSet> = (0..k).map(|_| random_set(&mut rng, n, density)).collect();
        let mut inter = StateSet::full(n);
        sets.iter().for_each(|s| inter.intersect_with(s));
        let bank = AtomicShieldBank::synthesize(Arc::clone(&sys), sets)?;
        let ids: Vec<_> = bank.ids().collect();
        let composed = bank.compose(&ids)?;
        let direct = safety_control(&sys, &SafetySpec::new(inter))?;
        if controller_equal(composed.table(), &direct)? {
            equal += 1;
        }
    }
    Ok(OracleReport { trials, equal })
}
