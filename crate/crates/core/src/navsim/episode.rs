//! Closed-loop episodes: sense, update the shield, filter the scripted
//! proposal, step the perturbed vehicle.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::{build_abstraction, AbstractSystem};
use crate::dubins::dubins_step;
use crate::error::{Error, Result};
use crate::grid::CellId;
use crate::shield::{pure_online_shield, AtomicShieldBank, AtomicSpecId, Shield, ShieldDecision};
use crate::stateset::StateSet;

use super::scripted::scripted_controller;
use super::sensing::{sense, AtomicLayout, SensingConfig};
use super::world::WorldMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Compose the atomic bank every step.
    Dynamic,
    /// Synthesize from scratch every step.
    PureOnline,
    Unshielded,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dynamic => "dynamic",
            Mode::PureOnline => "pure-online",
            Mode::Unshielded => "unshielded",
        }
    }

    pub fn is_shielded(self) -> bool {
        self != Mode::Unshielded
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Mode::Dynamic),
            "pure-online" => Ok(Mode::PureOnline),
            "unshielded" => Ok(Mode::Unshielded),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    GoalReached,
    MaxSteps,
    Collision,
    DomainViolation,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::GoalReached => "goal-reached",
            Status::MaxSteps => "max-steps",
            Status::Collision => "collision",
            Status::DomainViolation => "domain-violation",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Status::Collision | Status::DomainViolation)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything an episode needs besides the world: the sensing setup, the
/// abstraction and, for dynamic mode, the atomic bank.
#[derive(Debug, Clone)]
pub struct ShieldSetup {
    pub cfg: SensingConfig,
    pub layout: AtomicLayout,
    pub sys: Arc<AbstractSystem>,
    pub bank: Option<AtomicShieldBank>,
    pub abstraction_time: Duration,
    pub synthesis_time: Duration,
}

impl ShieldSetup {
    /// Builds the abstraction only.
    pub fn abstraction_only(cfg: SensingConfig) -> Result<Self> {
        let layout = AtomicLayout::new(&cfg.grid, cfg.d)?;
        let t0 = Instant::now();
        let sys = Arc::new(build_abstraction(&cfg.grid, &cfg.inputs, &cfg.params)?);
        let abstraction_time = t0.elapsed();
        Ok(Self { cfg, layout, sys, bank: None, abstraction_time, synthesis_time: Duration::ZERO })
    }

    /// Builds the abstraction and synthesizes one controller per atomic.
    pub fn build(cfg: SensingConfig) -> Result<Self> {
        let mut setup = Self::abstraction_only(cfg)?;
        let t0 = Instant::now();
        setup.bank = Some(AtomicShieldBank::synthesize(Arc::clone(&setup.sys), setup.layout.safe_sets())?);
        setup.synthesis_time = t0.elapsed();
        Ok(setup)
    }

    /// Shield for one snapshot, and the wall time spent producing it.
    fn update(&self, mode: Mode, active: &[AtomicSpecId]) -> Result<Option<(Shield, Duration)>> {
        match mode {
            Mode::Unshielded => Ok(None),
            Mode::Dynamic => {
                let bank = self
                    .bank
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("dynamic mode needs a synthesized bank".into()))?;
                let t0 = Instant::now();
                let shield = bank.compose(active)?;
                Ok(Some((shield, t0.elapsed())))
            }
            Mode::PureOnline => {
                let sets = active.iter().map(|&id| self.layout.safe_set(id)).collect::<Result<Vec<StateSet>>>()?;
                let refs: Vec<&StateSet> = sets.iter().collect();
                let t0 = Instant::now();
                let shield = pure_online_shield(&self.sys, &refs)?;
                Ok(Some((shield, t0.elapsed())))
            }
        }
    }
}

/// One control step. `decision` is `None` when unshielded or when the robot
/// was found outside the shield's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Global pose before the move.
    pub pose: [f64; 3],
    /// The robot's cell in its own frame.
    pub cell: CellId,
    pub active_atomics: usize,
    pub proposed: Vec<f64>,
    pub decision: Option<ShieldDecision>,
    pub applied: Vec<f64>,
    /// Shielded modes: the robot's cell lies in the freshly updated shield.
    pub in_domain: bool,
    pub update_seconds: f64,
    pub disturbance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub mode: Mode,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub status: Status,
    pub final_pose: [f64; 3],
}

impl EpisodeTrace {
    pub fn interventions(&self) -> usize {
        self.steps.iter().filter(|s| s.decision.as_ref().is_some_and(|d| d.intervened)).count()
    }

    /// Mean wall time of the shield update over the steps that ran one.
    pub fn mean_update_seconds(&self) -> f64 {
        if self.steps.is_empty() || !self.mode.is_shielded() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.update_seconds).sum::<f64>() / self.steps.len() as f64
    }

    pub fn decisions(&self) -> Vec<Option<&ShieldDecision>> {
        self.steps.iter().map(|s| s.decision.as_ref()).collect()
    }

    /// Writes one CSV row per step. The `status` column reads `running`
    /// except on the last row, which carries the terminal status.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "step,x,y,theta,cell,active_atomics,proposed_v,proposed_a,chosen_v,chosen_a,proposed_allowed,intervened,in_domain,update_seconds,w1,w2,w3,status"
        )?;
        let last = self.steps.len().saturating_sub(1);
        for (k, s) in self.steps.iter().enumerate() {
            let (allowed, intervened) = match &s.decision {
                Some(d) => (d.proposed_allowed.to_string(), d.intervened.to_string()),
                None => (String::new(), String::new()),
            };
            let status = if k == last { self.status.as_str() } else { "running" };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:e},{},{},{},{}",
                s.step,
                s.pose[0],
                s.pose[1],
                s.pose[2],
                s.cell,
                s.active_atomics,
                s.proposed[0],
                s.proposed[1],
                s.applied[0],
                s.applied[1],
                allowed,
                intervened,
                s.in_domain,
                s.update_seconds,
                s.disturbance[0],
                s.disturbance[1],
                s.disturbance[2],
                status
            )?;
        }
        Ok(())
    }
}

/// Runs one episode until the goal is reached, a failure occurs or
/// `max_steps` moves were made. Disturbances are drawn uniformly from the
/// disturbance box with a generator seeded by `seed`.
pub fn run_episode(world: &WorldMap, setup: &ShieldSetup, mode: Mode, seed: u64, max_steps: usize) -> Result<EpisodeTrace> {
    let cfg = &setup.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = cfg.params.disturbance().radius().to_vec();
    let goal = world.goal.center();
    let mut pose = world.start;
    let mut steps = Vec::new();
    let status = loop {
        let snapshot = sense(world, pose, cfg, &setup.layout);
        let shield = setup.update(mode, &snapshot.active)?;
        let cell = cfg.robot_cell(pose)?;
        let in_domain = shield.as_ref().is_some_and(|(s, _)| s.contains(cell) && !s.table().is_blocking_at(cell.index()));
        let update_seconds = shield.as_ref().map_or(0.0, |(_, t)| t.as_secs_f64());
        let done = if world.goal.contains(pose[0], pose[1]) {
            Some(Status::GoalReached)
        } else if steps.len() == max_steps {
            Some(Status::MaxSteps)
        } else if mode.is_shielded() && !in_domain {
            Some(Status::DomainViolation)
        } else {
            None
        };
        if let Some(status) = done {
            // The closing record documents the handover into the last pose;
            // it applies no input.
            steps.push(StepRecord {
                step: steps.len(),
                pose,
                cell,
                active_atomics: snapshot.active.len(),
                proposed: vec![0.0; 2],
                decision: None,
                applied: vec![0.0; 2],
                in_domain,
                update_seconds,
                disturbance: [0.0; 3],
            });
            break status;
        }
        let proposed = scripted_controller(pose, goal, &cfg.inputs);
        let decision = match &shield {
            Some((s, _)) => Some(s.apply(cell, &proposed)?),
            None => None,
        };
        let applied = decision.as_ref().map_or_else(|| proposed.clone(), |d| d.chosen_input.clone());
        let mut w = [0.0; 3];
        for (wi, &r) in w.iter_mut().zip(&radius) {
            *wi = if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        }
        let next = dubins_step(pose, [applied[0], applied[1]], w, &cfg.params);
        steps.push(StepRecord {
            step: steps.len(),
            pose,
            cell,
            active_atomics: snapshot.active.len(),
            proposed,
            decision,
            applied,
            in_domain,
            update_seconds,
            disturbance: w,
        });
        pose = next;
        if world.collides(pose[0], pose[1]) {
            break Status::Collision;
        }
    };
    Ok(EpisodeTrace { mode, seed, steps, status, final_pose: pose })
}

/// Safe handover: every shielded step, including the closing record, found
/// the robot inside the shield recomposed at its new position. Unshielded
/// traces pass vacuously.
pub fn check_handover(trace: &EpisodeTrace) -> bool {
    !trace.mode.is_shielded() || (trace.status != Status::Collision && trace.steps.iter().all(|s| s.in_domain))
}
