//! Dynamic shielding for parametric safety specifications.
//!
//! A perturbed control system is abstracted into a finite transition system
//! over a uniform grid ([`abstraction`]). Offline, one maximally permissive
//! safety controller is synthesized per atomic safe set ([`synthesis`],
//! [`shield`]). Online, whenever the safety requirement is revealed as a
//! conjunction of atomic safe sets, the matching atomic controllers are
//! composed into a minimally intervening shield. [`navsim`] applies this to
//! a Dubins robot exploring an unknown obstacle world and [`bench`] times
//! the composition against synthesis from scratch.

pub mod abstraction;
pub mod bench;
pub mod controller;
pub mod dubins;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod navsim;
pub mod shield;
pub mod stateset;
pub mod synthesis;

pub use abstraction::{build_abstraction, AbstractSystem, AbstractionHash};
pub use controller::{controller_equal, ControllerTable};
pub use dubins::{dubins_step, reach_overapprox, DisturbanceBox, DubinsParams};
pub use error::{Error, Result};
pub use grid::{CellId, GridSpec, InputGrid, Interval, IntervalBox};
pub use shield::{
    compose, pure_online_shield, shield_apply, synthesize_bank, AtomicShieldBank, AtomicSpecId, Shield, ShieldDecision,
};
pub use stateset::StateSet;
pub use synthesis::{cpre, largest_nonblocking, safety_control, safety_control_traced, FixpointTrace, SafetySpec};
