//! Limited-visibility navigation: a Dubins robot in an unknown world of
//! rectangular obstacles, shielded by composing atomic controllers over a
//! robot-centered grid every step.
//!
//! The frame is translated with the robot but never rotated; its origin is
//! kept on a global lattice of cell width so that the grid covers the same
//! ground from step to step (see [`FrameAlignment`]). The
//! visible square `[-d, d]²` is ringed by a fence of thickness `ε` that
//! stands for unexplored territory; every atomic safe set excludes it.

mod episode;
mod scripted;
mod sensing;
mod world;

pub use episode::{check_handover, run_episode, EpisodeTrace, Mode, ShieldSetup, Status, StepRecord};
pub use scripted::{scripted_controller, HEADING_GAIN};
pub use sensing::{make_atomics, sense, AtomicLayout, FrameAlignment, SensingConfig, VisibleSnapshot};
pub use world::{random_world, Rect, WorldMap, WorldParams};
