//! A deterministic proportional heading controller used as the task
//! controller under the shield.

use std::f64::consts::FRAC_PI_4;

use crate::dubins::wrap_angle;
use crate::grid::InputGrid;

/// Turn-rate gain on the heading error.
pub const HEADING_GAIN: f64 = 2.0;

/// Steers toward `goal`: turn rate is the grid value closest to
/// `clamp(2 * heading_error)`, speed is 0.4 when roughly facing the goal and
/// 0.2 otherwise. The result is always an input-grid point.
pub fn scripted_controller(pose: [f64; 3], goal: (f64, f64), inputs: &InputGrid) -> Vec<f64> {
    let bearing = (goal.1 - pose[1]).atan2(goal.0 - pose[0]);
    let err = wrap_angle(bearing - pose[2]);
    let a_max = inputs.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
    let a = (HEADING_GAIN * err).clamp(-a_max, a_max);
    let v = if err.abs() < FRAC_PI_4 { 0.4 } else { 0.2 };
    inputs.point(inputs.nearest(&[v, a])).to_vec()
}
