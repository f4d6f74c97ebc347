//! Discrete-time Dubins vehicle and its interval over-approximation.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::grid::{Interval, IntervalBox};

/// Centered disturbance box `[-radius[i], radius[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceBox {
    radius: Vec<f64>,
}

impl DisturbanceBox {
    pub fn new(radius: Vec<f64>) -> Result<Self> {
        if radius.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidConfig(format!("disturbance radii must be non-negative: {radius:?}")));
        }
        Ok(Self { radius })
    }

    pub fn zero(dims: usize) -> Self {
        Self { radius: vec![0.0; dims] }
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.radius.len() && w.iter().zip(&self.radius).all(|(x, r)| x.abs() <= *r)
    }
}

/// Sampling time and disturbance bounds of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct DubinsParams {
    tau: f64,
    disturbance: DisturbanceBox,
}

impl DubinsParams {
    pub fn new(tau: f64, disturbance: DisturbanceBox) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidConfig(format!("sampling time must be positive, got {tau}")));
        }
        if disturbance.radius().len() != 3 {
            return Err(Error::InvalidConfig("Dubins disturbance box must be 3-dimensional".into()));
        }
        Ok(Self { tau, disturbance })
    }

    /// The experimental setting: `tau = 0.1 s`, `|w1|, |w2| <= 0.01`, `|w3| <= 0.02`.
    pub fn standard() -> Self {
        Self::new(0.1, DisturbanceBox::new(vec![0.01, 0.01, 0.02]).unwrap()).unwrap()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn disturbance(&self) -> &DisturbanceBox {
        &self.disturbance
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// One step of the vehicle: `state = (x, y, theta)`, `input = (v, a)`.
pub fn dubins_step(state: [f64; 3], input: [f64; 2], w: [f64; 3], params: &DubinsParams) -> [f64; 3] {
    let [x, y, theta] = state;
    let [v, a] = input;
    let tau = params.tau;
    [
        x + v * theta.cos() * tau + w[0],
        y + v * theta.sin() * tau + w[1],
        wrap_angle(theta + a * tau + w[2]),
    ]
}

/// Does the closed interval contain a point of `base + 2*pi*k` for some integer k?
fn hits(iv: Interval, base: f64) -> bool {
    let k = ((iv.lo - base) / TAU).ceil();
    base + k * TAU <= iv.hi
}

/// Exact range of `cos` over a closed interval, interior extrema included.
pub fn cos_range(iv: Interval) -> Interval {
    if iv.width() >= TAU {
        return Interval::new(-1.0, 1.0);
    }
    let (ca, cb) = (iv.lo.cos(), iv.hi.cos());
    let hi = if hits(iv, 0.0) { 1.0 } else { ca.max(cb) };
    let lo = if hits(iv, PI) { -1.0 } else { ca.min(cb) };
    Interval::new(lo, hi)
}

/// Exact range of `sin` over a closed interval, interior extrema included.
pub fn sin_range(iv: Interval) -> Interval {
    if iv.width() >= TAU {
        return Interval::new(-1.0, 1.0);
    }
    let (sa, sb) = (iv.lo.sin(), iv.hi.sin());
    let hi = if hits(iv, FRAC_PI_2) { 1.0 } else { sa.max(sb) };
    let lo = if hits(iv, -FRAC_PI_2) { -1.0 } else { sa.min(sb) };
    Interval::new(lo, hi)
}

fn scale(k: f64, iv: Interval) -> Interval {
    let (a, b) = (k * iv.lo, k * iv.hi);
    Interval::new(a.min(b), a.max(b))
}

/// Displacement of one step, excluding the state itself, for a heading
/// interval: `(dx, dy, dtheta)` as intervals including the disturbance.
pub fn step_displacement(theta: Interval, input: [f64; 2], params: &DubinsParams) -> [Interval; 3] {
    let [v, a] = input;
    let tau = params.tau;
    let w = params.disturbance.radius();
    let dx = scale(v * tau, cos_range(theta));
    let dy = scale(v * tau, sin_range(theta));
    [
        Interval::new(dx.lo - w[0], dx.hi + w[0]),
        Interval::new(dy.lo - w[1], dy.hi + w[1]),
        Interval::new(a * tau - w[2], a * tau + w[2]),
    ]
}

/// Box containing every successor of every state in `cell` under `input`
/// and every disturbance in the box. The heading component is not wrapped.
pub fn reach_overapprox(cell: &IntervalBox, input: [f64; 2], params: &DubinsParams) -> IntervalBox {
    let [dx, dy, dt] = step_displacement(cell[2], input, params);
    vec![
        Interval::new(cell[0].lo + dx.lo, cell[0].hi + dx.hi),
        Interval::new(cell[1].lo + dy.lo, cell[1].hi + dy.hi),
        Interval::new(cell[2].lo + dt.lo, cell[2].hi + dt.hi),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let p = DubinsParams::standard();
        let s = [0.3, -0.2, 1.0];
        let n = dubins_step(s, [0.0, 0.0], [0.0; 3], &p);
        assert!(close(n[0], s[0]) && close(n[1], s[1]) && close(n[2], s[2]));
    }

    #[test]
    fn step_examples() {
        let p = DubinsParams::standard();
        let n = dubins_step([0.0, 0.0, 0.0], [0.2, 0.0], [0.0; 3], &p);
        assert!(close(n[0], 0.02) && close(n[1], 0.0) && close(n[2], 0.0));

        let n = dubins_step([0.0, 0.0, FRAC_PI_2], [0.4, 4.0], [0.01, -0.01, 0.02], &p);
        assert!(close(n[0], 0.01));
        assert!(close(n[1], 0.04 - 0.01));
        assert!(close(n[2], FRAC_PI_2 + 0.42));
    }

    #[test]
    fn wrap_is_half_open() {
        assert!(close(wrap_angle(PI), -PI));
        assert!(close(wrap_angle(-PI), -PI));
        assert!(close(wrap_angle(3.0 * PI + 0.5), -PI + 0.5));
        assert!(close(wrap_angle(0.25), 0.25));
    }

    #[test]
    fn trig_ranges_find_interior_extrema() {
        assert_eq!(cos_range(Interval::new(-0.1, 0.1)).hi, 1.0);
        assert_eq!(cos_range(Interval::new(3.0, 3.3)).lo, -1.0);
        assert_eq!(sin_range(Interval::new(1.5, 1.7)).hi, 1.0);
        assert_eq!(sin_range(Interval::new(-1.7, -1.5)).lo, -1.0);
        // Extremum reached through periodicity.
        assert_eq!(cos_range(Interval::new(6.2, 6.4)).hi, 1.0);
        let r = cos_range(Interval::new(0.0, 0.3));
        assert!(close(r.lo, 0.3f64.cos()) && r.hi == 1.0);
        assert_eq!(cos_range(Interval::new(0.0, 7.0)), Interval::new(-1.0, 1.0));
    }

    #[test]
    fn reach_identity_dynamics() {
        let p = DubinsParams::new(0.1, DisturbanceBox::zero(3)).unwrap();
        let cell = vec![Interval::new(0.1, 0.2), Interval::new(-0.3, -0.2), Interval::new(0.0, 0.3)];
        assert_eq!(reach_overapprox(&cell, [0.0, 0.0], &p), cell);
    }

    #[test]
    fn reach_x_interval_example() {
        let p = DubinsParams::standard();
        let cell = vec![Interval::new(0.0, 0.1), Interval::new(0.0, 0.1), Interval::new(0.0, 0.3)];
        let r = reach_overapprox(&cell, [0.2, 0.0], &p);
        assert!(close(r[0].lo, 0.0 + 0.02 * 0.3f64.cos() - 0.01));
        assert!(close(r[0].hi, 0.1 + 0.02 + 0.01));
    }

    /// Dense sampling of cell and disturbance: every sampled image must lie in
    /// the interval box.
    #[test]
    fn reach_contains_sampled_images() {
        let p = DubinsParams::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = p.disturbance().radius().to_vec();
        for _ in 0..200 {
            let x0 = rng.gen_range(-1.0..1.0);
            let y0 = rng.gen_range(-1.0..1.0);
            let t0 = rng.gen_range(-PI..PI);
            let cell = vec![
                Interval::new(x0, x0 + 0.1),
                Interval::new(y0, y0 + 0.1),
                Interval::new(t0, t0 + rng.gen_range(0.05..0.6)),
            ];
            let input = [rng.gen_range(-0.4..0.4), rng.gen_range(-4.0..4.0)];
            let r = reach_overapprox(&cell, input, &p);
            for _ in 0..1000 {
                let s = [
                    rng.gen_range(cell[0].lo..cell[0].hi),
                    rng.gen_range(cell[1].lo..cell[1].hi),
                    rng.gen_range(cell[2].lo..cell[2].hi),
                ];
                let d = [rng.gen_range(-w[0]..=w[0]), rng.gen_range(-w[1]..=w[1]), rng.gen_range(-w[2]..=w[2])];
                let n = dubins_step(s, input, d, &p);
                assert!(r[0].contains(n[0]) && r[1].contains(n[1]));
                // Heading is compared unwrapped.
                let t = s[2] + input[1] * p.tau() + d[2];
                assert!(r[2].contains(t));
            }
        }
    }
}
