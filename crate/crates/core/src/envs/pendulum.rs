//! Frictionless pendulum swing-up.
//!
//! Internal state is `(theta, theta_dot)` with `theta in (-pi, pi]` and
//! `theta_dot` clamped to [-8, 8]; the observation is `(cos theta, sin theta,
//! theta_dot)`. Dynamics use the standard constants g = 10, m = 1, L = 1,
//! dt = 0.05 with semi-implicit Euler integration, torque clipped to [-2, 2].
//! The reward is `-(theta^2 + 0.1 theta_dot^2 + 0.001 tau^2)` evaluated at
//! the pre-step state.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ControlEnv;

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;

/// Pendulum pole state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    /// Angle from upright, wrapped to (-pi, pi].
    pub theta: f64,
    /// Angular velocity in [-8, 8].
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn new(theta: f64, theta_dot: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
            theta_dot: theta_dot.clamp(-MAX_SPEED, MAX_SPEED),
        }
    }

    /// Observation `(cos theta, sin theta, theta_dot)`.
    pub fn observation(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.theta.cos(), self.theta.sin(), self.theta_dot])
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = (x + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if y == -std::f64::consts::PI {
        y = std::f64::consts::PI;
    }
    y
}

/// One pendulum transition: semi-implicit Euler update, reward from the
/// pre-step state.
pub fn pendulum_step(st: PendulumState, torque: f64) -> (PendulumState, f64) {
    let tau = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
    let cost = st.theta * st.theta + 0.1 * st.theta_dot * st.theta_dot + 0.001 * tau * tau;
    let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * st.theta.sin()
        + 3.0 / (MASS * LENGTH * LENGTH) * tau;
    let theta_dot = (st.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
    let theta = wrap_angle(st.theta + theta_dot * DT);
    (
        PendulumState { theta, theta_dot },
        -cost,
    )
}

/// Pendulum environment over the flat 2-vector internal state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PendulumEnv {
    pub horizon: usize,
}

impl Default for PendulumEnv {
    fn default() -> Self {
        Self { horizon: 200 }
    }
}

impl ControlEnv for PendulumEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_init(&self, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let theta_dot = rng.gen_range(-1.0..1.0);
        DVector::from_column_slice(&[theta, theta_dot])
    }

    fn step(&self, state: &DVector<f64>, action: &DVector<f64>) -> (DVector<f64>, f64) {
        let st = PendulumState::new(state[0], state[1]);
        let (next, reward) = pendulum_step(st, action[0]);
        (
            DVector::from_column_slice(&[next.theta, next.theta_dot]),
            reward,
        )
    }

    fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        PendulumState::new(state[0], state[1]).observation()
    }
}
