//! Inverted pendulum swing-up. `theta = 0` is upright.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// m/s^2
    pub gravity: f64,
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    /// s
    pub dt: f64,
    /// rad/s
    pub max_speed: f64,
    /// N·m
    pub max_torque: f64,
    pub max_steps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_speed: 8.0,
            max_torque: 2.0,
            max_steps: 200,
        }
    }
}

/// `(theta, theta_dot)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

/// Wraps an angle into `[-pi, pi)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

pub fn observe(state: &PendulumState) -> Vec<f64> {
    vec![state.theta.cos(), state.theta.sin(), state.theta_dot]
}

/// One semi-implicit Euler step under torque `u`. Returns the next state and
/// the reward collected on the way.
pub fn pendulum_step(params: &PendulumParams, state: &PendulumState, u: f64) -> Result<(PendulumState, f64)> {
    if !u.is_finite() {
        return Err(Error::InvalidAction(format!("non-finite torque {u}")));
    }
    let PendulumParams {
        gravity: g,
        mass: m,
        length: l,
        dt,
        max_speed,
        ..
    } = *params;
    let PendulumState { theta, theta_dot } = *state;

    let cost = angle_normalize(theta).powi(2) + 0.1 * theta_dot * theta_dot + 0.001 * u * u;

    let accel = 3.0 * g / (2.0 * l) * theta.sin() + 3.0 / (m * l * l) * u;
    let new_theta_dot = (theta_dot + accel * dt).clamp(-max_speed, max_speed);
    let new_theta = theta + new_theta_dot * dt;

    Ok((
        PendulumState {
            theta: new_theta,
            theta_dot: new_theta_dot,
        },
        -cost,
    ))
}
