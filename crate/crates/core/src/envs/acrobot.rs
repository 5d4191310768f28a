//! Two-link underactuated arm. Torque acts on the joint between the links;
//! the episode ends once the free tip rises one link length above the pivot.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcrobotParams {
    /// kg
    pub link_mass_1: f64,
    /// kg
    pub link_mass_2: f64,
    /// m
    pub link_length_1: f64,
    /// m, pivot to center of mass
    pub link_com_1: f64,
    /// m
    pub link_com_2: f64,
    /// kg·m^2
    pub link_moi: f64,
    /// m/s^2
    pub gravity: f64,
    /// s
    pub dt: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub max_steps: usize,
}

impl Default for AcrobotParams {
    fn default() -> Self {
        Self {
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_length_1: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            gravity: 9.8,
            dt: 0.2,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            max_steps: 500,
        }
    }
}

/// Torques for the three base actions.
pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

/// `[theta1, theta2, theta1_dot, theta2_dot]`
pub type AcrobotState = [f64; 4];

pub fn observe(s: &AcrobotState) -> Vec<f64> {
    vec![s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin(), s[2], s[3]]
}

pub fn is_terminal(s: &AcrobotState) -> bool {
    -s[0].cos() - (s[1] + s[0]).cos() > 1.0
}

/// Time derivative of the state under torque `a`.
///
/// Gravity terms use `sin` directly so the hanging rest is an exact fixed point.
pub fn derivatives(p: &AcrobotParams, s: &AcrobotState, a: f64) -> AcrobotState {
    let (m1, m2) = (p.link_mass_1, p.link_mass_2);
    let l1 = p.link_length_1;
    let (lc1, lc2) = (p.link_com_1, p.link_com_2);
    let (i1, i2) = (p.link_moi, p.link_moi);
    let g = p.gravity;
    let [theta1, theta2, dtheta1, dtheta2] = *s;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2).sin();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * theta1.sin()
        + phi2;
    let ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(p: &AcrobotParams, s: &AcrobotState, a: f64) -> AcrobotState {
    let dt = p.dt;
    let offset = |base: &AcrobotState, k: &AcrobotState, h: f64| -> AcrobotState {
        std::array::from_fn(|i| base[i] + h * k[i])
    };
    let k1 = derivatives(p, s, a);
    let k2 = derivatives(p, &offset(s, &k1, dt / 2.0), a);
    let k3 = derivatives(p, &offset(s, &k2, dt / 2.0), a);
    let k4 = derivatives(p, &offset(s, &k3, dt), a);
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Shifts `x` by whole periods into `[lo, hi]`.
fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    while x > hi {
        x -= span;
    }
    while x < lo {
        x += span;
    }
    x
}

/// One fourth-order Runge–Kutta step of length `dt`, then angle wrapping and
/// velocity clamping. Returns the next state and whether it is terminal.
pub fn acrobot_step(p: &AcrobotParams, s: &AcrobotState, torque: f64) -> (AcrobotState, bool) {
    let mut ns = rk4(p, s, torque);
    ns[0] = wrap(ns[0], -PI, PI);
    ns[1] = wrap(ns[1], -PI, PI);
    ns[2] = ns[2].clamp(-p.max_vel_1, p.max_vel_1);
    ns[3] = ns[3].clamp(-p.max_vel_2, p.max_vel_2);
    (ns, is_terminal(&ns))
}
