//! Classic-control environments and their restricted-action variants.
//!
//! Two tasks are provided, each with a full and a restricted action space:
//!
//! | id                    | action space          |
//! |-----------------------|-----------------------|
//! | `pendulum`            | box `[-2, 2]`         |
//! | `pendulum-restricted` | box `[0, 2]` (clipped) |
//! | `acrobot`             | `Discrete(3)`         |
//! | `acrobot-restricted`  | `Discrete(2)`, no-torque removed |
//!
//! Episodes that hit the step limit end with `truncated = true`; only a real
//! goal state sets `terminal`.

pub mod acrobot;
pub mod pendulum;
mod space;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use acrobot::{AcrobotParams, AcrobotState};
pub use pendulum::{PendulumParams, PendulumState};
pub use space::{Action, ActionSpace, Restriction};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "pendulum")]
    Pendulum,
    #[serde(rename = "pendulum-restricted")]
    PendulumRestricted,
    #[serde(rename = "acrobot")]
    Acrobot,
    #[serde(rename = "acrobot-restricted")]
    AcrobotRestricted,
}

impl EnvId {
    pub const ALL: [EnvId; 4] = [
        EnvId::Pendulum,
        EnvId::PendulumRestricted,
        EnvId::Acrobot,
        EnvId::AcrobotRestricted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Pendulum => "pendulum",
            EnvId::PendulumRestricted => "pendulum-restricted",
            EnvId::Acrobot => "acrobot",
            EnvId::AcrobotRestricted => "acrobot-restricted",
        }
    }

    /// The unrestricted environment this one derives from.
    pub fn source(self) -> EnvId {
        match self {
            EnvId::Pendulum | EnvId::PendulumRestricted => EnvId::Pendulum,
            EnvId::Acrobot | EnvId::AcrobotRestricted => EnvId::Acrobot,
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, EnvId::Acrobot | EnvId::AcrobotRestricted)
    }

    pub fn obs_dim(self) -> usize {
        if self.is_discrete() {
            6
        } else {
            3
        }
    }

    pub fn default_restriction(self) -> Option<Restriction> {
        match self {
            EnvId::PendulumRestricted => Some(Restriction::SubBox {
                low: vec![0.0],
                high: vec![PendulumParams::default().max_torque],
            }),
            EnvId::AcrobotRestricted => Some(Restriction::Remove { indices: vec![1] }),
            _ => None,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Dynamics {
    Pendulum {
        params: PendulumParams,
        state: PendulumState,
    },
    Acrobot {
        params: AcrobotParams,
        state: AcrobotState,
    },
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Reached an absorbing goal state.
    pub terminal: bool,
    /// Hit the step limit without reaching a goal.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    id: EnvId,
    dynamics: Dynamics,
    space: ActionSpace,
    steps: usize,
}

impl Env {
    /// Builds `id` with its default restriction, or `restriction` in its place.
    pub fn make(id: EnvId, restriction: Option<&Restriction>) -> Result<Self> {
        let (dynamics, base) = match id.source() {
            EnvId::Pendulum => {
                let params = PendulumParams::default();
                (
                    Dynamics::Pendulum {
                        params,
                        state: PendulumState { theta: 0.0, theta_dot: 0.0 },
                    },
                    ActionSpace::boxed(vec![-params.max_torque], vec![params.max_torque])?,
                )
            }
            _ => (
                Dynamics::Acrobot {
                    params: AcrobotParams::default(),
                    state: [0.0; 4],
                },
                ActionSpace::discrete(acrobot::TORQUES.len())?,
            ),
        };
        let space = match restriction.cloned().or_else(|| id.default_restriction()) {
            Some(r) => base.restrict(&r)?,
            None => base,
        };
        Ok(Self {
            id,
            dynamics,
            space,
            steps: 0,
        })
    }

    pub fn id(&self) -> EnvId {
        self.id
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn obs_dim(&self) -> usize {
        self.id.obs_dim()
    }

    pub fn max_steps(&self) -> usize {
        match &self.dynamics {
            Dynamics::Pendulum { params, .. } => params.max_steps,
            Dynamics::Acrobot { params, .. } => params.max_steps,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Raw physical state: `(theta, theta_dot)` or `(theta1, theta2, dtheta1, dtheta2)`.
    pub fn state(&self) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Pendulum { state, .. } => vec![state.theta, state.theta_dot],
            Dynamics::Acrobot { state, .. } => state.to_vec(),
        }
    }

    pub fn set_state(&mut self, raw: &[f64]) -> Result<Vec<f64>> {
        match &mut self.dynamics {
            Dynamics::Pendulum { state, .. } => {
                let [theta, theta_dot] = raw else {
                    return Err(Error::shape(2, raw.len()));
                };
                *state = PendulumState {
                    theta: *theta,
                    theta_dot: *theta_dot,
                };
            }
            Dynamics::Acrobot { state, .. } => {
                *state = raw.try_into().map_err(|_| Error::shape(4, raw.len()))?;
            }
        }
        Ok(self.observe())
    }

    pub fn observe(&self) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Pendulum { state, .. } => pendulum::observe(state),
            Dynamics::Acrobot { state, .. } => acrobot::observe(state),
        }
    }

    /// Draws a fresh initial state. Identical seeds give identical states.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &mut self.dynamics {
            Dynamics::Pendulum { state, .. } => {
                *state = PendulumState {
                    theta: rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI),
                    theta_dot: rng.random_range(-1.0..=1.0),
                };
            }
            Dynamics::Acrobot { state, .. } => {
                *state = std::array::from_fn(|_| rng.random_range(-0.1..=0.1));
            }
        }
        self.steps = 0;
        self.observe()
    }

    /// Torque that `action` produces after mapping or clipping into the space.
    pub fn torque(&self, action: &Action) -> Result<f64> {
        match (&self.space, action) {
            (ActionSpace::Discrete { .. }, Action::Discrete(i)) => Ok(acrobot::TORQUES[self.space.base_index(*i)?]),
            (ActionSpace::Box { .. }, Action::Continuous(v)) => Ok(self.space.clip(v)?[0]),
            _ => Err(Error::InvalidAction(format!(
                "{action:?} does not fit the action space of {}",
                self.id
            ))),
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<Step> {
        let torque = self.torque(action)?;
        self.steps += 1;
        let truncated_now = self.steps >= self.max_steps();
        let (reward, terminal) = match &mut self.dynamics {
            Dynamics::Pendulum { params, state } => {
                let (next, reward) = pendulum::pendulum_step(params, state, torque)?;
                *state = next;
                (reward, false)
            }
            Dynamics::Acrobot { params, state } => {
                let (next, terminal) = acrobot::acrobot_step(params, state, torque);
                *state = next;
                (if terminal { 0.0 } else { -1.0 }, terminal)
            }
        };
        Ok(Step {
            obs: self.observe(),
            reward,
            terminal,
            truncated: truncated_now && !terminal,
        })
    }

    /// Uniform random action from the space.
    pub fn sample_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match &self.space {
            ActionSpace::Discrete { base_indices } => Action::Discrete(rng.random_range(0..base_indices.len())),
            ActionSpace::Box { low, high } => Action::Continuous(
                low.iter()
                    .zip(high)
                    .map(|(l, h)| if l < h { rng.random_range(*l..=*h) } else { *l })
                    .collect(),
            ),
        }
    }
}
