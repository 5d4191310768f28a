//! Off-policy deep RL agents over a shared replay buffer: DQN for discrete
//! action spaces, DDPG and TD3 for boxes.

mod actor_critic;
mod buffer;
mod checkpoint;
mod dqn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use actor_critic::{ActorCriticAgent, ActorCriticKind};
pub use buffer::{ReplayBuffer, Transition};
pub use checkpoint::Checkpoint;
pub use dqn::{restricted_argmax, DqnAgent};

use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ddpg,
    Td3,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ddpg => "ddpg",
            Algorithm::Td3 => "td3",
        }
    }

    pub fn is_discrete(self) -> bool {
        self == Algorithm::Dqn
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "ddpg" => Ok(Algorithm::Ddpg),
            "td3" => Ok(Algorithm::Td3),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Every tunable knob, with defaults. Fields that only apply to some
/// algorithms are ignored by the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Defaults to 64 for DQN and 100 for DDPG/TD3 when unset.
    pub batch_size: Option<usize>,
    pub gamma: f64,
    /// DQN learning rate.
    pub lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the step budget over which epsilon decays.
    pub eps_fraction: f64,
    pub target_sync_every: u64,
    pub tau: f64,
    /// Exploration noise std as a fraction of the box half-width.
    pub exploration_noise: f64,
    pub policy_delay: usize,
    /// TD3 target smoothing noise std, fraction of the box half-width.
    pub target_noise: f64,
    pub target_noise_clip: f64,
    /// Episodes of uniformly random acting, without updates, before learning.
    pub warmup_episodes: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            buffer_capacity: 100_000,
            batch_size: None,
            gamma: 0.99,
            lr: 1e-3,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.1,
            target_sync_every: 500,
            tau: 0.005,
            exploration_noise: 0.1,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            warmup_episodes: 100,
        }
    }
}

impl Hyperparameters {
    pub fn batch_size_for(&self, algo: Algorithm) -> usize {
        self.batch_size.unwrap_or(match algo {
            Algorithm::Dqn => 64,
            Algorithm::Ddpg | Algorithm::Td3 => 100,
        })
    }

    /// Defaults with `overrides` (a JSON object) laid on top.
    pub fn with_overrides(overrides: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        let mut base = serde_json::to_value(Self::default())?;
        let obj = base.as_object_mut().expect("struct serializes to an object");
        for (k, v) in overrides {
            obj.insert(k.clone(), v.clone());
        }
        serde_json::from_value(base).map_err(|e| Error::Config(format!("bad hyperparameter override: {e}")))
    }
}

/// Sampled transitions together with the rewards to learn from (the stored
/// reward, possibly plus a replay-time shaping bonus).
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub items: Vec<&'a Transition>,
    pub rewards: Vec<f64>,
}

impl<'a> Batch<'a> {
    pub fn from_transitions(items: Vec<&'a Transition>) -> Self {
        let rewards = items.iter().map(|t| t.reward).collect();
        Self { items, rewards }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub critic: f64,
    pub actor: Option<f64>,
}

/// Any of the three agents behind one interface.
#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(DqnAgent),
    ActorCritic(ActorCriticAgent),
}

impl Agent {
    pub fn new(algo: Algorithm, obs_dim: usize, space: &ActionSpace, hp: &Hyperparameters, seed: u64) -> Result<Self> {
        match (algo, space) {
            (Algorithm::Dqn, ActionSpace::Discrete { base_indices }) => {
                Ok(Agent::Dqn(DqnAgent::new(obs_dim, base_indices.len(), hp, seed)?))
            }
            (Algorithm::Ddpg | Algorithm::Td3, ActionSpace::Box { low, high }) => {
                let kind = if algo == Algorithm::Ddpg {
                    ActorCriticKind::Ddpg
                } else {
                    ActorCriticKind::Td3
                };
                Ok(Agent::ActorCritic(ActorCriticAgent::new(
                    kind,
                    obs_dim,
                    low.clone(),
                    high.clone(),
                    hp,
                    seed,
                )?))
            }
            _ => Err(Error::Config(format!(
                "{algo} cannot act in a {} action space",
                if space.is_discrete() { "discrete" } else { "box" }
            ))),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Agent::Dqn(_) => Algorithm::Dqn,
            Agent::ActorCritic(a) => match a.kind() {
                ActorCriticKind::Ddpg => Algorithm::Ddpg,
                ActorCriticKind::Td3 => Algorithm::Td3,
            },
        }
    }

    pub fn act(&mut self, obs: &[f64], explore: bool) -> Result<Action> {
        match self {
            Agent::Dqn(a) => a.act(obs, explore).map(Action::Discrete),
            Agent::ActorCritic(a) => a.act(obs, explore).map(Action::Continuous),
        }
    }

    /// Deterministic action; never consumes randomness.
    pub fn greedy(&self, obs: &[f64]) -> Result<Action> {
        match self {
            Agent::Dqn(a) => a.greedy(obs).map(Action::Discrete),
            Agent::ActorCritic(a) => a.policy(obs).map(Action::Continuous),
        }
    }

    /// Advances exploration schedules to global step `step`.
    pub fn anneal(&mut self, step: usize, decay_steps: usize) {
        if let Agent::Dqn(a) = self {
            a.anneal(step, decay_steps);
        }
    }

    pub fn update(&mut self, batch: &Batch<'_>) -> Result<Losses> {
        match self {
            Agent::Dqn(a) => a.update(batch),
            Agent::ActorCritic(a) => a.update(batch),
        }
    }
}
