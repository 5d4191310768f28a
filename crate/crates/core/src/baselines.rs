//! The two comparison methods: learning the target task from scratch, and
//! running the frozen source policy in the target task.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{restricted_argmax, Agent, Algorithm, Hyperparameters};
use crate::envs::{Action, ActionSpace, Env};
use crate::error::{Error, Result};
use crate::harness::train::{train, TrainOutcome, TrainSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "scratch")]
    Scratch,
    #[serde(rename = "direct", alias = "direct_transfer")]
    DirectTransfer,
    #[serde(rename = "shaped")]
    Shaped,
}

impl MethodTag {
    pub const ALL: [MethodTag; 3] = [MethodTag::Scratch, MethodTag::DirectTransfer, MethodTag::Shaped];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Scratch => "scratch",
            MethodTag::DirectTransfer => "direct",
            MethodTag::Shaped => "shaped",
        }
    }

    pub fn uses_source_model(self) -> bool {
        self != MethodTag::Scratch
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(MethodTag::Scratch),
            "direct" | "direct_transfer" | "direct-transfer" => Ok(MethodTag::DirectTransfer),
            "shaped" => Ok(MethodTag::Shaped),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

/// A fresh agent trained on `env` with no source knowledge.
pub fn scratch_policy(
    env: &mut Env,
    algo: Algorithm,
    hp: &Hyperparameters,
    budget_steps: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    train(
        env,
        &TrainSpec {
            algorithm: algo,
            hyperparameters: hp,
            budget_steps,
            seed,
            shaping: None,
        },
    )
}

/// The source agent's greedy action adapted to `target_space`.
///
/// Box targets clip the actor output. Discrete targets take the best source
/// Q-value among the retained actions and return its index in the target
/// space.
pub fn direct_transfer_act(source: &Agent, obs: &[f64], target_space: &ActionSpace) -> Result<Action> {
    match (source, target_space) {
        (Agent::Dqn(dqn), ActionSpace::Discrete { base_indices }) => {
            if base_indices.is_empty() {
                return Err(Error::InvalidRestriction("target space retains no actions".into()));
            }
            let q = dqn.q_values(obs)?;
            let best = restricted_argmax(&q, base_indices)?;
            let index = target_space.index_of_base(best).expect("best is a retained index");
            Ok(Action::Discrete(index))
        }
        (Agent::ActorCritic(ac), ActionSpace::Box { .. }) => {
            Ok(Action::Continuous(target_space.clip(&ac.policy(obs)?)?))
        }
        _ => Err(Error::Config("source agent and target space disagree on action type".into())),
    }
}
