use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActorCriticAgent, ActorCriticKind, Agent, Algorithm, DqnAgent, Hyperparameters};
use crate::envs::{ActionSpace, EnvId};
use crate::error::{Error, Result};
use crate::nn::DenseNet;

const CHECKPOINT_FORMAT: &str = "agent-checkpoint/v1";

/// A trained agent on disk: algorithm header plus its online networks.
///
/// Network keys are `q` for DQN and `actor`, `critic_1` (and `critic_2` for
/// TD3) for the actor-critic agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub algorithm: Algorithm,
    pub env: EnvId,
    pub action_space: ActionSpace,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub trained_steps: usize,
    pub networks: BTreeMap<String, DenseNet>,
}

impl Checkpoint {
    pub fn from_agent(
        agent: &Agent,
        env: EnvId,
        action_space: &ActionSpace,
        hp: &Hyperparameters,
        seed: u64,
        trained_steps: usize,
    ) -> Self {
        let mut networks = BTreeMap::new();
        match agent {
            Agent::Dqn(a) => {
                networks.insert("q".to_string(), a.q_net().clone());
            }
            Agent::ActorCritic(a) => {
                networks.insert("actor".to_string(), a.actor().clone());
                for (k, c) in a.critics().iter().enumerate() {
                    networks.insert(format!("critic_{}", k + 1), c.clone());
                }
            }
        }
        Self {
            format: CHECKPOINT_FORMAT.into(),
            algorithm: agent.algorithm(),
            env,
            action_space: action_space.clone(),
            hyperparameters: hp.clone(),
            seed,
            trained_steps,
            networks,
        }
    }

    /// Short identifier for provenance records.
    pub fn id(&self) -> String {
        format!("{}-{}-seed{}-{}steps", self.algorithm, self.env, self.seed, self.trained_steps)
    }

    fn network(&self, key: &str) -> Result<DenseNet> {
        self.networks
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Config(format!("checkpoint has no {key:?} network")))
    }

    /// Rebuilds an agent with target networks copied from the online ones
    /// and fresh optimizer state.
    pub fn to_agent(&self) -> Result<Agent> {
        let rng = ChaCha8Rng::seed_from_u64(self.seed);
        let hp = &self.hyperparameters;
        match (self.algorithm, &self.action_space) {
            (Algorithm::Dqn, ActionSpace::Discrete { .. }) => {
                Ok(Agent::Dqn(DqnAgent::from_network(self.network("q")?, hp, rng)?))
            }
            (Algorithm::Ddpg | Algorithm::Td3, ActionSpace::Box { low, high }) => {
                let (kind, n) = if self.algorithm == Algorithm::Ddpg {
                    (ActorCriticKind::Ddpg, 1)
                } else {
                    (ActorCriticKind::Td3, 2)
                };
                let critics = (1..=n)
                    .map(|k| self.network(&format!("critic_{k}")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Agent::ActorCritic(ActorCriticAgent::from_networks(
                    kind,
                    self.network("actor")?,
                    critics,
                    low.clone(),
                    high.clone(),
                    hp,
                    rng,
                )?))
            }
            _ => Err(Error::Config("checkpoint algorithm does not match its action space".into())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unknown checkpoint format {:?}", ckpt.format)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
