//! Similarity-weighted potential-based reward shaping.
//!
//! A trained source agent is rolled out greedily in its own (unrestricted)
//! environment. For every visited state-action pair we store the embedding
//! that enters the final layer of its value network together with the value
//! that layer produces. For discrete agents the embedding is the Q-network's
//! penultimate activation on the state alone; for actor-critic agents it is
//! the first critic's penultimate activation on `obs ++ action`.
//!
//! The potential of a target state-action pair is
//!
//! ```text
//! phi(s, a) = 1/|Z| * sum_i cos(z(s, a), e_i) * q_i
//! ```
//!
//! and the target agent learns from `r + gamma * phi(s', a') - phi(s, a)`,
//! with `phi(s', a') = 0` past an absorbing state.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ActorCriticAgent, Agent, Algorithm, Checkpoint};
use crate::envs::{Action, Env, EnvId};
use crate::error::{Error, Result};
use crate::nn::DenseNet;

/// Norms below this make a cosine term contribute zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapingMode {
    /// Embeddings depend on the state only.
    Discrete,
    /// Embeddings depend on the state and the (real-valued) action.
    Continuous,
}

/// When the bonus is added to the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapingTiming {
    /// Once, when the transition is stored, using the action actually taken next.
    #[default]
    Collection,
    /// Every time the transition is replayed, from its stored next action.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub embedding: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_env: EnvId,
    pub checkpoint: String,
    pub episodes: usize,
    pub seed: u64,
}

/// Harvested `(embedding, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceSetDocument", into = "SourceSetDocument")]
pub struct SourceSet {
    embedding_dim: usize,
    provenance: Provenance,
    entries: Vec<SourceEntry>,
}

const SOURCE_SET_FORMAT: &str = "source-set/v1";

#[derive(Serialize, Deserialize)]
struct SourceSetDocument {
    format: String,
    embedding_dim: usize,
    provenance: Provenance,
    entries: Vec<SourceEntry>,
}

impl From<SourceSet> for SourceSetDocument {
    fn from(set: SourceSet) -> Self {
        Self {
            format: SOURCE_SET_FORMAT.into(),
            embedding_dim: set.embedding_dim,
            provenance: set.provenance,
            entries: set.entries,
        }
    }
}

impl TryFrom<SourceSetDocument> for SourceSet {
    type Error = Error;

    fn try_from(doc: SourceSetDocument) -> Result<Self> {
        if doc.format != SOURCE_SET_FORMAT {
            return Err(Error::Config(format!("unknown source-set format {:?}", doc.format)));
        }
        SourceSet::new(doc.embedding_dim, doc.provenance, doc.entries)
    }
}

impl SourceSet {
    pub fn new(embedding_dim: usize, provenance: Provenance, entries: Vec<SourceEntry>) -> Result<Self> {
        if embedding_dim == 0 {
            return Err(Error::Contract("embedding dimension must be positive".into()));
        }
        if entries.is_empty() {
            return Err(Error::Contract("source set needs at least one entry".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.embedding.len() != embedding_dim {
                return Err(Error::shape(embedding_dim, e.embedding.len()));
            }
            if !e.value.is_finite() || e.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("entry {i} is not finite")));
            }
        }
        Ok(Self {
            embedding_dim,
            provenance,
            entries,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn entries(&self) -> &[SourceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same embeddings, every value replaced by `value`.
    pub fn with_constant_values(&self, value: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.value = value;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
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

/// The source network embeddings are read from.
#[derive(Debug, Clone)]
pub enum SourceNetwork {
    /// obs -> per-action values
    QNet(DenseNet),
    /// obs ++ action -> value
    Critic { net: DenseNet, obs_dim: usize },
}

impl SourceNetwork {
    pub fn mode(&self) -> ShapingMode {
        match self {
            SourceNetwork::QNet(_) => ShapingMode::Discrete,
            SourceNetwork::Critic { .. } => ShapingMode::Continuous,
        }
    }

    pub fn net(&self) -> &DenseNet {
        match self {
            SourceNetwork::QNet(n) | SourceNetwork::Critic { net: n, .. } => n,
        }
    }

    /// Penultimate features and the value for `(obs, action)`.
    ///
    /// Discrete mode ignores the action when embedding; the value is the Q-value
    /// of the given source action index.
    pub fn embed_and_value(&self, obs: &[f64], action: &Action) -> Result<(Vec<f64>, f64)> {
        match (self, action) {
            (SourceNetwork::QNet(net), Action::Discrete(i)) => {
                let (out, feats) = net.forward_with_features(obs)?;
                let q = *out
                    .get(*i)
                    .ok_or_else(|| Error::InvalidAction(format!("action {i} outside {} Q outputs", out.len())))?;
                Ok((feats, q))
            }
            (SourceNetwork::Critic { net, obs_dim }, Action::Continuous(a)) => {
                if obs.len() != *obs_dim {
                    return Err(Error::shape(*obs_dim, obs.len()));
                }
                let (out, feats) = net.forward_with_features(&ActorCriticAgent::critic_input(obs, a))?;
                Ok((feats, out[0]))
            }
            _ => Err(Error::InvalidAction(format!("{action:?} does not match the source network"))),
        }
    }

    pub fn embed(&self, obs: &[f64], action: &Action) -> Result<Vec<f64>> {
        match (self, action) {
            (SourceNetwork::QNet(net), _) => Ok(net.forward_with_features(obs)?.1),
            (SourceNetwork::Critic { .. }, Action::Continuous(_)) => Ok(self.embed_and_value(obs, action)?.0),
            (SourceNetwork::Critic { .. }, Action::Discrete(_)) => {
                Err(Error::InvalidAction("critic embeddings need a real-valued action".into()))
            }
        }
    }

    /// Q-network of a DQN checkpoint, or the first critic of an actor-critic one.
    pub fn from_agent(agent: &Agent) -> Self {
        match agent {
            Agent::Dqn(a) => SourceNetwork::QNet(a.q_net().clone()),
            Agent::ActorCritic(a) => SourceNetwork::Critic {
                net: a.critics()[0].clone(),
                obs_dim: a.actor().input_dim(),
            },
        }
    }
}

/// `<u, v> / (|u| |v|)`, or 0 when either norm is below [`ZERO_NORM`].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm(u);
    let nv = norm(v);
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return 0.0;
    }
    dot(u, v) / (nu * nv)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Immutable shaping state shared by all runs that use one source model.
#[derive(Debug, Clone)]
pub struct ShapingContext {
    source: SourceNetwork,
    set: SourceSet,
    norms: Vec<f64>,
    gamma: f64,
}

impl ShapingContext {
    pub fn new(source: SourceNetwork, set: SourceSet, gamma: f64) -> Result<Self> {
        if source.net().feature_dim() != set.embedding_dim() {
            return Err(Error::Architecture(format!(
                "source network features are {}-dimensional but the source set holds {}-dimensional embeddings",
                source.net().feature_dim(),
                set.embedding_dim()
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        let norms = set.entries.iter().map(|e| norm(&e.embedding)).collect();
        Ok(Self {
            source,
            set,
            norms,
            gamma,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, set: SourceSet, gamma: f64) -> Result<Self> {
        let agent = ckpt.to_agent()?;
        Self::new(SourceNetwork::from_agent(&agent), set, gamma)
    }

    pub fn mode(&self) -> ShapingMode {
        self.source.mode()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn source_set(&self) -> &SourceSet {
        &self.set
    }

    pub fn embed(&self, obs: &[f64], action: &Action) -> Result<Vec<f64>> {
        self.source.embed(obs, action)
    }

    /// Cosine-weighted mean of the source values.
    pub fn potential(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.set.embedding_dim {
            return Err(Error::shape(self.set.embedding_dim, z.len()));
        }
        let nz = norm(z);
        if nz < ZERO_NORM {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (e, ne) in self.set.entries.iter().zip(&self.norms) {
            if *ne < ZERO_NORM {
                continue;
            }
            total += dot(z, &e.embedding) / (nz * ne) * e.value;
        }
        Ok(total / self.set.entries.len() as f64)
    }

    /// Potential of a state-action pair.
    pub fn potential_of(&self, obs: &[f64], action: &Action) -> Result<f64> {
        self.potential(&self.embed(obs, action)?)
    }

    /// `gamma * phi(s', a') - phi(s, a)`; the first term is dropped when
    /// `terminal`.
    pub fn shaping_bonus(
        &self,
        obs: &[f64],
        action: &Action,
        next_obs: &[f64],
        next_action: Option<&Action>,
        terminal: bool,
    ) -> Result<f64> {
        let current = self.potential_of(obs, action)?;
        let next = if terminal {
            0.0
        } else {
            let a = next_action
                .ok_or_else(|| Error::Contract("non-terminal shaping needs the next action".into()))?;
            self.potential_of(next_obs, a)?
        };
        Ok(bonus_from_potentials(self.gamma, current, next))
    }
}

/// `gamma * next - current`.
#[inline]
pub fn bonus_from_potentials(gamma: f64, current: f64, next: f64) -> f64 {
    gamma * next - current
}

/// `r + f`, rejecting non-finite inputs.
pub fn shaped_reward(r: f64, f: f64) -> Result<f64> {
    if !r.is_finite() || !f.is_finite() {
        return Err(Error::Contract(format!("shaped reward needs finite inputs, got r = {r}, f = {f}")));
    }
    Ok(r + f)
}

/// Greedy rollouts of a source agent, recording every visited pair.
///
/// `checkpoint_id` only feeds the provenance header.
pub fn collect_source_set(
    agent: &Agent,
    env: &mut Env,
    n_episodes: usize,
    seed: u64,
    checkpoint_id: &str,
) -> Result<SourceSet> {
    if n_episodes == 0 {
        return Err(Error::Contract("need at least one source episode".into()));
    }
    let source = SourceNetwork::from_agent(agent);
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for _ in 0..n_episodes {
        let mut obs = env.reset(seeds.next_u64());
        let before = entries.len();
        loop {
            let action = agent.greedy(&obs)?;
            let source_action = to_source_action(agent, env, &action)?;
            let (embedding, value) = source.embed_and_value(&obs, &source_action)?;
            entries.push(SourceEntry { embedding, value });
            let step = env.step(&action)?;
            let done = step.done();
            obs = step.obs;
            if done {
                break;
            }
        }
        if entries.len() == before {
            return Err(Error::EmptyTrajectory);
        }
    }
    let dim = source.net().feature_dim();
    SourceSet::new(
        dim,
        Provenance {
            source_env: env.id(),
            checkpoint: checkpoint_id.to_string(),
            episodes: n_episodes,
            seed,
        },
        entries,
    )
}

/// Maps an env-space action to the source network's action coordinates.
fn to_source_action(agent: &Agent, env: &Env, action: &Action) -> Result<Action> {
    match (agent.algorithm(), action) {
        (Algorithm::Dqn, Action::Discrete(i)) => Ok(Action::Discrete(env.action_space().base_index(*i)?)),
        (_, Action::Continuous(a)) => Ok(Action::Continuous(env.action_space().clip(a)?)),
        _ => Err(Error::InvalidAction(format!("{action:?} does not match the agent"))),
    }
}
