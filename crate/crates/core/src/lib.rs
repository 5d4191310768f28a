//! Transfer between reinforcement-learning domains that differ only in their
//! action spaces, via similarity-weighted potential-based reward shaping.
//!
//! A trained source agent's Q-network (or critic) supplies embeddings of the
//! states (or state-action pairs) it visits together with their values. A
//! target agent learning a restricted version of the task receives the extra
//! reward `F = gamma * phi(s', a') - phi(s, a)`, where `phi` averages the source
//! values weighted by cosine similarity to the query embedding.
//!
//! Modules, bottom up:
//! - [`nn`]: dense networks, backprop, Adam, target syncing
//! - [`envs`]: native Pendulum and Acrobot plus action-space restriction
//! - [`agents`]: replay buffer, DQN, DDPG, TD3
//! - [`shaping`]: source-set harvesting, potential, shaped reward
//! - [`baselines`]: learning from scratch and direct transfer
//! - [`harness`]: seeded runs, smoothing, aggregation, CSV/SVG output

pub mod agents;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod shaping;

pub use error::{Error, Result};
