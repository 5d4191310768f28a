//! The shared interaction loop for all three methods.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Algorithm, Batch, Hyperparameters, ReplayBuffer, Transition};
use crate::baselines::direct_transfer_act;
use crate::envs::{Action, Env};
use crate::error::{Error, Result};
use crate::shaping::{bonus_from_potentials, shaped_reward, ShapingContext, ShapingTiming};

/// One finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Environment steps taken so far, this episode included.
    pub env_steps: usize,
    /// Undiscounted environment reward, without shaping.
    pub reward: f64,
    pub truncated: bool,
}

pub struct TrainSpec<'a> {
    pub algorithm: Algorithm,
    pub hyperparameters: &'a Hyperparameters,
    /// Training stops at the first episode boundary at or past this many steps.
    pub budget_steps: usize,
    pub seed: u64,
    pub shaping: Option<(&'a ShapingContext, ShapingTiming)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub episodes: Vec<EpisodeRecord>,
    pub total_steps: usize,
    /// Set when training stopped early on a divergence.
    pub failure: Option<String>,
}

/// Independent random streams derived from one run seed.
struct Streams {
    agent: u64,
    buffer: u64,
    episodes: ChaCha8Rng,
    warmup: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        Self {
            agent: master.next_u64(),
            buffer: master.next_u64(),
            episodes: ChaCha8Rng::seed_from_u64(master.next_u64()),
            warmup: ChaCha8Rng::seed_from_u64(master.next_u64()),
        }
    }
}

/// Trains a fresh agent on `env` for the step budget.
///
/// The first `warmup_episodes` episodes act uniformly at random without
/// updates; afterwards every environment step is followed by one gradient
/// update. With shaping, the reward stored (or replayed) is
/// `r + gamma * phi(s', a') - phi(s, a)`, where `a'` is the action the
/// behavior policy executes next. At a truncation `a'` is the greedy action
/// at `s'`; past an absorbing state `phi(s', a')` is zero.
pub fn train(env: &mut Env, spec: &TrainSpec<'_>) -> Result<TrainOutcome> {
    let hp = spec.hyperparameters;
    let mut streams = Streams::new(spec.seed);
    let mut agent = Agent::new(spec.algorithm, env.obs_dim(), env.action_space(), hp, streams.agent)?;
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity, streams.buffer);
    let batch_size = hp.batch_size_for(spec.algorithm);
    let decay_steps = (hp.eps_fraction * spec.budget_steps as f64) as usize;

    let mut episodes = Vec::new();
    let mut total = 0usize;
    let mut failure = None;

    'run: while total < spec.budget_steps {
        let warm = episodes.len() < hp.warmup_episodes;
        let mut obs = env.reset(streams.episodes.next_u64());
        agent.anneal(total, decay_steps);
        let mut action = choose(&mut agent, env, &obs, warm, &mut streams.warmup)?;
        let mut phi = match spec.shaping {
            Some((ctx, ShapingTiming::Collection)) => ctx.potential_of(&obs, &action)?,
            _ => 0.0,
        };
        let mut ep_reward = 0.0;

        loop {
            let step = env.step(&action)?;
            total += 1;
            ep_reward += step.reward;

            let next_action = if step.done() {
                None
            } else {
                agent.anneal(total, decay_steps);
                Some(choose(&mut agent, env, &step.obs, warm, &mut streams.warmup)?)
            };
            // Action used for phi(s', a') and stored for replay-time shaping.
            let bootstrap_action = match (&next_action, step.truncated) {
                (Some(a), _) => Some(a.clone()),
                (None, true) if spec.shaping.is_some() => Some(agent.greedy(&step.obs)?),
                _ => None,
            };

            let reward = match spec.shaping {
                Some((ctx, ShapingTiming::Collection)) => {
                    let phi_next = match (&bootstrap_action, step.terminal) {
                        (Some(a), false) => ctx.potential_of(&step.obs, a)?,
                        _ => 0.0,
                    };
                    let f = bonus_from_potentials(ctx.gamma(), phi, phi_next);
                    phi = phi_next;
                    shaped_reward(step.reward, f)?
                }
                _ => step.reward,
            };

            buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward,
                next_obs: step.obs.clone(),
                terminal: step.terminal,
                truncated: step.truncated,
                next_action: bootstrap_action,
            });

            if !warm && buffer.len() >= batch_size {
                let mut batch = Batch::from_transitions(buffer.sample(batch_size));
                if let Some((ctx, ShapingTiming::Replay)) = spec.shaping {
                    for (t, r) in batch.items.iter().zip(batch.rewards.iter_mut()) {
                        let f = ctx.shaping_bonus(&t.obs, &t.action, &t.next_obs, t.next_action.as_ref(), t.terminal)?;
                        *r = shaped_reward(*r, f)?;
                    }
                }
                match agent.update(&batch) {
                    Ok(_) => {}
                    Err(Error::Divergence(msg)) => {
                        failure = Some(msg);
                        break 'run;
                    }
                    Err(e) => return Err(e),
                }
            }

            if step.done() {
                episodes.push(EpisodeRecord {
                    episode: episodes.len(),
                    env_steps: total,
                    reward: ep_reward,
                    truncated: step.truncated,
                });
                break;
            }
            obs = step.obs;
            action = next_action.expect("episode continues");
        }
    }

    Ok(TrainOutcome {
        agent,
        episodes,
        total_steps: total,
        failure,
    })
}

fn choose(agent: &mut Agent, env: &Env, obs: &[f64], warm: bool, warmup_rng: &mut ChaCha8Rng) -> Result<Action> {
    if warm {
        Ok(env.sample_action(warmup_rng))
    } else {
        agent.act(obs, true)
    }
}

/// Runs the frozen source policy, adapted to `env`'s action space, for the
/// step budget. Episode start states follow the same per-seed sequence as
/// [`train`].
pub fn evaluate_direct(env: &mut Env, source: &Agent, budget_steps: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
    let mut streams = Streams::new(seed);
    let space = env.action_space().clone();
    let mut episodes = Vec::new();
    let mut total = 0;
    while total < budget_steps {
        let mut obs = env.reset(streams.episodes.next_u64());
        let mut ep_reward = 0.0;
        loop {
            let action = direct_transfer_act(source, &obs, &space)?;
            debug_assert!(space.contains(&action));
            let step = env.step(&action)?;
            total += 1;
            ep_reward += step.reward;
            if step.done() {
                episodes.push(EpisodeRecord {
                    episode: episodes.len(),
                    env_steps: total,
                    reward: ep_reward,
                    truncated: step.truncated,
                });
                break;
            }
            obs = step.obs;
        }
    }
    Ok(episodes)
}
