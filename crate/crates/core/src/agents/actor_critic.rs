//! Deterministic actor-critic agents: DDPG (one critic) and TD3 (twin
//! critics, delayed actor updates, target policy smoothing).
//!
//! The actor network is linear at its output; actions are
//! `center + half_width * tanh(actor(s))`, which keeps them inside the box.
//! Critics take `obs ++ action`. Noise scales are expressed as fractions of
//! the box half-width.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Batch, Hyperparameters, Losses};
use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet, Gradients, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorCriticKind {
    Ddpg,
    Td3,
}

#[derive(Debug, Clone)]
pub struct ActorCriticAgent {
    kind: ActorCriticKind,
    actor: DenseNet,
    actor_target: DenseNet,
    critics: Vec<DenseNet>,
    critic_targets: Vec<DenseNet>,
    actor_adam: AdamState,
    critic_adams: Vec<AdamState>,
    low: Vec<f64>,
    high: Vec<f64>,
    gamma: f64,
    tau: f64,
    exploration_noise: f64,
    policy_delay: u64,
    target_noise: f64,
    target_noise_clip: f64,
    updates: u64,
    rng: ChaCha8Rng,
    actor_grads: Gradients,
    critic_grads: Vec<Gradients>,
    scratch_grads: Gradients,
}

impl ActorCriticAgent {
    pub fn new(
        kind: ActorCriticKind,
        obs_dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
        hp: &Hyperparameters,
        seed: u64,
    ) -> Result<Self> {
        let act_dim = low.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&hp.hidden);
        actor_sizes.push(act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&hp.hidden);
        critic_sizes.push(1);

        let actor = DenseNet::random(&actor_sizes, Activation::Relu, &mut rng)?;
        let n_critics = match kind {
            ActorCriticKind::Ddpg => 1,
            ActorCriticKind::Td3 => 2,
        };
        let critics = (0..n_critics)
            .map(|_| DenseNet::random(&critic_sizes, Activation::Relu, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_networks(kind, actor, critics, low, high, hp, rng)
    }

    pub fn from_networks(
        kind: ActorCriticKind,
        actor: DenseNet,
        critics: Vec<DenseNet>,
        low: Vec<f64>,
        high: Vec<f64>,
        hp: &Hyperparameters,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let expected = match kind {
            ActorCriticKind::Ddpg => 1,
            ActorCriticKind::Td3 => 2,
        };
        if critics.len() != expected {
            return Err(Error::Architecture(format!("{kind:?} needs {expected} critics, got {}", critics.len())));
        }
        if low.len() != high.len() || actor.output_dim() != low.len() {
            return Err(Error::Architecture("actor output does not match the action box".into()));
        }
        for c in &critics {
            if c.input_dim() != actor.input_dim() + low.len() || c.output_dim() != 1 {
                return Err(Error::Architecture("critic must map obs ++ action to one value".into()));
            }
        }
        if !(hp.gamma > 0.0 && hp.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", hp.gamma)));
        }
        Ok(Self {
            kind,
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor_adam: AdamState::new(&actor, AdamConfig::with_lr(hp.actor_lr)),
            critic_adams: critics
                .iter()
                .map(|c| AdamState::new(c, AdamConfig::with_lr(hp.critic_lr)))
                .collect(),
            actor_grads: Gradients::zeros_like(&actor),
            critic_grads: critics.iter().map(Gradients::zeros_like).collect(),
            scratch_grads: Gradients::zeros_like(&critics[0]),
            actor,
            critics,
            low,
            high,
            gamma: hp.gamma,
            tau: hp.tau,
            exploration_noise: hp.exploration_noise,
            policy_delay: hp.policy_delay.max(1) as u64,
            target_noise: hp.target_noise,
            target_noise_clip: hp.target_noise_clip,
            updates: 0,
            rng,
        })
    }

    pub fn kind(&self) -> ActorCriticKind {
        self.kind
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn actor_target(&self) -> &DenseNet {
        &self.actor_target
    }

    pub fn critics(&self) -> &[DenseNet] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [DenseNet] {
        &mut self.critics
    }

    pub fn critic_targets(&self) -> &[DenseNet] {
        &self.critic_targets
    }

    pub fn critic_targets_mut(&mut self) -> &mut [DenseNet] {
        &mut self.critic_targets
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
    }

    pub fn set_target_noise(&mut self, scale: f64) {
        self.target_noise = scale;
    }

    fn half_width(&self, i: usize) -> f64 {
        (self.high[i] - self.low[i]) / 2.0
    }

    fn center(&self, i: usize) -> f64 {
        (self.high[i] + self.low[i]) / 2.0
    }

    fn squash(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, r)| self.center(i) + self.half_width(i) * r.tanh())
            .collect()
    }

    fn clip(&self, a: &mut [f64]) {
        for (i, v) in a.iter_mut().enumerate() {
            *v = v.clamp(self.low[i], self.high[i]);
        }
    }

    /// Deterministic policy output, inside the box.
    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.squash(&self.actor.forward(obs)?))
    }

    fn target_policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.squash(&self.actor_target.forward(obs)?))
    }

    /// Policy plus Gaussian exploration noise when `explore` is set, clipped
    /// to the box. No random draws happen otherwise.
    pub fn act(&mut self, obs: &[f64], explore: bool) -> Result<Vec<f64>> {
        let mut a = self.policy(obs)?;
        if explore && self.exploration_noise > 0.0 {
            for i in 0..a.len() {
                let sigma = self.exploration_noise * self.half_width(i);
                if sigma > 0.0 {
                    a[i] += Normal::new(0.0, sigma).expect("finite sigma").sample(&mut self.rng);
                }
            }
            self.clip(&mut a);
        }
        Ok(a)
    }

    pub fn critic_input(obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + action.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(action);
        x
    }

    /// First critic's value of `(obs, action)`.
    pub fn q_value(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.critics[0].forward(&Self::critic_input(obs, action))?[0])
    }

    /// Bootstrapped critic targets. TD3 smooths the target action with
    /// clipped noise and takes the smaller of its two target critics.
    pub fn critic_targets_for(&mut self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        let mut ys = Vec::with_capacity(batch.len());
        for (t, &r) in batch.items.iter().zip(&batch.rewards) {
            if t.terminal {
                ys.push(r);
                continue;
            }
            let mut a_next = self.target_policy(&t.next_obs)?;
            if self.kind == ActorCriticKind::Td3 && self.target_noise > 0.0 {
                for i in 0..a_next.len() {
                    let hw = self.half_width(i);
                    if hw > 0.0 {
                        let eps = Normal::new(0.0, self.target_noise * hw)
                            .expect("finite sigma")
                            .sample(&mut self.rng);
                        let c = self.target_noise_clip * hw;
                        a_next[i] += eps.clamp(-c, c);
                    }
                }
                self.clip(&mut a_next);
            }
            let x = Self::critic_input(&t.next_obs, &a_next);
            let bootstrap = self
                .critic_targets
                .iter()
                .map(|c| c.forward(&x).map(|o| o[0]))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            ys.push(r + self.gamma * bootstrap);
        }
        Ok(ys)
    }

    /// Fills the actor gradient buffer for `-mean Q1(s, pi(s))`, chaining
    /// dQ/da through the tanh squashing. Returns that loss.
    fn accumulate_actor_gradients(&mut self, batch: &Batch<'_>) -> Result<f64> {
        let obs_dim = self.actor.input_dim();
        let n = batch.len() as f64;
        let mut actor_loss = 0.0;
        self.actor_grads.fill_zero();
        let mut actor_trace = Trace::default();
        let mut trace = Trace::default();
        for t in &batch.items {
            self.actor.trace_into(&t.obs, &mut actor_trace)?;
            let raw = actor_trace.output().to_vec();
            let a = self.squash(&raw);
            self.critics[0].trace_into(&Self::critic_input(&t.obs, &a), &mut trace)?;
            actor_loss -= trace.output()[0] / n;
            let dx = self.critics[0].backward_into(&trace, &[-1.0 / n], &mut self.scratch_grads)?;
            let d_raw: Vec<f64> = dx[obs_dim..]
                .iter()
                .zip(&raw)
                .enumerate()
                .map(|(i, (da, r))| {
                    let th = r.tanh();
                    da * self.half_width(i) * (1.0 - th * th)
                })
                .collect();
            self.actor.backward_into(&actor_trace, &d_raw, &mut self.actor_grads)?;
        }
        Ok(actor_loss)
    }

    /// One DDPG update, or one TD3 update whose index is the agent's own
    /// update counter.
    pub fn update(&mut self, batch: &Batch<'_>) -> Result<Losses> {
        let index = self.updates + 1;
        self.update_at(batch, index)
    }

    /// TD3 updates the actor and all targets only when `update_index` is a
    /// multiple of the policy delay; DDPG always does.
    pub fn update_at(&mut self, batch: &Batch<'_>, update_index: u64) -> Result<Losses> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let ys = self.critic_targets_for(batch)?;
        let n = batch.len() as f64;

        let mut critic_loss = 0.0;
        let mut trace = Trace::default();
        for (critic, grads) in self.critics.iter().zip(&mut self.critic_grads) {
            grads.fill_zero();
            for (t, y) in batch.items.iter().zip(&ys) {
                let a = t
                    .action
                    .values()
                    .ok_or_else(|| Error::InvalidAction("actor-critic needs continuous actions".into()))?;
                critic.trace_into(&Self::critic_input(&t.obs, a), &mut trace)?;
                let err = trace.output()[0] - y;
                critic_loss += err * err / n;
                critic.backward_into(&trace, &[2.0 * err / n], grads)?;
            }
        }
        if !critic_loss.is_finite() {
            return Err(Error::Divergence(format!("critic loss {critic_loss} at update {update_index}")));
        }
        for ((critic, grads), adam) in self.critics.iter_mut().zip(&self.critic_grads).zip(&mut self.critic_adams) {
            adam_step(critic, grads, adam)?;
        }
        self.updates += 1;

        let delayed = self.kind == ActorCriticKind::Td3 && !update_index.is_multiple_of(self.policy_delay);
        if delayed {
            return Ok(Losses {
                critic: critic_loss,
                actor: None,
            });
        }

        let actor_loss = self.accumulate_actor_gradients(batch)?;
        if !actor_loss.is_finite() {
            return Err(Error::Divergence(format!("actor loss {actor_loss} at update {update_index}")));
        }
        adam_step(&mut self.actor, &self.actor_grads, &mut self.actor_adam)?;

        self.actor_target.sync_from(&self.actor, self.tau)?;
        for (target, online) in self.critic_targets.iter_mut().zip(&self.critics) {
            target.sync_from(online, self.tau)?;
        }
        Ok(Losses {
            critic: critic_loss,
            actor: Some(actor_loss),
        })
    }
}
