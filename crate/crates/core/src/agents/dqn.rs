use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Batch, Hyperparameters, Losses};
use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet, Gradients, Trace};

/// Deep Q-network with a hard-synced target network and epsilon-greedy acting.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: DenseNet,
    target: DenseNet,
    adam: AdamState,
    gamma: f64,
    epsilon: f64,
    eps_start: f64,
    eps_end: f64,
    sync_every: u64,
    /// Output indices the agent may choose from.
    allowed: Vec<usize>,
    updates: u64,
    rng: ChaCha8Rng,
    grads: Gradients,
    traces: Vec<Trace>,
}

/// Index of the largest value among `allowed`; ties go to the lowest index.
pub fn restricted_argmax(values: &[f64], allowed: &[usize]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for &i in allowed {
        let v = *values
            .get(i)
            .ok_or_else(|| Error::InvalidRestriction(format!("allowed index {i} outside {} outputs", values.len())))?;
        best = match best {
            Some(b) if values[b] > v || (values[b] == v && b < i) => Some(b),
            _ => Some(i),
        };
    }
    best.ok_or_else(|| Error::InvalidRestriction("no allowed actions".into()))
}

impl DqnAgent {
    pub fn new(obs_dim: usize, n_actions: usize, hp: &Hyperparameters, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![obs_dim];
        sizes.extend(&hp.hidden);
        sizes.push(n_actions);
        let online = DenseNet::random(&sizes, Activation::Relu, &mut rng)?;
        Self::from_network(online, hp, rng)
    }

    pub fn from_network(online: DenseNet, hp: &Hyperparameters, rng: ChaCha8Rng) -> Result<Self> {
        if !(hp.gamma > 0.0 && hp.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", hp.gamma)));
        }
        let adam = AdamState::new(&online, AdamConfig::with_lr(hp.lr));
        Ok(Self {
            target: online.clone(),
            grads: Gradients::zeros_like(&online),
            allowed: (0..online.output_dim()).collect(),
            adam,
            gamma: hp.gamma,
            epsilon: hp.eps_start,
            eps_start: hp.eps_start,
            eps_end: hp.eps_end,
            sync_every: hp.target_sync_every.max(1),
            updates: 0,
            rng,
            traces: Vec::new(),
            online,
        })
    }

    pub fn q_net(&self) -> &DenseNet {
        &self.online
    }

    pub fn target_net(&self) -> &DenseNet {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        self.epsilon = eps;
    }

    pub fn allowed(&self) -> &[usize] {
        &self.allowed
    }

    pub fn set_allowed(&mut self, allowed: Vec<usize>) -> Result<()> {
        if allowed.is_empty() || allowed.iter().any(|&i| i >= self.online.output_dim()) {
            return Err(Error::InvalidRestriction(format!(
                "allowed set {allowed:?} is not a non-empty subset of 0..{}",
                self.online.output_dim()
            )));
        }
        self.allowed = allowed;
        Ok(())
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Linear decay from the start to the end rate over `decay_steps`.
    pub fn anneal(&mut self, step: usize, decay_steps: usize) {
        let frac = if decay_steps == 0 {
            1.0
        } else {
            (step as f64 / decay_steps as f64).min(1.0)
        };
        self.epsilon = self.eps_start + frac * (self.eps_end - self.eps_start);
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(obs)
    }

    /// Epsilon-greedy over `allowed`. No random draws happen when `explore` is false.
    pub fn act_among(&mut self, obs: &[f64], allowed: &[usize], explore: bool) -> Result<usize> {
        if allowed.is_empty() {
            return Err(Error::InvalidRestriction("no allowed actions".into()));
        }
        if explore && self.rng.random::<f64>() < self.epsilon {
            return Ok(allowed[self.rng.random_range(0..allowed.len())]);
        }
        restricted_argmax(&self.q_values(obs)?, allowed)
    }

    pub fn act(&mut self, obs: &[f64], explore: bool) -> Result<usize> {
        let allowed = std::mem::take(&mut self.allowed);
        let out = self.act_among(obs, &allowed, explore);
        self.allowed = allowed;
        out
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        restricted_argmax(&self.q_values(obs)?, &self.allowed)
    }

    /// One-step TD targets from the target network.
    pub fn td_targets(&self, batch: &Batch<'_>) -> Result<Vec<f64>> {
        batch
            .items
            .iter()
            .zip(&batch.rewards)
            .map(|(t, &r)| {
                if t.terminal {
                    return Ok(r);
                }
                let next = self.target.forward(&t.next_obs)?;
                let best = restricted_argmax(&next, &self.allowed)?;
                Ok(r + self.gamma * next[best])
            })
            .collect()
    }

    /// Mean-squared TD error minimized by one Adam step. Returns the loss
    /// before the step.
    pub fn update(&mut self, batch: &Batch<'_>) -> Result<Losses> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let targets = self.td_targets(batch)?;
        let n = batch.len() as f64;
        self.grads.fill_zero();
        self.traces.resize_with(batch.len(), Trace::default);
        let mut loss = 0.0;
        let mut loss_grad = vec![0.0; self.online.output_dim()];
        for ((t, y), trace) in batch.items.iter().zip(&targets).zip(&mut self.traces) {
            let a = t
                .action
                .index()
                .ok_or_else(|| Error::InvalidAction("DQN needs discrete actions".into()))?;
            self.online.trace_into(&t.obs, trace)?;
            let q = *trace
                .output()
                .get(a)
                .ok_or_else(|| Error::InvalidAction(format!("action {a} outside Q outputs")))?;
            let err = q - y;
            loss += err * err / n;
            loss_grad.fill(0.0);
            loss_grad[a] = 2.0 * err / n;
            self.online.backward_into(trace, &loss_grad, &mut self.grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("DQN loss {loss} at update {}", self.updates)));
        }
        adam_step(&mut self.online, &self.grads, &mut self.adam)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.sync_every) {
            self.target.sync_from(&self.online, 1.0)?;
        }
        Ok(Losses { critic: loss, actor: None })
    }
}
