use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PricingPolicy, Transition};
use crate::env::Observation;
use crate::rng::StreamRng;
use crate::tinynet::{Activation, Gradients, MaskUpdate, NetError, PrunableMlp, PruneSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub discount: f64,
    pub clip: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Transitions collected before each update.
    pub rollout_size: usize,
    pub update_epochs: usize,
    /// Exploration std at the start, as a fraction of the price box width.
    pub policy_std: f64,
    pub final_policy_std: f64,
    /// Environment steps over which the std decays linearly; no decay when
    /// absent.
    pub std_anneal_steps: Option<usize>,
    pub hidden_sizes: Vec<usize>,
    pub normalize_advantages: bool,
    /// Rewards are divided by the largest magnitude seen so far.
    pub normalize_rewards: bool,
    /// Global gradient-norm clip; `None` disables it.
    pub max_grad_norm: Option<f64>,
    pub use_bias: bool,
    pub floor_neurons: usize,
    pub prune_critic: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            discount: 0.5,
            clip: 0.2,
            actor_lr: 3e-3,
            critic_lr: 3e-3,
            rollout_size: 20,
            update_epochs: 4,
            policy_std: 0.3,
            final_policy_std: 0.05,
            std_anneal_steps: None,
            hidden_sizes: vec![64, 64],
            normalize_advantages: false,
            normalize_rewards: true,
            max_grad_norm: Some(1.0),
            use_bias: false,
            floor_neurons: 4,
            prune_critic: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(0.0..1.0).contains(&self.discount) {
            return bad(format!("discount {} not in [0, 1)", self.discount));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip {} not in (0, 1)", self.clip));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.rollout_size == 0 || self.update_epochs == 0 {
            return bad("rollout_size and update_epochs must be at least 1".into());
        }
        if !(self.policy_std > 0.0 && self.final_policy_std > 0.0) {
            return bad("policy stds must be positive".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad(format!("hidden_sizes must be non-empty and positive, got {:?}", self.hidden_sizes));
        }
        if let Some(g) = self.max_grad_norm {
            if !(g > 0.0) {
                return bad(format!("max_grad_norm must be positive, got {g}"));
            }
        }
        Ok(())
    }

    /// Exploration std after `steps` environment steps. Agents apply it
    /// between rollouts.
    pub fn std_at(&self, steps: usize) -> f64 {
        let t = match self.std_anneal_steps {
            None => 0.0,
            Some(0) => 1.0,
            Some(n) => (steps as f64 / n as f64).min(1.0),
        };
        self.policy_std + (self.final_policy_std - self.policy_std) * t
    }
}

/// One stored interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub observation: Vec<f64>,
    /// Unclamped Gaussian sample in unit-box coordinates.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Last transition of an episode.
    pub done: bool,
}

/// On-policy storage, emptied by every update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    records: Vec<RolloutRecord>,
    capacity: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffer { records: Vec::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, record: RolloutRecord) {
        self.records.push(record);
    }

    pub fn is_full(&self) -> bool {
        self.records.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RolloutRecord] {
        &self.records
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }
}

/// Discounted returns cut at episode boundaries (and at the end of the
/// buffer), and advantages `return - value`, optionally standardised.
pub fn compute_advantages(records: &[RolloutRecord], discount: f64, normalize: bool) -> (Vec<f64>, Vec<f64>) {
    let mut returns = vec![0.0; records.len()];
    let mut acc = 0.0;
    for (k, r) in records.iter().enumerate().rev() {
        if r.done {
            acc = 0.0;
        }
        acc = r.reward + discount * acc;
        returns[k] = acc;
    }
    let mut adv: Vec<f64> = returns.iter().zip(records).map(|(g, r)| g - r.value).collect();
    if normalize && adv.len() > 1 {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 1e-12 {
            adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
        } else {
            adv.iter_mut().for_each(|a| *a -= mean);
        }
    }
    (adv, returns)
}

/// The clipped ratio `clamp(f, 1 - clip, 1 + clip)`.
pub fn clipped_ratio(ratio: f64, clip: f64) -> f64 {
    ratio.clamp(1.0 - clip, 1.0 + clip)
}

/// `min(f A, clamp(f) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(clipped_ratio(ratio, clip) * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio.
fn surrogate_slope(ratio: f64, advantage: f64, clip: f64) -> f64 {
    if (advantage > 0.0 && ratio >= 1.0 + clip) || (advantage < 0.0 && ratio <= 1.0 - clip) {
        0.0
    } else {
        advantage
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

/// Gaussian over unit-box actions with squashed means and a shared,
/// state-independent std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub actor: PrunableMlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn means(&self, observation: &[f64]) -> Vec<f64> {
        self.actor.masked_forward(observation).into_iter().map(sigmoid).collect()
    }

    pub fn set_std(&mut self, std: f64) {
        self.log_std.iter_mut().for_each(|l| *l = std.ln());
    }

    pub fn log_prob(&self, means: &[f64], action: &[f64]) -> f64 {
        means
            .iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_TAU
            })
            .sum()
    }

    /// Draw an action; returns the unclamped sample and its log-density.
    pub fn sample(&self, observation: &[f64], rng: &mut StreamRng) -> (Vec<f64>, f64) {
        let means = self.means(observation);
        let action: Vec<f64> = means
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let e: f64 = rng.sample(StandardNormal);
                m + ls.exp() * e
            })
            .collect();
        let lp = self.log_prob(&means, &action);
        (action, lp)
    }
}

/// Map unit-box actions into `[low, high]`, clamping first.
pub fn to_prices(action: &[f64], low: f64, high: f64) -> Vec<f64> {
    action.iter().map(|a| low + a.clamp(0.0, 1.0) * (high - low)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &PrunableMlp) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net) }
    }

    /// Descend along `grad`. Parameters whose entry in `live` is zero are
    /// left alone, moments included.
    pub fn step(&mut self, net: &mut PrunableMlp, grad: &Gradients, lr: f64, live: Option<&Gradients>) {
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t));
        let mut delta = Gradients::zeros_like(net);
        let flags: Vec<bool> = match live {
            Some(l) => l.values().map(|x| *x != 0.0).collect(),
            None => vec![true; grad.values().count()],
        };
        for ((((d, g), m), v), live) in
            delta.values_mut().zip(grad.values()).zip(self.m.values_mut()).zip(self.v.values_mut()).zip(flags)
        {
            if !live {
                continue;
            }
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *d = -lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        net.apply_update(&delta, 1.0);
    }

    fn compact(&mut self, map: &crate::tinynet::CompactionMap, net_before: &PrunableMlp) {
        self.m = map.compact_values(net_before, &self.m);
        self.v = map.compact_values(net_before, &self.v);
    }
}

/// Losses and ratio statistics of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Largest `|f - 1|` over the first epoch.
    pub first_epoch_ratio_deviation: f64,
    /// Fraction of records on a clipped branch in the last epoch.
    pub clip_fraction: f64,
    pub aborted: bool,
}

/// What one Tiny-MADRL step did besides the PPO update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub epoch: usize,
    pub mask_update: Option<MaskUpdate>,
    pub sparsity: f64,
    pub compacted: bool,
    pub active_parameters: usize,
}

/// A PPO learner for one RSU. With a [`PruneSchedule`] it becomes a
/// Tiny-MADRL learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoAgent {
    config: PpoConfig,
    low: f64,
    high: f64,
    pub policy: GaussianPolicy,
    pub critic: PrunableMlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: RolloutBuffer,
    pending: Option<RolloutRecord>,
    reward_scale: f64,
    steps: usize,
    updates: usize,
    schedule: Option<PruneSchedule>,
    compacted: bool,
    last_prune: Option<PruneReport>,
}

impl PpoAgent {
    /// Fresh agent for an RSU with price box `[low, high]`, `num_uavs`
    /// outputs and `obs_len` inputs.
    pub fn new(
        config: PpoConfig,
        obs_len: usize,
        num_uavs: usize,
        low: f64,
        high: f64,
        init_rng: &mut StreamRng,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        if !(low.is_finite() && high >= low) {
            return Err(AgentError::Config(format!("bad price box [{low}, {high}]")));
        }
        let mut sizes = vec![obs_len];
        sizes.extend(&config.hidden_sizes);
        sizes.push(num_uavs);
        let mut actor = PrunableMlp::random(
            &sizes,
            Activation::Relu,
            Activation::Identity,
            config.use_bias,
            config.floor_neurons,
            init_rng,
        )?;
        let last = actor.layers().len() - 1;
        actor.layers_mut()[last].weights_mut().iter_mut().for_each(|w| *w *= 0.01);
        *sizes.last_mut().expect("output size") = 1;
        let critic = PrunableMlp::random(
            &sizes,
            Activation::Relu,
            Activation::Identity,
            config.use_bias,
            config.floor_neurons,
            init_rng,
        )?;
        let policy = GaussianPolicy { actor, log_std: vec![config.policy_std.ln(); num_uavs] };
        Ok(PpoAgent {
            actor_opt: Adam::new(&policy.actor),
            critic_opt: Adam::new(&critic),
            buffer: RolloutBuffer::new(config.rollout_size),
            policy,
            critic,
            config,
            low,
            high,
            pending: None,
            reward_scale: 0.0,
            steps: 0,
            updates: 0,
            schedule: None,
            compacted: false,
            last_prune: None,
        })
    }

    /// Attach a pruning schedule, turning this into a Tiny-MADRL agent.
    pub fn with_schedule(mut self, schedule: PruneSchedule) -> Result<Self, AgentError> {
        schedule.validate()?;
        self.schedule = Some(schedule);
        Ok(self)
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn schedule(&self) -> Option<&PruneSchedule> {
        self.schedule.as_ref()
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn buffer(&self) -> &RolloutBuffer {
        &self.buffer
    }

    pub fn is_compacted(&self) -> bool {
        self.compacted
    }

    pub fn last_prune(&self) -> Option<&PruneReport> {
        self.last_prune.as_ref()
    }

    pub fn value(&self, observation: &[f64]) -> f64 {
        let out = if self.config.prune_critic {
            self.critic.masked_forward(observation)
        } else {
            self.critic.forward(observation)
        };
        out[0]
    }

    /// Sample an action and remember it until [`PricingPolicy::observe`].
    /// Returns the price row, the log-probability and the value estimate.
    pub fn act_with_info(&mut self, observation: &Observation, rng: &mut StreamRng) -> (Vec<f64>, f64, f64) {
        let (action, log_prob) = self.policy.sample(&observation.features, rng);
        let value = self.value(&observation.features);
        let prices = to_prices(&action, self.low, self.high);
        self.pending = Some(RolloutRecord {
            observation: observation.features.clone(),
            action,
            log_prob,
            reward: 0.0,
            value,
            done: false,
        });
        (prices, log_prob, value)
    }

    /// Mean action mapped to prices, without exploration.
    pub fn greedy_prices(&self, observation: &Observation) -> Vec<f64> {
        to_prices(&self.policy.means(&observation.features), self.low, self.high)
    }

    /// Fraction of the original hidden neurons that are masked or removed.
    pub fn actor_sparsity(&self) -> f64 {
        if self.compacted {
            let initial: usize = self.config.hidden_sizes.iter().sum();
            1.0 - self.policy.actor.num_hidden_neurons() as f64 / initial as f64
        } else {
            self.policy.actor.sparsity()
        }
    }

    /// Snapshot of everything an update may change.
    fn snapshot(&self) -> (GaussianPolicy, PrunableMlp, Adam, Adam) {
        (self.policy.clone(), self.critic.clone(), self.actor_opt.clone(), self.critic_opt.clone())
    }
}

fn clip_norm(grad: &mut Gradients, max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let norm = grad.l2_norm();
        if norm > max {
            grad.scale(max / norm);
        }
    }
}

/// Full-batch PPO on the agent's buffer, then clear it.
pub fn ppo_update(agent: &mut PpoAgent) -> UpdateReport {
    let scale = if agent.config.normalize_rewards && agent.reward_scale > 0.0 { agent.reward_scale } else { 1.0 };
    let mut records = agent.buffer.records().to_vec();
    records.iter_mut().for_each(|r| r.reward /= scale);
    let (advantages, returns) =
        compute_advantages(&records, agent.config.discount, agent.config.normalize_advantages);
    let mut saved = Some(agent.snapshot());
    let n = records.len() as f64;
    let clip = agent.config.clip;
    let mut report = UpdateReport::default();

    for epoch in 0..agent.config.update_epochs {
        let mut actor_grad = Gradients::zeros_like(&agent.policy.actor);
        let mut critic_grad = Gradients::zeros_like(&agent.critic);
        let (mut actor_loss, mut critic_loss, mut clipped) = (0.0, 0.0, 0usize);
        let stds: Vec<f64> = agent.policy.log_std.iter().map(|l| l.exp()).collect();
        for ((rec, &adv), &ret) in records.iter().zip(&advantages).zip(&returns) {
            let cache = agent.policy.actor.forward_cached(&rec.observation, true);
            let means: Vec<f64> = cache.output().iter().map(|&z| sigmoid(z)).collect();
            let log_prob = agent.policy.log_prob(&means, &rec.action);
            let ratio = (log_prob - rec.log_prob).exp();
            if epoch == 0 {
                report.first_epoch_ratio_deviation = report.first_epoch_ratio_deviation.max((ratio - 1.0).abs());
            }
            actor_loss -= clipped_surrogate(ratio, adv, clip) / n;
            let slope = surrogate_slope(ratio, adv, clip);
            if slope == 0.0 && adv != 0.0 {
                clipped += 1;
            }
            // d(-surrogate / n) / d(pre-squash output)
            let coef = -slope * ratio / n;
            if coef != 0.0 {
                let grad_out: Vec<f64> = means
                    .iter()
                    .zip(&rec.action)
                    .zip(&stds)
                    .map(|((m, a), s)| coef * (a - m) / (s * s) * m * (1.0 - m))
                    .collect();
                let (g, _) = agent.policy.actor.backward(&cache, &grad_out);
                actor_grad.add_scaled(&g, 1.0);
            }

            let ccache = agent.critic.forward_cached(&rec.observation, agent.config.prune_critic);
            let err = ccache.output()[0] - ret;
            critic_loss += err * err / n;
            let (g, _) = agent.critic.backward(&ccache, &[2.0 * err / n]);
            critic_grad.add_scaled(&g, 1.0);
        }
        report.actor_loss = actor_loss;
        report.critic_loss = critic_loss;
        report.clip_fraction = clipped as f64 / n;

        let finite = actor_loss.is_finite() && critic_loss.is_finite() && actor_grad.is_finite() && critic_grad.is_finite();
        if !finite {
            warn!("non-finite PPO loss at update {} epoch {epoch}; restoring weights", agent.updates);
            (agent.policy, agent.critic, agent.actor_opt, agent.critic_opt) = saved.take().expect("snapshot");
            report.aborted = true;
            break;
        }
        clip_norm(&mut actor_grad, agent.config.max_grad_norm);
        clip_norm(&mut critic_grad, agent.config.max_grad_norm);
        let live = agent.policy.actor.parameter_liveness();
        agent.actor_opt.step(&mut agent.policy.actor, &actor_grad, agent.config.actor_lr, Some(&live));
        let critic_live = agent.config.prune_critic.then(|| agent.critic.parameter_liveness());
        agent.critic_opt.step(&mut agent.critic, &critic_grad, agent.config.critic_lr, critic_live.as_ref());
    }
    if !report.aborted && !(agent.policy.actor.is_finite() && agent.critic.is_finite()) {
        warn!("non-finite weights after update {}; restoring", agent.updates);
        (agent.policy, agent.critic, agent.actor_opt, agent.critic_opt) = saved.take().expect("snapshot");
        report.aborted = true;
    }
    agent.buffer.clear();
    report
}

/// PPO update followed by the pruning work scheduled for `epoch`: mask
/// recomputation on update epochs and, at the schedule's last epoch,
/// physical removal of the masked neurons.
pub fn tiny_madrl_step(agent: &mut PpoAgent, epoch: usize) -> (UpdateReport, PruneReport) {
    let report = ppo_update(agent);
    let mut prune = PruneReport {
        epoch,
        mask_update: None,
        sparsity: agent.actor_sparsity(),
        compacted: agent.compacted,
        active_parameters: agent.policy.actor.num_active_parameters(),
    };
    let Some(schedule) = agent.schedule else {
        return (report, prune);
    };
    if agent.compacted {
        return (report, prune);
    }
    prune.mask_update = agent.policy.actor.update_masks(&schedule, epoch);
    if agent.config.prune_critic {
        agent.critic.update_masks(&schedule, epoch);
    }
    if epoch >= schedule.end_epoch() {
        let before = agent.policy.actor.clone();
        let (compact, map) = before.compact();
        agent.actor_opt.compact(&map, &before);
        agent.policy.actor = compact;
        if agent.config.prune_critic {
            let before = agent.critic.clone();
            let (compact, map) = before.compact();
            agent.critic_opt.compact(&map, &before);
            agent.critic = compact;
        }
        agent.compacted = true;
        prune.compacted = true;
    }
    prune.sparsity = agent.actor_sparsity();
    prune.active_parameters = agent.policy.actor.num_active_parameters();
    agent.last_prune = Some(prune);
    (report, prune)
}

impl PricingPolicy for PpoAgent {
    fn act(&mut self, observation: &Observation, rng: &mut StreamRng) -> Vec<f64> {
        self.act_with_info(observation, rng).0
    }

    fn observe(&mut self, transition: &Transition) {
        self.push_transition(transition);
        if self.buffer.is_full() {
            if self.schedule.is_some() {
                tiny_madrl_step(self, self.updates);
            } else {
                ppo_update(self);
            }
            self.updates += 1;
            // the std moves only between rollouts so each batch is on-policy
            self.policy.set_std(self.config.std_at(self.steps));
        }
    }

    fn sparsity(&self) -> Option<f64> {
        self.schedule.map(|_| self.actor_sparsity())
    }
}

impl PpoAgent {
    /// Store the outcome of the pending action without updating.
    pub fn push_transition(&mut self, transition: &Transition) {
        if self.config.normalize_rewards {
            self.reward_scale = self.reward_scale.max(transition.reward.abs());
        }
        if let Some(mut rec) = self.pending.take() {
            rec.reward = transition.reward;
            rec.done = transition.done;
            self.buffer.push(rec);
        }
        self.steps += 1;
    }

    #[cfg(test)]
    pub(crate) fn set_values_to_returns(&mut self) {
        let scale = if self.reward_scale > 0.0 { self.reward_scale } else { 1.0 };
        let mut recs = self.buffer.records.clone();
        recs.iter_mut().for_each(|r| r.reward /= scale);
        let (_, returns) = compute_advantages(&recs, self.config.discount, false);
        for (r, g) in self.buffer.records.iter_mut().zip(returns) {
            r.value = g;
        }
    }
}

const AGENT_FORMAT: &str = "tinymarl-ppo";
const AGENT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentCheckpoint {
    format: String,
    version: u32,
    agent: PpoAgent,
}

impl PpoAgent {
    /// JSON checkpoint: nets in the tinynet format plus optimiser, buffer and
    /// schedule state. Round trips exactly.
    pub fn to_checkpoint(&self) -> String {
        let cp = AgentCheckpoint { format: AGENT_FORMAT.into(), version: AGENT_VERSION, agent: self.clone() };
        serde_json::to_string(&cp).expect("agent serialises")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, AgentError> {
        let cp: AgentCheckpoint = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if cp.format != AGENT_FORMAT || cp.version != AGENT_VERSION {
            return Err(AgentError::Checkpoint(format!("unsupported format {:?} version {}", cp.format, cp.version)));
        }
        Ok(cp.agent)
    }
}
