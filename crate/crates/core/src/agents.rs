//! Actor-critic agents for stores and the warehouse.
//!
//! A store agent maps a 5-feature observation per (store, product) to one of
//! 14 quantized replenishment levels; its weights are shared across all
//! products of the store. The actor trains against a neighbor-smoothed
//! target distribution: the advantage is added to every logit, scaled down
//! with distance from the chosen action, and the loss is the cross-entropy
//! against the softmax of those shifted logits.
//!
//! The warehouse agent is plain A2C with a binary action (order / don't),
//! one decision per product per cycle, weights shared across products.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::InstanceSpec;
use crate::nn::{
    backward_cross_entropy, backward_mse, softmax, Activation, AdamState, Gradients, Mlp,
};
use crate::sim::Env;

/// Quantized replenishment levels: fractions of the remaining shelf space.
pub const ACTION_LEVELS: [f64; 14] = [
    0.0, 0.005, 0.01, 0.0125, 0.015, 0.0175, 0.02, 0.03, 0.04, 0.08, 0.12, 0.2, 0.5, 1.0,
];

pub const STORE_OBS_DIM: usize = 5;
pub const WAREHOUSE_OBS_DIM: usize = 5;

/// Normalizers that keep observation features O(1); frozen into checkpoints
/// so transferred agents keep the scaling they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    /// Divisor for the unit-volume feature (mean unit volume at training
    /// time).
    pub volume_scale: f64,
    /// Per-store divisor for the forecast and wastage features (target mean
    /// per-period sales). Without it those features sit one to two orders
    /// of magnitude below the inventory feature and the nets stay blind to
    /// them for most of a training run.
    pub sales_scale: Vec<f64>,
}

impl FeatureScale {
    pub fn from_instance(spec: &InstanceSpec) -> Self {
        let mean = spec.products.iter().map(|p| p.unit_volume).sum::<f64>()
            / spec.num_products() as f64;
        let sales = spec
            .stores
            .iter()
            .map(|s| s.mean_sales_fraction.max(1e-9))
            .collect();
        FeatureScale {
            volume_scale: mean,
            sales_scale: sales,
        }
    }

    fn sales(&self, store: usize) -> f64 {
        self.sales_scale
            .get(store)
            .copied()
            .unwrap_or_else(|| self.sales_scale.last().copied().unwrap_or(1.0))
    }
}

/// One experience tuple for either agent kind.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: [f64; 5],
    pub action: usize,
    pub reward: f64,
    pub next_obs: [f64; 5],
    pub terminal: bool,
    pub product: usize,
    pub period: usize,
    /// Level the forecast-driven heuristic would have picked in this
    /// state; the imitation anchor during warmup rounds. Unused by the
    /// warehouse agent.
    pub guide: usize,
}

/// Nearest action level to an order of `desired` normalized units given
/// the current inventory. Levels scale with free shelf space, so the
/// comparison happens in order units.
pub fn guide_level(inventory: f64, desired: f64) -> usize {
    let room = (1.0 - inventory).max(0.0);
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (k, level) in ACTION_LEVELS.iter().enumerate() {
        let gap = (level * room - desired).abs();
        if gap < best_gap {
            best_gap = gap;
            best = k;
        }
    }
    best
}

/// How actions are drawn from the actor's distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionMode {
    Multinomial,
    EpsilonGreedy(f64),
    Argmax,
}

/// Observation for one (store, product): inventory, forecast sales,
/// predicted wastage, normalized unit volume, and the store's forecast
/// order volume as a fraction of its truck.
pub fn store_observe(
    env: &Env,
    store: usize,
    product: usize,
    forecast_row: &[f64],
    scale: &FeatureScale,
) -> [f64; 5] {
    let spec = env.spec();
    let qhat = env.predicted_store_wastage(store, forecast_row);
    let mut volume = 0.0;
    for (p, w) in spec.products.iter().zip(forecast_row) {
        volume += p.unit_volume * w;
    }
    let sales = scale.sales(store);
    [
        env.store_level(store, product),
        forecast_row[product] / sales,
        qhat[product] / sales,
        spec.products[product].unit_volume / scale.volume_scale,
        volume / spec.stores[store].truck_volume,
    ]
}

/// Observations for every product of one store, sharing the per-store work.
pub fn store_observe_all(
    env: &Env,
    store: usize,
    forecast_row: &[f64],
    scale: &FeatureScale,
) -> Vec<[f64; 5]> {
    let spec = env.spec();
    let qhat = env.predicted_store_wastage(store, forecast_row);
    let mut volume = 0.0;
    for (p, w) in spec.products.iter().zip(forecast_row) {
        volume += p.unit_volume * w;
    }
    let volume_feature = volume / spec.stores[store].truck_volume;
    let sales = scale.sales(store);
    (0..spec.num_products())
        .map(|i| {
            [
                env.store_level(store, i),
                forecast_row[i] / sales,
                qhat[i] / sales,
                spec.products[i].unit_volume / scale.volume_scale,
                volume_feature,
            ]
        })
        .collect()
}

/// Observation for one warehouse product: current fill, projected fill one
/// cycle out, forecast aggregate store demand and predicted spoilage two
/// cycles out, and an emptiness indicator.
pub fn warehouse_observe(
    fill: f64,
    projected_fill: f64,
    aggregate_demand: f64,
    predicted_waste: f64,
) -> [f64; 5] {
    [
        fill,
        projected_fill,
        aggregate_demand,
        predicted_waste,
        if fill <= 0.0 { 1.0 } else { 0.0 },
    ]
}

/// Replenishment quantity for an action level: the level scales the
/// remaining shelf space, so the top level exactly fills it.
pub fn action_to_quantity(level_index: usize, inventory: f64) -> f64 {
    ACTION_LEVELS[level_index] * (1.0 - inventory)
}

/// Draw an action index from a probability vector.
pub fn select_action(
    probs: &[f64],
    mode: SelectionMode,
    rng: &mut ChaCha12Rng,
) -> Result<usize> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "action probabilities sum to {sum}, expected 1"
        )));
    }
    let argmax = || {
        let mut best = 0;
        for (k, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = k;
            }
        }
        best
    };
    let index = match mode {
        SelectionMode::Argmax => argmax(),
        SelectionMode::EpsilonGreedy(eps) => {
            if rng.gen::<f64>() < eps {
                rng.gen_range(0..probs.len())
            } else {
                argmax()
            }
        }
        SelectionMode::Multinomial => {
            let draw: f64 = rng.gen::<f64>() * sum;
            let mut acc = 0.0;
            let mut chosen = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if draw < acc {
                    chosen = k;
                    break;
                }
            }
            chosen
        }
    };
    Ok(index)
}

/// One-step advantage: reward plus discounted bootstrap minus the baseline.
pub fn td0_advantage(reward: f64, value: f64, next_value: f64, discount: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { discount * next_value };
    reward + bootstrap - value
}

/// Critic regression target for the same transition.
pub fn td0_target(reward: f64, next_value: f64, discount: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { discount * next_value };
    reward + bootstrap
}

/// Neighbor-smoothed actor target: add the advantage to every logit, scaled
/// down with distance from the chosen action.
pub fn actor_target_logits(logits: &[f64], chosen: usize, advantage: f64) -> Vec<f64> {
    logits
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let dist = k.abs_diff(chosen) as f64;
            l + advantage / (dist + 1.0)
        })
        .collect()
}

/// Mean losses over the final pass of a batch update.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BatchStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
}

/// A store's actor-critic pair, shared across all of its products.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreAgent {
    pub store: usize,
    pub action_levels: Vec<f64>,
    pub scale: FeatureScale,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
}

impl StoreAgent {
    pub fn new(store: usize, scale: FeatureScale, rate: f64, rng: &mut ChaCha12Rng) -> Self {
        let mut actor = Mlp::new(
            &[STORE_OBS_DIM, 32, 32, 32, ACTION_LEVELS.len()],
            &[
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Softmax,
            ],
            rng,
        )
        .expect("valid actor dims");
        // The output bias seeds a geometric prior over the levels: a
        // uniform initial policy orders several times the truck volume
        // every period and starts training from deeply negative rewards,
        // while a prior much steeper than this starves the store so badly
        // that every action earns the same reward and no gradient forms.
        for (k, b) in actor.biases.last_mut().expect("actor has layers").iter_mut().enumerate() {
            *b = -0.35 * k as f64;
        }
        let critic = Mlp::new(
            &[STORE_OBS_DIM, 32, 1],
            &[Activation::Relu, Activation::Linear],
            rng,
        )
        .expect("valid critic dims");
        let actor_adam = AdamState::new(&actor, rate);
        let critic_adam = AdamState::new(&critic, rate);
        StoreAgent {
            store,
            action_levels: ACTION_LEVELS.to_vec(),
            scale,
            actor,
            critic,
            actor_adam,
            critic_adam,
        }
    }

    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor.forward(obs)?.output().to_vec())
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?.output()[0])
    }
}

/// The warehouse's actor-critic pair, shared across products.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarehouseAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
}

impl WarehouseAgent {
    pub fn new(rate: f64, rng: &mut ChaCha12Rng) -> Self {
        let actor = Mlp::new(
            &[WAREHOUSE_OBS_DIM, 32, 32, 2],
            &[Activation::Relu, Activation::Relu, Activation::Softmax],
            rng,
        )
        .expect("valid actor dims");
        let critic = Mlp::new(
            &[WAREHOUSE_OBS_DIM, 32, 1],
            &[Activation::Relu, Activation::Linear],
            rng,
        )
        .expect("valid critic dims");
        let actor_adam = AdamState::new(&actor, rate);
        let critic_adam = AdamState::new(&critic, rate);
        WarehouseAgent {
            actor,
            critic,
            actor_adam,
            critic_adam,
        }
    }

    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor.forward(obs)?.output().to_vec())
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?.output()[0])
    }
}

/// Advantages and critic targets are frozen from the critic's state at batch
/// assembly; the passes below only move the networks toward those fixed
/// targets.
fn frozen_targets(
    critic: &Mlp,
    transitions: &[Transition],
    discount: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut advantages = Vec::with_capacity(transitions.len());
    let mut targets = Vec::with_capacity(transitions.len());
    for tr in transitions {
        let v = critic.forward(&tr.obs)?.output()[0];
        let v_next = critic.forward(&tr.next_obs)?.output()[0];
        advantages.push(td0_advantage(tr.reward, v, v_next, discount, tr.terminal));
        targets.push(td0_target(tr.reward, v_next, discount, tr.terminal));
    }
    Ok((advantages, targets))
}

/// Advantage magnitude cap inside the actor update: bounds the per-pass
/// logit shift so one noisy advantage estimate cannot slam the policy
/// into a one-hot.
pub const ADVANTAGE_CLIP: f64 = 1.0;

/// Gain applied to positive clamped advantages when forming the store
/// What the actor learns from during one batch round. The critic always
/// fits the frozen TD targets.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ActorMode {
    /// Leave the actor untouched.
    Freeze,
    /// Pull gently toward the heuristic's choice: the round target is the
    /// round-start logits plus a unit kernel at each transition's guide
    /// level, fixed for all epochs, so one round moves logits at most one
    /// unit no matter how many epochs run.
    Guide,
    /// Advantage-driven: the target is the current logits plus the
    /// clipped-advantage kernel at the taken action, recomputed every
    /// pass so the pull fades as the policy moves off punished actions.
    Reinforce,
}

/// Update a store agent on one batch. Each epoch both networks walk the
/// batch in minibatches: the critic toward the frozen TD targets, the
/// actor toward the softmax of the neighbor-smoothed logits built from
/// clipped advantages. Logits are recomputed from the current actor every
/// pass; only the advantages and TD targets stay frozen.
pub fn train_store_batch(
    agent: &mut StoreAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
) -> Result<BatchStats> {
    store_batch_update(agent, transitions, discount, epochs, minibatch, ActorMode::Reinforce)
}

/// Critic-only variant of [`train_store_batch`]: fit the value network
/// toward the frozen TD targets and leave the actor untouched.
pub fn train_store_critic(
    agent: &mut StoreAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
) -> Result<BatchStats> {
    store_batch_update(agent, transitions, discount, epochs, minibatch, ActorMode::Freeze)
}

/// Warmup variant of [`train_store_batch`]: the critic fits the frozen
/// TD targets while the actor is pulled one bounded step toward each
/// transition's guide level. Used for the first update rounds, where
/// advantages read off an unfitted value estimate are noise and one
/// 40-epoch round on that noise can lock the policy into an arbitrary
/// mode; imitating the heuristic instead starts reinforcement from a
/// sane, still-entropic policy.
pub fn train_store_guided(
    agent: &mut StoreAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
) -> Result<BatchStats> {
    store_batch_update(agent, transitions, discount, epochs, minibatch, ActorMode::Guide)
}

fn store_batch_update(
    agent: &mut StoreAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
    mode: ActorMode,
) -> Result<BatchStats> {
    if transitions.is_empty() {
        return Err(CoreError::InvalidArgument("empty training batch".into()));
    }
    if minibatch == 0 {
        return Err(CoreError::InvalidArgument("minibatch size must be positive".into()));
    }
    let (advantages, targets) = frozen_targets(&agent.critic, transitions, discount)?;
    let mut guide_targets = Vec::new();
    if mode == ActorMode::Guide {
        guide_targets.reserve(transitions.len());
        for tr in transitions {
            let fwd = agent.actor.forward(&tr.obs)?;
            let logits = fwd.pre.last().expect("actor has layers");
            guide_targets.push(softmax(&actor_target_logits(logits, tr.guide, 1.0)));
        }
    }
    let mut stats = BatchStats {
        actor_loss: 0.0,
        critic_loss: 0.0,
    };
    for epoch in 0..epochs {
        let mut actor_loss = 0.0;
        let mut critic_loss = 0.0;
        let mut start = 0;
        while start < transitions.len() {
            let end = (start + minibatch).min(transitions.len());
            let scale = 1.0 / (end - start) as f64;
            let mut actor_grads = Gradients::zeroed_like(&agent.actor);
            let mut critic_grads = Gradients::zeroed_like(&agent.critic);
            for k in start..end {
                let tr = &transitions[k];
                let (c_loss, c_grads) = backward_mse(&agent.critic, &tr.obs, &[targets[k]])?;
                critic_grads.add(&c_grads);
                critic_loss += c_loss;

                match mode {
                    ActorMode::Freeze => {}
                    ActorMode::Guide => {
                        let (a_loss, a_grads) =
                            backward_cross_entropy(&agent.actor, &tr.obs, &guide_targets[k])?;
                        actor_grads.add(&a_grads);
                        actor_loss += a_loss;
                    }
                    ActorMode::Reinforce => {
                        let adv = advantages[k].clamp(-ADVANTAGE_CLIP, ADVANTAGE_CLIP);
                        let fwd = agent.actor.forward(&tr.obs)?;
                        let logits = fwd.pre.last().expect("actor has layers");
                        let target = softmax(&actor_target_logits(logits, tr.action, adv));
                        let (a_loss, a_grads) =
                            backward_cross_entropy(&agent.actor, &tr.obs, &target)?;
                        actor_grads.add(&a_grads);
                        actor_loss += a_loss;
                    }
                }
            }
            critic_grads.scale(scale);
            actor_grads.scale(scale);
            if !critic_grads.is_zero() {
                agent.critic_adam.apply(&mut agent.critic, &critic_grads)?;
            }
            if !actor_grads.is_zero() {
                agent.actor_adam.apply(&mut agent.actor, &actor_grads)?;
            }
            start = end;
        }
        if epoch == epochs - 1 {
            stats.actor_loss = actor_loss / transitions.len() as f64;
            stats.critic_loss = critic_loss / transitions.len() as f64;
        }
    }
    Ok(stats)
}

/// Update the warehouse agent on one batch: critic as above; the actor
/// takes minibatch-averaged policy-gradient steps, advantage times the
/// log-probability gradient of the taken action.
pub fn train_warehouse_batch(
    agent: &mut WarehouseAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
) -> Result<BatchStats> {
    warehouse_batch_update(agent, transitions, discount, epochs, minibatch, true)
}

/// Critic-only variant of [`train_warehouse_batch`], mirroring
/// [`train_store_critic`].
pub fn train_warehouse_critic(
    agent: &mut WarehouseAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
) -> Result<BatchStats> {
    warehouse_batch_update(agent, transitions, discount, epochs, minibatch, false)
}

fn warehouse_batch_update(
    agent: &mut WarehouseAgent,
    transitions: &[Transition],
    discount: f64,
    epochs: usize,
    minibatch: usize,
    update_actor: bool,
) -> Result<BatchStats> {
    if transitions.is_empty() {
        return Err(CoreError::InvalidArgument("empty training batch".into()));
    }
    if minibatch == 0 {
        return Err(CoreError::InvalidArgument("minibatch size must be positive".into()));
    }
    let (advantages, targets) = frozen_targets(&agent.critic, transitions, discount)?;
    let mut stats = BatchStats {
        actor_loss: 0.0,
        critic_loss: 0.0,
    };
    for epoch in 0..epochs {
        let mut actor_loss = 0.0;
        let mut critic_loss = 0.0;
        let mut start = 0;
        while start < transitions.len() {
            let end = (start + minibatch).min(transitions.len());
            let scale = 1.0 / (end - start) as f64;
            let mut actor_grads = Gradients::zeroed_like(&agent.actor);
            let mut critic_grads = Gradients::zeroed_like(&agent.critic);
            for k in start..end {
                let tr = &transitions[k];
                let (c_loss, c_grads) = backward_mse(&agent.critic, &tr.obs, &[targets[k]])?;
                critic_grads.add(&c_grads);
                critic_loss += c_loss;

                if update_actor {
                    // d(-delta log pi(a)) / d logits = delta * (pi - onehot(a)).
                    let adv = advantages[k].clamp(-ADVANTAGE_CLIP, ADVANTAGE_CLIP);
                    let fwd = agent.actor.forward(&tr.obs)?;
                    let probs = fwd.output().to_vec();
                    let mut delta_out: Vec<f64> = probs.iter().map(|p| adv * p).collect();
                    delta_out[tr.action] -= adv;
                    let grads = agent.actor.backward_from_output_delta(&fwd, &delta_out);
                    actor_grads.add(&grads);
                    actor_loss += -adv * probs[tr.action].max(1e-300).ln();
                }
            }
            critic_grads.scale(scale);
            actor_grads.scale(scale);
            if !critic_grads.is_zero() {
                agent.critic_adam.apply(&mut agent.critic, &critic_grads)?;
            }
            if !actor_grads.is_zero() {
                agent.actor_adam.apply(&mut agent.actor, &actor_grads)?;
            }
            start = end;
        }
        if epoch == epochs - 1 {
            stats.actor_loss = actor_loss / transitions.len() as f64;
            stats.critic_loss = critic_loss / transitions.len() as f64;
        }
    }
    Ok(stats)
}
