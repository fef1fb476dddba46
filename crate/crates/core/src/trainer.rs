//! Episode runner, rollout estimator, and the two-stage training loop:
//! store agents first against an infinite warehouse, then the warehouse
//! agent against the frozen store policies.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    guide_level, store_observe_all, train_store_batch, train_store_guided,
    train_warehouse_batch, train_warehouse_critic, FeatureScale, SelectionMode, StoreAgent,
    Transition, WarehouseAgent,
};
use crate::baselines::heuristic_store_order;
use crate::demand::{stream, Trace};
use crate::error::{CoreError, Result};
use crate::instance::InstanceSpec;
use crate::policy::{RolloutEstimates, StorePolicy, WarehousePolicy};
use crate::rewards::{store_breakdown, warehouse_breakdown, StoreBreakdown, WarehouseBreakdown};
use crate::sim::{Env, PeriodOutcome};

const AGENT_SALT: u64 = 0x6167_656e_74; // agent weight init
const ACTION_SALT: u64 = 0x6163_74; // per-episode action sampling
const BATCH_SALT: u64 = 0x6261_7463_68; // batch sampling
const EPISODE_SALT: u64 = 0x6570; // episode runner
const ROLLOUT_SALT: u64 = 0x726f_6c6c; // rollout stepping

/// Update rounds at the start of each training stage before advantage
/// feedback reaches the actor. Actor updates read advantages off the value
/// estimate, and a freshly initialized critic produces advantage noise
/// strong enough to lock the policy into an arbitrary mode before any real
/// signal exists. Store agents spend these rounds imitating the
/// forecast-driven heuristic while the critic fits; the warehouse agent
/// fits only its critic.
pub const CRITIC_WARMUP_ROUNDS: usize = 4;

/// How actions are drawn during training episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    /// Sample from the actor's output distribution.
    Multinomial,
    /// Linearly decay a uniform-random chance from `epsilon_start` to
    /// `epsilon_end` over the episode budget; otherwise act greedily.
    EpsilonGreedy,
}

/// Knobs for both training stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_episodes: usize,
    /// Update weights after this many episodes of fresh experience.
    pub update_every: usize,
    /// Minibatch size for the fitting passes. Each update samples
    /// `update_every * batch_size` transitions (with replacement, across
    /// all products) and walks them in minibatches of this size.
    pub batch_size: usize,
    /// Passes over the sampled set per update.
    pub epochs: usize,
    /// Trailing episodes examined by the convergence check.
    pub window: usize,
    /// Population-variance bound for convergence (strict).
    pub threshold: f64,
    pub learning_rate: f64,
    pub exploration: ExplorationKind,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_episodes: 1000,
            update_every: 5,
            batch_size: 128,
            epochs: 40,
            window: 50,
            threshold: 1e-4,
            learning_rate: 1e-3,
            exploration: ExplorationKind::Multinomial,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Action-selection mode for one training episode.
    pub fn selection_mode(&self, episode: usize) -> SelectionMode {
        match self.exploration {
            ExplorationKind::Multinomial => SelectionMode::Multinomial,
            ExplorationKind::EpsilonGreedy => {
                let span = self.max_episodes.saturating_sub(1).max(1) as f64;
                let frac = episode as f64 / span;
                let eps = self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac;
                SelectionMode::EpsilonGreedy(eps)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_episodes == 0
            || self.update_every == 0
            || self.batch_size == 0
            || self.epochs == 0
            || self.window == 0
        {
            return Err(CoreError::InvalidArgument(
                "training sizes must be positive".to_string(),
            ));
        }
        if !(self.threshold > 0.0) || !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidArgument(
                "threshold and learning rate must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// True when the trailing window of episode rewards has settled: its
/// population variance is strictly below the threshold. Returns false
/// whenever fewer than `window` episodes exist.
pub fn convergence_check(history: &[f64], window: usize, threshold: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64;
    var < threshold
}

/// First episode whose mean reward reaches `target`, if any.
pub fn episodes_to_threshold(history: &[f64], target: f64) -> Option<usize> {
    history.iter().position(|r| *r >= target)
}

/// Forward simulation on a clone of the environment: stores keep acting
/// with the given policy, forecast sales realize exactly, and the
/// warehouse orders nothing. Produces the per-product projected fill one
/// cycle out, aggregate store replenishment demand over the following
/// cycle (warehouse units, capped at capacity), and the stock that the
/// aging event after that would discard. The live environment is left
/// untouched. Must be called at a cycle boundary after the cycle has been
/// opened but before the order is placed.
pub fn rollout_estimates(
    env: &Env,
    store_policy: &StorePolicy,
    sales: &Trace,
) -> Result<RolloutEstimates> {
    if env.is_infinite_warehouse() {
        return Err(CoreError::InvalidArgument(
            "rollout estimates need a coupled environment".to_string(),
        ));
    }
    let spec = env.spec();
    let n = spec.cycle;
    let t = env.period();
    let limit = sales.periods;
    let products = spec.num_products();
    let hold = vec![false; products];
    let mut rng = stream(spec.seed, ROLLOUT_SALT, t, 0);

    let mut clone = env.clone();
    clone.place_order(&hold)?;
    let w1 = (t + n).min(limit);
    for tau in t..w1 {
        let rows = &sales.values[tau];
        let orders = store_policy.desired_orders(&clone, rows, rows, &mut rng)?;
        clone.step(&orders, rows)?;
    }
    let cycle = clone.begin_cycle()?;
    let projected_fill = cycle.fill;
    clone.place_order(&hold)?;

    let w2 = (t + 2 * n).min(limit);
    let mut aggregate = vec![0.0; products];
    for tau in w1..w2 {
        let rows = &sales.values[tau];
        let orders = store_policy.desired_orders(&clone, rows, rows, &mut rng)?;
        let out = clone.step(&orders, rows)?;
        for (j, store) in spec.stores.iter().enumerate() {
            for (i, agg) in aggregate.iter_mut().enumerate() {
                *agg += store.warehouse_share * out.requested[j][i];
            }
        }
    }
    for agg in &mut aggregate {
        *agg = agg.min(1.0);
    }
    let predicted_waste = clone.warehouse_oldest();
    Ok(RolloutEstimates {
        projected_fill,
        aggregate_demand: aggregate,
        predicted_waste,
    })
}

/// Everything recorded at one warehouse decision.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub period: usize,
    pub decision_index: usize,
    /// Fill after aging and the vendor delivery.
    pub fill: Vec<f64>,
    /// Stock discarded by the aging event at this boundary.
    pub waste: Vec<f64>,
    pub flags: Vec<bool>,
    /// Ordered quantity per product (warehouse units).
    pub amounts: Vec<f64>,
    pub order_costs: Vec<f64>,
    /// Per-product observations when a learned agent decided.
    pub obs: Option<Vec<[f64; 5]>>,
}

/// Full record of one simulated episode.
#[derive(Debug, Clone)]
pub struct EpisodeData {
    pub outcomes: Vec<PeriodOutcome>,
    /// Store reward components, indexed `[period][store]`.
    pub store_rows: Vec<Vec<StoreBreakdown>>,
    pub boundaries: Vec<BoundaryData>,
    /// One row per decision whose refused-replenishment window completed
    /// inside the episode; the final decision of an episode has none.
    pub warehouse_rows: Vec<WarehouseBreakdown>,
}

impl EpisodeData {
    /// Mean store reward per store over periods `from..end`.
    pub fn mean_store_rewards(&self, from: usize) -> Vec<f64> {
        let stores = self.store_rows.first().map_or(0, |r| r.len());
        let mut sums = vec![0.0; stores];
        let mut count = 0usize;
        for row in self.store_rows.iter().skip(from) {
            for (j, sb) in row.iter().enumerate() {
                sums[j] += sb.mean_reward;
            }
            count += 1;
        }
        if count > 0 {
            for s in &mut sums {
                *s /= count as f64;
            }
        }
        sums
    }

    /// Mean warehouse reward over scored decisions at periods `>= from`.
    pub fn mean_warehouse_reward(&self, from: usize) -> Option<f64> {
        let scored: Vec<f64> = self
            .warehouse_rows
            .iter()
            .filter(|r| r.period >= from)
            .map(|r| r.mean_reward)
            .collect();
        if scored.is_empty() {
            None
        } else {
            Some(scored.iter().sum::<f64>() / scored.len() as f64)
        }
    }
}

/// Simulate `end` periods under the given policies. A `None` warehouse
/// policy runs the infinite-warehouse variant used for store-only work.
/// Decisions condition on rollout estimates built from the forecast, or
/// from realized demand for clairvoyant policies.
pub fn run_episode(
    spec: &InstanceSpec,
    demand: &Trace,
    forecast: &Trace,
    store_policy: &StorePolicy,
    warehouse_policy: Option<&WarehousePolicy>,
    end: usize,
    seed: u64,
) -> Result<EpisodeData> {
    if end > demand.periods || end > forecast.periods {
        return Err(CoreError::InvalidArgument(format!(
            "episode length {end} exceeds trace length {}",
            demand.periods.min(forecast.periods)
        )));
    }
    if warehouse_policy.is_some() && end % spec.cycle != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "episode length {end} must be a whole number of cycles"
        )));
    }
    let products = spec.num_products();
    let mut env = match warehouse_policy {
        Some(_) => Env::new(spec),
        None => Env::new_infinite(spec),
    };
    let mut rng = stream(seed, EPISODE_SALT, 0, 0);
    let mut outcomes = Vec::with_capacity(end);
    let mut store_rows = Vec::with_capacity(end);
    let mut boundaries = Vec::new();

    for t in 0..end {
        if let Some(wp) = warehouse_policy {
            if t % spec.cycle == 0 {
                let cycle = env.begin_cycle()?;
                let estimates = if wp.needs_estimates() {
                    let trace = if wp.clairvoyant_estimates() { demand } else { forecast };
                    Some(rollout_estimates(&env, store_policy, trace)?)
                } else {
                    None
                };
                let k = t / spec.cycle;
                let (flags, obs) = wp.decide(&cycle.fill, estimates.as_ref(), k, &mut rng)?;
                let order = env.place_order(&flags)?;
                boundaries.push(BoundaryData {
                    period: t,
                    decision_index: k,
                    fill: cycle.fill,
                    waste: cycle.waste,
                    flags,
                    amounts: order.amounts,
                    order_costs: order.costs,
                    obs,
                });
            }
        }
        let orders =
            store_policy.desired_orders(&env, &forecast.values[t], &demand.values[t], &mut rng)?;
        let out = env.step(&orders, &demand.values[t])?;
        let rows: Result<Vec<StoreBreakdown>> = (0..spec.num_stores())
            .map(|j| store_breakdown(&out, j, &spec.weights))
            .collect();
        store_rows.push(rows?);
        outcomes.push(out);
    }

    let mut warehouse_rows = Vec::new();
    for b in &boundaries {
        let w_start = b.period + spec.cycle;
        let w_end = b.period + 2 * spec.cycle;
        if w_end > end {
            continue;
        }
        let mut refused = vec![0.0; products];
        for out in &outcomes[w_start..w_end] {
            for (i, r) in refused.iter_mut().enumerate() {
                *r += out.refused[i];
            }
        }
        let share: Vec<f64> = (0..products)
            .map(|i| {
                store_rows[b.period]
                    .iter()
                    .map(|sb| sb.item_rewards[i])
                    .sum()
            })
            .collect();
        warehouse_rows.push(warehouse_breakdown(
            b.period,
            &b.flags,
            &b.amounts,
            &b.waste,
            &refused,
            &share,
            &spec.products,
            &spec.weights,
        ));
    }

    Ok(EpisodeData {
        outcomes,
        store_rows,
        boundaries,
        warehouse_rows,
    })
}

/// Experience tuples for the warehouse agent from one episode: one per
/// (scored decision, product), bootstrapping from the following decision's
/// observation. The last scored decision is terminal.
pub fn warehouse_transitions(data: &EpisodeData) -> Result<Vec<Transition>> {
    let rows = &data.warehouse_rows;
    let mut transitions = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let obs = data.boundaries[k].obs.as_ref().ok_or_else(|| {
            CoreError::InvalidArgument(
                "episode was not decided by a learned warehouse agent".to_string(),
            )
        })?;
        let next = data.boundaries[k + 1].obs.as_ref().expect("same policy");
        let terminal = k == rows.len() - 1;
        for (i, reward) in row.item_rewards.iter().enumerate() {
            transitions.push(Transition {
                obs: obs[i],
                action: usize::from(data.boundaries[k].flags[i]),
                reward: *reward,
                next_obs: next[i],
                terminal,
                product: i,
                period: row.period,
                guide: 0,
            });
        }
    }
    Ok(transitions)
}

/// One logged metric row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub agent: String,
    /// Metric values matching [`TrainLog::columns`]; the first is always
    /// the episode mean reward.
    pub values: Vec<f64>,
}

/// Per-episode training metrics for every agent in a stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub columns: Vec<String>,
    pub rows: Vec<TrainLogRow>,
    /// Episode index at which each agent converged, if it did.
    pub converged_at: Vec<(String, Option<usize>)>,
}

impl TrainLog {
    /// Episode mean rewards for one agent, in episode order.
    pub fn episode_rewards(&self, agent: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.agent == agent)
            .map(|r| r.values[0])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (agent, at) in &self.converged_at {
            match at {
                Some(e) => out.push_str(&format!("# converged {agent}={e}\n")),
                None => out.push_str(&format!("# converged {agent}=never\n")),
            }
        }
        out.push_str("episode,agent");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.episode, row.agent));
            for v in &row.values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| CoreError::io(path, e))
    }
}

/// Result of the store training stage.
pub struct StoreTrainOutcome {
    pub agents: Vec<StoreAgent>,
    pub log: TrainLog,
}

/// Mean of the episodes played since `start`: the span one weight version
/// was responsible for. Scoring versions by their own span (instead of a
/// trailing window) keeps a snapshot's score attributable to the exact
/// weights saved; a long window lags the weights by up to its length, and
/// a crash inside the window otherwise gets snapshotted at peak score.
fn span_mean(history: &[f64], start: usize) -> Option<f64> {
    if start >= history.len() {
        return None;
    }
    let tail = &history[start..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Train one agent per store against an infinite warehouse. Each store
/// learns from its own transitions only; convergence is tracked per store
/// and converged stores stop acting and updating. Hitting the episode
/// budget without convergence is reported in the log, not an error.
///
/// Policy-gradient training on the shared-truck reward oscillates, so the
/// returned weights are each store's snapshot from the episode whose
/// trailing-window mean reward was highest, not the final weights.
pub fn train_stores(
    spec: &InstanceSpec,
    demand: &Trace,
    forecast: &Trace,
    config: &TrainConfig,
) -> Result<StoreTrainOutcome> {
    config.validate()?;
    let stores = spec.num_stores();
    let products = spec.num_products();
    let end = spec.train_periods;
    let scale = FeatureScale::from_instance(spec);
    let mut agents: Vec<StoreAgent> = (0..stores)
        .map(|j| {
            let mut rng = stream(config.seed, AGENT_SALT, j, 0);
            StoreAgent::new(j, scale.clone(), config.learning_rate, &mut rng)
        })
        .collect();
    let mut buffers: Vec<Vec<Transition>> = vec![Vec::new(); stores];
    let mut histories: Vec<Vec<f64>> = vec![Vec::new(); stores];
    let mut converged: Vec<Option<usize>> = vec![None; stores];
    let mut best: Vec<Option<(f64, StoreAgent)>> = vec![None; stores];
    let mut rounds = vec![0usize; stores];
    let mut span_start = vec![0usize; stores];
    let mut rows = Vec::new();

    for episode in 0..config.max_episodes {
        let mode = config.selection_mode(episode);
        let mut rng = stream(config.seed, ACTION_SALT, episode, 0);
        let mut env = Env::new_infinite(spec);
        // Pending experience per store: observations, chosen levels,
        // rewards, and heuristic guide levels from the previous period,
        // completed once the next observation exists.
        let mut pending: Vec<Option<(Vec<[f64; 5]>, Vec<usize>, Vec<f64>, Vec<usize>)>> =
            vec![None; stores];
        let mut sums = vec![[0.0; 5]; stores];

        for t in 0..end {
            let mut orders = vec![vec![0.0; products]; stores];
            let mut observed: Vec<Option<(Vec<[f64; 5]>, Vec<usize>, Vec<usize>)>> =
                vec![None; stores];
            for j in 0..stores {
                if converged[j].is_some() {
                    continue;
                }
                let obs_all = store_observe_all(&env, j, &forecast.values[t][j], &scale);
                if let Some((prev_obs, prev_act, prev_rew, prev_guide)) = pending[j].take() {
                    for i in 0..products {
                        buffers[j].push(Transition {
                            obs: prev_obs[i],
                            action: prev_act[i],
                            reward: prev_rew[i],
                            next_obs: obs_all[i],
                            terminal: false,
                            product: i,
                            period: t - 1,
                            guide: prev_guide[i],
                        });
                    }
                }
                let levels: Vec<f64> =
                    (0..products).map(|i| env.store_level(j, i)).collect();
                let desired = heuristic_store_order(
                    &levels,
                    &forecast.values[t][j],
                    crate::baselines::DEFAULT_TARGET,
                );
                let guides: Vec<usize> = (0..products)
                    .map(|i| guide_level(levels[i], desired[i]))
                    .collect();
                let mut acts = Vec::with_capacity(products);
                for (i, obs) in obs_all.iter().enumerate() {
                    let probs = agents[j].policy(obs)?;
                    let idx = crate::agents::select_action(&probs, mode, &mut rng)?;
                    orders[j][i] = crate::agents::action_to_quantity(idx, obs[0]);
                    acts.push(idx);
                }
                observed[j] = Some((obs_all, acts, guides));
            }
            let out = env.step(&orders, &demand.values[t])?;
            for j in 0..stores {
                let Some((obs_all, acts, guides)) = observed[j].take() else {
                    continue;
                };
                let sb = store_breakdown(&out, j, &spec.weights)?;
                sums[j][0] += sb.mean_reward;
                sums[j][1] += sb.out_of_stock_fraction;
                sums[j][2] += sb.waste_mean;
                sums[j][3] += sb.spread;
                sums[j][4] += sb.capacity_penalty;
                pending[j] = Some((obs_all, acts, sb.item_rewards, guides));
            }
        }
        for j in 0..stores {
            let Some((prev_obs, prev_act, prev_rew, prev_guide)) = pending[j].take() else {
                continue;
            };
            // Terminal observation: the state after the last step, seen
            // through the next forecast row.
            let row = forecast.values[end.min(forecast.periods - 1)][j].clone();
            let final_obs = store_observe_all(&env, j, &row, &scale);
            for i in 0..products {
                buffers[j].push(Transition {
                    obs: prev_obs[i],
                    action: prev_act[i],
                    reward: prev_rew[i],
                    next_obs: final_obs[i],
                    terminal: true,
                    product: i,
                    period: end - 1,
                    guide: prev_guide[i],
                });
            }
            let mean = sums[j][0] / end as f64;
            histories[j].push(mean);
            rows.push(TrainLogRow {
                episode,
                agent: format!("store{j}"),
                values: vec![
                    mean,
                    sums[j][1] / end as f64,
                    sums[j][2] / end as f64,
                    sums[j][3] / end as f64,
                    sums[j][4] / end as f64,
                ],
            });
            if convergence_check(&histories[j], config.window, config.threshold) {
                converged[j] = Some(episode);
                buffers[j].clear();
            }
        }
        if (episode + 1) % config.update_every == 0 {
            for j in 0..stores {
                if converged[j].is_some() || buffers[j].is_empty() {
                    continue;
                }
                // Score the outgoing weights on the span they played
                // before replacing them.
                if let Some(sm) = span_mean(&histories[j], span_start[j]) {
                    if best[j].as_ref().is_none_or(|(b, _)| sm > *b) {
                        best[j] = Some((sm, agents[j].clone()));
                    }
                }
                let mut rng = stream(config.seed, BATCH_SALT, episode, j);
                let sample = config.update_every * config.batch_size;
                let batch = sample_batch(&buffers[j], sample, &mut rng);
                if rounds[j] < CRITIC_WARMUP_ROUNDS {
                    train_store_guided(
                        &mut agents[j],
                        &batch,
                        spec.weights.discount,
                        config.epochs,
                        config.batch_size,
                    )?;
                } else {
                    train_store_batch(
                        &mut agents[j],
                        &batch,
                        spec.weights.discount,
                        config.epochs,
                        config.batch_size,
                    )?;
                }
                rounds[j] += 1;
                span_start[j] = episode + 1;
                buffers[j].clear();
            }
        }
        if converged.iter().all(|c| c.is_some()) {
            break;
        }
    }
    for j in 0..stores {
        // The last weights version has no update boundary; score it on
        // whatever span it played.
        if let Some(sm) = span_mean(&histories[j], span_start[j]) {
            if best[j].as_ref().is_none_or(|(b, _)| sm > *b) {
                best[j] = Some((sm, agents[j].clone()));
            }
        }
    }
    for (j, slot) in best.into_iter().enumerate() {
        if let Some((_, snapshot)) = slot {
            agents[j] = snapshot;
        }
    }

    let log = TrainLog {
        columns: vec![
            "mean_reward".to_string(),
            "out_of_stock".to_string(),
            "waste".to_string(),
            "spread".to_string(),
            "capacity_penalty".to_string(),
        ],
        rows,
        converged_at: converged
            .iter()
            .enumerate()
            .map(|(j, c)| (format!("store{j}"), *c))
            .collect(),
    };
    Ok(StoreTrainOutcome { agents, log })
}

/// Result of the warehouse training stage.
pub struct WarehouseTrainOutcome {
    pub agent: WarehouseAgent,
    pub log: TrainLog,
}

/// Train the warehouse agent on the coupled environment while the store
/// agents act greedily with frozen weights. As with the stores, the
/// returned weights come from the best trailing-window episode.
pub fn train_warehouse(
    spec: &InstanceSpec,
    demand: &Trace,
    forecast: &Trace,
    store_agents: &[StoreAgent],
    config: &TrainConfig,
) -> Result<WarehouseTrainOutcome> {
    config.validate()?;
    let store_policy = StorePolicy::agents(store_agents.to_vec());
    let mut wh_rng = stream(config.seed, AGENT_SALT, usize::MAX, 0);
    let mut policy = WarehousePolicy::Agent {
        agent: WarehouseAgent::new(config.learning_rate, &mut wh_rng),
        mode: SelectionMode::Multinomial,
    };
    let mut buffer: Vec<Transition> = Vec::new();
    let mut history = Vec::new();
    let mut converged = None;
    let mut best: Option<(f64, WarehouseAgent)> = None;
    let mut rounds = 0usize;
    let mut span_start = 0usize;
    let mut rows = Vec::new();

    for episode in 0..config.max_episodes {
        if let WarehousePolicy::Agent { mode, .. } = &mut policy {
            *mode = config.selection_mode(episode);
        }
        let episode_seed = config.seed ^ EPISODE_SALT.wrapping_mul(episode as u64 + 1);
        let data = run_episode(
            spec,
            demand,
            forecast,
            &store_policy,
            Some(&policy),
            spec.train_periods,
            episode_seed,
        )?;
        buffer.extend(warehouse_transitions(&data)?);

        let scored = &data.warehouse_rows;
        let count = scored.len().max(1) as f64;
        let mean = scored.iter().map(|r| r.mean_reward).sum::<f64>() / count;
        let cost = scored.iter().map(|r| r.cost).sum::<f64>() / count;
        let refused = scored
            .iter()
            .map(|r| r.refused.iter().sum::<f64>() / r.refused.len() as f64)
            .sum::<f64>()
            / count;
        let share = scored
            .iter()
            .map(|r| r.store_share.iter().sum::<f64>() / r.store_share.len() as f64)
            .sum::<f64>()
            / count;
        history.push(mean);
        rows.push(TrainLogRow {
            episode,
            agent: "warehouse".to_string(),
            values: vec![mean, cost, refused, share],
        });
        if (episode + 1) % config.update_every == 0 && !buffer.is_empty() {
            if let WarehousePolicy::Agent { agent, .. } = &mut policy {
                // Score the outgoing weights on the span they played
                // before replacing them.
                if let Some(sm) = span_mean(&history, span_start) {
                    if best.as_ref().is_none_or(|(b, _)| sm > *b) {
                        best = Some((sm, agent.clone()));
                    }
                }
                // The warehouse sees far fewer decisions per episode than
                // the stores see periods, so it fits a bootstrap resample
                // of its whole buffer each round.
                let mut rng = stream(config.seed, BATCH_SALT, episode, usize::MAX);
                let batch = sample_batch(&buffer, buffer.len(), &mut rng);
                if rounds < CRITIC_WARMUP_ROUNDS {
                    train_warehouse_critic(
                        agent,
                        &batch,
                        spec.weights.discount,
                        config.epochs,
                        config.batch_size,
                    )?;
                } else {
                    train_warehouse_batch(
                        agent,
                        &batch,
                        spec.weights.discount,
                        config.epochs,
                        config.batch_size,
                    )?;
                }
                rounds += 1;
                span_start = episode + 1;
            }
            buffer.clear();
        }
        if convergence_check(&history, config.window, config.threshold) {
            converged = Some(episode);
            break;
        }
    }

    if let WarehousePolicy::Agent { agent, .. } = &policy {
        // The last weights version has no update boundary; score it on
        // whatever span it played.
        if let Some(sm) = span_mean(&history, span_start) {
            if best.as_ref().is_none_or(|(b, _)| sm > *b) {
                best = Some((sm, agent.clone()));
            }
        }
    }
    let agent = match best {
        Some((_, snapshot)) => snapshot,
        None => match policy {
            WarehousePolicy::Agent { agent, .. } => agent,
            _ => unreachable!(),
        },
    };
    let log = TrainLog {
        columns: vec![
            "mean_reward".to_string(),
            "cost".to_string(),
            "refused".to_string(),
            "store_share".to_string(),
        ],
        rows,
        converged_at: vec![("warehouse".to_string(), converged)],
    };
    Ok(WarehouseTrainOutcome { agent, log })
}

/// Uniform sample with replacement across every product's transitions.
fn sample_batch(buffer: &[Transition], size: usize, rng: &mut ChaCha12Rng) -> Vec<Transition> {
    use rand::Rng;
    (0..size)
        .map(|_| buffer[rng.gen_range(0..buffer.len())].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::FixedPolicy;
    use crate::demand::{generate_demand, generate_forecast};

    fn tiny() -> (InstanceSpec, Trace, Trace) {
        let spec = InstanceSpec::synthetic(3, 2, 32, 16, 11);
        let demand = generate_demand(&spec, spec.seed);
        let forecast = generate_forecast(&demand, 0.8, spec.seed).unwrap();
        (spec, demand, forecast)
    }

    #[test]
    fn convergence_requires_full_window_and_strict_variance() {
        assert!(!convergence_check(&[0.5; 49], 50, 1e-4));
        assert!(convergence_check(&[0.5; 50], 50, 1e-4));
        let alternating: Vec<f64> = (0..200).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(!convergence_check(&alternating, 50, 1e-4));
        // Variance exactly at the threshold does not converge.
        let edge: Vec<f64> = (0..50).map(|k| if k % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert!(!convergence_check(&edge, 50, 1e-4));
        assert!(convergence_check(&edge, 50, 1.0001e-4));
    }

    #[test]
    fn threshold_crossing_reports_first_episode() {
        assert_eq!(episodes_to_threshold(&[0.1, 0.2, 0.5, 0.4], 0.4), Some(2));
        assert_eq!(episodes_to_threshold(&[0.1, 0.2], 0.9), None);
    }

    #[test]
    fn rollout_leaves_live_environment_untouched() {
        let (spec, demand, forecast) = tiny();
        let _ = demand;
        let mut env = Env::new(&spec);
        env.begin_cycle().unwrap();
        let before = env.state_fingerprint();
        let policy = StorePolicy::heuristic(0.25);
        rollout_estimates(&env, &policy, &forecast).unwrap();
        assert_eq!(env.state_fingerprint(), before);
    }

    #[test]
    fn rollout_with_zero_forecast_projects_current_fill() {
        let mut spec = InstanceSpec::synthetic(2, 2, 32, 16, 3);
        for p in &mut spec.products {
            p.shelf_life = 40;
        }
        let zero = Trace {
            periods: spec.horizon,
            stores: 2,
            products: 2,
            train_periods: spec.train_periods,
            achieved_r: None,
            values: vec![vec![vec![0.0; 2]; 2]; spec.horizon],
        };
        let mut env = Env::new(&spec);
        let cycle = env.begin_cycle().unwrap();
        let est = rollout_estimates(&env, &StorePolicy::heuristic(0.25), &zero).unwrap();
        assert_eq!(est.projected_fill, cycle.fill);
        assert_eq!(est.aggregate_demand, vec![0.0; 2]);
        assert_eq!(est.predicted_waste, vec![0.0; 2]);
    }

    #[test]
    fn episode_counts_boundaries_and_scored_decisions() {
        let (spec, demand, forecast) = tiny();
        let data = run_episode(
            &spec,
            &demand,
            &forecast,
            &StorePolicy::heuristic(0.25),
            Some(&WarehousePolicy::heuristic()),
            spec.train_periods,
            1,
        )
        .unwrap();
        let k = spec.train_periods / spec.cycle;
        assert_eq!(data.boundaries.len(), k);
        assert_eq!(data.warehouse_rows.len(), k - 1);
        assert_eq!(data.outcomes.len(), spec.train_periods);
        for (idx, row) in data.warehouse_rows.iter().enumerate() {
            assert_eq!(row.period, idx * spec.cycle);
        }
    }

    #[test]
    fn episodes_are_deterministic_in_the_seed() {
        let (spec, demand, forecast) = tiny();
        let run = |seed| {
            run_episode(
                &spec,
                &demand,
                &forecast,
                &StorePolicy::heuristic(0.25),
                Some(&WarehousePolicy::fixed(FixedPolicy::Random)),
                spec.train_periods,
                seed,
            )
            .unwrap()
            .mean_store_rewards(0)
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn transitions_require_agent_observations() {
        let (spec, demand, forecast) = tiny();
        let data = run_episode(
            &spec,
            &demand,
            &forecast,
            &StorePolicy::heuristic(0.25),
            Some(&WarehousePolicy::heuristic()),
            spec.train_periods,
            1,
        )
        .unwrap();
        assert!(warehouse_transitions(&data).is_err());
    }

    #[test]
    fn rigged_agent_reproduces_fixed_policy_rewards() {
        let (spec, demand, forecast) = tiny();
        let store_policy = StorePolicy::heuristic(0.25);
        let fixed = run_episode(
            &spec,
            &demand,
            &forecast,
            &store_policy,
            Some(&WarehousePolicy::fixed(FixedPolicy::AllOnes)),
            spec.train_periods,
            2,
        )
        .unwrap();
        let mut rng = stream(0, AGENT_SALT, 0, 0);
        let mut agent = WarehouseAgent::new(1e-3, &mut rng);
        // Force "order" to win every argmax.
        let last = agent.actor.biases.len() - 1;
        agent.actor.biases[last] = vec![-50.0, 50.0];
        let forced = run_episode(
            &spec,
            &demand,
            &forecast,
            &store_policy,
            Some(&WarehousePolicy::agent(agent)),
            spec.train_periods,
            2,
        )
        .unwrap();
        assert_eq!(fixed.warehouse_rows.len(), forced.warehouse_rows.len());
        for (a, b) in fixed.warehouse_rows.iter().zip(&forced.warehouse_rows) {
            assert_eq!(a.item_rewards, b.item_rewards);
        }
    }

    #[test]
    fn store_training_runs_and_is_deterministic() {
        let (spec, demand, forecast) = tiny();
        let config = TrainConfig {
            max_episodes: 6,
            update_every: 2,
            batch_size: 16,
            epochs: 2,
            window: 4,
            threshold: 1e-4,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_stores(&spec, &demand, &forecast, &config).unwrap();
        let b = train_stores(&spec, &demand, &forecast, &config).unwrap();
        assert_eq!(a.log.episode_rewards("store0"), b.log.episode_rewards("store0"));
        assert_eq!(a.agents.len(), 2);
        assert_eq!(a.log.episode_rewards("store1").len(), 6);
        let csv = a.log.to_csv();
        assert!(csv.starts_with("# converged"));
        assert!(csv.contains("episode,agent,mean_reward"));
    }

    #[test]
    fn warehouse_training_runs_and_leaves_store_agents_frozen() {
        let (spec, demand, forecast) = tiny();
        let config = TrainConfig {
            max_episodes: 4,
            update_every: 2,
            batch_size: 16,
            epochs: 2,
            window: 3,
            threshold: 1e-4,
            seed: 9,
            ..TrainConfig::default()
        };
        let stores = train_stores(&spec, &demand, &forecast, &config).unwrap();
        let before: Vec<String> = stores
            .agents
            .iter()
            .map(|a| serde_json::to_string(&a.actor).unwrap())
            .collect();
        let out = train_warehouse(&spec, &demand, &forecast, &stores.agents, &config).unwrap();
        let after: Vec<String> = stores
            .agents
            .iter()
            .map(|a| serde_json::to_string(&a.actor).unwrap())
            .collect();
        assert_eq!(before, after);
        let count = out.log.episode_rewards("warehouse").len();
        assert!((config.window..=config.max_episodes).contains(&count));
    }
}
