//! Policy dispatch shared by training, evaluation, and rollouts: one enum
//! per echelon covering learned agents, heuristics, and fixed references.

use rand_chacha::ChaCha12Rng;

use crate::agents::{
    action_to_quantity, select_action, store_observe_all, warehouse_observe, SelectionMode,
    StoreAgent, WarehouseAgent,
};
use crate::baselines::{
    fixed_warehouse_flags, heuristic_store_order, heuristic_warehouse_flags, FixedPolicy,
};
use crate::error::{CoreError, Result};
use crate::sim::Env;

/// Forward-looking per-product quantities a warehouse decision conditions
/// on: fill one cycle out, aggregate store demand and spoilage over the
/// cycle after, all in warehouse units.
#[derive(Debug, Clone)]
pub struct RolloutEstimates {
    pub projected_fill: Vec<f64>,
    pub aggregate_demand: Vec<f64>,
    pub predicted_waste: Vec<f64>,
}

/// How stores order each period.
pub enum StorePolicy {
    /// Learned agents, one per store, drawing from the actor distribution.
    Agents {
        agents: Vec<StoreAgent>,
        mode: SelectionMode,
    },
    /// Order-up-to rule on the sales forecast, or on realized demand when
    /// clairvoyant.
    Heuristic { target: f64, clairvoyant: bool },
}

impl StorePolicy {
    pub fn agents(agents: Vec<StoreAgent>) -> Self {
        StorePolicy::Agents {
            agents,
            mode: SelectionMode::Argmax,
        }
    }

    pub fn heuristic(target: f64) -> Self {
        StorePolicy::Heuristic {
            target,
            clairvoyant: false,
        }
    }

    pub fn clairvoyant(target: f64) -> Self {
        StorePolicy::Heuristic {
            target,
            clairvoyant: true,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StorePolicy::Agents { .. } => "rl",
            StorePolicy::Heuristic {
                clairvoyant: false, ..
            } => "heuristic",
            StorePolicy::Heuristic {
                clairvoyant: true, ..
            } => "clairvoyant",
        }
    }

    /// Desired order quantities for every store this period. Rows are
    /// indexed `[store][product]`; the clairvoyant heuristic reads the
    /// demand row, everything else the forecast row.
    pub fn desired_orders(
        &self,
        env: &Env,
        forecast_row: &[Vec<f64>],
        demand_row: &[Vec<f64>],
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<Vec<f64>>> {
        let stores = env.spec().num_stores();
        match self {
            StorePolicy::Agents { agents, mode } => {
                if agents.len() != stores {
                    return Err(CoreError::Dimension {
                        expected: stores,
                        got: agents.len(),
                        context: "one store agent per store".to_string(),
                    });
                }
                let mut orders = Vec::with_capacity(stores);
                for (j, agent) in agents.iter().enumerate() {
                    let obs_all = store_observe_all(env, j, &forecast_row[j], &agent.scale);
                    let mut row = Vec::with_capacity(obs_all.len());
                    for obs in &obs_all {
                        let probs = agent.policy(obs)?;
                        let idx = select_action(&probs, *mode, rng)?;
                        row.push(action_to_quantity(idx, obs[0]));
                    }
                    orders.push(row);
                }
                Ok(orders)
            }
            StorePolicy::Heuristic {
                target,
                clairvoyant,
            } => {
                let rows = if *clairvoyant { demand_row } else { forecast_row };
                let levels = env.store_levels();
                Ok((0..stores)
                    .map(|j| heuristic_store_order(&levels[j], &rows[j], *target))
                    .collect())
            }
        }
    }
}

/// How the warehouse orders at each cycle boundary.
pub enum WarehousePolicy {
    /// Learned agent shared across products.
    Agent {
        agent: WarehouseAgent,
        mode: SelectionMode,
    },
    /// Order when projected fill falls strictly below forecast aggregate
    /// demand; clairvoyant variants build estimates from realized demand.
    Heuristic { clairvoyant: bool },
    /// Fixed reference policy.
    Fixed { kind: FixedPolicy },
}

impl WarehousePolicy {
    pub fn agent(agent: WarehouseAgent) -> Self {
        WarehousePolicy::Agent {
            agent,
            mode: SelectionMode::Argmax,
        }
    }

    pub fn heuristic() -> Self {
        WarehousePolicy::Heuristic { clairvoyant: false }
    }

    pub fn clairvoyant() -> Self {
        WarehousePolicy::Heuristic { clairvoyant: true }
    }

    pub fn fixed(kind: FixedPolicy) -> Self {
        WarehousePolicy::Fixed { kind }
    }

    pub fn label(&self) -> &'static str {
        match self {
            WarehousePolicy::Agent { .. } => "rl",
            WarehousePolicy::Heuristic { clairvoyant: false } => "heuristic",
            WarehousePolicy::Heuristic { clairvoyant: true } => "clairvoyant",
            WarehousePolicy::Fixed { kind } => match kind {
                FixedPolicy::AllOnes => "all_ones",
                FixedPolicy::AllZeros => "all_zeros",
                FixedPolicy::Alternate => "alternate",
                FixedPolicy::Random => "random",
            },
        }
    }

    /// Whether decisions condition on rollout estimates.
    pub fn needs_estimates(&self) -> bool {
        !matches!(self, WarehousePolicy::Fixed { .. })
    }

    /// Whether the estimates should be built from realized demand instead
    /// of the forecast.
    pub fn clairvoyant_estimates(&self) -> bool {
        matches!(self, WarehousePolicy::Heuristic { clairvoyant: true })
    }

    /// Order flags for one decision. Returns the per-product observations
    /// alongside when a learned agent decided, so callers can record
    /// transitions.
    pub fn decide(
        &self,
        fill: &[f64],
        estimates: Option<&RolloutEstimates>,
        decision_index: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Vec<bool>, Option<Vec<[f64; 5]>>)> {
        if self.needs_estimates() && estimates.is_none() {
            return Err(CoreError::InvalidArgument(
                "warehouse policy requires rollout estimates".to_string(),
            ));
        }
        match self {
            WarehousePolicy::Agent { agent, mode } => {
                let est = estimates.expect("checked above");
                let mut flags = Vec::with_capacity(fill.len());
                let mut obs_rows = Vec::with_capacity(fill.len());
                for i in 0..fill.len() {
                    let obs = warehouse_observe(
                        fill[i],
                        est.projected_fill[i],
                        est.aggregate_demand[i],
                        est.predicted_waste[i],
                    );
                    let probs = agent.policy(&obs)?;
                    let idx = select_action(&probs, *mode, rng)?;
                    flags.push(idx == 1);
                    obs_rows.push(obs);
                }
                Ok((flags, Some(obs_rows)))
            }
            WarehousePolicy::Heuristic { .. } => {
                let est = estimates.expect("checked above");
                Ok((
                    heuristic_warehouse_flags(&est.projected_fill, &est.aggregate_demand),
                    None,
                ))
            }
            WarehousePolicy::Fixed { kind } => Ok((
                fixed_warehouse_flags(*kind, fill.len(), decision_index, rng),
                None,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::FeatureScale;
    use crate::instance::InstanceSpec;
    use rand::SeedableRng;

    fn tiny_spec() -> InstanceSpec {
        InstanceSpec::synthetic(2, 2, 16, 8, 7)
    }

    #[test]
    fn clairvoyant_heuristic_matches_plain_on_equal_rows() {
        let spec = tiny_spec();
        let env = Env::new_infinite(&spec);
        let rows = vec![vec![0.02, 0.03], vec![0.01, 0.04]];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let plain = StorePolicy::heuristic(0.25)
            .desired_orders(&env, &rows, &rows, &mut rng)
            .unwrap();
        let clair = StorePolicy::clairvoyant(0.25)
            .desired_orders(&env, &rows, &rows, &mut rng)
            .unwrap();
        assert_eq!(plain, clair);
    }

    #[test]
    fn clairvoyant_heuristic_reads_demand_row() {
        let spec = tiny_spec();
        let env = Env::new_infinite(&spec);
        let forecast = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let demand = vec![vec![0.4, 0.4], vec![0.4, 0.4]];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let clair = StorePolicy::clairvoyant(0.25)
            .desired_orders(&env, &forecast, &demand, &mut rng)
            .unwrap();
        let plain = StorePolicy::heuristic(0.25)
            .desired_orders(&env, &forecast, &demand, &mut rng)
            .unwrap();
        assert!(clair[0][0] > plain[0][0]);
    }

    #[test]
    fn agent_policy_with_wrong_count_is_rejected() {
        let spec = tiny_spec();
        let env = Env::new_infinite(&spec);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let scale = FeatureScale::from_instance(&spec);
        let agents = vec![StoreAgent::new(0, scale, 1e-3, &mut rng)];
        let rows = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let policy = StorePolicy::agents(agents);
        assert!(policy
            .desired_orders(&env, &rows, &rows, &mut rng)
            .is_err());
    }

    #[test]
    fn fixed_policies_skip_estimates_and_learned_ones_require_them() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let fixed = WarehousePolicy::fixed(FixedPolicy::AllOnes);
        let (flags, obs) = fixed.decide(&[0.5, 0.5], None, 0, &mut rng).unwrap();
        assert_eq!(flags, vec![true, true]);
        assert!(obs.is_none());
        assert!(WarehousePolicy::heuristic()
            .decide(&[0.5], None, 0, &mut rng)
            .is_err());
    }

    #[test]
    fn heuristic_warehouse_decides_from_estimates() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let est = RolloutEstimates {
            projected_fill: vec![0.3, 0.4],
            aggregate_demand: vec![0.4, 0.4],
            predicted_waste: vec![0.0, 0.0],
        };
        let (flags, _) = WarehousePolicy::heuristic()
            .decide(&[0.9, 0.9], Some(&est), 0, &mut rng)
            .unwrap();
        assert_eq!(flags, vec![true, false]);
    }

    #[test]
    fn agent_warehouse_reports_observations() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let agent = WarehouseAgent::new(1e-3, &mut rng);
        let policy = WarehousePolicy::agent(agent);
        let est = RolloutEstimates {
            projected_fill: vec![0.2],
            aggregate_demand: vec![0.5],
            predicted_waste: vec![0.1],
        };
        let (flags, obs) = policy.decide(&[0.0], Some(&est), 0, &mut rng).unwrap();
        assert_eq!(flags.len(), 1);
        let obs = obs.unwrap();
        assert_eq!(obs[0], [0.0, 0.2, 0.5, 0.1, 1.0]);
    }
}
