//! Evaluation protocol: scored test-split episodes, truck-capacity sweeps,
//! policy heatmaps, and zero-shot transfer to grown instances.

use serde::{Deserialize, Serialize};

use crate::agents::{StoreAgent, WarehouseAgent, ACTION_LEVELS};
use crate::demand::{generate_demand, generate_forecast, Trace};
use crate::error::{CoreError, Result};
use crate::instance::InstanceSpec;
use crate::policy::{StorePolicy, WarehousePolicy};
use crate::rewards::system_return;
use crate::trainer::run_episode;

/// Mean reward components for one store over the scored periods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreSummary {
    pub store: usize,
    pub mean_reward: f64,
    pub out_of_stock: f64,
    pub waste: f64,
    pub spread: f64,
    pub capacity_penalty: f64,
}

/// Mean reward components over the scored warehouse decisions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarehouseSummary {
    pub mean_reward: f64,
    pub cost: f64,
    pub refused: f64,
    pub store_share: f64,
    pub decisions: usize,
}

/// Scored evaluation of one policy pair on one instance. Rewards are means
/// over the test split only; metadata pins the instance and randomness so
/// reruns reproduce the report byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub store_policy: String,
    pub warehouse_policy: Option<String>,
    pub spec_hash: String,
    pub seed: u64,
    pub test_start: usize,
    pub horizon: usize,
    pub stores: Vec<StoreSummary>,
    pub warehouse: Option<WarehouseSummary>,
    /// Mean of the per-store mean rewards.
    pub mean_store_reward: f64,
    /// Discounted system cost accumulated over the test split.
    pub system_cost: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Run one full-horizon episode and score the test split. A `None`
/// warehouse policy scores stores against an infinite warehouse.
pub fn evaluate(
    spec: &InstanceSpec,
    demand: &Trace,
    forecast: &Trace,
    store_policy: &StorePolicy,
    warehouse_policy: Option<&WarehousePolicy>,
    seed: u64,
) -> Result<EvalReport> {
    let data = run_episode(
        spec,
        demand,
        forecast,
        store_policy,
        warehouse_policy,
        spec.horizon,
        seed,
    )?;
    let start = spec.train_periods;
    let scored = spec.horizon - start;
    let stores = spec.num_stores();

    let mut summaries = Vec::with_capacity(stores);
    for j in 0..stores {
        let mut acc = [0.0; 5];
        for row in &data.store_rows[start..] {
            let sb = &row[j];
            acc[0] += sb.mean_reward;
            acc[1] += sb.out_of_stock_fraction;
            acc[2] += sb.waste_mean;
            acc[3] += sb.spread;
            acc[4] += sb.capacity_penalty;
        }
        let p = scored as f64;
        summaries.push(StoreSummary {
            store: j,
            mean_reward: acc[0] / p,
            out_of_stock: acc[1] / p,
            waste: acc[2] / p,
            spread: acc[3] / p,
            capacity_penalty: acc[4] / p,
        });
    }

    let warehouse = if warehouse_policy.is_some() {
        let rows: Vec<_> = data
            .warehouse_rows
            .iter()
            .filter(|r| r.period >= start)
            .collect();
        let count = rows.len().max(1) as f64;
        let products = spec.num_products() as f64;
        Some(WarehouseSummary {
            mean_reward: rows.iter().map(|r| r.mean_reward).sum::<f64>() / count,
            cost: rows.iter().map(|r| r.cost).sum::<f64>() / count,
            refused: rows
                .iter()
                .map(|r| r.refused.iter().sum::<f64>() / products)
                .sum::<f64>()
                / count,
            store_share: rows
                .iter()
                .map(|r| r.store_share.iter().sum::<f64>() / products)
                .sum::<f64>()
                / count,
            decisions: rows.len(),
        })
    } else {
        None
    };

    let mut wh_costs = vec![0.0; scored];
    for row in &data.warehouse_rows {
        if row.period >= start {
            wh_costs[row.period - start] = row.cost;
        }
    }
    let st_costs: Vec<f64> = data.store_rows[start..]
        .iter()
        .map(|row| row.iter().map(|sb| sb.cost).sum())
        .collect();
    let system_cost = system_return(&wh_costs, &st_costs, &spec.weights)?;

    let mean_store_reward =
        summaries.iter().map(|s| s.mean_reward).sum::<f64>() / stores as f64;
    let policy = match warehouse_policy {
        Some(wp) => format!("{}/{}", store_policy.label(), wp.label()),
        None => store_policy.label().to_string(),
    };
    Ok(EvalReport {
        policy,
        store_policy: store_policy.label().to_string(),
        warehouse_policy: warehouse_policy.map(|wp| wp.label().to_string()),
        spec_hash: spec.hash(),
        seed,
        test_start: start,
        horizon: spec.horizon,
        stores: summaries,
        warehouse,
        mean_store_reward,
        system_cost,
    })
}

/// Summary table over several evaluations of the same instance, one row per
/// policy: `policy, warehouse, store1..storeS`.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let stores = reports.first().map_or(0, |r| r.stores.len());
    let mut out = String::from("policy,warehouse");
    for j in 1..=stores {
        out.push_str(&format!(",store{j}"));
    }
    out.push('\n');
    for report in reports {
        out.push_str(&report.policy);
        match &report.warehouse {
            Some(w) => out.push_str(&format!(",{}", w.mean_reward)),
            None => out.push_str(",NA"),
        }
        for s in &report.stores {
            out.push_str(&format!(",{}", s.mean_reward));
        }
        out.push('\n');
    }
    out
}

/// One point of a truck-capacity sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub volume: f64,
    pub policy: String,
    pub reward: f64,
    pub capacity_penalty: f64,
}

/// Score the forecast and clairvoyant store heuristics for one store across
/// truck volumes, against an infinite warehouse and identical traces.
pub fn capacity_sweep(
    spec: &InstanceSpec,
    demand: &Trace,
    forecast: &Trace,
    store: usize,
    volumes: &[f64],
    target: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if store >= spec.num_stores() {
        return Err(CoreError::InvalidArgument(format!(
            "store {store} out of range"
        )));
    }
    if volumes.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "capacity sweep needs at least two volumes".to_string(),
        ));
    }
    let mut rows = Vec::new();
    for &volume in volumes {
        let mut varied = spec.clone();
        varied.stores[store].truck_volume = volume;
        varied.validate()?;
        for policy in [StorePolicy::heuristic(target), StorePolicy::clairvoyant(target)] {
            let report = evaluate(&varied, demand, forecast, &policy, None, seed)?;
            rows.push(SweepRow {
                volume,
                policy: policy.label().to_string(),
                reward: report.stores[store].mean_reward,
                capacity_penalty: report.stores[store].capacity_penalty,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("volume,policy,reward,capacity_penalty\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.volume, r.policy, r.reward, r.capacity_penalty
        ));
    }
    out
}

/// Greedy action level per (inventory, forecast) grid cell, with the
/// remaining features pinned: zero predicted wastage plus the supplied
/// volume and truck-load features.
pub fn policy_heatmap(
    agent: &StoreAgent,
    inventory_grid: &[f64],
    forecast_grid: &[f64],
    volume_feature: f64,
    aggregate_feature: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut grid = Vec::with_capacity(inventory_grid.len());
    // Grid values are raw shelf fractions; the agent expects the scaled
    // features it was trained on.
    let sales = agent
        .scale
        .sales_scale
        .get(agent.store)
        .copied()
        .unwrap_or(1.0);
    for &x in inventory_grid {
        let mut row = Vec::with_capacity(forecast_grid.len());
        for &w in forecast_grid {
            let obs = [x, w / sales, 0.0, volume_feature, aggregate_feature];
            let probs = agent.policy(&obs)?;
            let mut best = 0;
            for (k, p) in probs.iter().enumerate() {
                if *p > probs[best] {
                    best = k;
                }
            }
            row.push(ACTION_LEVELS[best]);
        }
        grid.push(row);
    }
    Ok(grid)
}

/// Build the standard heatmap probe for one store agent: inventory spans
/// [0,1]; the forecast axis spans the lower three quartiles of the store's
/// forecast trace (above that the values are tail mass the agent rarely
/// sees); the truck-load feature is pinned at the store's mean forecast
/// order volume and the unit-volume feature at the normalization point.
/// Returns the two axes and the greedy-level grid.
pub fn heatmap_probe(
    spec: &InstanceSpec,
    forecast: &Trace,
    agent: &StoreAgent,
    points: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let store = agent.store;
    if store >= spec.num_stores() {
        return Err(CoreError::InvalidArgument(format!(
            "agent store {store} outside instance with {} stores",
            spec.num_stores()
        )));
    }
    if points < 2 {
        return Err(CoreError::InvalidArgument(
            "a heatmap needs at least a 2x2 grid".into(),
        ));
    }
    let mut sorted_forecasts = Vec::with_capacity(forecast.periods * spec.num_products());
    let mut mean_volume_load = 0.0;
    for row in &forecast.values {
        let mut load = 0.0;
        for (i, w) in row[store].iter().enumerate() {
            sorted_forecasts.push(*w);
            load += spec.products[i].unit_volume * w;
        }
        mean_volume_load += load / spec.stores[store].truck_volume;
    }
    mean_volume_load /= forecast.periods as f64;
    sorted_forecasts.sort_by(|a, b| a.total_cmp(b));
    let p75 = sorted_forecasts[(sorted_forecasts.len() * 3 / 4).min(sorted_forecasts.len() - 1)];

    let linspace = |hi: f64| -> Vec<f64> {
        (0..points)
            .map(|k| hi * k as f64 / (points - 1) as f64)
            .collect()
    };
    let inventory_grid = linspace(1.0);
    let forecast_grid = linspace(p75.min(1.0));
    let grid = policy_heatmap(agent, &inventory_grid, &forecast_grid, 1.0, mean_volume_load)?;
    Ok((inventory_grid, forecast_grid, grid))
}

pub fn heatmap_to_csv(
    inventory_grid: &[f64],
    forecast_grid: &[f64],
    grid: &[Vec<f64>],
) -> String {
    let mut out = String::from("inventory");
    for w in forecast_grid {
        out.push_str(&format!(",{w}"));
    }
    out.push('\n');
    for (x, row) in inventory_grid.iter().zip(grid) {
        out.push_str(&format!("{x}"));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Instance growth applied before a zero-shot transfer evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    /// Extend the catalogue to this many products.
    MoreProducts(usize),
    /// Duplicate the first store at 1.75x capacity.
    AddedStore,
}

/// Result of one transfer experiment: the grown instance and matched
/// evaluations of the frozen agents and the heuristic pair.
#[derive(Debug)]
pub struct TransferOutcome {
    pub spec: InstanceSpec,
    pub rl: EvalReport,
    pub heuristic: EvalReport,
}

/// Evaluate frozen agents on a grown instance without retraining. New
/// stores reuse the first store's agent; learned feature scales stay at
/// their training values.
pub fn transfer_experiment(
    base: &InstanceSpec,
    kind: TransferKind,
    store_agents: &[StoreAgent],
    warehouse_agent: &WarehouseAgent,
    target_r: f64,
    heuristic_target: f64,
    seed: u64,
) -> Result<TransferOutcome> {
    if store_agents.len() != base.num_stores() {
        return Err(CoreError::Dimension {
            expected: base.num_stores(),
            got: store_agents.len(),
            context: "one trained agent per base store".to_string(),
        });
    }
    let grown = match kind {
        TransferKind::MoreProducts(count) => {
            if count < base.num_products() {
                return Err(CoreError::InvalidArgument(format!(
                    "transfer cannot shrink the catalogue from {} to {count}",
                    base.num_products()
                )));
            }
            base.with_more_products(count)
        }
        TransferKind::AddedStore => base.with_added_store(),
    };
    grown.validate()?;
    let demand = generate_demand(&grown, grown.seed);
    let forecast = generate_forecast(&demand, target_r, grown.seed)?;

    let mut agents = store_agents.to_vec();
    if matches!(kind, TransferKind::AddedStore) {
        let mut extra = store_agents[0].clone();
        extra.store = agents.len();
        agents.push(extra);
    }
    let rl = evaluate(
        &grown,
        &demand,
        &forecast,
        &StorePolicy::agents(agents),
        Some(&WarehousePolicy::agent(warehouse_agent.clone())),
        seed,
    )?;
    let heuristic = evaluate(
        &grown,
        &demand,
        &forecast,
        &StorePolicy::heuristic(heuristic_target),
        Some(&WarehousePolicy::heuristic()),
        seed,
    )?;
    Ok(TransferOutcome {
        spec: grown,
        rl,
        heuristic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::FeatureScale;
    use crate::demand::{generate_demand, generate_forecast};
    use crate::nn::Mlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tiny() -> (InstanceSpec, Trace, Trace) {
        let spec = InstanceSpec::synthetic(3, 2, 32, 16, 11);
        let demand = generate_demand(&spec, spec.seed);
        let forecast = generate_forecast(&demand, 0.8, spec.seed).unwrap();
        (spec, demand, forecast)
    }

    #[test]
    fn evaluation_is_reproducible_byte_for_byte() {
        let (spec, demand, forecast) = tiny();
        let report = |seed| {
            evaluate(
                &spec,
                &demand,
                &forecast,
                &StorePolicy::heuristic(0.25),
                Some(&WarehousePolicy::heuristic()),
                seed,
            )
            .unwrap()
            .to_json()
        };
        assert_eq!(report(3), report(3));
    }

    #[test]
    fn report_embeds_instance_hash_and_scores_test_split_only() {
        let (spec, demand, forecast) = tiny();
        let report = evaluate(
            &spec,
            &demand,
            &forecast,
            &StorePolicy::heuristic(0.25),
            None,
            1,
        )
        .unwrap();
        assert_eq!(report.spec_hash, spec.hash());
        assert_eq!(report.test_start, spec.train_periods);
        assert!(report.warehouse.is_none());
        assert_eq!(report.stores.len(), 2);
    }

    #[test]
    fn csv_layout_is_policy_warehouse_then_stores() {
        let (spec, demand, forecast) = tiny();
        let coupled = evaluate(
            &spec,
            &demand,
            &forecast,
            &StorePolicy::heuristic(0.25),
            Some(&WarehousePolicy::heuristic()),
            1,
        )
        .unwrap();
        let infinite = evaluate(
            &spec,
            &demand,
            &forecast,
            &StorePolicy::heuristic(0.25),
            None,
            1,
        )
        .unwrap();
        let csv = reports_to_csv(&[coupled, infinite]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "policy,warehouse,store1,store2");
        assert!(lines.next().unwrap().starts_with("heuristic/heuristic,"));
        assert!(lines.next().unwrap().starts_with("heuristic,NA,"));
    }

    #[test]
    fn sweep_requires_two_volumes_and_reuses_traces() {
        let (spec, demand, forecast) = tiny();
        assert!(capacity_sweep(&spec, &demand, &forecast, 0, &[1.0], 0.25, 1).is_err());
        let base = spec.stores[0].truck_volume;
        let rows =
            capacity_sweep(&spec, &demand, &forecast, 0, &[base, base * 100.0], 0.25, 1)
                .unwrap();
        assert_eq!(rows.len(), 4);
        // A huge truck never clips, so the capacity penalty vanishes.
        assert_eq!(rows[2].capacity_penalty, 0.0);
        assert_eq!(rows[3].capacity_penalty, 0.0);
    }

    #[test]
    fn untrained_zero_weight_agent_maps_to_zero_levels() {
        let (spec, _, _) = tiny();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut agent = StoreAgent::new(0, FeatureScale::from_instance(&spec), 1e-3, &mut rng);
        agent.actor = Mlp::zeroed(&[5, 32, 32, 32, 14], &agent.actor.activations.clone()).unwrap();
        let grid = policy_heatmap(&agent, &[0.0, 0.5, 1.0], &[0.0, 0.02], 1.0, 0.5).unwrap();
        for row in &grid {
            for v in row {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn transfer_grows_instances_without_touching_agents() {
        let (spec, _, _) = tiny();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let scale = FeatureScale::from_instance(&spec);
        let agents: Vec<StoreAgent> = (0..2)
            .map(|j| StoreAgent::new(j, scale.clone(), 1e-3, &mut rng))
            .collect();
        let wh = WarehouseAgent::new(1e-3, &mut rng);
        let before = serde_json::to_string(&agents[0].actor).unwrap();
        let out = transfer_experiment(
            &spec,
            TransferKind::MoreProducts(5),
            &agents,
            &wh,
            0.8,
            0.25,
            1,
        )
        .unwrap();
        assert_eq!(out.spec.num_products(), 5);
        assert_eq!(serde_json::to_string(&agents[0].actor).unwrap(), before);
        let added = transfer_experiment(
            &spec,
            TransferKind::AddedStore,
            &agents,
            &wh,
            0.8,
            0.25,
            1,
        )
        .unwrap();
        assert_eq!(added.spec.num_stores(), 3);
        assert_eq!(added.rl.stores.len(), 3);
        assert!(transfer_experiment(
            &spec,
            TransferKind::MoreProducts(1),
            &agents,
            &wh,
            0.8,
            0.25,
            1
        )
        .is_err());
    }

    #[test]
    fn transfer_with_same_product_count_matches_plain_evaluation() {
        let (spec, demand, forecast) = tiny();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let scale = FeatureScale::from_instance(&spec);
        let agents: Vec<StoreAgent> = (0..2)
            .map(|j| StoreAgent::new(j, scale.clone(), 1e-3, &mut rng))
            .collect();
        let wh = WarehouseAgent::new(1e-3, &mut rng);
        let out = transfer_experiment(
            &spec,
            TransferKind::MoreProducts(spec.num_products()),
            &agents,
            &wh,
            0.8,
            0.25,
            1,
        )
        .unwrap();
        let plain = evaluate(
            &spec,
            &demand,
            &forecast,
            &StorePolicy::agents(agents),
            Some(&WarehousePolicy::agent(wh)),
            1,
        )
        .unwrap();
        assert_eq!(out.rl.to_json(), plain.to_json());
    }
}
