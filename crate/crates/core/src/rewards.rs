//! Cost and reward terms for stores, warehouse, and the system objective.
//!
//! Store cost per period: out-of-stock fraction + mean spoilage + the
//! 95th-minus-5th percentile spread of inventories. The per-item store
//! reward mirrors the cost exactly (mean over products of the item rewards
//! equals one minus the store cost whenever the truck was not overloaded)
//! and adds a capacity penalty when it was.
//!
//! Warehouse cost per cycle: spoilage plus fixed and variable vendor order
//! cost, averaged over products. The per-item warehouse reward charges
//! refused store replenishment and credits a share of the store rewards.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::{ProductSpec, RewardWeights};
use crate::sim::PeriodOutcome;

/// Percentile via linear interpolation between closest ranks: the value at
/// fractional rank `q * (n - 1)` of the sorted sample.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// 95th minus 5th percentile of per-product inventories within one store.
pub fn percentile_spread(inventories: &[f64]) -> Result<f64> {
    if inventories.is_empty() {
        return Err(CoreError::InvalidArgument(
            "percentile spread of an empty vector".into(),
        ));
    }
    let mut sorted = inventories.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("inventories are finite"));
    Ok(percentile(&sorted, 0.95) - percentile(&sorted, 0.05))
}

/// Store cost for one period: empty fraction + mean spoilage + spread. The
/// emptiness flags must be the same ones used for the item rewards so the
/// mean-reward identity holds exactly.
pub fn store_cost(was_empty: &[bool], waste: &[f64], end_inventory: &[f64]) -> Result<f64> {
    let p = was_empty.len() as f64;
    let empties = was_empty.iter().filter(|&&e| e).count() as f64;
    let waste_sum: f64 = waste.iter().sum();
    Ok(empties / p + waste_sum / p + percentile_spread(end_inventory)?)
}

/// Reward for one (product, store) pair in one period.
pub fn store_item_reward(
    empty: bool,
    waste: f64,
    spread: f64,
    rho: f64,
    weights: &RewardWeights,
) -> f64 {
    let empty_term = if empty { 1.0 } else { 0.0 };
    1.0 - empty_term - waste - spread - weights.capacity_penalty * (rho - 1.0)
}

/// Per-product warehouse cost summands: spoilage plus vendor order cost for
/// flagged products.
pub fn warehouse_item_costs(
    flags: &[bool],
    amounts: &[f64],
    waste: &[f64],
    products: &[ProductSpec],
) -> Vec<f64> {
    (0..products.len())
        .map(|i| {
            let order = if flags[i] {
                products[i].fixed_cost + amounts[i] * products[i].variable_cost
            } else {
                0.0
            };
            waste[i] + order
        })
        .collect()
}

/// Warehouse cost for one cycle: mean of the per-product summands.
pub fn warehouse_cost(item_costs: &[f64]) -> f64 {
    if item_costs.is_empty() {
        return 0.0;
    }
    item_costs.iter().sum::<f64>() / item_costs.len() as f64
}

/// Reward for one warehouse product at one decision: base minus its cost
/// summand, minus weighted refused replenishment attributed to this
/// decision, plus a share of the summed store rewards for this product.
pub fn warehouse_item_reward(
    item_cost: f64,
    refused: f64,
    store_reward_sum: f64,
    weights: &RewardWeights,
) -> f64 {
    1.0 - item_cost - weights.refused_weight * refused + weights.store_share * store_reward_sum
}

/// Discounted system cost over a finite stream. `warehouse_costs[k]` must be
/// zero at periods without a warehouse decision; `store_costs[k]` is the sum
/// over stores of that period's cost.
pub fn system_return(
    warehouse_costs: &[f64],
    store_costs: &[f64],
    weights: &RewardWeights,
) -> Result<f64> {
    if warehouse_costs.len() != store_costs.len() {
        return Err(CoreError::Dimension {
            expected: warehouse_costs.len(),
            got: store_costs.len(),
            context: "cost streams".into(),
        });
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for (wh, st) in warehouse_costs.iter().zip(store_costs) {
        total += discount
            * (weights.warehouse_cost_weight * wh + weights.store_cost_weight * st);
        discount *= weights.discount;
    }
    Ok(total)
}

/// Assembled reward components for one store in one period, exportable as a
/// CSV row per component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreBreakdown {
    pub period: usize,
    pub store: usize,
    pub out_of_stock_fraction: f64,
    pub waste_mean: f64,
    pub spread: f64,
    pub capacity_penalty: f64,
    pub cost: f64,
    pub item_rewards: Vec<f64>,
    pub mean_reward: f64,
}

/// Compute every store reward component from one simulated period.
pub fn store_breakdown(
    outcome: &PeriodOutcome,
    store: usize,
    weights: &RewardWeights,
) -> Result<StoreBreakdown> {
    let empty = &outcome.was_empty[store];
    let waste = &outcome.store_waste[store];
    let end = &outcome.end_inventory[store];
    let p = empty.len() as f64;
    let spread = percentile_spread(end)?;
    let rho = outcome.rho[store];
    let item_rewards: Vec<f64> = (0..empty.len())
        .map(|i| store_item_reward(empty[i], waste[i], spread, rho, weights))
        .collect();
    let mean_reward = item_rewards.iter().sum::<f64>() / p;
    Ok(StoreBreakdown {
        period: outcome.period,
        store,
        out_of_stock_fraction: empty.iter().filter(|&&e| e).count() as f64 / p,
        waste_mean: waste.iter().sum::<f64>() / p,
        spread,
        capacity_penalty: weights.capacity_penalty * (rho - 1.0),
        cost: store_cost(empty, waste, end)?,
        item_rewards,
        mean_reward,
    })
}

/// Assembled reward components for one warehouse decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarehouseBreakdown {
    pub period: usize,
    pub item_costs: Vec<f64>,
    pub cost: f64,
    /// Refused replenishment per product attributed to this decision.
    pub refused: Vec<f64>,
    /// Summed store item rewards per product over the attribution window.
    pub store_share: Vec<f64>,
    pub item_rewards: Vec<f64>,
    pub mean_reward: f64,
}

/// Compute every warehouse reward component for one decision.
pub fn warehouse_breakdown(
    period: usize,
    flags: &[bool],
    amounts: &[f64],
    waste: &[f64],
    refused: &[f64],
    store_share: &[f64],
    products: &[ProductSpec],
    weights: &RewardWeights,
) -> WarehouseBreakdown {
    let item_costs = warehouse_item_costs(flags, amounts, waste, products);
    let item_rewards: Vec<f64> = (0..products.len())
        .map(|i| warehouse_item_reward(item_costs[i], refused[i], store_share[i], weights))
        .collect();
    let mean_reward = item_rewards.iter().sum::<f64>() / products.len() as f64;
    WarehouseBreakdown {
        period,
        cost: warehouse_cost(&item_costs),
        item_costs,
        refused: refused.to_vec(),
        store_share: store_share.to_vec(),
        item_rewards,
        mean_reward,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceSpec, RewardWeights};
    use crate::sim::Env;

    #[test]
    fn spread_of_equal_inventories_is_zero() {
        let spread = percentile_spread(&[0.4; 7]).unwrap();
        assert_eq!(spread, 0.0);
    }

    #[test]
    fn spread_interpolates_between_ranks() {
        // n=2: rank(q) = q, so p95 = 0.95 and p05 = 0.05.
        let spread = percentile_spread(&[0.0, 1.0]).unwrap();
        assert!((spread - 0.9).abs() < 1e-12);
        // Uniform grid over [0,1] with 101 points: exact order statistics.
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let spread = percentile_spread(&grid).unwrap();
        assert!((spread - 0.9).abs() < 1e-12);
        assert!(percentile_spread(&[]).is_err());
    }

    #[test]
    fn store_cost_assembles_three_terms() {
        // Clean period: nothing empty, no waste, flat inventories.
        let c = store_cost(&[false, false], &[0.0, 0.0], &[0.3, 0.3]).unwrap();
        assert_eq!(c, 0.0);
        // Everything empty at zero inventory.
        let c = store_cost(&[true, true], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(c, 1.0);
        // Mixed case against a hand-assembled value.
        let spread = percentile_spread(&[0.0, 0.5]).unwrap();
        let c = store_cost(&[true, false], &[0.1, 0.0], &[0.0, 0.5]).unwrap();
        assert!((c - (0.5 + 0.05 + spread)).abs() < 1e-12);
    }

    #[test]
    fn item_reward_examples() {
        let w = RewardWeights::default();
        assert_eq!(store_item_reward(false, 0.0, 0.0, 1.0, &w), 1.0);
        assert_eq!(store_item_reward(true, 0.0, 0.0, 1.0, &w), 0.0);
        // Capacity penalty scales with rho above one.
        let r = store_item_reward(false, 0.0, 0.0, 1.5, &w);
        assert!((r - (1.0 - 0.5 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn mean_item_reward_matches_cost_identity() {
        // Simulate real periods and check mean_i R_ij == 1 - C_j when rho=1.
        let spec = InstanceSpec::desk(5);
        let demand = crate::demand::generate_demand(&spec, 5);
        let mut env = Env::new_infinite(&spec);
        let weights = spec.weights;
        let desired = vec![vec![0.01; spec.num_products()]; spec.num_stores()];
        for t in 0..40 {
            let out = env.step(&desired, demand.period_grid(t)).unwrap();
            for j in 0..spec.num_stores() {
                let b = store_breakdown(&out, j, &weights).unwrap();
                if out.rho[j] == 1.0 {
                    assert!(
                        (b.mean_reward - (1.0 - b.cost)).abs() < 1e-12,
                        "period {t} store {j}: {} vs {}",
                        b.mean_reward,
                        1.0 - b.cost
                    );
                }
            }
        }
    }

    #[test]
    fn reward_is_monotone_in_penalties() {
        let w = RewardWeights::default();
        let base = store_item_reward(false, 0.1, 0.2, 1.1, &w);
        assert!(store_item_reward(false, 0.2, 0.2, 1.1, &w) < base);
        assert!(store_item_reward(false, 0.1, 0.3, 1.1, &w) < base);
        assert!(store_item_reward(false, 0.1, 0.2, 1.3, &w) < base);
    }

    #[test]
    fn warehouse_cost_examples() {
        let product = ProductSpec {
            unit_volume: 1.0,
            shelf_life: 10,
            fixed_cost: 0.2,
            variable_cost: 0.1,
        };
        // No orders, no waste.
        let costs = warehouse_item_costs(&[false], &[0.0], &[0.0], &[product.clone()]);
        assert_eq!(warehouse_cost(&costs), 0.0);
        // Order half a shelf: fixed 0.2 + 0.5 * 0.1.
        let costs = warehouse_item_costs(&[true], &[0.5], &[0.0], &[product.clone()]);
        assert!((warehouse_cost(&costs) - 0.25).abs() < 1e-12);
        // Waste only.
        let costs = warehouse_item_costs(&[false], &[0.0], &[0.3], &[product]);
        assert!((warehouse_cost(&costs) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn warehouse_reward_is_linear_in_terms() {
        let w = RewardWeights::default();
        assert_eq!(warehouse_item_reward(0.0, 0.0, 0.0, &w), 1.0);
        assert!((warehouse_item_reward(0.0, 0.4, 0.0, &w) - 0.6).abs() < 1e-12);
        assert!((warehouse_item_reward(0.0, 0.0, 2.4, &w) - 1.24).abs() < 1e-12);
    }

    #[test]
    fn system_return_discounts_costs() {
        let w = RewardWeights::default();
        assert_eq!(system_return(&[0.0; 4], &[0.0; 4], &w).unwrap(), 0.0);
        assert_eq!(system_return(&[0.0], &[1.0], &w).unwrap(), 1.0);
        // Constant store cost approaches the geometric-series limit.
        let horizon = 3000;
        let c = 0.7;
        let g = system_return(&vec![0.0; horizon], &vec![c; horizon], &w).unwrap();
        assert!((g - c / (1.0 - w.discount)).abs() < 1e-8);
        assert!(system_return(&[0.0], &[0.0, 0.0], &w).is_err());
    }
}
