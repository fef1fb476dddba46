//! Non-learning policies: the constant-inventory heuristic, its clairvoyant
//! variant, and fixed warehouse policies used as references.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Default order-up-to target used by the store heuristic.
pub const DEFAULT_TARGET: f64 = 0.25;

/// Store heuristic: order enough to cover expected sales and return to the
/// target level. `expected_sales` is the forecast, or realized demand for
/// the clairvoyant variant. The result still passes through truck clipping
/// and shelf placement like any other order.
pub fn heuristic_store_order(inventory: &[f64], expected_sales: &[f64], target: f64) -> Vec<f64> {
    inventory
        .iter()
        .zip(expected_sales)
        .map(|(x, w)| (target + w - x).max(0.0))
        .collect()
}

/// Warehouse heuristic: order a product when its projected fill one cycle
/// out is strictly below the aggregate store demand forecast for the cycle
/// after.
pub fn heuristic_warehouse_flags(projected_fill: &[f64], aggregate_demand: &[f64]) -> Vec<bool> {
    projected_fill
        .iter()
        .zip(aggregate_demand)
        .map(|(chi, w)| chi < w)
        .collect()
}

/// Fixed warehouse policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPolicy {
    /// Replenish every product at every decision.
    AllOnes,
    /// Never replenish.
    AllZeros,
    /// Replenish at the first decision and every second one after.
    Alternate,
    /// Independent fair coin per (product, decision).
    Random,
}

impl std::str::FromStr for FixedPolicy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s {
            "all_ones" => Ok(FixedPolicy::AllOnes),
            "all_zeros" => Ok(FixedPolicy::AllZeros),
            "alternate" => Ok(FixedPolicy::Alternate),
            "random" => Ok(FixedPolicy::Random),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown fixed policy '{other}' (expected all_ones, all_zeros, alternate, random)"
            ))),
        }
    }
}

/// Order flags for one warehouse decision. `decision_index` counts warehouse
/// periods from zero; the rng drives only the random policy.
pub fn fixed_warehouse_flags(
    kind: FixedPolicy,
    products: usize,
    decision_index: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<bool> {
    match kind {
        FixedPolicy::AllOnes => vec![true; products],
        FixedPolicy::AllZeros => vec![false; products],
        FixedPolicy::Alternate => vec![decision_index % 2 == 0; products],
        FixedPolicy::Random => (0..products).map(|_| rng.gen::<bool>()).collect(),
    }
}
