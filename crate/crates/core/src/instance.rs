//! Problem instances: products, stores, warehouse sizing, reward weights.
//!
//! An [`InstanceSpec`] is the single source of truth for one experiment. It is
//! serialized as JSON (see README for the schema) and hashed so that every
//! report can state exactly which instance produced it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// One product type moving through the chain.
///
/// `unit_volume` is the volume (cm^3) of one *normalized* inventory unit,
/// i.e. a full shelf allocation of this product. Inventory itself is always
/// kept in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProductSpec {
    pub unit_volume: f64,
    /// Store periods until spoilage; 1 means stock survives a single period.
    pub shelf_life: usize,
    /// Fixed vendor order cost per replenishment decision.
    pub fixed_cost: f64,
    /// Variable vendor cost per normalized unit ordered.
    pub variable_cost: f64,
}

/// One store: physical capacity, its truck, and its size relative to the
/// warehouse.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StoreSpec {
    /// Physical shelf capacity; defines the normalization of this store's
    /// inventory to [0, 1].
    pub shelf_capacity: f64,
    /// Truck volume (cm^3) per replenishment trip.
    pub truck_volume: f64,
    /// Conversion factor from this store's normalized units to warehouse
    /// units (a_j). One full store shelf equals `warehouse_share` of the
    /// warehouse shelf.
    pub warehouse_share: f64,
    /// Target mean per-period sales per product, as a fraction of shelf
    /// capacity. Drives the synthetic demand calibration.
    pub mean_sales_fraction: f64,
}

/// Parameters of the synthetic demand generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DemandModel {
    /// Multiplier per weekday, Monday first.
    pub weekday_profile: [f64; 7],
    /// Multiplier per within-day period; length must equal the warehouse
    /// cycle (one cycle = one day).
    pub time_of_day_profile: Vec<f64>,
    /// Sigma of the multiplicative lognormal noise on each sample.
    pub noise_sigma: f64,
    /// Sigma of the lognormal spread of per-product base rates.
    pub product_spread: f64,
}

impl Default for DemandModel {
    fn default() -> Self {
        DemandModel {
            weekday_profile: [1.0, 0.9, 0.85, 0.9, 1.05, 1.3, 1.4],
            time_of_day_profile: vec![0.6, 1.2, 1.4, 0.8],
            noise_sigma: 0.45,
            product_spread: 0.5,
        }
    }
}

/// Weights of the reward and cost terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RewardWeights {
    /// Capacity-exceedance weight (alpha): penalty per unit of rho above 1.
    pub capacity_penalty: f64,
    /// Refused-order weight (alpha_1) in the warehouse reward.
    pub refused_weight: f64,
    /// Share of summed store rewards fed to the warehouse (alpha_2).
    pub store_share: f64,
    /// System-cost weight on the warehouse cost (g_1).
    pub warehouse_cost_weight: f64,
    /// System-cost weight on the summed store costs (g_2).
    pub store_cost_weight: f64,
    /// Discount factor (gamma).
    pub discount: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            capacity_penalty: 0.5,
            refused_weight: 1.0,
            store_share: 0.1,
            warehouse_cost_weight: 1.0,
            store_cost_weight: 1.0,
            discount: 0.99,
        }
    }
}

/// Full description of one experiment instance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceSpec {
    pub products: Vec<ProductSpec>,
    pub stores: Vec<StoreSpec>,
    /// Store periods per warehouse decision (n). Also the number of store
    /// periods per day for demand seasonality.
    pub cycle: usize,
    /// Total number of store periods simulated.
    pub horizon: usize,
    /// Periods `[0, train_periods)` are the training split; the rest is the
    /// test split.
    pub train_periods: usize,
    /// Normalized inventory level every bucket chain starts from.
    pub initial_inventory: f64,
    pub demand: DemandModel,
    pub weights: RewardWeights,
    /// Master seed; demand, forecast, and weight initialization derive their
    /// own streams from it.
    pub seed: u64,
}

impl InstanceSpec {
    pub fn num_products(&self) -> usize {
        self.products.len()
    }

    pub fn num_stores(&self) -> usize {
        self.stores.len()
    }

    /// Unit volumes as a vector, in product order.
    pub fn unit_volumes(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.unit_volume).collect()
    }

    /// Warehouse bucket count for a product: its shelf life expressed in
    /// warehouse cycles, rounded up, at least one.
    pub fn warehouse_shelf_life(&self, product: usize) -> usize {
        self.products[product].shelf_life.div_ceil(self.cycle).max(1)
    }

    /// Check every structural invariant; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::InvalidInstance(msg));
        if self.products.is_empty() {
            return fail("no products".into());
        }
        if self.stores.is_empty() {
            return fail("no stores".into());
        }
        for (i, p) in self.products.iter().enumerate() {
            if !(p.unit_volume > 0.0) {
                return fail(format!("product {i}: unit_volume must be > 0"));
            }
            if p.shelf_life == 0 {
                return fail(format!("product {i}: shelf_life must be >= 1"));
            }
            if p.fixed_cost < 0.0 || p.variable_cost < 0.0 {
                return fail(format!("product {i}: costs must be >= 0"));
            }
        }
        let mut share_sum = 0.0;
        for (j, s) in self.stores.iter().enumerate() {
            if !(s.shelf_capacity > 0.0) {
                return fail(format!("store {j}: shelf_capacity must be > 0"));
            }
            if !(s.truck_volume > 0.0) {
                return fail(format!("store {j}: truck_volume must be > 0"));
            }
            if !(s.warehouse_share > 0.0) {
                return fail(format!("store {j}: warehouse_share must be > 0"));
            }
            if s.mean_sales_fraction < 0.0 {
                return fail(format!("store {j}: mean_sales_fraction must be >= 0"));
            }
            share_sum += s.warehouse_share;
        }
        if share_sum > 1.0 + 1e-12 {
            return fail(format!(
                "warehouse shares sum to {share_sum:.6}, must be <= 1"
            ));
        }
        if self.cycle == 0 {
            return fail("cycle must be >= 1".into());
        }
        if self.demand.time_of_day_profile.len() != self.cycle {
            return fail(format!(
                "time_of_day_profile has {} entries, expected cycle length {}",
                self.demand.time_of_day_profile.len(),
                self.cycle
            ));
        }
        if self.train_periods >= self.horizon {
            return fail("train_periods must be < horizon".into());
        }
        // Warehouse decisions sit at cycle boundaries; splits must align.
        if self.horizon % self.cycle != 0 || self.train_periods % self.cycle != 0 {
            return fail("horizon and train_periods must be multiples of cycle".into());
        }
        if !(0.0..=1.0).contains(&self.initial_inventory) {
            return fail("initial_inventory must be in [0, 1]".into());
        }
        let w = &self.weights;
        for (name, v) in [
            ("capacity_penalty", w.capacity_penalty),
            ("refused_weight", w.refused_weight),
            ("store_share", w.store_share),
            ("warehouse_cost_weight", w.warehouse_cost_weight),
            ("store_cost_weight", w.store_cost_weight),
        ] {
            if v < 0.0 {
                return fail(format!("weight {name} must be >= 0"));
            }
        }
        if !(w.discount > 0.0 && w.discount < 1.0) {
            return fail("discount must be in (0, 1)".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("instance serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: InstanceSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Desk-scale default: 20 products, 3 stores, 400 periods with a 300/100
    /// train/test split. Small enough that the full train-and-evaluate
    /// pipeline completes in minutes.
    pub fn desk(seed: u64) -> Self {
        Self::synthetic(20, 3, 400, 300, seed)
    }

    /// Synthetic instance of arbitrary size. Product attributes are drawn
    /// from per-product seeded streams, so instances with the same seed and
    /// more products extend each other: the first `P` products of a
    /// `P' > P` instance are identical.
    pub fn synthetic(
        products: usize,
        stores: usize,
        horizon: usize,
        train_periods: usize,
        seed: u64,
    ) -> Self {
        let product_specs: Vec<ProductSpec> =
            (0..products).map(|i| synthetic_product(seed, i)).collect();

        // Relative store sizes follow the 1x / 2x / 1.5x convention; a
        // fourth store (used by the added-store transfer experiment) is
        // 1.75x the first.
        let rel_capacity = [1.0, 2.0, 1.5, 1.75];
        let sales_fraction = [0.021, 0.037, 0.033, 0.021];
        let mean_volume = product_specs.iter().map(|p| p.unit_volume).sum::<f64>()
            / products.max(1) as f64;

        let rel_total: f64 = (0..stores).map(|j| rel_capacity[j % 4]).sum();
        let store_specs: Vec<StoreSpec> = (0..stores)
            .map(|j| {
                let rel = rel_capacity[j % 4];
                let sales = sales_fraction[j % 4];
                StoreSpec {
                    shelf_capacity: 1000.0 * rel,
                    // Sized to 1.1x the average per-period order volume, so
                    // the truck binds during demand peaks and policies
                    // compete on how they spread replenishment across the
                    // day.
                    truck_volume: 1.1 * products as f64 * mean_volume * sales,
                    // Shares scaled so they sum to 0.9; the warehouse can
                    // fill every store at least once from a full shelf.
                    warehouse_share: 0.9 * rel / rel_total,
                    mean_sales_fraction: sales,
                }
            })
            .collect();

        InstanceSpec {
            products: product_specs,
            stores: store_specs,
            cycle: 4,
            horizon,
            train_periods,
            initial_inventory: 0.5,
            demand: DemandModel::default(),
            weights: RewardWeights::default(),
            seed,
        }
    }

    /// Transfer variant: same instance family with `factor` times as many
    /// products and trucks scaled proportionally.
    pub fn with_more_products(&self, new_count: usize) -> Self {
        let mut out = self.clone();
        out.products = (0..new_count)
            .map(|i| synthetic_product(self.seed, i))
            .collect();
        let ratio = new_count as f64 / self.num_products() as f64;
        for store in &mut out.stores {
            store.truck_volume *= ratio;
        }
        out
    }

    /// Transfer variant: attach one extra store (1.75x the first store's
    /// capacity). The warehouse is re-normalized so shares keep the same
    /// total, which rescales every store's `warehouse_share`.
    pub fn with_added_store(&self) -> Self {
        let mut out = self.clone();
        let first = &self.stores[0];
        let new_capacity = 1.75 * first.shelf_capacity;
        let old_share_total: f64 = self.stores.iter().map(|s| s.warehouse_share).sum();
        out.stores.push(StoreSpec {
            shelf_capacity: new_capacity,
            truck_volume: 1.75 * first.truck_volume,
            warehouse_share: 1.75 * first.warehouse_share,
            mean_sales_fraction: first.mean_sales_fraction,
        });
        let new_share_total: f64 = out.stores.iter().map(|s| s.warehouse_share).sum();
        let rescale = old_share_total / new_share_total;
        for store in &mut out.stores {
            store.warehouse_share *= rescale;
        }
        out
    }
}

/// Draw one product from a stream derived from (seed, index) so product
/// lists nest across instance sizes.
fn synthetic_product(seed: u64, index: usize) -> ProductSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)));
    let unit_volume = 1000.0 * (0.6 * rng.gen_range(-1.0..1.0f64)).exp();
    // Every third product is perishable at store timescales.
    let shelf_life = if index % 3 == 0 {
        rng.gen_range(6..=12)
    } else {
        rng.gen_range(16..=40)
    };
    ProductSpec {
        unit_volume,
        shelf_life,
        fixed_cost: rng.gen_range(0.05..0.25),
        variable_cost: rng.gen_range(0.02..0.15),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_instance_validates() {
        let spec = InstanceSpec::desk(7);
        spec.validate().unwrap();
        assert_eq!(spec.num_products(), 20);
        assert_eq!(spec.num_stores(), 3);
        let share: f64 = spec.stores.iter().map(|s| s.warehouse_share).sum();
        assert!(share <= 1.0 + 1e-12);
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let spec = InstanceSpec::desk(42);
        let json = spec.to_json().unwrap();
        let back = InstanceSpec::from_json(&json).unwrap();
        assert_eq!(spec, back);
        assert_eq!(spec.hash(), back.hash());
    }

    #[test]
    fn product_lists_nest_across_sizes() {
        let small = InstanceSpec::desk(9);
        let big = small.with_more_products(28);
        assert_eq!(&big.products[..20], &small.products[..]);
        // Truck volume scaled by 28/20.
        let ratio = big.stores[0].truck_volume / small.stores[0].truck_volume;
        assert!((ratio - 1.4).abs() < 1e-12);
    }

    #[test]
    fn added_store_keeps_share_budget() {
        let spec = InstanceSpec::desk(9);
        let bigger = spec.with_added_store();
        assert_eq!(bigger.num_stores(), 4);
        bigger.validate().unwrap();
        let share: f64 = bigger.stores.iter().map(|s| s.warehouse_share).sum();
        assert!((share - 0.9).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = InstanceSpec::desk(1);
        spec.products[0].shelf_life = 0;
        assert!(spec.validate().is_err());

        let mut spec = InstanceSpec::desk(1);
        spec.stores[0].warehouse_share = 2.0;
        assert!(spec.validate().is_err());

        let mut spec = InstanceSpec::desk(1);
        spec.weights.discount = 1.0;
        assert!(spec.validate().is_err());
    }
}
