//! Two-echelon simulator: one warehouse feeding several stores.
//!
//! Time advances in store periods. Stores replenish every period; the
//! warehouse ages, receives its pending vendor order, and places a new one
//! once per cycle of `n` periods. All inventories are normalized to [0, 1]
//! per (store, product) and per warehouse product slot.
//!
//! Perishability is modelled with age buckets drained oldest-first, so a
//! unit's remaining life is explicit and waste events are exact.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::{InstanceSpec, ProductSpec, StoreSpec};

/// Age-bucketed stock. `qty[k]` survives `k` more aging events; sales and
/// shipments drain the oldest stock first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Buckets {
    qty: Vec<f64>,
}

impl Buckets {
    /// All initial stock starts fresh.
    pub fn new(life: usize, initial: f64) -> Self {
        assert!(life >= 1, "bucket chain needs at least one slot");
        let mut qty = vec![0.0; life];
        qty[life - 1] = initial;
        Buckets { qty }
    }

    pub fn total(&self) -> f64 {
        self.qty.iter().sum()
    }

    /// Arrivals are always fresh stock.
    pub fn add_fresh(&mut self, amount: f64) {
        let last = self.qty.len() - 1;
        self.qty[last] += amount;
    }

    /// Remove up to `amount`, oldest buckets first. Returns the quantity
    /// actually removed, never more than the current total.
    pub fn drain_oldest(&mut self, amount: f64) -> f64 {
        let mut remaining = amount.max(0.0);
        let mut drained = 0.0;
        for slot in &mut self.qty {
            if remaining <= 0.0 {
                break;
            }
            let take = slot.min(remaining);
            *slot -= take;
            drained += take;
            remaining -= take;
        }
        drained
    }

    /// Stock in the oldest bucket: spoils at the next aging event.
    pub fn oldest(&self) -> f64 {
        self.qty[0]
    }

    /// One aging event: the oldest bucket spoils, everything else moves one
    /// slot closer to spoilage. Returns the spoiled quantity.
    pub fn age(&mut self) -> f64 {
        let waste = self.qty[0];
        self.qty.rotate_left(1);
        let last = self.qty.len() - 1;
        self.qty[last] = 0.0;
        waste
    }
}

/// Shrink a store's order uniformly when its volume exceeds the truck.
/// Returns the clipped order and the load factor rho (1 when it fits).
pub fn clip_to_truck(
    desired: &[f64],
    products: &[ProductSpec],
    store: &StoreSpec,
) -> Result<(Vec<f64>, f64)> {
    if desired.len() != products.len() {
        return Err(CoreError::Dimension {
            expected: products.len(),
            got: desired.len(),
            context: "truck clip order".into(),
        });
    }
    let mut volume = 0.0;
    let mut clipped: Vec<f64> = desired.iter().map(|u| u.clamp(0.0, 1.0)).collect();
    for (u, p) in clipped.iter().zip(products) {
        volume += p.unit_volume * u;
    }
    let rho = (volume / store.truck_volume).max(1.0);
    if rho > 1.0 {
        for u in &mut clipped {
            *u /= rho;
        }
    }
    Ok((clipped, rho))
}

/// Everything observable about one store period, recorded for rewards,
/// observations, and audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodOutcome {
    pub period: usize,
    /// Orders as requested by the policies, before any feasibility clipping.
    pub desired: Vec<Vec<f64>>,
    /// Orders after clamping to free shelf space and truck volume.
    pub requested: Vec<Vec<f64>>,
    /// Truck load factor per store: max(volume requested / truck volume, 1).
    pub rho: Vec<f64>,
    /// Quantity delivered to each store after warehouse rationing.
    pub supplied: Vec<Vec<f64>>,
    /// Warehouse-unit shortfall per product across all stores this period.
    pub refused: Vec<f64>,
    /// Store inventory before the truck arrived.
    pub start_inventory: Vec<Vec<f64>>,
    pub sold: Vec<Vec<f64>>,
    /// Demand that found the shelf empty.
    pub lost_sales: Vec<Vec<f64>>,
    /// Spoilage from the end-of-period aging event.
    pub store_waste: Vec<Vec<f64>>,
    /// Deliveries that exceeded shelf space and were thrown away.
    pub shelf_discard: Vec<Vec<f64>>,
    /// Shelf-empty flag per (store, product).
    pub was_empty: Vec<Vec<bool>>,
    /// Inventory after sales and aging.
    pub end_inventory: Vec<Vec<f64>>,
}

/// Snapshot returned when a warehouse cycle opens, after aging and vendor
/// delivery but before the new order is placed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleStart {
    pub period: usize,
    /// Fill level per product after the pending delivery landed.
    pub fill: Vec<f64>,
    /// Spoilage per product from this boundary's aging event.
    pub waste: Vec<f64>,
    /// Vendor delivery that actually fit on the warehouse shelf.
    pub delivered: Vec<f64>,
}

/// Record of one vendor order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderRecord {
    pub period: usize,
    pub flags: Vec<bool>,
    /// Ordered quantity per product (fill-up to capacity when flagged).
    pub amounts: Vec<f64>,
    /// Fixed plus variable vendor cost per product.
    pub costs: Vec<f64>,
}

/// Simulation state machine. Drive it with [`Env::begin_cycle`] /
/// [`Env::place_order`] at warehouse boundaries and [`Env::step`] every
/// period; the env enforces that schedule.
#[derive(Debug, Clone)]
pub struct Env {
    spec: InstanceSpec,
    store_stock: Vec<Vec<Buckets>>,
    warehouse: Vec<Buckets>,
    /// Single-slot order pipeline: placed at one boundary, delivered at the
    /// next.
    pending: Vec<f64>,
    period: usize,
    /// Set when a boundary has been reached but [`Env::begin_cycle`] has not
    /// run yet.
    awaiting_cycle: bool,
    /// Set between [`Env::begin_cycle`] and [`Env::place_order`].
    awaiting_order: bool,
    /// When true the warehouse is bypassed: every store request is supplied
    /// in full and no cycle calls are expected.
    infinite_warehouse: bool,
}

impl Env {
    pub fn new(spec: &InstanceSpec) -> Self {
        let products = spec.num_products();
        let stores = spec.num_stores();
        let store_stock = (0..stores)
            .map(|_| {
                (0..products)
                    .map(|i| Buckets::new(spec.products[i].shelf_life, spec.initial_inventory))
                    .collect()
            })
            .collect();
        let warehouse = (0..products)
            .map(|i| Buckets::new(spec.warehouse_shelf_life(i), spec.initial_inventory))
            .collect();
        Env {
            spec: spec.clone(),
            store_stock,
            warehouse,
            pending: vec![0.0; products],
            period: 0,
            // Period 0 is a boundary: coupled envs must open a cycle first.
            awaiting_cycle: true,
            awaiting_order: false,
            infinite_warehouse: false,
        }
    }

    /// Same instance but with the warehouse bypassed; used to train and
    /// score store policies in isolation.
    pub fn new_infinite(spec: &InstanceSpec) -> Self {
        let mut env = Self::new(spec);
        env.infinite_warehouse = true;
        env
    }

    pub fn spec(&self) -> &InstanceSpec {
        &self.spec
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn is_infinite_warehouse(&self) -> bool {
        self.infinite_warehouse
    }

    /// True when the next call must be [`Env::begin_cycle`].
    pub fn at_cycle_boundary(&self) -> bool {
        !self.infinite_warehouse && self.period % self.spec.cycle == 0 && !self.awaiting_order
    }

    /// Predicted spoilage per product for one store over the coming period:
    /// stock expiring at the next aging event net of forecast sales, which
    /// drain oldest stock first.
    pub fn predicted_store_wastage(&self, store: usize, forecast: &[f64]) -> Vec<f64> {
        self.store_stock[store]
            .iter()
            .zip(forecast)
            .map(|(b, w)| (b.oldest() - w).max(0.0))
            .collect()
    }

    /// Warehouse fill level per product.
    pub fn warehouse_fill(&self) -> Vec<f64> {
        self.warehouse.iter().map(|b| b.total()).collect()
    }

    /// Warehouse stock in the oldest age bucket per product: exactly what
    /// the next aging event will discard if nothing ships first.
    pub fn warehouse_oldest(&self) -> Vec<f64> {
        self.warehouse.iter().map(|b| b.oldest()).collect()
    }

    /// Serialized dynamic state (stock, pipeline, clock). Two environments
    /// with equal fingerprints evolve identically under equal inputs.
    pub fn state_fingerprint(&self) -> String {
        serde_json::to_string(&(
            &self.store_stock,
            &self.warehouse,
            &self.pending,
            self.period,
            self.awaiting_cycle,
            self.awaiting_order,
        ))
        .expect("environment state serializes")
    }

    /// Store inventory level for one (store, product) pair.
    pub fn store_level(&self, store: usize, product: usize) -> f64 {
        self.store_stock[store][product].total()
    }

    /// All store inventory levels, indexed `[store][product]`.
    pub fn store_levels(&self) -> Vec<Vec<f64>> {
        self.store_stock
            .iter()
            .map(|row| row.iter().map(|b| b.total()).collect())
            .collect()
    }

    /// Open a warehouse cycle: age the warehouse, land the pending vendor
    /// delivery, and report the resulting fill levels. Must be called
    /// exactly when `period % cycle == 0` in coupled mode.
    pub fn begin_cycle(&mut self) -> Result<CycleStart> {
        if self.infinite_warehouse {
            return Err(CoreError::InvalidArgument(
                "begin_cycle called on an infinite-warehouse env".into(),
            ));
        }
        if self.period % self.spec.cycle != 0 || self.awaiting_order {
            return Err(CoreError::OffSchedule {
                period: self.period,
                cycle: self.spec.cycle,
            });
        }
        let products = self.spec.num_products();
        let mut waste = vec![0.0; products];
        let mut delivered = vec![0.0; products];
        // Aging happens before the delivery lands, so fresh vendor stock is
        // never spoiled by the boundary it arrives on.
        for (i, buckets) in self.warehouse.iter_mut().enumerate() {
            waste[i] = buckets.age();
            let room = (1.0 - buckets.total()).max(0.0);
            let landed = self.pending[i].min(room);
            buckets.add_fresh(landed);
            delivered[i] = landed;
            self.pending[i] = 0.0;
        }
        self.awaiting_cycle = false;
        self.awaiting_order = true;
        Ok(CycleStart {
            period: self.period,
            fill: self.warehouse_fill(),
            waste,
            delivered,
        })
    }

    /// Place the vendor order for this cycle: flagged products are filled
    /// back up to capacity, arriving at the next boundary.
    pub fn place_order(&mut self, flags: &[bool]) -> Result<OrderRecord> {
        if !self.awaiting_order {
            return Err(CoreError::OffSchedule {
                period: self.period,
                cycle: self.spec.cycle,
            });
        }
        let products = self.spec.num_products();
        if flags.len() != products {
            return Err(CoreError::Dimension {
                expected: products,
                got: flags.len(),
                context: "order flags".into(),
            });
        }
        let mut amounts = vec![0.0; products];
        let mut costs = vec![0.0; products];
        for i in 0..products {
            if flags[i] {
                let fill = self.warehouse[i].total();
                amounts[i] = (1.0 - fill).max(0.0);
                let p = &self.spec.products[i];
                costs[i] = p.fixed_cost + amounts[i] * p.variable_cost;
            }
            self.pending[i] = amounts[i];
        }
        self.awaiting_order = false;
        Ok(OrderRecord {
            period: self.period,
            flags: flags.to_vec(),
            amounts,
            costs,
        })
    }

    /// Advance one store period: clip orders to shelf and truck, ration them
    /// at the warehouse, deliver, sell against `demand`, and age the store
    /// shelves. `desired[j][i]` is the policy's raw order; `demand[j][i]`
    /// the realized demand this period.
    pub fn step(&mut self, desired: &[Vec<f64>], demand: &[Vec<f64>]) -> Result<PeriodOutcome> {
        let products = self.spec.num_products();
        let stores = self.spec.num_stores();
        if !self.infinite_warehouse && self.period % self.spec.cycle == 0 && self.awaiting_order {
            // begin_cycle ran but no order was placed.
            return Err(CoreError::OffSchedule {
                period: self.period,
                cycle: self.spec.cycle,
            });
        }
        if !self.infinite_warehouse && self.period % self.spec.cycle == 0 && self.awaiting_cycle {
            return Err(CoreError::OffSchedule {
                period: self.period,
                cycle: self.spec.cycle,
            });
        }
        for (name, grid) in [("desired", desired), ("demand", demand)] {
            if grid.len() != stores {
                return Err(CoreError::Dimension {
                    expected: stores,
                    got: grid.len(),
                    context: format!("{name} store rows"),
                });
            }
            for row in grid.iter() {
                if row.len() != products {
                    return Err(CoreError::Dimension {
                        expected: products,
                        got: row.len(),
                        context: format!("{name} product columns"),
                    });
                }
            }
        }

        let start_inventory = self.store_levels();

        // Orders are clamped into [0,1] and shrunk uniformly when their
        // volume exceeds the truck; shelf space is only enforced at
        // placement, where any residual overflow is discarded and logged.
        let mut requested = vec![vec![0.0; products]; stores];
        let mut rho = vec![1.0; stores];
        for j in 0..stores {
            let (clipped, r) =
                clip_to_truck(&desired[j], &self.spec.products, &self.spec.stores[j])?;
            requested[j] = clipped;
            rho[j] = r;
        }

        // Ration at the warehouse: when the stores jointly ask for more of a
        // product than is on the shelf, everyone is scaled by the same
        // factor and the shortfall is logged as refused.
        let mut supplied = requested.clone();
        let mut refused = vec![0.0; products];
        if !self.infinite_warehouse {
            for i in 0..products {
                let mut wanted = 0.0;
                for j in 0..stores {
                    wanted += self.spec.stores[j].warehouse_share * requested[j][i];
                }
                let available = self.warehouse[i].total();
                if wanted > available {
                    let scale = if wanted > 0.0 { available / wanted } else { 0.0 };
                    for j in 0..stores {
                        supplied[j][i] = requested[j][i] * scale;
                    }
                    refused[i] = wanted - available;
                    // Ship everything: the shelf is exactly emptied.
                    self.warehouse[i].drain_oldest(available);
                } else {
                    self.warehouse[i].drain_oldest(wanted);
                }
            }
        }

        // Deliver (fresh stock), sell oldest-first, then age the shelves.
        let mut shelf_discard = vec![vec![0.0; products]; stores];
        let mut sold = vec![vec![0.0; products]; stores];
        let mut lost_sales = vec![vec![0.0; products]; stores];
        let mut store_waste = vec![vec![0.0; products]; stores];
        let mut was_empty = vec![vec![false; products]; stores];
        let mut end_inventory = vec![vec![0.0; products]; stores];
        for j in 0..stores {
            for i in 0..products {
                let buckets = &mut self.store_stock[j][i];
                let room = (1.0 - buckets.total()).max(0.0);
                let placed = supplied[j][i].min(room);
                shelf_discard[j][i] = supplied[j][i] - placed;
                buckets.add_fresh(placed);

                let w = demand[j][i];
                let s = buckets.drain_oldest(w);
                sold[j][i] = s;
                lost_sales[j][i] = w - s;

                store_waste[j][i] = buckets.age();
                let end = buckets.total();
                end_inventory[j][i] = end;
                // A shelf counts as empty if customers saw it bare before
                // the truck arrived, or demand ran it down to nothing.
                was_empty[j][i] =
                    start_inventory[j][i] <= 0.0 || (end <= 0.0 && w > 0.0);
            }
        }

        let outcome = PeriodOutcome {
            period: self.period,
            desired: desired.to_vec(),
            requested,
            rho,
            supplied,
            refused,
            start_inventory,
            sold,
            lost_sales,
            store_waste,
            shelf_discard,
            was_empty,
            end_inventory,
        };
        self.period += 1;
        if !self.infinite_warehouse && self.period % self.spec.cycle == 0 {
            self.awaiting_cycle = true;
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::InstanceSpec;

    fn tiny_spec() -> InstanceSpec {
        let mut spec = InstanceSpec::synthetic(2, 2, 16, 8, 3);
        // Generous trucks so clipping does not interfere with these tests.
        for store in &mut spec.stores {
            store.truck_volume = 1e9;
        }
        spec
    }

    #[test]
    fn buckets_age_and_drain_fifo() {
        let mut b = Buckets::new(3, 0.6);
        assert!((b.total() - 0.6).abs() < 1e-12);
        // Two agings move the stock to the oldest slot without loss.
        assert_eq!(b.age(), 0.0);
        assert_eq!(b.age(), 0.0);
        assert!((b.total() - 0.6).abs() < 1e-12);
        // Draining takes from the oldest slot first.
        let got = b.drain_oldest(0.2);
        assert!((got - 0.2).abs() < 1e-12);
        // The remaining 0.4 spoils on the next aging.
        let waste = b.age();
        assert!((waste - 0.4).abs() < 1e-12);
        assert!(b.total().abs() < 1e-12);
    }

    #[test]
    fn drain_never_exceeds_stock() {
        let mut b = Buckets::new(2, 0.3);
        let got = b.drain_oldest(1.0);
        assert!((got - 0.3).abs() < 1e-12);
        assert!(b.total().abs() < 1e-12);
    }

    #[test]
    fn step_applies_order_and_demand() {
        let spec = tiny_spec();
        let mut env = Env::new_infinite(&spec);
        let desired = vec![vec![0.2, 0.0], vec![0.0, 0.0]];
        let demand = vec![vec![0.1, 0.0], vec![0.0, 0.0]];
        let out = env.step(&desired, &demand).unwrap();
        // 0.5 start + 0.2 order - 0.1 sold = 0.6.
        assert!((out.end_inventory[0][0] - 0.6).abs() < 1e-12);
        assert!((out.sold[0][0] - 0.1).abs() < 1e-12);
        assert!((env.store_level(0, 0) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn shelf_overflow_is_discarded_and_logged() {
        let spec = tiny_spec();
        let mut env = Env::new_infinite(&spec);
        let desired = vec![vec![0.9, 0.0], vec![0.0, 0.0]];
        let demand = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let out = env.step(&desired, &demand).unwrap();
        // The request passes through untouched (the truck has room), but
        // only 0.5 of shelf space exists; the rest is thrown away.
        assert!((out.requested[0][0] - 0.9).abs() < 1e-12);
        assert!((out.end_inventory[0][0] - 1.0).abs() < 1e-12);
        assert!((out.shelf_discard[0][0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn truck_clip_examples() {
        let product = |v: f64| ProductSpec {
            unit_volume: v,
            shelf_life: 10,
            fixed_cost: 0.0,
            variable_cost: 0.0,
        };
        let store = |v_max: f64| StoreSpec {
            shelf_capacity: 1.0,
            truck_volume: v_max,
            warehouse_share: 0.5,
            mean_sales_fraction: 0.02,
        };
        // Exactly at capacity.
        let (u, rho) = clip_to_truck(&[1.0], &[product(10.0)], &store(10.0)).unwrap();
        assert_eq!(u, vec![1.0]);
        assert_eq!(rho, 1.0);
        // Twice over capacity: everything halves.
        let (u, rho) =
            clip_to_truck(&[1.0, 1.0], &[product(10.0), product(10.0)], &store(10.0)).unwrap();
        assert!((rho - 2.0).abs() < 1e-12);
        assert!((u[0] - 0.5).abs() < 1e-12 && (u[1] - 0.5).abs() < 1e-12);
        // Mixed volumes: total 5 against 4.
        let (u, rho) =
            clip_to_truck(&[0.2, 0.4], &[product(5.0), product(10.0)], &store(4.0)).unwrap();
        assert!((rho - 1.25).abs() < 1e-12);
        assert!((u[0] - 0.2 / 1.25).abs() < 1e-12);
        assert!((u[1] - 0.4 / 1.25).abs() < 1e-12);
        // Post-clip volume is within the truck.
        let volume = 5.0 * u[0] + 10.0 * u[1];
        assert!(volume <= 4.0 * (1.0 + 1e-9));
        // Length mismatch is rejected.
        assert!(clip_to_truck(&[0.1], &[product(1.0), product(1.0)], &store(1.0)).is_err());
    }

    #[test]
    fn predicted_wastage_nets_forecast_sales() {
        let mut spec = tiny_spec();
        spec.products[0].shelf_life = 2;
        let mut env = Env::new_infinite(&spec);
        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        // After one aging, the initial 0.5 sits in the oldest bucket.
        env.step(&zero, &zero).unwrap();
        let q = env.predicted_store_wastage(0, &[0.1, 0.0]);
        assert!((q[0] - 0.4).abs() < 1e-12);
        // Forecast larger than the expiring stock predicts no waste.
        let q = env.predicted_store_wastage(0, &[0.9, 0.0]);
        assert_eq!(q[0], 0.0);
        // Product 1 has a long shelf life: nothing near expiry.
        assert_eq!(q[1], 0.0);
    }

    #[test]
    fn truck_clipping_scales_uniformly() {
        let mut spec = tiny_spec();
        spec.stores[0].truck_volume =
            0.1 * (spec.products[0].unit_volume + spec.products[1].unit_volume);
        let mut env = Env::new_infinite(&spec);
        let desired = vec![vec![0.2, 0.2], vec![0.0, 0.0]];
        let demand = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let out = env.step(&desired, &demand).unwrap();
        // Requested volume is 2x the truck, so rho == 2 and both products
        // shrink by the same factor.
        assert!((out.rho[0] - 2.0).abs() < 1e-12);
        assert!((out.requested[0][0] - 0.1).abs() < 1e-12);
        assert!((out.requested[0][1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn warehouse_rations_proportionally() {
        let mut spec = tiny_spec();
        spec.initial_inventory = 0.0;
        let mut env = Env::new(&spec);
        // Leave 0.0 in the warehouse for product 1 and deliver nothing.
        let cycle = env.begin_cycle().unwrap();
        assert!(cycle.fill.iter().all(|f| f.abs() < 1e-12));
        env.place_order(&[false, false]).unwrap();
        let desired = vec![vec![0.4, 0.0], vec![0.4, 0.0]];
        let demand = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let out = env.step(&desired, &demand).unwrap();
        // Empty warehouse refuses everything.
        assert!(out.supplied[0][0].abs() < 1e-12);
        let a0 = spec.stores[0].warehouse_share;
        let a1 = spec.stores[1].warehouse_share;
        assert!((out.refused[0] - (a0 * 0.4 + a1 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn rationing_splits_by_share_weighted_demand() {
        let mut spec = tiny_spec();
        spec.initial_inventory = 0.2;
        let mut env = Env::new(&spec);
        let start = env.begin_cycle().unwrap();
        assert!((start.fill[0] - 0.2).abs() < 1e-12);
        env.place_order(&[false, false]).unwrap();
        let desired = vec![vec![0.5, 0.0], vec![0.5, 0.0]];
        let demand = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let out = env.step(&desired, &demand).unwrap();
        let a0 = spec.stores[0].warehouse_share;
        let a1 = spec.stores[1].warehouse_share;
        // Both stores ask for 0.5; the warehouse holds 0.2 in its units.
        let wanted = (a0 + a1) * 0.5;
        assert!(wanted > 0.2);
        let scale = 0.2 / wanted;
        assert!((out.supplied[0][0] - 0.5 * scale).abs() < 1e-12);
        assert!((out.supplied[1][0] - 0.5 * scale).abs() < 1e-12);
        // The shelf is exactly emptied.
        assert!(env.warehouse_fill()[0].abs() < 1e-12);
        assert!((out.refused[0] - (wanted - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn vendor_order_arrives_one_cycle_later() {
        let mut spec = tiny_spec();
        spec.initial_inventory = 0.0;
        let mut env = Env::new(&spec);
        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];

        let start = env.begin_cycle().unwrap();
        assert!(start.fill[0].abs() < 1e-12);
        let order = env.place_order(&[true, false]).unwrap();
        assert!((order.amounts[0] - 1.0).abs() < 1e-12);
        let p = &spec.products[0];
        assert!((order.costs[0] - (p.fixed_cost + p.variable_cost)).abs() < 1e-12);

        for _ in 0..spec.cycle {
            env.step(&zero, &zero).unwrap();
        }
        // The order is only on the shelf after the next boundary.
        assert!(env.warehouse_fill()[0].abs() < 1e-12);
        let next = env.begin_cycle().unwrap();
        assert!((next.delivered[0] - 1.0).abs() < 1e-12);
        assert!((next.fill[0] - 1.0).abs() < 1e-12);
        assert!(next.fill[1].abs() < 1e-12);
    }

    #[test]
    fn schedule_violations_are_rejected() {
        let spec = tiny_spec();
        let mut env = Env::new(&spec);
        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        // Stepping before the first begin_cycle is off schedule.
        assert!(env.step(&zero, &zero).is_err());
        env.begin_cycle().unwrap();
        // Stepping with the order still pending is off schedule too.
        assert!(env.step(&zero, &zero).is_err());
        env.place_order(&[false, false]).unwrap();
        env.step(&zero, &zero).unwrap();
        // Mid-cycle begin_cycle is rejected.
        assert!(env.begin_cycle().is_err());
        assert!(env.place_order(&[false, false]).is_err());
    }

    #[test]
    fn store_stock_spoils_after_shelf_life() {
        let mut spec = tiny_spec();
        spec.products[0].shelf_life = 2;
        let mut env = Env::new_infinite(&spec);
        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let out1 = env.step(&zero, &zero).unwrap();
        assert_eq!(out1.store_waste[0][0], 0.0);
        let out2 = env.step(&zero, &zero).unwrap();
        // The initial 0.5 expires exactly at its shelf life.
        assert!((out2.store_waste[0][0] - 0.5).abs() < 1e-12);
        assert!(env.store_level(0, 0).abs() < 1e-12);
    }

    #[test]
    fn conservation_holds_per_store_product() {
        let spec = tiny_spec();
        let mut env = Env::new_infinite(&spec);
        let desired = vec![vec![0.3, 0.1], vec![0.2, 0.4]];
        let demand = vec![vec![0.25, 0.05], vec![0.1, 0.2]];
        let mut supplied = 0.0;
        let mut sold = 0.0;
        let mut waste = 0.0;
        let mut discard = 0.0;
        for _ in 0..10 {
            let out = env.step(&desired, &demand).unwrap();
            supplied += out.supplied[0][0];
            sold += out.sold[0][0];
            waste += out.store_waste[0][0];
            discard += out.shelf_discard[0][0];
        }
        let end = env.store_level(0, 0);
        let balance = spec.initial_inventory + supplied - sold - waste - discard - end;
        assert!(balance.abs() < 1e-12, "balance {balance}");
    }
}
