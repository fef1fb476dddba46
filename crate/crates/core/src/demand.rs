//! Synthetic demand and forecast traces with controllable forecast accuracy.
//!
//! Demand is built per product from a seeded stream: a lognormal base rate,
//! weekday and time-of-day seasonality, and multiplicative lognormal noise,
//! then rescaled so each store's mean per-period sales fraction matches its
//! target exactly. Forecasts mix the realized demand with independent
//! moment-matched noise so the product-level Pearson correlation lands on a
//! requested value.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::instance::InstanceSpec;

/// A realized-demand or forecast trace over the full horizon, indexed
/// `[period][store][product]`, values normalized to the store shelf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub periods: usize,
    pub stores: usize,
    pub products: usize,
    /// Periods below this index form the training split.
    pub train_periods: usize,
    /// Product-level Pearson correlation against the demand trace this
    /// forecast was generated from; `None` for demand traces.
    pub achieved_r: Option<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl Trace {
    fn zeros(periods: usize, stores: usize, products: usize, train_periods: usize) -> Self {
        Trace {
            periods,
            stores,
            products,
            train_periods,
            achieved_r: None,
            values: vec![vec![vec![0.0; products]; stores]; periods],
        }
    }

    pub fn get(&self, t: usize, store: usize, product: usize) -> f64 {
        self.values[t][store][product]
    }

    /// One period as the `[store][product]` grid the simulator consumes.
    pub fn period_grid(&self, t: usize) -> &[Vec<f64>] {
        &self.values[t]
    }

    fn check_shape(&self) -> Result<()> {
        if self.values.len() != self.periods {
            return Err(CoreError::Dimension {
                expected: self.periods,
                got: self.values.len(),
                context: "trace periods".into(),
            });
        }
        for grid in &self.values {
            if grid.len() != self.stores {
                return Err(CoreError::Dimension {
                    expected: self.stores,
                    got: grid.len(),
                    context: "trace store rows".into(),
                });
            }
            for row in grid {
                if row.len() != self.products {
                    return Err(CoreError::Dimension {
                        expected: self.products,
                        got: row.len(),
                        context: "trace product columns".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Derive an independent seeded stream for one generator substream.
pub(crate) fn stream(seed: u64, salt: u64, a: usize, b: usize) -> ChaCha12Rng {
    let mixed = seed
        ^ salt
        ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul((a as u64).wrapping_add(1))
        ^ 0xc2b2_ae3d_27d4_eb4fu64.wrapping_mul((b as u64).wrapping_add(1));
    ChaCha12Rng::seed_from_u64(mixed)
}

const DEMAND_SALT: u64 = 0x64656d616e64; // "demand"
const FORECAST_SALT: u64 = 0x666f7265; // "fore"

/// Mean-corrected lognormal multiplier: E[exp(sigma z - sigma^2/2)] = 1.
fn lognormal_unit(rng: &mut ChaCha12Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

/// Generate the realized demand trace for an instance. Deterministic per
/// (spec, seed); each product consumes its own stream, so product lists that
/// nest across instance sizes see the same underlying draws.
pub fn generate_demand(spec: &InstanceSpec, seed: u64) -> Trace {
    let periods = spec.horizon;
    let stores = spec.num_stores();
    let products = spec.num_products();
    let mut trace = Trace::zeros(periods, stores, products, spec.train_periods);

    let dm = &spec.demand;
    for i in 0..products {
        let mut rng = stream(seed, DEMAND_SALT, i, 0);
        let base = lognormal_unit(&mut rng, dm.product_spread);
        for t in 0..periods {
            let day = (t / spec.cycle) % 7;
            let season = dm.weekday_profile[day] * dm.time_of_day_profile[t % spec.cycle];
            for grid in trace.values[t].iter_mut() {
                grid[i] = base * season * lognormal_unit(&mut rng, dm.noise_sigma);
            }
        }
    }

    // Rescale each store so its mean per-period sales fraction hits the
    // target exactly, then clamp into the normalized range.
    for j in 0..stores {
        let target = spec.stores[j].mean_sales_fraction;
        let mut sum = 0.0;
        for t in 0..periods {
            for i in 0..products {
                sum += trace.values[t][j][i];
            }
        }
        let mean = sum / (periods * products) as f64;
        let scale = if mean > 0.0 { target / mean } else { 0.0 };
        for t in 0..periods {
            for i in 0..products {
                trace.values[t][j][i] = (trace.values[t][j][i] * scale).clamp(0.0, 1.0);
            }
        }
    }
    trace
}

/// Generate a forecast trace for `demand` with product-level Pearson
/// correlation close to `target_r`. The forecast is a convex mix of the
/// realized series with independent lognormal noise matched to each
/// (store, product) series' mean and variance; the mixing weight
/// m = r / (r + sqrt(1 - r^2)) yields correlation r for variance-matched
/// noise.
pub fn generate_forecast(demand: &Trace, target_r: f64, seed: u64) -> Result<Trace> {
    if !(0.0..=1.0).contains(&target_r) {
        return Err(CoreError::InvalidArgument(format!(
            "target correlation {target_r} outside [0, 1]"
        )));
    }
    let m = if target_r >= 1.0 {
        1.0
    } else {
        target_r / (target_r + (1.0 - target_r * target_r).sqrt())
    };

    let mut forecast = demand.clone();
    for j in 0..demand.stores {
        for i in 0..demand.products {
            let series: Vec<f64> = (0..demand.periods).map(|t| demand.get(t, j, i)).collect();
            let n = series.len() as f64;
            let mean = series.iter().sum::<f64>() / n;
            let var = series.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
            let mut rng = stream(seed, FORECAST_SALT, j, i);
            for t in 0..demand.periods {
                let noise = if mean > 0.0 && var > 0.0 {
                    // Lognormal with the same mean and variance as the series.
                    let sigma2 = (1.0 + var / (mean * mean)).ln();
                    let mu = mean.ln() - 0.5 * sigma2;
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (mu + sigma2.sqrt() * z).exp()
                } else {
                    mean
                };
                let value = m * series[t] + (1.0 - m) * noise;
                forecast.values[t][j][i] = value.max(0.0);
            }
        }
    }
    forecast.achieved_r = Some(product_level_pearson(demand, &forecast)?);
    Ok(forecast)
}

/// Pearson correlation of two equal-length series; `None` when either has
/// zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// Mean over (store, product) pairs of the per-series Pearson correlation,
/// skipping degenerate constant series.
pub fn product_level_pearson(a: &Trace, b: &Trace) -> Result<f64> {
    if a.periods != b.periods || a.stores != b.stores || a.products != b.products {
        return Err(CoreError::Dimension {
            expected: a.periods * a.stores * a.products,
            got: b.periods * b.stores * b.products,
            context: "trace pair shapes".into(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..a.stores {
        for i in 0..a.products {
            let xs: Vec<f64> = (0..a.periods).map(|t| a.get(t, j, i)).collect();
            let ys: Vec<f64> = (0..b.periods).map(|t| b.get(t, j, i)).collect();
            if let Some(r) = pearson(&xs, &ys) {
                total += r;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(CoreError::InvalidArgument(
            "no product series with positive variance".into(),
        ));
    }
    Ok(total / count as f64)
}

/// Share-weighted forecast demand per product over `[t0, t1)`, clamped to
/// one warehouse shelf.
pub fn aggregate_store_demand(
    forecast: &Trace,
    t0: usize,
    t1: usize,
    shares: &[f64],
) -> Result<Vec<f64>> {
    if t0 >= t1 || t1 > forecast.periods {
        return Err(CoreError::InvalidArgument(format!(
            "aggregation window [{t0}, {t1}) out of range (horizon {})",
            forecast.periods
        )));
    }
    if shares.len() != forecast.stores {
        return Err(CoreError::Dimension {
            expected: forecast.stores,
            got: shares.len(),
            context: "store shares".into(),
        });
    }
    let mut agg = vec![0.0; forecast.products];
    for t in t0..t1 {
        for (j, &a) in shares.iter().enumerate() {
            for (i, v) in agg.iter_mut().enumerate() {
                *v += a * forecast.get(t, j, i);
            }
        }
    }
    for v in &mut agg {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(agg)
}

/// Write a trace as CSV: a `#` metadata line with the dimensions, a column
/// header, then one row per (t, store, product). Values use the shortest
/// representation that round-trips exactly.
pub fn save_trace(trace: &Trace, path: &Path) -> Result<()> {
    trace.check_shape()?;
    let mut out = String::new();
    let r_meta = match trace.achieved_r {
        Some(r) => format!("{r}"),
        None => "NA".into(),
    };
    out.push_str(&format!(
        "# periods={} stores={} products={} train_periods={} achieved_r={}\n",
        trace.periods, trace.stores, trace.products, trace.train_periods, r_meta
    ));
    out.push_str("t,store,product,value\n");
    for t in 0..trace.periods {
        for j in 0..trace.stores {
            for i in 0..trace.products {
                out.push_str(&format!("{t},{j},{i},{}\n", trace.get(t, j, i)));
            }
        }
    }
    fs::write(path, out).map_err(|e| CoreError::io(path, e))
}

/// Read a trace written by [`save_trace`]. Errors carry 1-based line
/// numbers.
pub fn load_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, meta) = lines.next().ok_or(CoreError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    if !meta.starts_with('#') {
        return Err(CoreError::Parse {
            line: 1,
            message: "expected '#' metadata line".into(),
        });
    }
    let mut periods = None;
    let mut stores = None;
    let mut products = None;
    let mut train_periods = None;
    let mut achieved_r = None;
    for field in meta.trim_start_matches('#').split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| CoreError::Parse {
            line: 1,
            message: format!("metadata field '{field}' is not key=value"),
        })?;
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| CoreError::Parse {
                line: 1,
                message: format!("metadata {key}={v} is not an integer"),
            })
        };
        match key {
            "periods" => periods = Some(parse_usize(value)?),
            "stores" => stores = Some(parse_usize(value)?),
            "products" => products = Some(parse_usize(value)?),
            "train_periods" => train_periods = Some(parse_usize(value)?),
            "achieved_r" => {
                if value != "NA" {
                    achieved_r = Some(value.parse().map_err(|_| CoreError::Parse {
                        line: 1,
                        message: format!("metadata achieved_r={value} is not a number"),
                    })?);
                }
            }
            _ => {}
        }
    }
    let missing = |name: &str| CoreError::Parse {
        line: 1,
        message: format!("metadata is missing {name}"),
    };
    let periods = periods.ok_or_else(|| missing("periods"))?;
    let stores = stores.ok_or_else(|| missing("stores"))?;
    let products = products.ok_or_else(|| missing("products"))?;
    let train_periods = train_periods.ok_or_else(|| missing("train_periods"))?;

    let (header_idx, header) = lines.next().ok_or(CoreError::Parse {
        line: 2,
        message: "missing column header".into(),
    })?;
    if header.trim() != "t,store,product,value" {
        return Err(CoreError::Parse {
            line: header_idx + 1,
            message: format!("unexpected header '{header}'"),
        });
    }

    let mut trace = Trace::zeros(periods, stores, products, train_periods);
    trace.achieved_r = achieved_r;
    let mut rows = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(CoreError::Parse {
                line: lineno,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let parse_idx = |v: &str, what: &str, max: usize| -> Result<usize> {
            let n: usize = v.parse().map_err(|_| CoreError::Parse {
                line: lineno,
                message: format!("{what} '{v}' is not an integer"),
            })?;
            if n >= max {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: format!("{what} {n} out of range (max {})", max - 1),
                });
            }
            Ok(n)
        };
        let t = parse_idx(cols[0], "period", periods)?;
        let j = parse_idx(cols[1], "store", stores)?;
        let i = parse_idx(cols[2], "product", products)?;
        let value: f64 = cols[3].parse().map_err(|_| CoreError::Parse {
            line: lineno,
            message: format!("value '{}' is not a number", cols[3]),
        })?;
        trace.values[t][j][i] = value;
        rows += 1;
    }
    let expected = periods * stores * products;
    if rows != expected {
        return Err(CoreError::Parse {
            line: text.lines().count(),
            message: format!("expected {expected} data rows, found {rows}"),
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::InstanceSpec;

    #[test]
    fn demand_is_deterministic_per_seed() {
        let spec = InstanceSpec::desk(11);
        let a = generate_demand(&spec, 5);
        let b = generate_demand(&spec, 5);
        assert_eq!(a, b);
        let c = generate_demand(&spec, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn demand_is_nonnegative_and_calibrated() {
        let spec = InstanceSpec::desk(11);
        let trace = generate_demand(&spec, 5);
        for t in 0..trace.periods {
            for j in 0..trace.stores {
                for i in 0..trace.products {
                    assert!(trace.get(t, j, i) >= 0.0);
                }
            }
        }
        for j in 0..trace.stores {
            let mut sum = 0.0;
            for t in 0..trace.periods {
                for i in 0..trace.products {
                    sum += trace.get(t, j, i);
                }
            }
            let mean = sum / (trace.periods * trace.products) as f64;
            let target = spec.stores[j].mean_sales_fraction;
            assert!(
                (mean - target).abs() < 2e-3,
                "store {j}: mean {mean} vs target {target}"
            );
        }
    }

    #[test]
    fn zero_sales_target_gives_zero_trace() {
        let mut spec = InstanceSpec::desk(11);
        spec.stores[0].mean_sales_fraction = 0.0;
        let trace = generate_demand(&spec, 5);
        for t in 0..trace.periods {
            for i in 0..trace.products {
                assert_eq!(trace.get(t, 0, i), 0.0);
            }
        }
    }

    #[test]
    fn perfect_forecast_equals_demand() {
        let spec = InstanceSpec::desk(3);
        let demand = generate_demand(&spec, 3);
        let forecast = generate_forecast(&demand, 1.0, 99).unwrap();
        for t in 0..demand.periods {
            assert_eq!(demand.values[t], forecast.values[t]);
        }
        assert!((forecast.achieved_r.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forecast_hits_target_correlation() {
        let spec = InstanceSpec::desk(3);
        let demand = generate_demand(&spec, 3);
        for target in [0.0, 0.6, 0.95] {
            let forecast = generate_forecast(&demand, target, 17).unwrap();
            let r = forecast.achieved_r.unwrap();
            assert!(
                (r - target).abs() <= 0.05,
                "target {target}, achieved {r}"
            );
        }
        assert!(generate_forecast(&demand, 1.5, 0).is_err());
        assert!(generate_forecast(&demand, -0.1, 0).is_err());
    }

    #[test]
    fn aggregation_is_share_weighted_and_clamped() {
        let mut trace = Trace::zeros(8, 1, 1, 4);
        for t in 0..8 {
            trace.values[t][0][0] = 0.1;
        }
        let agg = aggregate_store_demand(&trace, 0, 4, &[0.5]).unwrap();
        assert!((agg[0] - 0.2).abs() < 1e-12);

        let zeros = Trace::zeros(8, 1, 1, 4);
        let agg = aggregate_store_demand(&zeros, 0, 8, &[0.5]).unwrap();
        assert_eq!(agg[0], 0.0);

        let mut big = Trace::zeros(8, 1, 1, 4);
        for t in 0..8 {
            big.values[t][0][0] = 0.9;
        }
        let agg = aggregate_store_demand(&big, 0, 8, &[1.0]).unwrap();
        assert_eq!(agg[0], 1.0);

        assert!(aggregate_store_demand(&trace, 4, 4, &[0.5]).is_err());
        assert!(aggregate_store_demand(&trace, 0, 9, &[0.5]).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let spec = InstanceSpec::synthetic(4, 2, 12, 8, 21);
        let demand = generate_demand(&spec, 21);
        let forecast = generate_forecast(&demand, 0.6, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for trace in [&demand, &forecast] {
            let path = dir.path().join("trace.csv");
            save_trace(trace, &path).unwrap();
            let back = load_trace(&path).unwrap();
            assert_eq!(trace, &back);
        }
    }

    #[test]
    fn malformed_csv_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            load_trace(&path),
            Err(CoreError::Parse { line: 1, .. })
        ));

        std::fs::write(
            &path,
            "# periods=1 stores=1 products=1 train_periods=0 achieved_r=NA\n\
             t,store,product,value\n\
             0,0,0\n",
        )
        .unwrap();
        match load_trace(&path) {
            Err(CoreError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("4 columns"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }

        std::fs::write(
            &path,
            "# periods=1 stores=1 products=1 train_periods=0 achieved_r=NA\n\
             t,store,product,value\n\
             0,0,0,not-a-number\n",
        )
        .unwrap();
        match load_trace(&path) {
            Err(CoreError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("not a number"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }
}
