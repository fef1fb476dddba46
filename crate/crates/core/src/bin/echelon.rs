//! Command-line surface for the two-echelon replenishment stack: data
//! generation, the two training stages, evaluation tables, capacity
//! sweeps, policy heatmaps, transfer experiments, and per-period reward
//! component dumps. Every command works inside a run directory holding
//! `config.json`, `data/`, `checkpoints/`, `reports/`, and `logs/`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use echelon_core::agents::{StoreAgent, WarehouseAgent};
use echelon_core::baselines::FixedPolicy;
use echelon_core::demand::{generate_demand, generate_forecast, load_trace, save_trace, Trace};
use echelon_core::eval::{
    capacity_sweep, evaluate, heatmap_probe, heatmap_to_csv, reports_to_csv, sweep_to_csv,
    transfer_experiment, EvalReport, TransferKind,
};
use echelon_core::instance::InstanceSpec;
use echelon_core::nn::{load_checkpoint, save_checkpoint};
use echelon_core::policy::{StorePolicy, WarehousePolicy};
use echelon_core::trainer::{run_episode, train_stores, train_warehouse, TrainConfig};

/// Everything one run needs, stored as `config.json` in the run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    instance: InstanceSpec,
    /// Target Pearson correlation between forecast and realized sales.
    forecast_r: f64,
    /// Order-up-to level for the store heuristic.
    heuristic_target: f64,
    store_train: TrainConfig,
    warehouse_train: TrainConfig,
    eval_seed: u64,
}

impl RunConfig {
    fn desk(seed: u64) -> Self {
        RunConfig {
            instance: InstanceSpec::desk(seed),
            forecast_r: 0.9,
            heuristic_target: 0.25,
            store_train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            warehouse_train: TrainConfig {
                seed: seed ^ 0x5748, // distinct warehouse stream
                ..TrainConfig::default()
            },
            eval_seed: seed ^ 0x4556,
        }
    }
}

/// Checkpoint payload with enough metadata to reject mismatched reuse.
#[derive(Serialize, Deserialize)]
struct StoreCheckpoint {
    spec_hash: String,
    agent: StoreAgent,
}

#[derive(Serialize, Deserialize)]
struct WarehouseCheckpoint {
    spec_hash: String,
    agent: WarehouseAgent,
}

#[derive(Parser)]
#[command(name = "echelon", about = "Two-echelon replenishment simulator and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a run directory with config, instance, and trace files.
    GenData {
        /// Run directory to create and populate.
        #[arg(long)]
        run_dir: PathBuf,
        /// JSON config to copy; omitted means the desk-scale default.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the desk-scale default config.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one agent per store against an infinite warehouse.
    TrainStores {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Train the warehouse agent against the frozen store agents.
    TrainWarehouse {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Score policy pairs on the test split and write a summary table.
    Evaluate {
        #[arg(long)]
        run_dir: PathBuf,
        /// Comma-separated policy names: rl, heuristic, clairvoyant,
        /// stores_rl, stores_heuristic, stores_clairvoyant, all_ones,
        /// all_zeros, alternate, random.
        #[arg(long, value_delimiter = ',', default_value = "rl,heuristic,clairvoyant,all_ones,all_zeros,alternate,random")]
        policies: Vec<String>,
    },
    /// Score the store heuristics across truck volumes.
    Sweep {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        store: usize,
        /// Comma-separated truck volumes; omitted means a spread around
        /// the configured volume.
        #[arg(long, value_delimiter = ',')]
        volumes: Option<Vec<f64>>,
    },
    /// Dump the greedy action level over an inventory x forecast grid.
    Heatmap {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        store: usize,
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Evaluate the frozen agents on a grown instance.
    Transfer {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: TransferArg,
        /// Product count for the more-products transfer.
        #[arg(long)]
        products: Option<usize>,
    },
    /// Write per-period reward components for one policy pair.
    Components {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "rl")]
        policy: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransferArg {
    MoreProducts,
    AddedStore,
}

fn main() {
    let cli = Cli::parse();
    let stage = match &cli.command {
        Command::GenData { .. } => "gen-data",
        Command::TrainStores { .. } => "train-stores",
        Command::TrainWarehouse { .. } => "train-warehouse",
        Command::Evaluate { .. } => "evaluate",
        Command::Sweep { .. } => "sweep",
        Command::Heatmap { .. } => "heatmap",
        Command::Transfer { .. } => "transfer",
        Command::Components { .. } => "components",
    };
    if let Err(err) = run(cli.command) {
        eprintln!("error in stage {stage}: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { run_dir, config, seed } => gen_data(&run_dir, config.as_deref(), seed),
        Command::TrainStores { run_dir } => cmd_train_stores(&run_dir),
        Command::TrainWarehouse { run_dir } => cmd_train_warehouse(&run_dir),
        Command::Evaluate { run_dir, policies } => cmd_evaluate(&run_dir, &policies),
        Command::Sweep {
            run_dir,
            store,
            volumes,
        } => cmd_sweep(&run_dir, store, volumes),
        Command::Heatmap {
            run_dir,
            store,
            points,
        } => cmd_heatmap(&run_dir, store, points),
        Command::Transfer {
            run_dir,
            kind,
            products,
        } => cmd_transfer(&run_dir, kind, products),
        Command::Components { run_dir, policy } => cmd_components(&run_dir, &policy),
    }
}

fn load_config(run_dir: &Path) -> Result<RunConfig> {
    let path = run_dir.join("config.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("missing config {}; run gen-data first", path.display()))?;
    let config: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))?;
    config.instance.validate().context("invalid instance in config")?;
    config.store_train.validate().context("invalid store_train in config")?;
    config
        .warehouse_train
        .validate()
        .context("invalid warehouse_train in config")?;
    Ok(config)
}

fn load_traces(run_dir: &Path) -> Result<(Trace, Trace)> {
    let demand = load_trace(&run_dir.join("data/demand.csv"))
        .context("missing or unreadable data/demand.csv; run gen-data first")?;
    let forecast = load_trace(&run_dir.join("data/forecast.csv"))
        .context("missing or unreadable data/forecast.csv; run gen-data first")?;
    Ok((demand, forecast))
}

fn load_store_agents(run_dir: &Path, spec: &InstanceSpec) -> Result<Vec<StoreAgent>> {
    let mut agents = Vec::with_capacity(spec.num_stores());
    for j in 0..spec.num_stores() {
        let path = run_dir.join(format!("checkpoints/store{j}.json"));
        if !path.exists() {
            bail!(
                "missing checkpoint {}; run train-stores first",
                path.display()
            );
        }
        let ck: StoreCheckpoint = load_checkpoint(&path)
            .with_context(|| format!("unreadable checkpoint {}", path.display()))?;
        if ck.spec_hash != spec.hash() {
            bail!(
                "checkpoint {} was trained on a different instance (hash {})",
                path.display(),
                ck.spec_hash
            );
        }
        agents.push(ck.agent);
    }
    Ok(agents)
}

fn load_warehouse_agent(run_dir: &Path, spec: &InstanceSpec) -> Result<WarehouseAgent> {
    let path = run_dir.join("checkpoints/warehouse.json");
    if !path.exists() {
        bail!(
            "missing checkpoint {}; run train-warehouse first",
            path.display()
        );
    }
    let ck: WarehouseCheckpoint = load_checkpoint(&path)
        .with_context(|| format!("unreadable checkpoint {}", path.display()))?;
    if ck.spec_hash != spec.hash() {
        bail!(
            "checkpoint {} was trained on a different instance (hash {})",
            path.display(),
            ck.spec_hash
        );
    }
    Ok(ck.agent)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn gen_data(run_dir: &Path, config_path: Option<&Path>, seed: u64) -> Result<()> {
    let config = match config_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        }
        None => RunConfig::desk(seed),
    };
    config.instance.validate().context("invalid instance in config")?;
    for sub in ["data", "checkpoints", "reports", "logs"] {
        fs::create_dir_all(run_dir.join(sub))
            .with_context(|| format!("cannot create {}", run_dir.join(sub).display()))?;
    }
    write(
        &run_dir.join("config.json"),
        &serde_json::to_string_pretty(&config)?,
    )?;
    write(&run_dir.join("data/instance.json"), &config.instance.to_json()?)?;

    let demand = generate_demand(&config.instance, config.instance.seed);
    let forecast = generate_forecast(&demand, config.forecast_r, config.instance.seed)?;
    save_trace(&demand, &run_dir.join("data/demand.csv"))?;
    save_trace(&forecast, &run_dir.join("data/forecast.csv"))?;
    println!(
        "generated instance {} with {} products, {} stores, {} periods (forecast r = {:.3})",
        config.instance.hash(),
        config.instance.num_products(),
        config.instance.num_stores(),
        config.instance.horizon,
        forecast.achieved_r.unwrap_or(f64::NAN),
    );
    Ok(())
}

fn cmd_train_stores(run_dir: &Path) -> Result<()> {
    let config = load_config(run_dir)?;
    let (demand, forecast) = load_traces(run_dir)?;
    let out = train_stores(&config.instance, &demand, &forecast, &config.store_train)?;
    let hash = config.instance.hash();
    for agent in &out.agents {
        let path = run_dir.join(format!("checkpoints/store{}.json", agent.store));
        save_checkpoint(
            &StoreCheckpoint {
                spec_hash: hash.clone(),
                agent: agent.clone(),
            },
            &path,
        )?;
    }
    out.log.save(&run_dir.join("logs/train_stores.csv"))?;
    for (agent, at) in &out.log.converged_at {
        match at {
            Some(e) => println!("{agent} converged at episode {e}"),
            None => println!("{agent} did not converge within the episode budget"),
        }
    }
    Ok(())
}

fn cmd_train_warehouse(run_dir: &Path) -> Result<()> {
    let config = load_config(run_dir)?;
    let (demand, forecast) = load_traces(run_dir)?;
    let agents = load_store_agents(run_dir, &config.instance)?;
    let out = train_warehouse(
        &config.instance,
        &demand,
        &forecast,
        &agents,
        &config.warehouse_train,
    )?;
    save_checkpoint(
        &WarehouseCheckpoint {
            spec_hash: config.instance.hash(),
            agent: out.agent,
        },
        &run_dir.join("checkpoints/warehouse.json"),
    )?;
    out.log.save(&run_dir.join("logs/train_warehouse.csv"))?;
    for (agent, at) in &out.log.converged_at {
        match at {
            Some(e) => println!("{agent} converged at episode {e}"),
            None => println!("{agent} did not converge within the episode budget"),
        }
    }
    Ok(())
}

/// Resolve one policy name into a policy pair, loading checkpoints on
/// demand.
fn policy_pair(
    name: &str,
    run_dir: &Path,
    config: &RunConfig,
) -> Result<(StorePolicy, Option<WarehousePolicy>)> {
    let target = config.heuristic_target;
    let rl_stores = || -> Result<StorePolicy> {
        Ok(StorePolicy::agents(load_store_agents(
            run_dir,
            &config.instance,
        )?))
    };
    Ok(match name {
        "rl" => (
            rl_stores()?,
            Some(WarehousePolicy::agent(load_warehouse_agent(
                run_dir,
                &config.instance,
            )?)),
        ),
        "heuristic" => (
            StorePolicy::heuristic(target),
            Some(WarehousePolicy::heuristic()),
        ),
        "clairvoyant" => (
            StorePolicy::clairvoyant(target),
            Some(WarehousePolicy::clairvoyant()),
        ),
        "stores_rl" => (rl_stores()?, None),
        "stores_heuristic" => (StorePolicy::heuristic(target), None),
        "stores_clairvoyant" => (StorePolicy::clairvoyant(target), None),
        "all_ones" | "all_zeros" | "alternate" | "random" => {
            let kind: FixedPolicy = name.parse()?;
            (rl_stores()?, Some(WarehousePolicy::fixed(kind)))
        }
        other => bail!("unknown policy '{other}'"),
    })
}

fn cmd_evaluate(run_dir: &Path, policies: &[String]) -> Result<()> {
    let config = load_config(run_dir)?;
    let (demand, forecast) = load_traces(run_dir)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for name in policies {
        let (store_policy, warehouse_policy) = policy_pair(name, run_dir, &config)?;
        let report = evaluate(
            &config.instance,
            &demand,
            &forecast,
            &store_policy,
            warehouse_policy.as_ref(),
            config.eval_seed,
        )
        .with_context(|| format!("evaluating policy '{name}'"))?;
        println!(
            "{name}: warehouse {} stores {:.4}",
            report
                .warehouse
                .as_ref()
                .map_or("NA".to_string(), |w| format!("{:.4}", w.mean_reward)),
            report.mean_store_reward,
        );
        reports.push(report);
    }
    write(&run_dir.join("reports/evaluate.csv"), &reports_to_csv(&reports))?;
    write(
        &run_dir.join("reports/evaluate.json"),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    Ok(())
}

fn cmd_sweep(run_dir: &Path, store: usize, volumes: Option<Vec<f64>>) -> Result<()> {
    let config = load_config(run_dir)?;
    let (demand, forecast) = load_traces(run_dir)?;
    let volumes = volumes.unwrap_or_else(|| {
        let base = config.instance.stores[store].truck_volume;
        [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0]
            .iter()
            .map(|f| f * base)
            .collect()
    });
    let rows = capacity_sweep(
        &config.instance,
        &demand,
        &forecast,
        store,
        &volumes,
        config.heuristic_target,
        config.eval_seed,
    )?;
    write(&run_dir.join("reports/sweep.csv"), &sweep_to_csv(&rows))?;
    println!("swept {} volumes for store {store}", volumes.len());
    Ok(())
}

fn cmd_heatmap(run_dir: &Path, store: usize, points: usize) -> Result<()> {
    let config = load_config(run_dir)?;
    let (_, forecast) = load_traces(run_dir)?;
    let agents = load_store_agents(run_dir, &config.instance)?;
    if store >= agents.len() {
        bail!("store {store} out of range");
    }
    let (inventory_grid, forecast_grid, grid) =
        heatmap_probe(&config.instance, &forecast, &agents[store], points)?;
    write(
        &run_dir.join(format!("reports/heatmap_store{store}.csv")),
        &heatmap_to_csv(&inventory_grid, &forecast_grid, &grid),
    )?;
    println!("wrote {points}x{points} heatmap for store {store}");
    Ok(())
}

fn cmd_transfer(run_dir: &Path, kind: TransferArg, products: Option<usize>) -> Result<()> {
    let config = load_config(run_dir)?;
    let agents = load_store_agents(run_dir, &config.instance)?;
    let warehouse = load_warehouse_agent(run_dir, &config.instance)?;
    let (kind, label) = match kind {
        TransferArg::MoreProducts => {
            let count = products.unwrap_or(config.instance.num_products() * 2);
            (TransferKind::MoreProducts(count), format!("more_products_{count}"))
        }
        TransferArg::AddedStore => (TransferKind::AddedStore, "added_store".to_string()),
    };
    let out = transfer_experiment(
        &config.instance,
        kind,
        &agents,
        &warehouse,
        config.forecast_r,
        config.heuristic_target,
        config.eval_seed,
    )?;
    let reports = vec![out.rl.clone(), out.heuristic.clone()];
    write(
        &run_dir.join(format!("reports/transfer_{label}.csv")),
        &reports_to_csv(&reports),
    )?;
    write(
        &run_dir.join(format!("reports/transfer_{label}.json")),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    println!(
        "transfer {label}: rl stores {:.4} vs heuristic stores {:.4}",
        out.rl.mean_store_reward, out.heuristic.mean_store_reward
    );
    Ok(())
}

fn cmd_components(run_dir: &Path, policy: &str) -> Result<()> {
    let config = load_config(run_dir)?;
    let (demand, forecast) = load_traces(run_dir)?;
    let (store_policy, warehouse_policy) = policy_pair(policy, run_dir, &config)?;
    let data = run_episode(
        &config.instance,
        &demand,
        &forecast,
        &store_policy,
        warehouse_policy.as_ref(),
        config.instance.horizon,
        config.eval_seed,
    )?;

    let mut stores_csv =
        String::from("period,store,mean_reward,out_of_stock,waste,spread,capacity_penalty,cost\n");
    for row in &data.store_rows {
        for sb in row {
            stores_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                sb.period,
                sb.store,
                sb.mean_reward,
                sb.out_of_stock_fraction,
                sb.waste_mean,
                sb.spread,
                sb.capacity_penalty,
                sb.cost
            ));
        }
    }
    write(
        &run_dir.join(format!("reports/components_{policy}_stores.csv")),
        &stores_csv,
    )?;

    if warehouse_policy.is_some() {
        let mut wh_csv = String::from("period,mean_reward,cost,refused,store_share\n");
        let products = config.instance.num_products() as f64;
        for row in &data.warehouse_rows {
            wh_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.period,
                row.mean_reward,
                row.cost,
                row.refused.iter().sum::<f64>() / products,
                row.store_share.iter().sum::<f64>() / products
            ));
        }
        write(
            &run_dir.join(format!("reports/components_{policy}_warehouse.csv")),
            &wh_csv,
        )?;
    }
    println!("wrote component traces for policy {policy}");
    Ok(())
}
