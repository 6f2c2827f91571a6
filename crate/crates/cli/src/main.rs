use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use bansim_core::channel::{ChannelTable, LinkBudget, NodeId, Posture};
use bansim_core::experiment::{parse_list, run_experiment, ConfigFile, ExperimentSpec};
use bansim_core::strategies::StrategyKind;
use bansim_core::topology::Preprocessing;

/// Parallelism override, read when `--jobs` is not given.
const JOBS_ENV: &str = "BANSIM_JOBS";

/// Broadcast sweeps over a seven-node body area network.
#[derive(Debug, Parser)]
#[command(name = "bansim", version)]
struct Args {
    /// Channel table with per-posture link statistics.
    #[arg(long)]
    table: Option<PathBuf>,
    /// `key = value` file with the same settings; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated postures (walk, weak, run, sit, wear, sleep, lie).
    #[arg(long)]
    postures: Option<String>,
    /// Comma-separated strategies (flooding, plain, pruned, probabilistic, mbp, optflood, clpb).
    #[arg(long)]
    strategies: Option<String>,
    /// Comma-separated sink rates in packets per second.
    #[arg(long)]
    rates: Option<String>,
    /// Comma-separated buffer capacities in frames.
    #[arg(long)]
    buffers: Option<String>,
    /// Seeds per grid point.
    #[arg(long)]
    seeds: Option<u32>,
    /// Packets injected per run; defaults to one second of traffic.
    #[arg(long)]
    messages: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the grid size and exit.
    #[arg(long)]
    dry_run: bool,
    /// Print the pruned graph, paths and slot map of a posture and exit.
    #[arg(long, value_name = "POSTURE")]
    dump_schedule: Option<Posture>,
    /// Sink node id.
    #[arg(long)]
    sink: Option<u8>,
}

fn build_spec(args: &Args) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::full_grid("", "results");
    if let Some(path) = &args.config {
        ConfigFile::load(path)?.apply(&mut spec);
    }
    if let Some(t) = &args.table {
        spec.table = t.clone();
    }
    if let Some(v) = &args.postures {
        spec.postures = parse_list(v).map_err(anyhow::Error::msg).context("--postures")?;
    }
    if let Some(v) = &args.strategies {
        spec.strategies = parse_list::<StrategyKind>(v).map_err(anyhow::Error::msg).context("--strategies")?;
    }
    if let Some(v) = &args.rates {
        spec.rates = parse_list(v).map_err(anyhow::Error::msg).context("--rates")?;
    }
    if let Some(v) = &args.buffers {
        spec.buffers = parse_list(v).map_err(anyhow::Error::msg).context("--buffers")?;
    }
    if let Some(v) = args.seeds {
        spec.seeds = v;
    }
    if let Some(v) = args.messages {
        spec.messages = Some(v);
    }
    if let Some(v) = &args.out {
        spec.out = v.clone();
    }
    if let Some(id) = args.sink {
        spec.base.sink = NodeId::new(id).with_context(|| format!("--sink: no node {id}"))?;
    }
    spec.jobs = match (args.jobs, std::env::var(JOBS_ENV)) {
        (Some(j), _) => Some(j),
        (None, Ok(v)) => Some(v.trim().parse().with_context(|| format!("{JOBS_ENV}={v}"))?),
        (None, Err(_)) => spec.jobs,
    };
    spec.validate()?;
    Ok(spec)
}

fn real_main() -> Result<()> {
    let args = Args::parse();
    let spec = build_spec(&args)?;
    if spec.table.as_os_str().is_empty() {
        bail!("no channel table given (--table or `table =` in --config)");
    }

    if let Some(posture) = args.dump_schedule {
        let table = ChannelTable::load(&spec.table)?;
        let pre = Preprocessing::compute(&table, posture, &LinkBudget::default(), spec.base.sink)?;
        print!("{}", pre.describe());
        return Ok(());
    }

    if args.dry_run {
        println!(
            "{} runs: {} postures x {} strategies x {} rates x {} buffers x {} seeds",
            spec.grid_size(),
            spec.postures.len(),
            spec.strategies.len(),
            spec.rates.len(),
            spec.buffers.len(),
            spec.seeds
        );
        return Ok(());
    }

    let out = run_experiment(&spec)?;
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
