//! Sweep grids: expansion, parallel execution, CSV output and the
//! `key = value` configuration format.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelTable, NodeId, Posture, TableError, NODE_COUNT};
use crate::engine::{run, EngineError, RunConfig, SimTime};
use crate::metrics::{RunMetrics, Summary};
use crate::strategies::StrategyKind;

/// Default sweep rates, packets per second.
pub const SWEEP_RATES: [f64; 11] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 350.0, 500.0, 1000.0];
pub const SWEEP_BUFFERS: [usize; 3] = [100, 200, 300];
pub const SWEEP_SEEDS: u32 = 50;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("run {posture}/{strategy}/{rate}pps/B{buffer}/seed {seed}: {source}")]
    Run {
        posture: Posture,
        strategy: StrategyKind,
        rate: f64,
        buffer: usize,
        seed: u64,
        source: EngineError,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub table: PathBuf,
    pub postures: Vec<Posture>,
    pub strategies: Vec<StrategyKind>,
    pub rates: Vec<f64>,
    pub buffers: Vec<usize>,
    pub seeds: u32,
    pub messages: Option<u32>,
    pub out: PathBuf,
    /// Worker threads; `None` uses every available CPU.
    pub jobs: Option<usize>,
    /// Settings shared by every run; grid coordinates are overwritten.
    pub base: RunConfig,
}

impl ExperimentSpec {
    /// The full default grid over the given table.
    pub fn full_grid(table: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            table: table.into(),
            postures: Posture::ALL.to_vec(),
            strategies: StrategyKind::ALL.to_vec(),
            rates: SWEEP_RATES.to_vec(),
            buffers: SWEEP_BUFFERS.to_vec(),
            seeds: SWEEP_SEEDS,
            messages: None,
            out: out.into(),
            jobs: None,
            base: RunConfig::new(Posture::Walk, StrategyKind::Flooding, 1.0, 100, 0),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.to_string()));
        if self.postures.is_empty() {
            return bad("no postures");
        }
        if self.strategies.is_empty() {
            return bad("no strategies");
        }
        if self.rates.is_empty() {
            return bad("no rates");
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("rates must be positive");
        }
        if self.buffers.is_empty() {
            return bad("no buffer sizes");
        }
        if self.buffers.contains(&0) {
            return bad("buffer sizes must be positive");
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.postures.len() * self.strategies.len() * self.rates.len() * self.buffers.len() * self.seeds as usize
    }

    /// Every run of the grid, in output row order.
    pub fn expand(&self) -> Vec<RunConfig> {
        let mut postures = self.postures.clone();
        postures.sort();
        postures.dedup();
        let mut strategies = self.strategies.clone();
        strategies.sort();
        strategies.dedup();
        let mut rates = self.rates.clone();
        rates.sort_by(f64::total_cmp);
        rates.dedup();
        let mut buffers = self.buffers.clone();
        buffers.sort();
        buffers.dedup();

        let mut out = Vec::with_capacity(self.grid_size());
        for &posture in &postures {
            for &strategy in &strategies {
                for &rate in &rates {
                    for &buffer in &buffers {
                        for seed in 0..self.seeds as u64 {
                            let mut cfg = self.base.clone();
                            cfg.posture = posture;
                            cfg.strategy = strategy;
                            cfg.rate_pps = rate;
                            cfg.buffer = buffer;
                            cfg.seed = seed;
                            if self.messages.is_some() {
                                cfg.messages = self.messages;
                            }
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub posture: Posture,
    pub strategy: StrategyKind,
    pub rate_pps: f64,
    pub buffer: usize,
    pub seed: u64,
    pub messages: u32,
    pub metrics: RunMetrics,
}

/// Runs every configuration, in parallel, keeping input order.
pub fn execute(configs: &[RunConfig], table: &ChannelTable, jobs: Option<usize>) -> Result<Vec<RunRow>, ExperimentError> {
    let work = || {
        configs
            .par_iter()
            .map(|cfg| {
                run(cfg, table)
                    .map(|metrics| RunRow {
                        posture: cfg.posture,
                        strategy: cfg.strategy,
                        rate_pps: cfg.rate_pps,
                        buffer: cfg.buffer,
                        seed: cfg.seed,
                        messages: cfg.messages_number(),
                        metrics,
                    })
                    .map_err(|source| ExperimentError::Run {
                        posture: cfg.posture,
                        strategy: cfg.strategy,
                        rate: cfg.rate_pps,
                        buffer: cfg.buffer,
                        seed: cfg.seed,
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Mean and spread over seeds of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub posture: Posture,
    pub strategy: StrategyKind,
    pub rate_pps: f64,
    pub buffer: usize,
    pub seeds: usize,
    pub coverage_pct: Summary,
    pub deseq_pct: Summary,
    pub delay_mean_ms: Option<Summary>,
    pub delay_penalized_ms: Summary,
    pub tx_total: Summary,
    pub rx_total: Summary,
    pub collisions: Summary,
    pub drops: Summary,
    pub energy_per_node: Summary,
    pub nodes: [NodeAggregate; NODE_COUNT],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAggregate {
    pub coverage_pct: f64,
    pub delay_ms: Option<f64>,
    pub delay_penalized_ms: Option<f64>,
    pub tx: f64,
    pub rx: f64,
}

/// Groups consecutive rows sharing (posture, strategy, rate, buffer).
pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    let key = |r: &RunRow| (r.posture, r.strategy, r.rate_pps.to_bits(), r.buffer);
    rows.chunk_by(|a, b| key(a) == key(b))
        .map(|group| {
            let first = &group[0];
            let col = |f: &dyn Fn(&RunMetrics) -> f64| {
                Summary::of(&group.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>()).expect("non-empty group")
            };
            let delays: Vec<f64> = group.iter().filter_map(|r| r.metrics.delay.mean_s).map(|s| s * 1e3).collect();
            let mean_of = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let nodes = std::array::from_fn(|i| {
                let n = group.len() as f64;
                NodeAggregate {
                    coverage_pct: group
                        .iter()
                        .map(|r| {
                            let m = r.messages;
                            if m == 0 { 0.0 } else { 100.0 * r.metrics.received[i] as f64 / m as f64 }
                        })
                        .sum::<f64>()
                        / n,
                    delay_ms: mean_of(group.iter().filter_map(|r| r.metrics.delay.per_node_s[i]).map(|s| s * 1e3).collect()),
                    delay_penalized_ms: mean_of(
                        group.iter().filter_map(|r| r.metrics.delay.per_node_penalized_s[i]).map(|s| s * 1e3).collect(),
                    ),
                    tx: group.iter().map(|r| r.metrics.tx[i] as f64).sum::<f64>() / n,
                    rx: group.iter().map(|r| r.metrics.rx[i] as f64).sum::<f64>() / n,
                }
            });
            AggregateRow {
                posture: first.posture,
                strategy: first.strategy,
                rate_pps: first.rate_pps,
                buffer: first.buffer,
                seeds: group.len(),
                coverage_pct: col(&|m| m.coverage_pct),
                deseq_pct: col(&|m| m.deseq_pct),
                delay_mean_ms: Summary::of(&delays),
                delay_penalized_ms: col(&|m| m.delay.penalized_mean_s * 1e3),
                tx_total: col(&|m| m.tx_total() as f64),
                rx_total: col(&|m| m.rx_total() as f64),
                collisions: col(&|m| m.collisions as f64),
                drops: col(&|m| m.drops as f64),
                energy_per_node: col(&|m| m.energy_per_node()),
                nodes,
            }
        })
        .collect()
}

pub const RUNS_HEADER: [&str; 13] = [
    "posture",
    "strategy",
    "rate_pps",
    "buffer",
    "seed",
    "coverage_pct",
    "deseq_pct",
    "delay_mean_ms",
    "delay_penalized_ms",
    "tx_total",
    "rx_total",
    "collisions",
    "drops",
];

const AGG_METRICS: [&str; 9] = [
    "coverage_pct",
    "deseq_pct",
    "delay_mean_ms",
    "delay_penalized_ms",
    "tx_total",
    "rx_total",
    "collisions",
    "drops",
    "energy_per_node",
];

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn opt4(v: Option<f64>) -> String {
    v.map(f4).unwrap_or_default()
}

fn rate_str(r: f64) -> String {
    format!("{r}")
}

pub fn runs_csv(rows: &[RunRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNS_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.posture.as_str().to_string(),
            r.strategy.as_str().to_string(),
            rate_str(r.rate_pps),
            r.buffer.to_string(),
            r.seed.to_string(),
            f4(m.coverage_pct),
            f4(m.deseq_pct),
            opt4(m.delay.mean_s.map(|s| s * 1e3)),
            f4(m.delay.penalized_mean_s * 1e3),
            m.tx_total().to_string(),
            m.rx_total().to_string(),
            m.collisions.to_string(),
            m.drops.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["posture", "strategy", "rate_pps", "buffer", "seeds"].map(String::from).to_vec();
    for m in AGG_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.posture.as_str().to_string(),
            r.strategy.as_str().to_string(),
            rate_str(r.rate_pps),
            r.buffer.to_string(),
            r.seeds.to_string(),
        ];
        let delay = r.delay_mean_ms;
        for s in [
            Some(r.coverage_pct),
            Some(r.deseq_pct),
            delay,
            Some(r.delay_penalized_ms),
            Some(r.tx_total),
            Some(r.rx_total),
            Some(r.collisions),
            Some(r.drops),
            Some(r.energy_per_node),
        ] {
            rec.push(opt4(s.map(|s| s.mean)));
            rec.push(opt4(s.map(|s| s.std)));
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn nodes_csv(rows: &[AggregateRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "posture",
        "strategy",
        "rate_pps",
        "buffer",
        "node",
        "position",
        "coverage_pct",
        "delay_ms",
        "delay_penalized_ms",
        "tx",
        "rx",
        "energy",
    ])?;
    for r in rows {
        for node in NodeId::ALL {
            let n = &r.nodes[node.index()];
            w.write_record([
                r.posture.as_str().to_string(),
                r.strategy.as_str().to_string(),
                rate_str(r.rate_pps),
                r.buffer.to_string(),
                node.to_string(),
                node.body_position().to_string(),
                f4(n.coverage_pct),
                opt4(n.delay_ms),
                opt4(n.delay_penalized_ms),
                f4(n.tx),
                f4(n.rx),
                f4(n.tx + n.rx),
            ])?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

/// Runs the whole grid, then writes `runs.csv`, `aggregate.csv` and
/// `nodes.csv`. Nothing is written unless every run succeeds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    let table = ChannelTable::load(&spec.table)?;
    if let Some(p) = spec.postures.iter().find(|p| table.posture(**p).is_none()) {
        return Err(ExperimentError::InvalidSpec(format!("table has no `{p}` posture")));
    }
    let configs = spec.expand();
    let rows = execute(&configs, &table, spec.jobs)?;
    let aggregates = aggregate(&rows);

    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Csv { path, source }
    };
    let runs_path = spec.out.join("runs.csv");
    let agg_path = spec.out.join("aggregate.csv");
    let nodes_path = spec.out.join("nodes.csv");
    let outputs = [
        (runs_path.clone(), runs_csv(&rows).map_err(csv_err(&runs_path))?),
        (agg_path.clone(), aggregate_csv(&aggregates).map_err(csv_err(&agg_path))?),
        (nodes_path.clone(), nodes_csv(&aggregates).map_err(csv_err(&nodes_path))?),
    ];
    fs::create_dir_all(&spec.out).map_err(|source| ExperimentError::Io { path: spec.out.clone(), source })?;
    let mut staged = Vec::new();
    for (path, bytes) in &outputs {
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, bytes).map_err(|source| ExperimentError::Io { path: tmp.clone(), source })?;
        staged.push((tmp, path.clone()));
    }
    for (tmp, path) in &staged {
        fs::rename(tmp, path).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
    }
    Ok(ExperimentOutput { rows, aggregates, files: outputs.into_iter().map(|(p, _)| p).collect() })
}

/// Values read from a configuration file; unset keys stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub table: Option<PathBuf>,
    pub postures: Option<Vec<Posture>>,
    pub strategies: Option<Vec<StrategyKind>>,
    pub rates: Option<Vec<f64>>,
    pub buffers: Option<Vec<usize>>,
    pub seeds: Option<u32>,
    pub messages: Option<u32>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub sink: Option<NodeId>,
    pub hop_cap: Option<u8>,
    pub k: Option<usize>,
    pub p0: Option<f64>,
    pub nh: Option<u8>,
    pub mbp_delay_ms: Option<f64>,
    pub initial_backoff_ms: Option<f64>,
    pub traffic_window_s: Option<f64>,
}

pub fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        text.parse()
    }

    /// Applies every set key onto `spec`.
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(v) = &self.table {
            spec.table = v.clone();
        }
        if let Some(v) = &self.postures {
            spec.postures = v.clone();
        }
        if let Some(v) = &self.strategies {
            spec.strategies = v.clone();
        }
        if let Some(v) = &self.rates {
            spec.rates = v.clone();
        }
        if let Some(v) = &self.buffers {
            spec.buffers = v.clone();
        }
        if let Some(v) = self.seeds {
            spec.seeds = v;
        }
        if let Some(v) = self.messages {
            spec.messages = Some(v);
        }
        if let Some(v) = &self.out {
            spec.out = v.clone();
        }
        if let Some(v) = self.jobs {
            spec.jobs = Some(v);
        }
        let base = &mut spec.base;
        if let Some(v) = self.sink {
            base.sink = v;
        }
        if let Some(v) = self.hop_cap {
            base.params.hop_cap = v;
        }
        if let Some(v) = self.k {
            base.params.k = v;
        }
        if let Some(v) = self.p0 {
            base.params.p0 = v;
        }
        if let Some(v) = self.nh {
            base.params.nh = v;
        }
        if let Some(v) = self.mbp_delay_ms {
            base.params.mbp_delay = SimTime::from_secs_f64(v / 1e3);
        }
        if let Some(v) = self.initial_backoff_ms {
            base.csma.initial_backoff_max = SimTime::from_secs_f64(v / 1e3);
        }
        if let Some(v) = self.traffic_window_s {
            base.traffic_window_s = v;
        }
    }
}

impl std::str::FromStr for ConfigFile {
    type Err = ExperimentError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = ConfigFile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ExperimentError::Config { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn one<T: std::str::FromStr>(v: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
            }
            let res: Result<(), String> = (|| {
                match key {
                    "table" => cfg.table = Some(value.into()),
                    "postures" => cfg.postures = Some(parse_list(value)?),
                    "strategies" => cfg.strategies = Some(parse_list(value)?),
                    "rates" => cfg.rates = Some(parse_list(value)?),
                    "buffers" => cfg.buffers = Some(parse_list(value)?),
                    "seeds" => cfg.seeds = Some(one(value)?),
                    "messages" => cfg.messages = Some(one(value)?),
                    "out" => cfg.out = Some(value.into()),
                    "jobs" => cfg.jobs = Some(one(value)?),
                    "sink" => {
                        let id: u8 = one(value)?;
                        cfg.sink = Some(NodeId::new(id).ok_or(format!("no node {id}"))?);
                    }
                    "hop_cap" => cfg.hop_cap = Some(one(value)?),
                    "k" => cfg.k = Some(one(value)?),
                    "p0" => cfg.p0 = Some(one(value)?),
                    "nh" => cfg.nh = Some(one(value)?),
                    "mbp_delay_ms" => cfg.mbp_delay_ms = Some(one(value)?),
                    "initial_backoff_ms" => cfg.initial_backoff_ms = Some(one(value)?),
                    "traffic_window_s" => cfg.traffic_window_s = Some(one(value)?),
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        Ok(cfg)
    }
}
