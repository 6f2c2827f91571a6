//! Discrete-event core: clock, event queue, radios, frame propagation over the
//! stochastic channel, collisions and counters.

mod clpb_driver;
mod flat;
pub mod mac;
mod queue;

use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{
    frame_receivable, sample_attenuation, ChannelTable, LinkBudget, NodeId, Posture, PostureLinks, NODE_COUNT,
};
use crate::clpb::{capacity_per_slot, ClpbHeader};
use crate::metrics::RunMetrics;
use crate::strategies::{StrategyKind, StrategyParams};
use crate::topology::{Preprocessing, SenderSchedule, TopologyError};

pub use mac::{CsmaMac, CsmaParams, MacAction};

/// Virtual time in integer microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1000)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(s: f64) -> Self {
        assert!(s.is_finite() && s >= 0.0, "negative or non-finite duration {s}");
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("negative time difference"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Header {
    Flat {
        /// Hops travelled once this copy is received.
        hops: u8,
        addressee: Option<NodeId>,
    },
    Clpb(ClpbHeader),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub origin: NodeId,
    pub forwarder: NodeId,
    pub seq: u32,
    pub bits: u32,
    pub header: Header,
}

impl Frame {
    /// A fresh broadcast from the sink.
    pub fn original(sink: NodeId, seq: u32, bits: u32) -> Self {
        Frame { origin: sink, forwarder: sink, seq, bits, header: Header::Flat { hops: 1, addressee: None } }
    }

    pub fn clpb(sender: NodeId, origin: NodeId, header: ClpbHeader, bits: u32) -> Self {
        Frame { origin, forwarder: sender, seq: header.seq, bits, header: Header::Clpb(header) }
    }

    pub fn hops(&self) -> u8 {
        match self.header {
            Header::Flat { hops, .. } => hops,
            Header::Clpb(_) => 0,
        }
    }

    pub fn addressee(&self) -> Option<NodeId> {
        match self.header {
            Header::Flat { addressee, .. } => addressee,
            Header::Clpb(_) => None,
        }
    }

    pub fn clpb_header(&self) -> Option<&ClpbHeader> {
        match &self.header {
            Header::Clpb(h) => Some(h),
            Header::Flat { .. } => None,
        }
    }

    /// The copy `node` sends after receiving this one.
    pub fn relayed_by(&self, node: NodeId, addressee: Option<NodeId>) -> Self {
        Frame {
            forwarder: node,
            header: Header::Flat { hops: self.hops().saturating_add(1), addressee },
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioMode {
    Rx,
    Tx,
    Sleep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub posture: Posture,
    pub strategy: StrategyKind,
    pub rate_pps: f64,
    /// Packets injected at the sink; `None` derives it from the traffic window.
    pub messages: Option<u32>,
    pub buffer: usize,
    pub bitrate_bps: u64,
    pub slot: SimTime,
    pub frame_bits: u32,
    pub seed: u64,
    pub sink: NodeId,
    /// Explicit end of the run; `None` uses the strategy default.
    pub horizon: Option<SimTime>,
    pub budget: LinkBudget,
    pub csma: CsmaParams,
    pub params: StrategyParams,
    /// Seconds of traffic used to derive the message count.
    pub traffic_window_s: f64,
    /// Time after the last injection that flat runs keep going.
    pub flat_drain: SimTime,
    /// Periods after the end of cycles that CLPB runs keep going.
    pub clpb_slack_cycles: u32,
    pub trace: bool,
}

impl RunConfig {
    pub fn new(posture: Posture, strategy: StrategyKind, rate_pps: f64, buffer: usize, seed: u64) -> Self {
        RunConfig {
            posture,
            strategy,
            rate_pps,
            messages: None,
            buffer,
            bitrate_bps: 1_000_000,
            slot: SimTime::from_micros(5000),
            frame_bits: 544,
            seed,
            sink: NodeId::THIGH,
            horizon: None,
            budget: LinkBudget::default(),
            csma: CsmaParams::default(),
            params: StrategyParams::default(),
            traffic_window_s: 1.0,
            flat_drain: SimTime::from_millis(2000),
            clpb_slack_cycles: 10,
            trace: false,
        }
    }

    pub fn with_messages(mut self, m: u32) -> Self {
        self.messages = Some(m);
        self
    }

    pub fn messages_number(&self) -> u32 {
        self.messages
            .unwrap_or_else(|| (self.rate_pps * self.traffic_window_s).round().max(1.0) as u32)
    }

    pub fn airtime(&self) -> SimTime {
        SimTime::from_micros((self.frame_bits as u64 * 1_000_000).div_ceil(self.bitrate_bps))
    }

    pub fn capacity_per_slot(&self) -> u32 {
        capacity_per_slot(self.slot.as_secs_f64(), self.bitrate_bps as f64, self.frame_bits)
    }

    /// Arrival time of packet `seq` at the sink.
    pub fn app_arrival(&self, seq: u32) -> SimTime {
        SimTime::from_micros((seq as f64 * 1e6 / self.rate_pps).floor() as u64)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if !(self.rate_pps.is_finite() && self.rate_pps > 0.0) {
            return bad(format!("rate must be positive, got {}", self.rate_pps));
        }
        if self.buffer == 0 {
            return bad("buffer capacity must be positive".into());
        }
        if self.frame_bits == 0 || self.bitrate_bps == 0 {
            return bad("frame size and bitrate must be positive".into());
        }
        if self.slot == SimTime::ZERO {
            return bad("slot duration must be positive".into());
        }
        if self.strategy == StrategyKind::Clpb && self.capacity_per_slot() == 0 {
            return bad("a frame does not fit in one slot".into());
        }
        if !(self.traffic_window_s.is_finite() && self.traffic_window_s > 0.0) {
            return bad("traffic window must be positive".into());
        }
        self.params.validate().map_err(EngineError::InvalidConfig)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Tx { seq: u32, header: Option<ClpbHeader> },
    Rx { seq: u32, from: NodeId, first: bool },
    Collision { seq: u32, from: NodeId },
    Defer { seq: u32, until: SimTime },
    Drop { seq: u32 },
    SleepForever,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub node: NodeId,
    pub kind: TraceKind,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>10} node {} ", self.time.as_micros(), self.node)?;
        match self.kind {
            TraceKind::Tx { seq, header: Some(h) } => {
                let hex: String = h.encode_log().iter().map(|b| format!("{b:02x}")).collect();
                write!(f, "tx seq {seq} slot {} hdr {hex}", h.current_slot)
            }
            TraceKind::Tx { seq, header: None } => write!(f, "tx seq {seq}"),
            TraceKind::Rx { seq, from, first } => {
                write!(f, "rx seq {seq} from {from}{}", if first { "" } else { " dup" })
            }
            TraceKind::Collision { seq, from } => write!(f, "collision seq {seq} from {from}"),
            TraceKind::Defer { seq, until } => write!(f, "defer seq {seq} until {}", until.as_micros()),
            TraceKind::Drop { seq } => write!(f, "drop seq {seq}"),
            TraceKind::SleepForever => write!(f, "sleep"),
        }
    }
}

/// Raw log of one run, before metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub messages: u32,
    pub horizon: SimTime,
    pub app_arrivals: Vec<SimTime>,
    /// `first_rx[node][seq]`: time of the first copy the node accepted.
    pub first_rx: Vec<Vec<Option<SimTime>>>,
    /// Seqs in the order their first copies arrived, per node.
    pub rx_order: Vec<Vec<u32>>,
    pub tx: [u64; NODE_COUNT],
    pub rx: [u64; NODE_COUNT],
    pub drops: [u64; NODE_COUNT],
    pub collisions: u64,
    pub schedule: Option<SenderSchedule>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Event {
    TxEnd { tx: u64 },
    App { seq: u32 },
    SlotTick { node: NodeId },
    WindowEnd { node: NodeId },
    MbpTimer { node: NodeId, seq: u32 },
    MacAttempt { node: NodeId },
    ClpbTransmit { node: NodeId },
}

impl Event {
    /// Tie-break among events at the same instant: airtime ends first, then
    /// injections, slot boundaries, timers and finally new channel accesses.
    fn class(&self) -> u8 {
        match self {
            Event::TxEnd { .. } => 0,
            Event::App { .. } => 1,
            Event::SlotTick { .. } => 2,
            Event::WindowEnd { .. } | Event::MbpTimer { .. } => 3,
            Event::MacAttempt { .. } | Event::ClpbTransmit { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Radio {
    mode: RadioMode,
    rx_since: SimTime,
}

struct Transmission {
    id: u64,
    sender: NodeId,
    frame: Frame,
    start: SimTime,
    receivable: [bool; NODE_COUNT],
    corrupted: [bool; NODE_COUNT],
}

pub(crate) struct Finished {
    pub sender: NodeId,
    pub frame: Frame,
    pub start: SimTime,
    pub delivered: Vec<NodeId>,
}

pub(crate) struct World {
    pub now: SimTime,
    pub rng: ChaCha8Rng,
    queue: queue::EventQueue<Event>,
    links: PostureLinks,
    budget: LinkBudget,
    senses: [[bool; NODE_COUNT]; NODE_COUNT],
    airtime: SimTime,
    radios: [Radio; NODE_COUNT],
    active: Vec<Transmission>,
    next_tx: u64,
    pub tx: [u64; NODE_COUNT],
    pub rx: [u64; NODE_COUNT],
    pub collisions: u64,
    first_rx: Vec<Vec<Option<SimTime>>>,
    rx_order: Vec<Vec<u32>>,
    trace: Option<Vec<TraceEvent>>,
}

/// Mean attenuation at or below which a node senses another's carrier.
pub const CARRIER_SENSE_DB: f64 = 45.0;

impl World {
    fn new(cfg: &RunConfig, links: PostureLinks, messages: u32, initial: RadioMode) -> Self {
        let mut senses = [[false; NODE_COUNT]; NODE_COUNT];
        for a in NodeId::ALL {
            for b in NodeId::ALL {
                if a != b {
                    senses[a.index()][b.index()] = links.get(a, b).mean_db <= CARRIER_SENSE_DB;
                }
            }
        }
        World {
            now: SimTime::ZERO,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            queue: queue::EventQueue::new(),
            links,
            budget: cfg.budget,
            senses,
            airtime: cfg.airtime(),
            radios: [Radio { mode: initial, rx_since: SimTime::ZERO }; NODE_COUNT],
            active: Vec::new(),
            next_tx: 0,
            tx: [0; NODE_COUNT],
            rx: [0; NODE_COUNT],
            collisions: 0,
            first_rx: vec![vec![None; messages as usize]; NODE_COUNT],
            rx_order: vec![Vec::new(); NODE_COUNT],
            trace: cfg.trace.then(Vec::new),
        }
    }

    pub fn schedule(&mut self, at: SimTime, event: Event) {
        debug_assert!(at >= self.now, "event scheduled in the past");
        self.queue.push(at, event.class(), event);
    }

    pub fn mode(&self, node: NodeId) -> RadioMode {
        self.radios[node.index()].mode
    }

    pub fn set_mode(&mut self, node: NodeId, mode: RadioMode) {
        let r = &mut self.radios[node.index()];
        if mode == RadioMode::Rx && r.mode != RadioMode::Rx {
            r.rx_since = self.now;
        }
        r.mode = mode;
    }

    pub fn senses(&self, from: NodeId, to: NodeId) -> bool {
        self.senses[from.index()][to.index()]
    }

    /// Whether any ongoing transmission is loud enough for `node` to sense.
    pub fn carrier_busy(&self, node: NodeId) -> bool {
        self.active.iter().any(|t| t.sender != node && self.senses(t.sender, node))
    }

    pub fn trace(&mut self, node: NodeId, kind: TraceKind) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { time: self.now, node, kind });
        }
    }

    /// Puts `node` on air with `frame`, drawing the channel for every other
    /// node. Returns the nodes the frame can reach.
    pub fn begin_transmission(&mut self, node: NodeId, frame: Frame) -> [bool; NODE_COUNT] {
        assert_ne!(self.mode(node), RadioMode::Tx, "node {node} already transmitting");
        let mut receivable = [false; NODE_COUNT];
        for r in NodeId::ALL {
            if r != node {
                let att = sample_attenuation(self.links.get(node, r), &mut self.rng);
                receivable[r.index()] = frame_receivable(att, &self.budget);
            }
        }
        let mut corrupted = [false; NODE_COUNT];
        for other in &mut self.active {
            for i in 0..NODE_COUNT {
                if receivable[i] {
                    other.corrupted[i] = true;
                }
                if other.receivable[i] {
                    corrupted[i] = true;
                }
            }
        }
        let id = self.next_tx;
        self.next_tx += 1;
        self.active.push(Transmission { id, sender: node, frame, start: self.now, receivable, corrupted });
        self.set_mode(node, RadioMode::Tx);
        self.tx[node.index()] += 1;
        let header = frame.clpb_header().copied();
        self.trace(node, TraceKind::Tx { seq: frame.seq, header });
        self.schedule(self.now + self.airtime, Event::TxEnd { tx: id });
        receivable
    }

    /// Ends airtime of transmission `id`. The sender is left asleep; the
    /// returned list holds every node that decoded the frame.
    pub fn finish_transmission(&mut self, id: u64) -> Finished {
        let pos = self.active.iter().position(|t| t.id == id).expect("unknown transmission");
        let t = self.active.swap_remove(pos);
        let mut delivered = Vec::new();
        for r in NodeId::ALL {
            let i = r.index();
            if r == t.sender || !t.receivable[i] {
                continue;
            }
            let radio = self.radios[i];
            if radio.mode != RadioMode::Rx || radio.rx_since > t.start {
                continue;
            }
            if t.corrupted[i] {
                self.collisions += 1;
                self.trace(r, TraceKind::Collision { seq: t.frame.seq, from: t.sender });
            } else {
                self.rx[i] += 1;
                delivered.push(r);
            }
        }
        self.set_mode(t.sender, RadioMode::Sleep);
        Finished { sender: t.sender, frame: t.frame, start: t.start, delivered }
    }

    /// Logs an accepted copy; returns true for the node's first copy of `seq`.
    pub fn record_reception(&mut self, node: NodeId, seq: u32, from: NodeId) -> bool {
        let slot = self.first_rx[node.index()].get_mut(seq as usize);
        let first = matches!(slot, Some(None));
        if let Some(s @ None) = slot {
            *s = Some(self.now);
            self.rx_order[node.index()].push(seq);
        }
        self.trace(node, TraceKind::Rx { seq, from, first });
        first
    }

    fn run_until(&mut self, horizon: SimTime, mut handle: impl FnMut(&mut World, Event)) {
        while let Some(t) = self.queue.peek_time() {
            if t > horizon {
                break;
            }
            let (t, ev) = self.queue.pop().expect("peeked");
            self.now = t;
            handle(self, ev);
        }
    }
}

/// Runs one configuration and returns its metrics.
pub fn run(config: &RunConfig, table: &ChannelTable) -> Result<RunMetrics, EngineError> {
    let record = simulate(config, table)?;
    Ok(RunMetrics::from_record(&record).expect("validated runs inject at least one packet"))
}

/// Runs one configuration and returns the raw log.
pub fn simulate(config: &RunConfig, table: &ChannelTable) -> Result<RunRecord, EngineError> {
    simulate_with_schedule(config, table, None)
}

/// Like [`simulate`], but CLPB uses `schedule` instead of the one derived
/// from the posture's table entry.
pub fn simulate_with_schedule(
    config: &RunConfig,
    table: &ChannelTable,
    schedule: Option<&SenderSchedule>,
) -> Result<RunRecord, EngineError> {
    config.validate()?;
    let links = table
        .posture(config.posture)
        .ok_or(TopologyError::MissingPosture(config.posture))?
        .clone();
    let messages = config.messages_number();
    let app_arrivals: Vec<SimTime> = (0..messages).map(|s| config.app_arrival(s)).collect();

    let (world, horizon, drops, schedule) = if config.strategy.is_flat() {
        let horizon = config.horizon.unwrap_or_else(|| {
            SimTime::from_secs_f64(messages as f64 / config.rate_pps) + config.flat_drain
        });
        let mut world = World::new(config, links, messages, RadioMode::Rx);
        let mut driver = flat::FlatDriver::new(config, messages);
        driver.start(&mut world);
        world.run_until(horizon, |w, ev| driver.handle(w, ev));
        (world, horizon, driver.drops(), None)
    } else {
        let schedule = match schedule {
            Some(s) => s.clone(),
            None => Preprocessing::compute(table, config.posture, &config.budget, config.sink)?.schedule,
        };
        if schedule.sink != config.sink {
            return Err(EngineError::InvalidConfig(format!(
                "schedule sink {} differs from configured sink {}",
                schedule.sink, config.sink
            )));
        }
        let mut driver = clpb_driver::ClpbDriver::new(config, &schedule, messages);
        let timing = driver.timing();
        let horizon = config.horizon.unwrap_or_else(|| {
            let slack = timing.period.as_micros() * config.clpb_slack_cycles as u64;
            let last = app_arrivals.last().copied().unwrap_or(SimTime::ZERO);
            timing.end_of_cycles.max(last) + SimTime::from_micros(slack)
        });
        let mut world = World::new(config, links, messages, RadioMode::Sleep);
        driver.start(&mut world);
        world.run_until(horizon, |w, ev| driver.handle(w, ev));
        (world, horizon, driver.drops(), Some(schedule))
    };

    Ok(RunRecord {
        config: config.clone(),
        messages,
        horizon,
        app_arrivals,
        first_rx: world.first_rx,
        rx_order: world.rx_order,
        tx: world.tx,
        rx: world.rx,
        drops,
        collisions: world.collisions,
        schedule,
        trace: world.trace.unwrap_or_default(),
    })
}
