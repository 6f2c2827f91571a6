//! Cross-layer broadcast: header, cycle arithmetic and the per-node state
//! machine. Everything here is independent of the event loop; the engine
//! drives these types through `engine::clpb_driver`.

use std::collections::VecDeque;

use crate::channel::{NodeId, NODE_COUNT};
use crate::engine::SimTime;
use crate::topology::SenderSchedule;

/// Slack used when rounding ratios of durations that should be integral.
const RATIO_EPS: f64 = 1e-9;

/// `Number of senders * slot duration`, in seconds.
pub fn cycle_duration(n_senders: usize, slot_duration: f64) -> f64 {
    assert!(n_senders >= 1, "the sink always owns a slot");
    n_senders as f64 * slot_duration
}

/// Idle time between two cycles when the sink's packet period is at least a
/// cycle long; zero when packets arrive faster than cycles complete.
pub fn cycles_interleave(sink_period: f64, slot_duration: f64, cycle_duration: f64) -> f64 {
    assert!(sink_period > 0.0, "sink period must be positive");
    if sink_period < cycle_duration {
        return 0.0;
    }
    let slots = (sink_period / slot_duration - RATIO_EPS).ceil();
    (slots * slot_duration - cycle_duration).max(0.0)
}

/// Worst-case time after which nodes stop waiting for missing packets.
pub fn end_of_cycles(messages_number: u32, cycle_duration: f64) -> f64 {
    messages_number as f64 * cycle_duration
}

/// How many frames fit back to back in one slot.
pub fn capacity_per_slot(slot_duration: f64, bitrate_bps: f64, frame_bits: u32) -> u32 {
    (slot_duration * bitrate_bps / frame_bits as f64 + RATIO_EPS).floor() as u32
}

/// Slot index of every sender, `None` for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotAssignment(pub [Option<u8>; NODE_COUNT]);

impl SlotAssignment {
    pub fn from_schedule(schedule: &SenderSchedule) -> Self {
        SlotAssignment(schedule.slot_table())
    }

    pub fn slot_of(&self, node: NodeId) -> Option<u8> {
        self.0[node.index()]
    }

    pub fn n_senders(&self) -> usize {
        self.0.iter().flatten().count()
    }
}

/// Control fields carried by every data frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClpbHeader {
    pub seq: u32,
    pub current_slot: u8,
    pub slots: SlotAssignment,
    pub messages_number: u32,
    pub next_cycle_start: SimTime,
}

/// Length of [`ClpbHeader::encode_log`] output in bytes.
pub const HEADER_LOG_BYTES: usize = 4 + 1 + 1 + NODE_COUNT + 4 + 8;

impl ClpbHeader {
    /// Big-endian trace-log record: seq (32), current_slot (8),
    /// n_senders (8), one byte per node slot (0xFF when unassigned),
    /// messages_number (32), next_cycle_start in µs (64).
    pub fn encode_log(&self) -> [u8; HEADER_LOG_BYTES] {
        let mut out = [0u8; HEADER_LOG_BYTES];
        out[0..4].copy_from_slice(&self.seq.to_be_bytes());
        out[4] = self.current_slot;
        out[5] = self.slots.n_senders() as u8;
        for (i, s) in self.slots.0.iter().enumerate() {
            out[6 + i] = s.unwrap_or(u8::MAX);
        }
        out[13..17].copy_from_slice(&self.messages_number.to_be_bytes());
        out[17..25].copy_from_slice(&self.next_cycle_start.as_micros().to_be_bytes());
        out
    }

    pub fn decode_log(bytes: &[u8; HEADER_LOG_BYTES]) -> Option<Self> {
        let mut slots = [None; NODE_COUNT];
        for (i, s) in slots.iter_mut().enumerate() {
            *s = (bytes[6 + i] != u8::MAX).then_some(bytes[6 + i]);
        }
        let header = ClpbHeader {
            seq: u32::from_be_bytes(bytes[0..4].try_into().ok()?),
            current_slot: bytes[4],
            slots: SlotAssignment(slots),
            messages_number: u32::from_be_bytes(bytes[13..17].try_into().ok()?),
            next_cycle_start: SimTime::from_micros(u64::from_be_bytes(bytes[17..25].try_into().ok()?)),
        };
        (header.slots.n_senders() == bytes[5] as usize).then_some(header)
    }
}

/// Integer-microsecond cycle layout of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleTiming {
    pub slot: SimTime,
    pub n_senders: usize,
    pub cycle: SimTime,
    pub interleave: SimTime,
    /// Distance between consecutive cycle starts.
    pub period: SimTime,
    pub end_of_cycles: SimTime,
    pub capacity: u32,
}

impl CycleTiming {
    pub fn new(
        n_senders: usize,
        slot: SimTime,
        rate_pps: f64,
        messages_number: u32,
        capacity: u32,
    ) -> Self {
        assert!(n_senders >= 1);
        let slot_us = slot.as_micros();
        let cycle_us = n_senders as u64 * slot_us;
        let sink_period_us = 1e6 / rate_pps;
        let interleave_us = if sink_period_us < cycle_us as f64 {
            0
        } else {
            let slots = (sink_period_us / slot_us as f64 - RATIO_EPS).ceil() as u64;
            (slots * slot_us).saturating_sub(cycle_us)
        };
        let period_us = cycle_us + interleave_us;
        CycleTiming {
            slot,
            n_senders,
            cycle: SimTime::from_micros(cycle_us),
            interleave: SimTime::from_micros(interleave_us),
            period: SimTime::from_micros(period_us),
            // Cycles are spaced a full period apart, so the bound counts periods.
            end_of_cycles: SimTime::from_micros(messages_number as u64 * period_us),
            capacity,
        }
    }

    pub fn cycle_start(&self, k: u64) -> SimTime {
        SimTime::from_micros(k * self.period.as_micros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sink,
    Sender(u8),
    Leaf,
}

/// Cycle position a node learned from the last header it received.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleSync {
    pub cycle_start: SimTime,
    pub next_cycle_start: SimTime,
    pub n_senders: usize,
    pub messages_number: u32,
    pub end_of_cycles: SimTime,
}

impl CycleSync {
    fn period(&self) -> u64 {
        self.next_cycle_start.as_micros() - self.cycle_start.as_micros()
    }

    /// Advances to the cycle containing `now`, assuming cycles keep their period.
    fn roll_to(&mut self, now: SimTime) {
        let period = self.period();
        if period == 0 || now < self.next_cycle_start {
            return;
        }
        let behind = (now.as_micros() - self.next_cycle_start.as_micros()) / period;
        self.cycle_start = SimTime::from_micros(self.next_cycle_start.as_micros() + behind * period);
        self.next_cycle_start = SimTime::from_micros(self.cycle_start.as_micros() + period);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingForward {
    pub seq: u32,
    /// Start of the first cycle in which the frame may be sent.
    pub eligible_from: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardPlan {
    ThisCycle,
    NextCycle(SimTime),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub first_copy: bool,
    pub forward: Option<ForwardPlan>,
    pub sleep_forever: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickAction {
    /// Listen until the given instant; stay awake for the slot if a frame starts before it.
    Listen { window_end: SimTime },
    /// Own slot with eligible frames queued.
    Transmit,
    SleepUntil(SimTime),
    SleepForever,
}

/// Duty-cycle and forwarding state of one non-sink node.
#[derive(Debug, Clone)]
pub struct ClpbNode {
    pub id: NodeId,
    pub role: Role,
    slot: SimTime,
    sync: Option<CycleSync>,
    received: Vec<bool>,
    received_count: u32,
    pending: VecDeque<PendingForward>,
    asleep_forever: bool,
    heard_this_slot: bool,
}

impl ClpbNode {
    pub fn new(id: NodeId, schedule: &SenderSchedule, slot: SimTime) -> Self {
        let role = if id == schedule.sink {
            Role::Sink
        } else {
            schedule.slot_of(id).map_or(Role::Leaf, Role::Sender)
        };
        ClpbNode {
            id,
            role,
            slot,
            sync: None,
            received: Vec::new(),
            received_count: 0,
            pending: VecDeque::new(),
            asleep_forever: false,
            heard_this_slot: false,
        }
    }

    pub fn sync(&self) -> Option<&CycleSync> {
        self.sync.as_ref()
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingForward> {
        self.pending.iter()
    }

    pub fn is_asleep_forever(&self) -> bool {
        self.asleep_forever
    }

    pub fn heard_this_slot(&self) -> bool {
        self.heard_this_slot
    }

    /// A frame start was sensed during the current listening window.
    pub fn note_carrier(&mut self) {
        self.heard_this_slot = true;
    }

    fn has_everything(&self) -> bool {
        self.sync.is_some_and(|s| self.received_count >= s.messages_number)
    }

    /// Resynchronizes on the header and queues the frame for forwarding when
    /// this node owns a slot.
    pub fn on_receive(&mut self, header: &ClpbHeader, frame_start: SimTime) -> ReceiveOutcome {
        let slot_us = self.slot.as_micros();
        let slot_start = frame_start.as_micros() - frame_start.as_micros() % slot_us;
        let cycle_start = slot_start.saturating_sub(header.current_slot as u64 * slot_us);
        let next = header.next_cycle_start;
        let period = next.as_micros().saturating_sub(cycle_start);
        self.sync = Some(CycleSync {
            cycle_start: SimTime::from_micros(cycle_start),
            next_cycle_start: next,
            n_senders: header.slots.n_senders(),
            messages_number: header.messages_number,
            end_of_cycles: SimTime::from_micros(header.messages_number as u64 * period),
        });

        let m = header.messages_number as usize;
        if self.received.len() < m {
            self.received.resize(m, false);
        }
        let idx = header.seq as usize;
        let first_copy = idx < self.received.len() && !self.received[idx];
        if first_copy {
            self.received[idx] = true;
            self.received_count += 1;
        }

        let mut forward = None;
        if first_copy {
            if let Role::Sender(own) = self.role {
                let (plan, eligible_from) = if own > header.current_slot {
                    (ForwardPlan::ThisCycle, SimTime::from_micros(cycle_start))
                } else {
                    (ForwardPlan::NextCycle(next), next)
                };
                self.pending.push_back(PendingForward { seq: header.seq, eligible_from });
                forward = Some(plan);
            }
        }

        let sleep_forever = self.role == Role::Leaf && self.has_everything();
        if sleep_forever {
            self.asleep_forever = true;
        }
        ReceiveOutcome { first_copy, forward, sleep_forever }
    }

    /// Decides what the radio does at a slot boundary.
    pub fn slot_tick(&mut self, now: SimTime) -> TickAction {
        self.heard_this_slot = false;
        if self.asleep_forever {
            return TickAction::SleepForever;
        }
        let slot_us = self.slot.as_micros();
        let listen = TickAction::Listen { window_end: now + SimTime::from_micros(slot_us / 2) };
        let Some(sync) = self.sync.as_mut() else {
            return listen;
        };
        sync.roll_to(now);
        let sync = *sync;
        if now > sync.end_of_cycles {
            self.asleep_forever = true;
            return TickAction::SleepForever;
        }
        let idx = (now.as_micros() - sync.cycle_start.as_micros()) / slot_us;
        if idx >= sync.n_senders as u64 {
            return TickAction::SleepUntil(sync.next_cycle_start);
        }
        let next_slot = now + self.slot;
        if let Role::Sender(own) = self.role {
            let own = own as u64;
            if idx == own {
                return if self.has_eligible(sync.cycle_start) {
                    TickAction::Transmit
                } else {
                    TickAction::SleepUntil(next_slot)
                };
            }
            if self.has_everything() {
                // Nothing left to hear; only the own slot matters.
                let wake = if idx < own {
                    sync.cycle_start.as_micros() + own * slot_us
                } else {
                    sync.next_cycle_start.as_micros() + own * slot_us
                };
                return TickAction::SleepUntil(SimTime::from_micros(wake));
            }
        }
        listen
    }

    fn has_eligible(&self, cycle_start: SimTime) -> bool {
        self.pending.iter().any(|p| p.eligible_from <= cycle_start)
    }

    /// Removes up to `capacity` eligible frames for transmission in the
    /// current own slot and returns their headers. Remaining frames wait for
    /// the next cycle.
    pub fn take_slot_frames(&mut self, now: SimTime, capacity: u32, slots: SlotAssignment) -> Vec<ClpbHeader> {
        let Role::Sender(own) = self.role else {
            return Vec::new();
        };
        let Some(sync) = self.sync.as_mut() else {
            return Vec::new();
        };
        sync.roll_to(now);
        let sync = *sync;
        let mut out = Vec::new();
        let mut kept = VecDeque::with_capacity(self.pending.len());
        while let Some(p) = self.pending.pop_front() {
            if out.len() < capacity as usize && p.eligible_from <= sync.cycle_start {
                out.push(ClpbHeader {
                    seq: p.seq,
                    current_slot: own,
                    slots,
                    messages_number: sync.messages_number,
                    next_cycle_start: sync.next_cycle_start,
                });
            } else {
                kept.push_back(p);
            }
        }
        self.pending = kept;
        out
    }

    /// Called once the own slot is over. Returns true when the node is done for good.
    pub fn after_own_slot(&mut self) -> bool {
        if matches!(self.role, Role::Sender(_)) && self.has_everything() && self.pending.is_empty() {
            self.asleep_forever = true;
        }
        self.asleep_forever
    }
}

/// Sink-side buffer of application packets awaiting slot 0.
#[derive(Debug, Clone)]
pub struct ClpbSink {
    buffer: VecDeque<u32>,
    capacity: usize,
    pub drops: u64,
}

impl ClpbSink {
    pub fn new(capacity: usize) -> Self {
        ClpbSink { buffer: VecDeque::new(), capacity, drops: 0 }
    }

    /// Buffers an application packet until the next slot 0; drop-tail when full.
    pub fn on_app_packet(&mut self, seq: u32) -> bool {
        if self.buffer.len() >= self.capacity {
            self.drops += 1;
            return false;
        }
        self.buffer.push_back(seq);
        true
    }

    pub fn backlog(&self) -> usize {
        self.buffer.len()
    }

    /// Headers for the frames sent in the slot 0 of the cycle starting at `cycle_start`.
    pub fn slot_frames(
        &mut self,
        timing: &CycleTiming,
        cycle_start: SimTime,
        slots: SlotAssignment,
        messages_number: u32,
    ) -> Vec<ClpbHeader> {
        let n = self.buffer.len().min(timing.capacity as usize);
        self.buffer
            .drain(..n)
            .map(|seq| ClpbHeader {
                seq,
                current_slot: 0,
                slots,
                messages_number,
                next_cycle_start: cycle_start + timing.period,
            })
            .collect()
    }
}
