use std::collections::VecDeque;

use crate::channel::{NodeId, NODE_COUNT};
use crate::clpb::{ClpbHeader, ClpbNode, ClpbSink, CycleTiming, ForwardPlan, SlotAssignment, TickAction};
use crate::topology::SenderSchedule;

use super::{Event, Frame, RadioMode, RunConfig, SimTime, TraceKind, World};

/// Slot-driven CLPB: the sink fills slot 0 of each cycle, relays own the
/// following slots and everyone else duty-cycles.
pub(super) struct ClpbDriver {
    sink: NodeId,
    slots: SlotAssignment,
    timing: CycleTiming,
    sink_state: ClpbSink,
    nodes: Vec<ClpbNode>,
    outbox: Vec<VecDeque<ClpbHeader>>,
    slot_end: [SimTime; NODE_COUNT],
    arrivals: Vec<SimTime>,
    injected: u32,
    messages: u32,
    frame_bits: u32,
    airtime: SimTime,
}

impl ClpbDriver {
    pub(super) fn new(cfg: &RunConfig, schedule: &SenderSchedule, messages: u32) -> Self {
        let timing = CycleTiming::new(
            schedule.n_senders(),
            cfg.slot,
            cfg.rate_pps,
            messages,
            cfg.capacity_per_slot(),
        );
        ClpbDriver {
            sink: schedule.sink,
            slots: SlotAssignment::from_schedule(schedule),
            timing,
            sink_state: ClpbSink::new(cfg.buffer),
            nodes: NodeId::ALL.iter().map(|&n| ClpbNode::new(n, schedule, cfg.slot)).collect(),
            outbox: vec![VecDeque::new(); NODE_COUNT],
            slot_end: [SimTime::ZERO; NODE_COUNT],
            arrivals: (0..messages).map(|s| cfg.app_arrival(s)).collect(),
            injected: 0,
            messages,
            frame_bits: cfg.frame_bits,
            airtime: cfg.airtime(),
        }
    }

    pub(super) fn timing(&self) -> CycleTiming {
        self.timing
    }

    pub(super) fn drops(&self) -> [u64; NODE_COUNT] {
        let mut d = [0; NODE_COUNT];
        d[self.sink.index()] = self.sink_state.drops;
        d
    }

    pub(super) fn start(&mut self, w: &mut World) {
        if self.messages == 0 {
            return;
        }
        for (seq, &t) in self.arrivals.iter().enumerate() {
            w.schedule(t, Event::App { seq: seq as u32 });
        }
        for n in NodeId::ALL {
            w.schedule(SimTime::ZERO, Event::SlotTick { node: n });
        }
    }

    pub(super) fn handle(&mut self, w: &mut World, ev: Event) {
        match ev {
            Event::App { seq } => {
                self.injected += 1;
                if !self.sink_state.on_app_packet(seq) {
                    w.trace(self.sink, TraceKind::Drop { seq });
                }
            }
            Event::SlotTick { node } if node == self.sink => self.sink_cycle(w),
            Event::SlotTick { node } => self.node_tick(w, node),
            Event::WindowEnd { node } => {
                let n = &self.nodes[node.index()];
                if !n.heard_this_slot() && w.mode(node) == RadioMode::Rx {
                    w.set_mode(node, RadioMode::Sleep);
                }
            }
            Event::ClpbTransmit { node } => {
                let headers = if node == self.sink {
                    self.sink_state.slot_frames(&self.timing, w.now, self.slots, self.messages)
                } else {
                    self.nodes[node.index()].take_slot_frames(w.now, self.timing.capacity, self.slots)
                };
                self.outbox[node.index()] = headers.into();
                self.slot_end[node.index()] = w.now + self.timing.slot;
                self.transmit_next(w, node);
            }
            Event::TxEnd { tx } => {
                let done = w.finish_transmission(tx);
                self.transmit_next(w, done.sender);
                let header = *done.frame.clpb_header().expect("CLPB frame without header");
                for r in done.delivered {
                    self.deliver(w, r, &header, done.sender, done.start);
                }
            }
            Event::MacAttempt { .. } | Event::MbpTimer { .. } => unreachable!("flat events in a CLPB run"),
        }
    }

    fn sink_cycle(&mut self, w: &mut World) {
        if self.sink_state.backlog() > 0 {
            // Sent after every node has handled the slot boundary.
            w.schedule(w.now, Event::ClpbTransmit { node: self.sink });
        }
        if self.injected < self.messages || self.sink_state.backlog() > self.timing.capacity as usize {
            w.schedule(w.now + self.timing.period, Event::SlotTick { node: self.sink });
        }
    }

    fn node_tick(&mut self, w: &mut World, node: NodeId) {
        let slot = self.timing.slot;
        match self.nodes[node.index()].slot_tick(w.now) {
            TickAction::Listen { window_end } => {
                w.set_mode(node, RadioMode::Rx);
                w.schedule(window_end, Event::WindowEnd { node });
                w.schedule(w.now + slot, Event::SlotTick { node });
            }
            TickAction::Transmit => {
                w.set_mode(node, RadioMode::Sleep);
                w.schedule(w.now, Event::ClpbTransmit { node });
                w.schedule(w.now + slot, Event::SlotTick { node });
            }
            TickAction::SleepUntil(t) => {
                w.set_mode(node, RadioMode::Sleep);
                w.schedule(t, Event::SlotTick { node });
            }
            TickAction::SleepForever => {
                w.set_mode(node, RadioMode::Sleep);
                w.trace(node, TraceKind::SleepForever);
            }
        }
    }

    /// Sends the next queued frame of `node` if it still fits in the slot;
    /// otherwise closes the slot.
    fn transmit_next(&mut self, w: &mut World, node: NodeId) {
        let i = node.index();
        let fits = w.now + self.airtime <= self.slot_end[i];
        match self.outbox[i].pop_front() {
            Some(h) if fits => {
                let frame = Frame::clpb(node, self.sink, h, self.frame_bits);
                let receivable = w.begin_transmission(node, frame);
                for r in NodeId::ALL {
                    if r != node && w.mode(r) == RadioMode::Rx && (receivable[r.index()] || w.senses(node, r)) {
                        self.nodes[r.index()].note_carrier();
                    }
                }
            }
            leftover => {
                debug_assert!(leftover.is_none(), "slot capacity exceeded");
                if node != self.sink {
                    self.nodes[i].after_own_slot();
                }
            }
        }
    }

    fn deliver(&mut self, w: &mut World, node: NodeId, header: &ClpbHeader, from: NodeId, start: SimTime) {
        if node == self.sink {
            return;
        }
        let outcome = self.nodes[node.index()].on_receive(header, start);
        w.record_reception(node, header.seq, from);
        if let Some(ForwardPlan::NextCycle(until)) = outcome.forward {
            w.trace(node, TraceKind::Defer { seq: header.seq, until });
        }
        if outcome.sleep_forever {
            w.set_mode(node, RadioMode::Sleep);
            w.trace(node, TraceKind::SleepForever);
        }
    }
}
