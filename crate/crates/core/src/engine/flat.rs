use crate::channel::{NodeId, NODE_COUNT};
use crate::strategies::{on_receive, Decision, StrategyKind, StrategyParams, StrategyState};

use super::mac::{CsmaMac, CsmaParams, MacAction};
use super::{Event, Frame, RadioMode, RunConfig, TraceKind, World};

/// Flat strategies on top of per-node CSMA. Radios never sleep.
pub(super) struct FlatDriver {
    kind: StrategyKind,
    params: StrategyParams,
    csma: CsmaParams,
    sink: NodeId,
    macs: Vec<CsmaMac>,
    states: Vec<StrategyState>,
    arrivals: Vec<super::SimTime>,
    frame_bits: u32,
}

impl FlatDriver {
    pub(super) fn new(cfg: &RunConfig, messages: u32) -> Self {
        FlatDriver {
            kind: cfg.strategy,
            params: cfg.params,
            csma: cfg.csma,
            sink: cfg.sink,
            macs: (0..NODE_COUNT).map(|_| CsmaMac::new(cfg.buffer)).collect(),
            states: (0..NODE_COUNT).map(|_| StrategyState::new(&cfg.params)).collect(),
            arrivals: (0..messages).map(|s| cfg.app_arrival(s)).collect(),
            frame_bits: cfg.frame_bits,
        }
    }

    pub(super) fn drops(&self) -> [u64; NODE_COUNT] {
        std::array::from_fn(|i| self.macs[i].drops)
    }

    pub(super) fn start(&mut self, w: &mut World) {
        for (seq, &t) in self.arrivals.iter().enumerate() {
            w.schedule(t, Event::App { seq: seq as u32 });
        }
    }

    pub(super) fn handle(&mut self, w: &mut World, ev: Event) {
        match ev {
            Event::App { seq } => {
                let frame = Frame::original(self.sink, seq, self.frame_bits);
                self.enqueue(w, self.sink, frame);
            }
            Event::MacAttempt { node } => {
                let busy = w.carrier_busy(node);
                match self.macs[node.index()].attempt(busy, &self.csma, &mut w.rng) {
                    MacAction::Transmit(frame) => {
                        w.begin_transmission(node, frame);
                    }
                    MacAction::RetryAfter(d) => w.schedule(w.now + d, Event::MacAttempt { node }),
                    MacAction::Dropped(frame) => {
                        w.trace(node, TraceKind::Drop { seq: frame.seq });
                        self.kick(w, node);
                    }
                }
            }
            Event::TxEnd { tx } => {
                let done = w.finish_transmission(tx);
                w.set_mode(done.sender, RadioMode::Rx);
                self.macs[done.sender.index()].transmission_done();
                self.kick(w, done.sender);
                for r in done.delivered {
                    self.deliver(w, r, &done.frame);
                }
            }
            Event::MbpTimer { node, seq } => {
                if let Some(frame) = self.states[node.index()].mbp_timer_fired(seq) {
                    self.enqueue(w, node, frame);
                }
            }
            Event::SlotTick { .. } | Event::WindowEnd { .. } | Event::ClpbTransmit { .. } => {
                unreachable!("slot events in a flat run")
            }
        }
    }

    fn deliver(&mut self, w: &mut World, node: NodeId, frame: &Frame) {
        if node == self.sink {
            return;
        }
        if frame.addressee().is_some_and(|a| a != node) {
            return;
        }
        w.record_reception(node, frame.seq, frame.forwarder);
        let state = &mut self.states[node.index()];
        match on_receive(self.kind, state, frame, node, &self.params, &mut w.rng) {
            Decision::Discard | Decision::Cancel => {}
            Decision::Rebroadcast => self.enqueue(w, node, frame.relayed_by(node, None)),
            Decision::SendTo(targets) => {
                for t in targets {
                    self.enqueue(w, node, frame.relayed_by(node, Some(t)));
                }
            }
            Decision::Delay(d) => w.schedule(w.now + d, Event::MbpTimer { node, seq: frame.seq }),
        }
    }

    fn enqueue(&mut self, w: &mut World, node: NodeId, frame: Frame) {
        if !self.macs[node.index()].enqueue(frame) {
            w.trace(node, TraceKind::Drop { seq: frame.seq });
        }
        self.kick(w, node);
    }

    fn kick(&mut self, w: &mut World, node: NodeId) {
        if let Some(d) = self.macs[node.index()].start_service(&self.csma, &mut w.rng) {
            w.schedule(w.now + d, Event::MacAttempt { node });
        }
    }
}
