//! Flat broadcast strategies: per-node reactions to a received frame. The
//! engine owns buffers and channel access; a strategy only decides what to
//! queue.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::channel::{NodeId, NODE_COUNT};
use crate::engine::{Frame, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyKind {
    Flooding,
    Plain,
    Pruned,
    Probabilistic,
    Mbp,
    OptFlood,
    Clpb,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Flooding,
        StrategyKind::Plain,
        StrategyKind::Pruned,
        StrategyKind::Probabilistic,
        StrategyKind::Mbp,
        StrategyKind::OptFlood,
        StrategyKind::Clpb,
    ];

    pub const FLAT: [StrategyKind; 6] = [
        StrategyKind::Flooding,
        StrategyKind::Plain,
        StrategyKind::Pruned,
        StrategyKind::Probabilistic,
        StrategyKind::Mbp,
        StrategyKind::OptFlood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Flooding => "flooding",
            StrategyKind::Plain => "plain",
            StrategyKind::Pruned => "pruned",
            StrategyKind::Probabilistic => "probabilistic",
            StrategyKind::Mbp => "mbp",
            StrategyKind::OptFlood => "optflood",
            StrategyKind::Clpb => "clpb",
        }
    }

    pub fn is_flat(self) -> bool {
        self != StrategyKind::Clpb
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy `{0}`")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Ok(match key.as_str() {
            "flooding" => StrategyKind::Flooding,
            "plain" | "plainflooding" => StrategyKind::Plain,
            "pruned" | "prunedflooding" => StrategyKind::Pruned,
            "probabilistic" | "probabilisticflooding" => StrategyKind::Probabilistic,
            "mbp" => StrategyKind::Mbp,
            "optflood" => StrategyKind::OptFlood,
            "clpb" => StrategyKind::Clpb,
            _ => return Err(UnknownStrategy(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    /// Fan-out of pruned flooding.
    pub k: usize,
    /// Initial rebroadcast probability of probabilistic flooding.
    pub p0: f64,
    /// Hop threshold below which MBP rebroadcasts at once.
    pub nh: u8,
    pub mbp_delay: SimTime,
    /// Flooding stops relaying frames that already travelled this many hops.
    pub hop_cap: u8,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            k: 3,
            p0: 1.0,
            nh: 2,
            mbp_delay: SimTime::from_micros(5000),
            hop_cap: 32,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("pruned fan-out K must be at least 1".into());
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(format!("initial probability {} outside (0, 1]", self.p0));
        }
        if self.nh == 0 {
            return Err("MBP hop threshold must be at least 1".into());
        }
        if self.hop_cap == 0 {
            return Err("flooding hop cap must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Discard,
    Rebroadcast,
    /// One addressed copy per listed node.
    SendTo(Vec<NodeId>),
    /// Rebroadcast after the delay unless cancelled meanwhile.
    Delay(SimTime),
    /// A pending delayed rebroadcast was called off.
    Cancel,
}

#[derive(Debug, Clone)]
pub struct StrategyState {
    seen: Vec<bool>,
    pub current_p: f64,
    pub broadcasts: u32,
    pub highest_seen: Option<u32>,
    mbp_pending: BTreeMap<u32, Frame>,
}

impl StrategyState {
    pub fn new(params: &StrategyParams) -> Self {
        StrategyState {
            seen: Vec::new(),
            current_p: params.p0,
            broadcasts: 0,
            highest_seen: None,
            mbp_pending: BTreeMap::new(),
        }
    }

    pub fn has_seen(&self, seq: u32) -> bool {
        self.seen.get(seq as usize).copied().unwrap_or(false)
    }

    /// Marks the seq as seen and reports whether it was new.
    fn mark_seen(&mut self, seq: u32) -> bool {
        let i = seq as usize;
        if self.seen.len() <= i {
            self.seen.resize(i + 1, false);
        }
        !std::mem::replace(&mut self.seen[i], true)
    }

    pub fn mbp_pending(&self, seq: u32) -> bool {
        self.mbp_pending.contains_key(&seq)
    }

    /// Fires the MBP timer of `seq`; returns the frame to relay if it is still pending.
    pub fn mbp_timer_fired(&mut self, seq: u32) -> Option<Frame> {
        self.mbp_pending.remove(&seq)
    }
}

/// Relays every copy until the hop cap is reached.
pub fn flooding_on_receive(state: &mut StrategyState, frame: &Frame, params: &StrategyParams) -> Decision {
    state.mark_seen(frame.seq);
    if frame.hops() < params.hop_cap {
        Decision::Rebroadcast
    } else {
        Decision::Discard
    }
}

pub fn plain_on_receive(state: &mut StrategyState, frame: &Frame) -> Decision {
    if state.mark_seen(frame.seq) {
        Decision::Rebroadcast
    } else {
        Decision::Discard
    }
}

/// On a first copy, picks `K` distinct nodes other than `me` uniformly at random.
pub fn pruned_on_receive<R: Rng + ?Sized>(
    state: &mut StrategyState,
    frame: &Frame,
    me: NodeId,
    params: &StrategyParams,
    rng: &mut R,
) -> Decision {
    if !state.mark_seen(frame.seq) {
        return Decision::Discard;
    }
    let others: Vec<NodeId> = NodeId::ALL.into_iter().filter(|&n| n != me).collect();
    let k = params.k.min(NODE_COUNT - 1);
    let picked = index::sample(rng, others.len(), k);
    Decision::SendTo(picked.into_iter().map(|i| others[i]).collect())
}

pub fn probabilistic_on_receive<R: Rng + ?Sized>(
    state: &mut StrategyState,
    frame: &Frame,
    rng: &mut R,
) -> Decision {
    if !state.mark_seen(frame.seq) {
        return Decision::Discard;
    }
    let r: f64 = rng.random();
    if r < state.current_p {
        state.current_p /= 2.0;
        state.broadcasts += 1;
        Decision::Rebroadcast
    } else {
        Decision::Discard
    }
}

/// Near the sink relays at once; farther out waits and gives up if a
/// neighbour relays the same packet first.
pub fn mbp_on_receive(state: &mut StrategyState, frame: &Frame, me: NodeId, params: &StrategyParams) -> Decision {
    if !state.mark_seen(frame.seq) {
        return if state.mbp_pending.remove(&frame.seq).is_some() {
            Decision::Cancel
        } else {
            Decision::Discard
        };
    }
    if frame.hops() < params.nh {
        Decision::Rebroadcast
    } else {
        state.mbp_pending.insert(frame.seq, frame.relayed_by(me, None));
        Decision::Delay(params.mbp_delay)
    }
}

pub fn optflood_on_receive(state: &mut StrategyState, frame: &Frame) -> Decision {
    let fresh = state.mark_seen(frame.seq);
    let current = state.highest_seen.is_none_or(|h| frame.seq >= h);
    state.highest_seen = Some(state.highest_seen.map_or(frame.seq, |h| h.max(frame.seq)));
    if fresh && current {
        Decision::Rebroadcast
    } else {
        Decision::Discard
    }
}

/// Dispatches to the strategy's reaction. `Clpb` is not a flat strategy and always discards.
pub fn on_receive<R: Rng + ?Sized>(
    kind: StrategyKind,
    state: &mut StrategyState,
    frame: &Frame,
    me: NodeId,
    params: &StrategyParams,
    rng: &mut R,
) -> Decision {
    match kind {
        StrategyKind::Flooding => flooding_on_receive(state, frame, params),
        StrategyKind::Plain => plain_on_receive(state, frame),
        StrategyKind::Pruned => pruned_on_receive(state, frame, me, params, rng),
        StrategyKind::Probabilistic => probabilistic_on_receive(state, frame, rng),
        StrategyKind::Mbp => mbp_on_receive(state, frame, me, params),
        StrategyKind::OptFlood => optflood_on_receive(state, frame),
        StrategyKind::Clpb => Decision::Discard,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rx(seq: u32, hops: u8) -> Frame {
        let mut f = Frame::original(NodeId::THIGH, seq, 544);
        for _ in 1..hops {
            f = f.relayed_by(NodeId::NAVEL, None);
        }
        f
    }

    fn params() -> StrategyParams {
        StrategyParams::default()
    }

    #[test]
    fn flooding_relays_every_copy() {
        let mut s = StrategyState::new(&params());
        for _ in 0..3 {
            assert_eq!(flooding_on_receive(&mut s, &rx(5, 1), &params()), Decision::Rebroadcast);
        }
    }

    #[test]
    fn flooding_respects_hop_cap() {
        let p = StrategyParams { hop_cap: 3, ..params() };
        let mut s = StrategyState::new(&p);
        assert_eq!(flooding_on_receive(&mut s, &rx(0, 2), &p), Decision::Rebroadcast);
        assert_eq!(flooding_on_receive(&mut s, &rx(0, 3), &p), Decision::Discard);
    }

    #[test]
    fn plain_relays_once_per_seq() {
        let mut s = StrategyState::new(&params());
        assert_eq!(plain_on_receive(&mut s, &rx(0, 1)), Decision::Rebroadcast);
        assert_eq!(plain_on_receive(&mut s, &rx(0, 2)), Decision::Discard);
        assert_eq!(plain_on_receive(&mut s, &rx(1, 1)), Decision::Rebroadcast);
    }

    #[test]
    fn pruned_picks_k_distinct_others() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = params();
        for seq in 0..50 {
            let mut s = StrategyState::new(&p);
            let Decision::SendTo(to) = pruned_on_receive(&mut s, &rx(seq, 1), NodeId::CHEST, &p, &mut rng) else {
                panic!("expected addressed copies");
            };
            assert_eq!(to.len(), 3);
            assert!(!to.contains(&NodeId::CHEST));
            let mut uniq = to.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), 3);
            assert_eq!(pruned_on_receive(&mut s, &rx(seq, 2), NodeId::CHEST, &p, &mut rng), Decision::Discard);
        }
    }

    #[test]
    fn pruned_with_k_six_addresses_everyone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = StrategyParams { k: 6, ..params() };
        let mut s = StrategyState::new(&p);
        let Decision::SendTo(mut to) = pruned_on_receive(&mut s, &rx(0, 1), NodeId::HEAD, &p, &mut rng) else {
            panic!()
        };
        to.sort();
        let expected: Vec<NodeId> = NodeId::ALL.into_iter().filter(|&n| n != NodeId::HEAD).collect();
        assert_eq!(to, expected);
    }

    #[test]
    fn probabilistic_halves_after_each_broadcast() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = StrategyState::new(&params());
        assert_eq!(probabilistic_on_receive(&mut s, &rx(0, 1), &mut rng), Decision::Rebroadcast);
        assert_eq!(s.current_p, 0.5);
        let mut seq = 1;
        while s.broadcasts < 3 {
            probabilistic_on_receive(&mut s, &rx(seq, 1), &mut rng);
            seq += 1;
        }
        assert_eq!(s.current_p, 0.125);
    }

    #[test]
    fn probabilistic_miss_keeps_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = StrategyState::new(&params());
        s.current_p = 0.0;
        assert_eq!(probabilistic_on_receive(&mut s, &rx(0, 1), &mut rng), Decision::Discard);
        assert_eq!(s.current_p, 0.0);
        assert_eq!(s.broadcasts, 0);
    }

    #[test]
    fn mbp_immediate_then_delayed_then_cancelled() {
        let p = params();
        let mut s = StrategyState::new(&p);
        assert_eq!(mbp_on_receive(&mut s, &rx(0, 1), NodeId::NAVEL, &p), Decision::Rebroadcast);
        assert_eq!(mbp_on_receive(&mut s, &rx(1, 2), NodeId::NAVEL, &p), Decision::Delay(p.mbp_delay));
        assert!(s.mbp_pending(1));
        assert_eq!(mbp_on_receive(&mut s, &rx(1, 3), NodeId::NAVEL, &p), Decision::Cancel);
        assert_eq!(s.mbp_timer_fired(1), None);
    }

    #[test]
    fn mbp_timer_relays_pending_frame() {
        let p = params();
        let mut s = StrategyState::new(&p);
        mbp_on_receive(&mut s, &rx(4, 2), NodeId::WRIST, &p);
        let f = s.mbp_timer_fired(4).unwrap();
        assert_eq!(f.hops(), 3);
        assert_eq!(f.forwarder, NodeId::WRIST);
    }

    #[test]
    fn optflood_discards_duplicates_and_obsolete() {
        let mut s = StrategyState::new(&params());
        assert_eq!(optflood_on_receive(&mut s, &rx(7, 1)), Decision::Rebroadcast);
        assert_eq!(optflood_on_receive(&mut s, &rx(7, 2)), Decision::Discard);
        assert_eq!(optflood_on_receive(&mut s, &rx(3, 1)), Decision::Discard);
        assert_eq!(optflood_on_receive(&mut s, &rx(8, 1)), Decision::Rebroadcast);
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert_eq!("Plain-Flooding".parse::<StrategyKind>().unwrap(), StrategyKind::Plain);
        assert!("gossip".parse::<StrategyKind>().is_err());
    }
}
