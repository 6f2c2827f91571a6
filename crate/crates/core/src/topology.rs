//! Sink-side preprocessing: prune unreliable links, find maximum-reliability
//! paths from the sink, and turn the relays on those paths into a slot schedule.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::channel::{
    link_success_probability, node_pairs, ChannelTable, LinkBudget, NodeId, Posture, NODE_COUNT,
};

/// Links kept by pruning must succeed strictly more often than this.
pub const PRUNING_PROBABILITY: f64 = 0.5;

/// Relative tolerance under which two path costs count as a tie.
const COST_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("channel table has no statistics for posture `{0}`")]
    MissingPosture(Posture),
}

/// Undirected graph of the links whose success probability exceeds one half.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedGraph {
    pub posture: Posture,
    prob: [[Option<f64>; NODE_COUNT]; NODE_COUNT],
}

impl PrunedGraph {
    pub fn empty(posture: Posture) -> Self {
        PrunedGraph { posture, prob: [[None; NODE_COUNT]; NODE_COUNT] }
    }

    /// Builds a graph from explicit edges. Self loops and probabilities
    /// outside `(0, 1]` are rejected with a panic; this is a test and
    /// tooling constructor.
    pub fn from_edges(posture: Posture, edges: &[(NodeId, NodeId, f64)]) -> Self {
        let mut g = PrunedGraph::empty(posture);
        for &(a, b, p) in edges {
            assert_ne!(a, b, "self loop");
            assert!(p > 0.0 && p <= 1.0, "edge probability {p} out of range");
            g.prob[a.index()][b.index()] = Some(p);
            g.prob[b.index()][a.index()] = Some(p);
        }
        g
    }

    pub fn probability(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.prob[a.index()][b.index()]
    }

    pub fn neighbors(&self, a: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        NodeId::ALL
            .into_iter()
            .filter_map(move |b| self.prob[a.index()][b.index()].map(|p| (b, p)))
    }

    /// Edges as `(i, j, p)` with `i < j`, in canonical order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId, f64)> {
        node_pairs()
            .filter_map(|(a, b)| self.probability(a, b).map(|p| (a, b, p)))
            .collect()
    }
}

/// Keeps every link whose success probability under the budget threshold is
/// strictly above one half.
pub fn build_pruned_graph(
    table: &ChannelTable,
    posture: Posture,
    budget: &LinkBudget,
) -> Result<PrunedGraph, TopologyError> {
    let links = table.posture(posture).ok_or(TopologyError::MissingPosture(posture))?;
    let threshold = budget.threshold_db();
    let mut g = PrunedGraph::empty(posture);
    for (a, b) in node_pairs() {
        let p = link_success_probability(links.get(a, b), threshold);
        if p > PRUNING_PROBABILITY {
            g.prob[a.index()][b.index()] = Some(p);
            g.prob[b.index()][a.index()] = Some(p);
        }
    }
    Ok(g)
}

/// A sink-rooted path and the product of its edge probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliablePath {
    pub nodes: Vec<NodeId>,
    pub reliability: f64,
    /// Sum of `-ln p` over the edges.
    pub cost: f64,
}

impl ReliablePath {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("paths are never empty")
    }

    /// Lower is better: cost, then hop count, then node sequence.
    fn rank(&self, other: &Self) -> Ordering {
        let scale = self.cost.abs().max(other.cost.abs()).max(1.0);
        if (self.cost - other.cost).abs() > COST_TIE_EPS * scale {
            return self.cost.total_cmp(&other.cost);
        }
        self.nodes
            .len()
            .cmp(&other.nodes.len())
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub sink: NodeId,
    /// One path per reachable node, the sink included (zero hops).
    pub paths: BTreeMap<NodeId, ReliablePath>,
    pub unreachable: BTreeSet<NodeId>,
}

/// Maximum-reliability path from `sink` to every node, as a shortest-path
/// search under the additive weight `-ln p`.
///
/// Ties on reliability prefer fewer hops, then the lexicographically
/// smallest node sequence.
pub fn max_reliability_paths(graph: &PrunedGraph, sink: NodeId) -> PathSet {
    let mut best: [Option<ReliablePath>; NODE_COUNT] = Default::default();
    let mut settled = [false; NODE_COUNT];
    best[sink.index()] = Some(ReliablePath { nodes: vec![sink], reliability: 1.0, cost: 0.0 });

    loop {
        let next = NodeId::ALL
            .into_iter()
            .filter(|n| !settled[n.index()])
            .filter_map(|n| best[n.index()].as_ref().map(|p| (n, p)))
            .min_by(|(_, a), (_, b)| a.rank(b))
            .map(|(n, _)| n);
        let Some(u) = next else { break };
        settled[u.index()] = true;
        let base = best[u.index()].clone().expect("settled nodes carry a path");

        for (v, p) in graph.neighbors(u) {
            if settled[v.index()] || base.nodes.contains(&v) {
                continue;
            }
            let mut nodes = base.nodes.clone();
            nodes.push(v);
            let candidate = ReliablePath {
                nodes,
                reliability: base.reliability * p,
                cost: base.cost - p.ln(),
            };
            let slot = &mut best[v.index()];
            if slot.as_ref().is_none_or(|cur| candidate.rank(cur) == Ordering::Less) {
                *slot = Some(candidate);
            }
        }
    }

    let mut paths = BTreeMap::new();
    let mut unreachable = BTreeSet::new();
    for n in NodeId::ALL {
        match best[n.index()].take() {
            Some(p) => {
                paths.insert(n, p);
            }
            None => {
                unreachable.insert(n);
            }
        }
    }
    PathSet { sink, paths, unreachable }
}

/// Senders in slot order; slot 0 is always the sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderSchedule {
    pub sink: NodeId,
    senders: Vec<NodeId>,
    slots: [Option<u8>; NODE_COUNT],
}

impl SenderSchedule {
    /// Assigns slots in the given order.
    pub fn from_order(senders: Vec<NodeId>) -> Self {
        assert!(!senders.is_empty(), "the sink is always a sender");
        let mut slots = [None; NODE_COUNT];
        for (i, s) in senders.iter().enumerate() {
            assert!(slots[s.index()].is_none(), "sender {s} listed twice");
            slots[s.index()] = Some(i as u8);
        }
        SenderSchedule { sink: senders[0], senders, slots }
    }

    pub fn senders(&self) -> &[NodeId] {
        &self.senders
    }

    pub fn n_senders(&self) -> usize {
        self.senders.len()
    }

    pub fn slot_of(&self, node: NodeId) -> Option<u8> {
        self.slots[node.index()]
    }

    pub fn slot_table(&self) -> [Option<u8>; NODE_COUNT] {
        self.slots
    }

    pub fn sender_set(&self) -> BTreeSet<NodeId> {
        self.senders.iter().copied().collect()
    }
}

/// Every node that relays on some selected path, plus the sink.
///
/// Slots follow ascending hop distance from the sink, ties broken by node id.
pub fn select_senders(paths: &PathSet, sink: NodeId) -> SenderSchedule {
    let mut senders: BTreeSet<NodeId> = BTreeSet::from([sink]);
    for path in paths.paths.values() {
        senders.extend(&path.nodes[..path.nodes.len() - 1]);
    }
    let hops = |n: &NodeId| {
        if *n == sink {
            0
        } else {
            paths.paths.get(n).map_or(usize::MAX, ReliablePath::hops)
        }
    };
    let mut order: Vec<NodeId> = senders.into_iter().collect();
    order.sort_by_key(|n| (hops(n), *n));
    SenderSchedule::from_order(order)
}

/// Pruned graph, paths and schedule for one posture.
#[derive(Debug, Clone)]
pub struct Preprocessing {
    pub graph: PrunedGraph,
    pub paths: PathSet,
    pub schedule: SenderSchedule,
}

impl Preprocessing {
    pub fn compute(
        table: &ChannelTable,
        posture: Posture,
        budget: &LinkBudget,
        sink: NodeId,
    ) -> Result<Self, TopologyError> {
        let graph = build_pruned_graph(table, posture, budget)?;
        let paths = max_reliability_paths(&graph, sink);
        let schedule = select_senders(&paths, sink);
        Ok(Preprocessing { graph, paths, schedule })
    }

    /// Human-readable dump of the graph, paths and slot map.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "posture: {}", self.graph.posture);
        let _ = writeln!(out, "sink: {}", self.schedule.sink);
        let _ = writeln!(out, "pruned graph edges:");
        for (a, b, p) in self.graph.edges() {
            let _ = writeln!(out, "  {a} - {b}  p={p:.4}");
        }
        let _ = writeln!(out, "max-reliability paths:");
        for (node, path) in &self.paths.paths {
            let hops: Vec<String> = path.nodes.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(
                out,
                "  {node}: {}  reliability={:.4}  hops={}",
                hops.join(" -> "),
                path.reliability,
                path.hops()
            );
        }
        if !self.paths.unreachable.is_empty() {
            let list: Vec<String> = self.paths.unreachable.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "unreachable: {}", list.join(","));
        }
        let senders: Vec<String> =
            self.schedule.sender_set().iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "senders: {{{}}}", senders.join(","));
        let _ = writeln!(out, "slots:");
        for (slot, node) in self.schedule.senders().iter().enumerate() {
            let _ = writeln!(out, "  slot {slot}: node {node} ({})", node.body_position());
        }
        out
    }
}
