//! Test-only oracles, independent of the library's algorithms.
#![allow(dead_code, clippy::needless_range_loop)]

use bansim_core::channel::{NodeId, Posture, NODE_COUNT};
use bansim_core::topology::PrunedGraph;
use rand::Rng;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic.tbl");
pub const WALK_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/synthetic_walk.tbl");

pub fn node(i: u8) -> NodeId {
    NodeId::new(i).unwrap()
}

/// Standard normal CDF by composite Simpson integration of the density from -12 to `z`.
pub fn normal_cdf_simpson(z: f64) -> f64 {
    let lo = -12.0;
    if z <= lo {
        return 0.0;
    }
    let n = 20_000;
    let h = (z - lo) / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = pdf(lo) + pdf(z);
    for i in 1..n {
        let x = lo + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
    }
    sum * h / 3.0
}

/// Best product of edge probabilities over every simple path from `sink`,
/// found by depth-first enumeration. `None` for unreachable nodes.
pub fn best_reliability_by_enumeration(prob: &[[Option<f64>; NODE_COUNT]; NODE_COUNT], sink: usize) -> [Option<f64>; NODE_COUNT] {
    fn walk(
        prob: &[[Option<f64>; NODE_COUNT]; NODE_COUNT],
        at: usize,
        visited: &mut [bool; NODE_COUNT],
        log_rel: f64,
        best: &mut [Option<f64>; NODE_COUNT],
    ) {
        if best[at].is_none_or(|b| log_rel > b) {
            best[at] = Some(log_rel);
        }
        for next in 0..NODE_COUNT {
            if let Some(p) = prob[at][next] {
                if !visited[next] {
                    visited[next] = true;
                    walk(prob, next, visited, log_rel + p.ln(), best);
                    visited[next] = false;
                }
            }
        }
    }
    let mut best = [None; NODE_COUNT];
    let mut visited = [false; NODE_COUNT];
    visited[sink] = true;
    walk(prob, sink, &mut visited, 0.0, &mut best);
    best
}

/// Random graph: each pair is an edge with probability `density`, edge
/// probabilities uniform in (0.5, 1].
pub fn random_graph<R: Rng>(rng: &mut R, density: f64) -> (PrunedGraph, [[Option<f64>; NODE_COUNT]; NODE_COUNT]) {
    let mut prob = [[None; NODE_COUNT]; NODE_COUNT];
    let mut edges = Vec::new();
    for i in 0..NODE_COUNT {
        for j in i + 1..NODE_COUNT {
            if rng.random_bool(density) {
                let p = 1.0 - rng.random_range(0.0..0.5);
                prob[i][j] = Some(p);
                prob[j][i] = Some(p);
                edges.push((node(i as u8), node(j as u8), p));
            }
        }
    }
    (PrunedGraph::from_edges(Posture::Walk, &edges), prob)
}
