mod common;

use bansim_core::channel::{ChannelTable, LinkBudget, NodeId, Posture, NODE_COUNT};
use bansim_core::topology::{build_pruned_graph, max_reliability_paths, select_senders, Preprocessing};
use common::{best_reliability_by_enumeration, node, random_graph, FIXTURE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn dijkstra_matches_enumeration_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for round in 0..300 {
        let density = [0.25, 0.45, 0.7][round % 3];
        let (graph, prob) = random_graph(&mut rng, density);
        let sink = node((round % NODE_COUNT) as u8);
        let paths = max_reliability_paths(&graph, sink);
        let oracle = best_reliability_by_enumeration(&prob, sink.index());
        for n in NodeId::ALL {
            match (paths.paths.get(&n), oracle[n.index()]) {
                (Some(p), Some(best)) => {
                    assert!((p.reliability.ln() - best).abs() <= 1e-12, "round {round} node {n}");
                    // The path itself achieves what it claims.
                    let product: f64 = p.nodes.windows(2).map(|w| graph.probability(w[0], w[1]).unwrap()).product();
                    assert!((product.ln() - best).abs() <= 1e-12);
                }
                (None, None) => assert!(paths.unreachable.contains(&n)),
                other => panic!("round {round} node {n}: reachability differs {other:?}"),
            }
        }
    }
}

#[test]
fn every_posture_reaches_all_nodes_from_the_sink() {
    let table = ChannelTable::load(FIXTURE).unwrap();
    for posture in Posture::ALL {
        let pre = Preprocessing::compute(&table, posture, &LinkBudget::default(), NodeId::THIGH).unwrap();
        assert!(pre.paths.unreachable.is_empty(), "{posture}");
        assert!(pre.schedule.n_senders() <= 5, "{posture}");
        assert_eq!(pre.schedule.senders()[0], NodeId::THIGH);
    }
}

#[test]
fn walk_schedule_order() {
    let table = ChannelTable::load(FIXTURE).unwrap();
    let graph = build_pruned_graph(&table, Posture::Walk, &LinkBudget::default()).unwrap();
    let schedule = select_senders(&max_reliability_paths(&graph, NodeId::THIGH), NodeId::THIGH);
    assert_eq!(schedule.senders(), &[node(5), node(3), node(0), node(6)]);
}
