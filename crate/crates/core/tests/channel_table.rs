mod common;

use bansim_core::channel::{
    link_success_probability, node_pairs, sample_attenuation, ChannelTable, LinkBudget, LinkStats, NodeId, Posture,
    PostureLinks,
};
use common::{normal_cdf_simpson, FIXTURE, WALK_FIXTURE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn quadrature_oracle_reference_points() {
    assert!((normal_cdf_simpson(1.0) - 0.8413).abs() < 5e-5);
    assert!((normal_cdf_simpson(-3.0) - 0.00135).abs() < 5e-6);
}

#[test]
fn success_probability_matches_quadrature() {
    let threshold = LinkBudget::default().threshold_db();
    // One sigma below the threshold, and three sigma above it.
    let p = link_success_probability(LinkStats::new(41.0, 4.0).unwrap(), threshold);
    assert!((p - 0.8413).abs() < 5e-5);
    let p = link_success_probability(LinkStats::new(54.0, 3.0).unwrap(), threshold);
    assert!((p - 0.00135).abs() < 5e-6);
    for (mean, std) in [(30.0, 2.0), (44.0, 5.0), (47.5, 6.0), (60.0, 4.0), (45.0, 1.0)] {
        let p = link_success_probability(LinkStats::new(mean, std).unwrap(), threshold);
        let oracle = normal_cdf_simpson((threshold - mean) / std);
        assert!((p - oracle).abs() < 1e-9, "mean {mean} std {std}: {p} vs {oracle}");
    }
}

#[test]
fn empirical_reception_rate_follows_cdf() {
    let stats = LinkStats::new(43.0, 4.0).unwrap();
    let budget = LinkBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let hits = (0..n)
        .filter(|_| bansim_core::channel::frame_receivable(sample_attenuation(stats, &mut rng), &budget))
        .count();
    let expected = link_success_probability(stats, budget.threshold_db());
    assert!((hits as f64 / n as f64 - expected).abs() < 0.005);
}

#[test]
fn fixtures_load_and_walk_files_agree() {
    let full = ChannelTable::load(FIXTURE).unwrap();
    assert_eq!(full.postures().collect::<Vec<_>>(), Posture::ALL.to_vec());
    let walk = ChannelTable::load(WALK_FIXTURE).unwrap();
    assert_eq!(walk.postures().collect::<Vec<_>>(), vec![Posture::Walk]);
    assert_eq!(full.posture(Posture::Walk), walk.posture(Posture::Walk));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = ChannelTable::load("/nonexistent/table.tbl").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/table.tbl"));
}

fn arb_links() -> impl Strategy<Value = PostureLinks> {
    proptest::collection::vec((20.0f64..80.0, 0.0f64..8.0), 21).prop_map(|v| {
        let mut it = v.into_iter();
        PostureLinks::from_fn(|_, _| {
            let (m, s) = it.next().unwrap();
            LinkStats::new(m, s).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn text_round_trip(walk in arb_links(), sleep in arb_links()) {
        let table = ChannelTable::new().with_posture(Posture::Walk, walk).with_posture(Posture::Sleep, sleep);
        let back: ChannelTable = table.to_text().parse().unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn links_are_symmetric(links in arb_links()) {
        for (a, b) in node_pairs() {
            prop_assert_eq!(links.get(a, b), links.get(b, a));
        }
        let _ = NodeId::ALL;
    }
}
