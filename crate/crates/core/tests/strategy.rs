mod common;

use a3s::metrics::nmi;
use a3s::model::neighbor_graph_of;
use a3s::strategy::{
    aggregation_probability, aggregation_probability_knn, check_aggregation_guarantee, delta_entropy,
};
use common::{exact_aggregation, exact_knn, grid, guarantee_instance, instances, line, store_of, to_f64, Q};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn full_aggregation_matches_exact_rationals() {
    let cases = instances(&grid());
    assert!(cases.len() > 20_000);
    for (a, b, probs) in cases {
        let ga: Vec<usize> = (0..a).collect();
        let gb: Vec<usize> = (a..a + b).collect();
        let store = store_of(&ga, &gb, &probs);
        let exact = to_f64(&exact_aggregation(&probs));
        let got = aggregation_probability(&ga, &gb, &store);
        assert!((got - exact).abs() < 1e-12, "{a}x{b} {probs:?}: {got} vs {exact}");
        assert_eq!(got, aggregation_probability(&gb, &ga, &store));
    }
}

#[test]
fn knn_aggregation_matches_exact_rationals() {
    let ds = line(6, 3);
    let full_graph = neighbor_graph_of(ds.features(), 5).unwrap();
    let thin_graph = neighbor_graph_of(ds.features(), 1).unwrap();
    for (a, b, probs) in instances(&grid()) {
        let ga: Vec<usize> = (0..a).collect();
        let gb: Vec<usize> = (3..3 + b).collect();
        let store = store_of(&ga, &gb, &probs);
        for kappa in 1..=3 {
            let exact = to_f64(&exact_knn(&ga, &gb, &probs, kappa, &ds));
            for graph in [&full_graph, &thin_graph] {
                let got = aggregation_probability_knn(&ga, &gb, &store, graph, &ds, kappa);
                assert!((got - exact).abs() < 1e-12, "{a}x{b} kappa {kappa}");
                let back = aggregation_probability_knn(&gb, &ga, &store, graph, &ds, kappa);
                assert_eq!(got, back);
            }
        }
    }
}

fn rational() -> impl Strategy<Value = Q> {
    (1i128..97).prop_map(|k| Q::new(k, 97))
}

fn cluster_pair() -> impl Strategy<Value = (usize, usize, Vec<Q>)> {
    (1usize..5, 1usize..5).prop_flat_map(|(a, b)| (Just(a), Just(b), prop::collection::vec(rational(), a * b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn randomized_aggregation_laws((a, b, probs) in cluster_pair(), cell in any::<prop::sample::Index>(), bump in 1i128..50) {
        let ga: Vec<usize> = (0..a).collect();
        let gb: Vec<usize> = (a..a + b).collect();
        let store = store_of(&ga, &gb, &probs);
        let p = aggregation_probability(&ga, &gb, &store);
        prop_assert_eq!(p, aggregation_probability(&gb, &ga, &store));
        prop_assert!((p - to_f64(&exact_aggregation(&probs))).abs() < 1e-12);

        let one = Q::from_integer(1);
        let flipped: Vec<Q> = probs.iter().map(|q| one - q).collect();
        let dual = aggregation_probability(&ga, &gb, &store_of(&ga, &gb, &flipped));
        prop_assert!((p + dual - 1.0).abs() < 1e-12);

        let i = cell.index(probs.len());
        let mut raised = probs.clone();
        raised[i] = (raised[i] + Q::new(bump, 100)).min(Q::new(96, 97));
        let higher = aggregation_probability(&ga, &gb, &store_of(&ga, &gb, &raised));
        prop_assert!(higher >= p - 1e-15);
    }
}

#[test]
fn delta_entropy_values() {
    assert!((delta_entropy(1, 1, 2).unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!((delta_entropy(1, 3, 100).unwrap() - 0.022_493_4).abs() < 1e-7);
    assert!(delta_entropy(0, 3, 10).is_err());
    assert!(delta_entropy(6, 6, 10).is_err());
    // Larger merges of the same total gain more.
    assert!(delta_entropy(5, 5, 100).unwrap() > delta_entropy(1, 9, 100).unwrap());
}

#[test]
fn guarantee_boundaries() {
    assert!(check_aggregation_guarantee(1.0, 1.0, 0.2));
    assert!(!check_aggregation_guarantee(0.69, 1.0, 1.0));
    assert!(!check_aggregation_guarantee(0.7, 0.7, 0.7));
    assert!(check_aggregation_guarantee(0.7, 0.7, 0.7173));
}

#[test]
fn guaranteed_merges_do_not_lower_nmi() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 300 {
        if let Some((c, truth, a, b)) = guarantee_instance(&mut rng) {
            let before = nmi(&c, &truth).unwrap();
            let after = nmi(&common::merged(&c, a, b), &truth).unwrap();
            assert!(after >= before - 1e-12, "{before} -> {after}");
            checked += 1;
        }
    }
}
