use a3s::init::{initialize, probabilistic_cluster_traced, InitConfig, InitMethod, MergeStep};
use a3s::pairwise::{estimate, logit, PairProbabilityStore, PairwiseConfig, DEFAULT_EPSILON};
use a3s::synth::{gaussian_blobs, BlobConfig};
use a3s::Clustering;
use proptest::prelude::*;

/// Recomputes every cluster pair's log-odds from scratch at each step.
fn brute_greedy(store: &PairProbabilityStore, n: usize, threshold: f64) -> (Clustering, Vec<MergeStep>) {
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let cutoff = logit(threshold);
    let mut trace = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            for b in a + 1..n {
                if clusters[a].is_empty() || clusters[b].is_empty() {
                    continue;
                }
                let adjacent = clusters[a].iter().any(|&s| clusters[b].iter().any(|&t| store.contains(s, t)));
                if !adjacent {
                    continue;
                }
                let lo: f64 = clusters[a]
                    .iter()
                    .flat_map(|&s| clusters[b].iter().map(move |&t| (s, t)))
                    .map(|(s, t)| store.log_odds(s, t))
                    .sum();
                if best.is_none_or(|(v, _, _)| lo > v) {
                    best = Some((lo, a, b));
                }
            }
        }
        match best {
            Some((lo, a, b)) if lo > cutoff => {
                trace.push(MergeStep { a, b, log_odds: lo });
                let moved = std::mem::take(&mut clusters[b]);
                clusters[a].extend(moved);
            }
            _ => break,
        }
    }
    let groups: Vec<Vec<usize>> = clusters.into_iter().filter(|c| !c.is_empty()).collect();
    (Clustering::from_groups(n, &groups).unwrap(), trace)
}

fn sparse_store() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..14).prop_flat_map(|n| {
        let pairs = prop::collection::vec((0..n, 0..n, 0.02f64..0.999), 0..(n * 3));
        (Just(n), pairs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn greedy_merging_matches_brute_force((n, entries) in sparse_store(), threshold in 0.55f64..0.95) {
        let entries: Vec<_> = entries.into_iter().filter(|e| e.0 != e.1).collect();
        let store = PairProbabilityStore::from_entries(entries, DEFAULT_EPSILON);
        let (fast, fast_trace) = probabilistic_cluster_traced(&store, n, threshold).unwrap();
        let (slow, slow_trace) = brute_greedy(&store, n, threshold);
        prop_assert_eq!(fast.compact_labels(), slow.compact_labels());
        prop_assert_eq!(fast_trace.len(), slow_trace.len());
        for (f, s) in fast_trace.iter().zip(&slow_trace) {
            prop_assert_eq!((f.a, f.b), (s.a, s.b));
            prop_assert!((f.log_odds - s.log_odds).abs() < 1e-9);
            prop_assert!(f.log_odds > logit(threshold));
        }
    }
}

#[test]
fn two_separated_blobs_start_as_two_clusters() {
    let ds = gaussian_blobs(&BlobConfig {
        n: 60,
        k: 2,
        half_width: 10.0,
        noise_fraction: 0.0,
        seed: 9,
        ..BlobConfig::default()
    })
    .unwrap();
    // A full neighbor graph, so each blob is dense in the store.
    let model = estimate(&ds, &PairwiseConfig { neighbors: 59, pseudo_k: Some(2), ..PairwiseConfig::default() }).unwrap();
    let init = initialize(&ds, &model.store, &InitConfig::default(), 0).unwrap();
    assert_eq!(init.adaptive_k, 2);
    assert_eq!(init.clustering.compact_labels(), ds.truth().unwrap().compact_labels());
}

#[test]
fn conventional_initializers_use_the_adaptive_count() {
    let ds = gaussian_blobs(&BlobConfig { n: 300, k: 6, seed: 5, ..BlobConfig::default() }).unwrap();
    let model = estimate(&ds, &PairwiseConfig::default()).unwrap();
    let adaptive = initialize(&ds, &model.store, &InitConfig::default(), 0).unwrap().adaptive_k;
    for method in [InitMethod::Kmeans, InitMethod::Agglomerative] {
        let init = initialize(&ds, &model.store, &InitConfig { method, ..InitConfig::default() }, 0).unwrap();
        assert_eq!(init.adaptive_k, adaptive);
        assert_eq!(init.clustering.k(), adaptive);
        let doubled = initialize(&ds, &model.store, &InitConfig { method, ratio: 2.0, ..InitConfig::default() }, 0).unwrap();
        assert_eq!(doubled.clustering.k(), (2 * adaptive).min(ds.len()));
    }
}

#[test]
fn adaptive_count_tends_to_over_cluster() {
    let trials = 10;
    let mut over = 0;
    for seed in 0..trials {
        let ds = gaussian_blobs(&BlobConfig::scaled(1000, 20, seed)).unwrap();
        let model = estimate(&ds, &PairwiseConfig { seed, ..PairwiseConfig::default() }).unwrap();
        let init = initialize(&ds, &model.store, &InitConfig::default(), seed).unwrap();
        if init.adaptive_k >= 20 {
            over += 1;
        }
    }
    assert!(over * 10 >= trials * 9, "only {over}/{trials} trials over-clustered");
}
