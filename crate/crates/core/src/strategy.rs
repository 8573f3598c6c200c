//! Cluster-pair scoring: aggregation probability, entropy delta, expected
//! NMI gain, and candidate selection.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintStore, Relation};
use crate::error::{Error, Result};
use crate::model::{ClusterId, Clustering, Dataset, NeighborGraph};
use crate::pairwise::{ln_sigmoid, sigmoid, PairProbabilityStore};

/// Default number of large-cluster neighbors per small-cluster sample.
pub const DEFAULT_KAPPA: usize = 4;

/// Which cross pairs enter the aggregation probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AggregationMode {
    /// Every cross pair.
    Full,
    /// Each sample of the smaller cluster against its `kappa` nearest
    /// members of the larger one.
    Knn { kappa: usize },
}

impl Default for AggregationMode {
    fn default() -> Self {
        AggregationMode::Knn { kappa: DEFAULT_KAPPA }
    }
}

impl AggregationMode {
    /// `0` selects every cross pair, any other value is `kappa`.
    pub fn from_knn_agg(kappa: usize) -> Self {
        match kappa {
            0 => AggregationMode::Full,
            k => AggregationMode::Knn { kappa: k },
        }
    }
}

/// Sum of pair log-odds over every cross pair, in an order that does not
/// depend on the argument order.
pub fn aggregation_log_odds(a: &[usize], b: &[usize], store: &PairProbabilityStore) -> f64 {
    let (small, large) = small_large(a, b);
    small
        .iter()
        .map(|&s| large.iter().map(|&t| store.log_odds(s, t)).sum::<f64>())
        .sum()
}

/// Posterior probability that two clusters share a dominant class, taking
/// every cross pair into account.
pub fn aggregation_probability(a: &[usize], b: &[usize], store: &PairProbabilityStore) -> f64 {
    sigmoid(aggregation_log_odds(a, b, store))
}

/// Orders the pair as (smaller, larger); equal sizes put the cluster with
/// the lower first member first so the result is symmetric.
fn small_large<'m>(a: &'m [usize], b: &'m [usize]) -> (&'m [usize], &'m [usize]) {
    match a.len().cmp(&b.len()) {
        Ordering::Less => (a, b),
        Ordering::Greater => (b, a),
        Ordering::Equal if a.iter().min() <= b.iter().min() => (a, b),
        Ordering::Equal => (b, a),
    }
}

/// The `kappa` members of `large` nearest to `s`, ties by lower id.
///
/// `large` must be sorted. The kNN list is used when it already holds
/// `kappa` members of `large`; otherwise distances are computed directly.
pub fn nearest_members(
    s: usize,
    large: &[usize],
    kappa: usize,
    graph: &NeighborGraph,
    dataset: &Dataset,
) -> Vec<usize> {
    if kappa >= large.len() {
        return large.to_vec();
    }
    let from_graph: Vec<usize> = graph
        .neighbors(s)
        .iter()
        .filter(|nb| large.binary_search(&nb.id).is_ok())
        .take(kappa)
        .map(|nb| nb.id)
        .collect();
    if from_graph.len() == kappa {
        return from_graph;
    }
    let mut ranked: Vec<(f64, usize)> = large.iter().map(|&t| (dataset.distance(s, t), t)).collect();
    let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    ranked.select_nth_unstable_by(kappa - 1, cmp);
    ranked.truncate(kappa);
    ranked.sort_unstable_by(cmp);
    ranked.into_iter().map(|(_, t)| t).collect()
}

/// Log-odds restricted to each smaller-cluster sample and its `kappa`
/// nearest members of the larger cluster. Member lists must be sorted.
pub fn aggregation_log_odds_knn(
    a: &[usize],
    b: &[usize],
    store: &PairProbabilityStore,
    graph: &NeighborGraph,
    dataset: &Dataset,
    kappa: usize,
) -> f64 {
    let (small, large) = small_large(a, b);
    small
        .iter()
        .map(|&s| {
            nearest_members(s, large, kappa, graph, dataset)
                .into_iter()
                .map(|t| store.log_odds(s, t))
                .sum::<f64>()
        })
        .sum()
}

pub fn aggregation_probability_knn(
    a: &[usize],
    b: &[usize],
    store: &PairProbabilityStore,
    graph: &NeighborGraph,
    dataset: &Dataset,
    kappa: usize,
) -> f64 {
    sigmoid(aggregation_log_odds_knn(a, b, store, graph, dataset, kappa))
}

fn x_ln_x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropy drop from merging clusters of sizes `p` and `q` out of `n`.
pub fn delta_entropy(p: usize, q: usize, n: usize) -> Result<f64> {
    if p == 0 || q == 0 {
        return Err(Error::invalid("delta_entropy needs non-empty clusters"));
    }
    if p + q > n {
        return Err(Error::invalid(format!("cluster sizes {p} + {q} exceed n = {n}")));
    }
    let (p, q) = (p as f64, q as f64);
    Ok((x_ln_x(p + q) - x_ln_x(p) - x_ln_x(q)) / n as f64)
}

/// Ranking score proportional to the expected NMI gain of a merge query.
pub fn expected_nmi_gain(probability: f64, delta_h: f64) -> f64 {
    probability * delta_h
}

/// Whether merging two clusters with purities `t1`, `t2` is guaranteed not
/// to lower NMI when the current NMI is `n1`.
pub fn check_aggregation_guarantee(t1: f64, t2: f64, n1: f64) -> bool {
    let t = t1.min(t2);
    t >= 0.7 && n1 >= 2.0 * (1.0586 - t)
}

/// A scored cluster pair, `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: ClusterId,
    pub b: ClusterId,
    pub log_odds: f64,
    pub probability: f64,
    pub delta_h: f64,
    pub expected_gain: f64,
}

impl CandidatePair {
    /// `ln(expected_gain)`, finite even when the probability underflows.
    pub fn log_gain(&self) -> f64 {
        ln_sigmoid(self.log_odds) + self.delta_h.ln()
    }
}

/// Everything needed to score cluster pairs.
#[derive(Clone, Copy)]
pub struct Scorer<'a> {
    pub dataset: &'a Dataset,
    pub graph: &'a NeighborGraph,
    pub store: &'a PairProbabilityStore,
    pub mode: AggregationMode,
}

impl<'a> Scorer<'a> {
    /// Aggregation log-odds; argument order does not affect the bits.
    pub fn log_odds(&self, a: &[usize], b: &[usize]) -> f64 {
        let (a, b) = if a.first() <= b.first() { (a, b) } else { (b, a) };
        match self.mode {
            AggregationMode::Full => aggregation_log_odds(a, b, self.store),
            AggregationMode::Knn { kappa } => {
                aggregation_log_odds_knn(a, b, self.store, self.graph, self.dataset, kappa)
            }
        }
    }

    pub fn score(&self, clustering: &Clustering, a: ClusterId, b: ClusterId, log_odds: f64) -> CandidatePair {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let probability = sigmoid(log_odds);
        let delta_h = delta_entropy(clustering.size(a), clustering.size(b), clustering.n())
            .unwrap_or(0.0);
        CandidatePair {
            a,
            b,
            log_odds,
            probability,
            delta_h,
            expected_gain: expected_nmi_gain(probability, delta_h),
        }
    }

    pub fn candidate(&self, clustering: &Clustering, a: ClusterId, b: ClusterId) -> Result<CandidatePair> {
        let lo = self.log_odds(clustering.members(a)?, clustering.members(b)?);
        Ok(self.score(clustering, a, b, lo))
    }
}

/// Ranking order: higher log-odds first, then lexicographic ids.
pub fn rank_order(x: &CandidatePair, y: &CandidatePair) -> Ordering {
    y.log_odds
        .total_cmp(&x.log_odds)
        .then((x.a, x.b).cmp(&(y.a, y.b)))
}

/// Picks the best-gain pair among the first `batch` ranked candidates; the
/// earlier-ranked pair wins ties.
pub fn best_of_batch(ranked: &[CandidatePair]) -> Option<CandidatePair> {
    ranked
        .iter()
        .copied()
        .reduce(|best, c| if c.log_gain() > best.log_gain() { c } else { best })
}

/// Cluster pairs joined by at least one kNN edge, each as `(low, high)`.
pub fn adjacent_pairs(clustering: &Clustering, graph: &NeighborGraph) -> BTreeSet<(ClusterId, ClusterId)> {
    let mut pairs = BTreeSet::new();
    for s in 0..graph.len() {
        let cs = clustering.cluster_of(s);
        for nb in graph.neighbors(s) {
            let ct = clustering.cluster_of(nb.id);
            if cs != ct {
                pairs.insert(if cs < ct { (cs, ct) } else { (ct, cs) });
            }
        }
    }
    pairs
}

/// Scores every kNN-adjacent cluster pair not known to be cannot-linked,
/// keeps the `batch` most probable, and returns the best expected gain.
pub fn select_candidate(
    clustering: &Clustering,
    scorer: &Scorer,
    constraints: &ConstraintStore,
    batch: usize,
) -> Option<CandidatePair> {
    let mut scored: Vec<CandidatePair> = adjacent_pairs(clustering, scorer.graph)
        .into_iter()
        .filter_map(|(a, b)| {
            let (ma, mb) = (clustering.members(a).ok()?, clustering.members(b).ok()?);
            if constraints.cluster_relation(ma, mb) == Some(Relation::Cannot) {
                return None;
            }
            scorer.candidate(clustering, a, b).ok()
        })
        .collect();
    scored.sort_by(rank_order);
    scored.truncate(batch.max(1));
    best_of_batch(&scored)
}

/// Candidate table for debugging: `a,b,prob,delta_h,gain` rows in rank order.
pub fn candidate_table(clustering: &Clustering, scorer: &Scorer) -> String {
    let mut rows: Vec<CandidatePair> = adjacent_pairs(clustering, scorer.graph)
        .into_iter()
        .filter_map(|(a, b)| scorer.candidate(clustering, a, b).ok())
        .collect();
    rows.sort_by(rank_order);
    let mut out = String::from("i,j,prob,delta_h,gain\n");
    for c in rows {
        out.push_str(&format!("{},{},{},{},{}\n", c.a, c.b, c.probability, c.delta_h, c.expected_gain));
    }
    out
}

/// Log-odds per adjacent cluster pair, for callers that want the raw map.
pub fn adjacent_log_odds(clustering: &Clustering, scorer: &Scorer) -> HashMap<(ClusterId, ClusterId), f64> {
    adjacent_pairs(clustering, scorer.graph)
        .into_iter()
        .filter_map(|(a, b)| {
            let lo = scorer.log_odds(clustering.members(a).ok()?, clustering.members(b).ok()?);
            Some(((a, b), lo))
        })
        .collect()
}
