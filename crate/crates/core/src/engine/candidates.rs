//! Incrementally maintained ranking of adjacent cluster pairs.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use crate::constraints::{ConstraintStore, Relation};
use crate::model::{ClusterId, Clustering, NeighborGraph};
use crate::strategy::{best_of_batch, CandidatePair, Scorer};

#[derive(Clone, Copy, Debug, PartialEq)]
struct RankKey {
    log_odds: f64,
    a: ClusterId,
    b: ClusterId,
}

impl Eq for RankKey {}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .log_odds
            .total_cmp(&self.log_odds)
            .then((self.a, self.b).cmp(&(other.a, other.b)))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn ordered(a: ClusterId, b: ClusterId) -> (ClusterId, ClusterId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Clusters joined to `members` by a forward or reverse kNN edge.
pub(crate) fn adjacent_clusters(
    members: &[usize],
    own: ClusterId,
    clustering: &Clustering,
    graph: &NeighborGraph,
    reverse: &[Vec<usize>],
) -> BTreeSet<ClusterId> {
    let mut out = BTreeSet::new();
    for &s in members {
        let forward = graph.neighbors(s).iter().map(|nb| nb.id);
        for t in forward.chain(reverse[s].iter().copied()) {
            let c = clustering.cluster_of(t);
            if c != own {
                out.insert(c);
            }
        }
    }
    out
}

/// Whether the store already separates clusters `a` and `b`.
pub(crate) fn known_cannot(clustering: &Clustering, constraints: &ConstraintStore, a: ClusterId, b: ClusterId) -> bool {
    let (small, large) = if clustering.size(a) <= clustering.size(b) { (a, b) } else { (b, a) };
    match clustering.members(small) {
        Ok(members) => {
            constraints.relation_where(members, |t| clustering.cluster_of(t) == large) == Some(Relation::Cannot)
        }
        Err(_) => false,
    }
}

/// Log-odds of every live adjacent pair, ordered for selection.
///
/// Scores are computed once per pair: cluster ids are never reused, so a
/// pair's members cannot change while both ids are live.
#[derive(Debug, Default)]
pub struct CandidateIndex {
    ranked: BTreeSet<RankKey>,
    log_odds: HashMap<(ClusterId, ClusterId), f64>,
    partners: HashMap<ClusterId, HashSet<ClusterId>>,
}

impl CandidateIndex {
    pub fn build(clustering: &Clustering, scorer: &Scorer, reverse: &[Vec<usize>]) -> Self {
        let mut index = Self::default();
        let mut pairs: BTreeSet<(ClusterId, ClusterId)> = BTreeSet::new();
        for (id, members) in clustering.iter() {
            for other in adjacent_clusters(members, id, clustering, scorer.graph, reverse) {
                pairs.insert(ordered(id, other));
            }
        }
        let pairs: Vec<(ClusterId, ClusterId)> = pairs.into_iter().collect();
        use rayon::prelude::*;
        let scored: Vec<((ClusterId, ClusterId), f64)> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let lo = scorer.log_odds(
                    clustering.members(a).expect("live cluster"),
                    clustering.members(b).expect("live cluster"),
                );
                ((a, b), lo)
            })
            .collect();
        for ((a, b), lo) in scored {
            index.insert(a, b, lo);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.log_odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_odds.is_empty()
    }

    pub fn contains(&self, a: ClusterId, b: ClusterId) -> bool {
        self.log_odds.contains_key(&ordered(a, b))
    }

    fn insert(&mut self, a: ClusterId, b: ClusterId, log_odds: f64) {
        let (a, b) = ordered(a, b);
        if let Some(old) = self.log_odds.insert((a, b), log_odds) {
            self.ranked.remove(&RankKey { log_odds: old, a, b });
        }
        self.ranked.insert(RankKey { log_odds, a, b });
        self.partners.entry(a).or_default().insert(b);
        self.partners.entry(b).or_default().insert(a);
    }

    pub fn remove_pair(&mut self, a: ClusterId, b: ClusterId) {
        let (a, b) = ordered(a, b);
        if let Some(lo) = self.log_odds.remove(&(a, b)) {
            self.ranked.remove(&RankKey { log_odds: lo, a, b });
        }
        if let Some(p) = self.partners.get_mut(&a) {
            p.remove(&b);
        }
        if let Some(p) = self.partners.get_mut(&b) {
            p.remove(&a);
        }
    }

    /// Drops every pair involving `c`.
    pub fn remove_cluster(&mut self, c: ClusterId) {
        for other in self.partners.remove(&c).unwrap_or_default() {
            let (a, b) = ordered(c, other);
            if let Some(lo) = self.log_odds.remove(&(a, b)) {
                self.ranked.remove(&RankKey { log_odds: lo, a, b });
            }
            if let Some(p) = self.partners.get_mut(&other) {
                p.remove(&c);
            }
        }
    }

    /// Scores `c` against every adjacent live cluster.
    pub fn add_cluster(&mut self, c: ClusterId, clustering: &Clustering, scorer: &Scorer, reverse: &[Vec<usize>]) {
        let Ok(members) = clustering.members(c) else {
            return;
        };
        for other in adjacent_clusters(members, c, clustering, scorer.graph, reverse) {
            if self.contains(c, other) {
                continue;
            }
            let lo = scorer.log_odds(members, clustering.members(other).expect("live cluster"));
            self.insert(c, other, lo);
        }
    }

    /// The `batch` most probable pairs not known to be cannot-linked, in rank
    /// order. Pairs found cannot-linked are dropped for good.
    pub fn top(
        &mut self,
        clustering: &Clustering,
        scorer: &Scorer,
        constraints: &ConstraintStore,
        batch: usize,
    ) -> Vec<CandidatePair> {
        let mut picked = Vec::with_capacity(batch);
        let mut dead = Vec::new();
        for key in &self.ranked {
            if picked.len() >= batch.max(1) {
                break;
            }
            if known_cannot(clustering, constraints, key.a, key.b) {
                dead.push((key.a, key.b));
            } else {
                picked.push(scorer.score(clustering, key.a, key.b, key.log_odds));
            }
        }
        for (a, b) in dead {
            self.remove_pair(a, b);
        }
        picked
    }

    pub fn select(
        &mut self,
        clustering: &Clustering,
        scorer: &Scorer,
        constraints: &ConstraintStore,
        batch: usize,
    ) -> Option<CandidatePair> {
        best_of_batch(&self.top(clustering, scorer, constraints, batch))
    }
}
