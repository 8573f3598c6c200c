//! Initial clustering and the adaptive cluster count.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::model::{Clustering, Dataset};
use crate::pairwise::{logit, sigmoid, PairProbabilityStore};

/// Largest sample count accepted by the agglomerative initializer; its
/// condensed distance matrix grows quadratically.
pub const AGGLOMERATIVE_MAX_SAMPLES: usize = 20_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    #[default]
    Probabilistic,
    Kmeans,
    Agglomerative,
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMethod::Probabilistic => "probabilistic",
            InitMethod::Kmeans => "kmeans",
            InitMethod::Agglomerative => "agglomerative",
        })
    }
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probabilistic" => Ok(InitMethod::Probabilistic),
            "kmeans" => Ok(InitMethod::Kmeans),
            "agglomerative" => Ok(InitMethod::Agglomerative),
            other => Err(Error::Config(format!("unknown init method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub method: InitMethod,
    pub merge_threshold: f64,
    pub k_override: Option<usize>,
    /// Multiplier on the adaptive count for conventional initializers.
    pub ratio: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            method: InitMethod::Probabilistic,
            merge_threshold: 0.6,
            k_override: None,
            ratio: 1.0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.merge_threshold > 0.5 && self.merge_threshold < 1.0) {
            return Err(Error::Config(format!(
                "merge threshold must lie in (0.5, 1), got {}",
                self.merge_threshold
            )));
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return Err(Error::Config(format!("ratio must be positive, got {}", self.ratio)));
        }
        if self.k_override == Some(0) {
            return Err(Error::Config("k override must be positive".into()));
        }
        Ok(())
    }
}

/// One greedy merge: clusters (named by their smallest member) and the
/// log-odds that justified it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub log_odds: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    log_odds: f64,
    a: usize,
    b: usize,
    version_a: u32,
    version_b: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_odds
            .total_cmp(&other.log_odds)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Logit sum over stored cross pairs and how many pairs it covers.
#[derive(Clone, Copy, Default)]
struct Link {
    logit_sum: f64,
    pairs: u64,
}

/// Greedy agglomeration on the probability store alone, returning the final
/// partition and the merge trace.
///
/// Starting from singletons, the pair of clusters with the highest
/// aggregation probability merges while that probability exceeds
/// `merge_threshold`. Pairs absent from the store count at the store's
/// default probability, so only store-adjacent clusters can ever qualify.
pub fn probabilistic_cluster_traced(
    store: &PairProbabilityStore,
    n: usize,
    merge_threshold: f64,
) -> Result<(Clustering, Vec<MergeStep>)> {
    if !(merge_threshold > 0.5 && merge_threshold < 1.0) {
        return Err(Error::Config(format!(
            "merge threshold must lie in (0.5, 1), got {merge_threshold}"
        )));
    }
    let default_logit = logit(store.default_probability());
    let cutoff = logit(merge_threshold);

    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut version = vec![0u32; n];
    let mut links: Vec<HashMap<usize, Link>> = vec![HashMap::new(); n];
    for (s, t, p) in store.entries() {
        if s >= n || t >= n {
            return Err(Error::invalid(format!("store pair ({s}, {t}) outside 0..{n}")));
        }
        let l = logit(p);
        for (x, y) in [(s, t), (t, s)] {
            let link = links[x].entry(y).or_default();
            link.logit_sum += l;
            link.pairs += 1;
        }
    }

    let log_odds = |link: &Link, sa: usize, sb: usize| -> f64 {
        link.logit_sum + (sa as u64 * sb as u64 - link.pairs) as f64 * default_logit
    };

    let mut heap = BinaryHeap::new();
    for (a, row) in links.iter().enumerate() {
        for (&b, link) in row {
            if a < b {
                heap.push(HeapEntry {
                    log_odds: log_odds(link, 1, 1),
                    a,
                    b,
                    version_a: 0,
                    version_b: 0,
                });
            }
        }
    }

    let mut trace = Vec::new();
    while let Some(top) = heap.pop() {
        if version[top.a] != top.version_a || version[top.b] != top.version_b {
            continue;
        }
        if top.log_odds <= cutoff {
            break;
        }
        let (keep, gone) = (top.a, top.b);
        trace.push(MergeStep {
            a: keep,
            b: gone,
            log_odds: top.log_odds,
        });

        let moved = std::mem::take(&mut members[gone]);
        members[keep].extend(moved);
        version[gone] = u32::MAX;
        version[keep] += 1;

        // Fold the smaller link map into the larger one.
        let mut gone_links = std::mem::take(&mut links[gone]);
        let mut keep_links = std::mem::take(&mut links[keep]);
        gone_links.remove(&keep);
        keep_links.remove(&gone);
        for &x in gone_links.keys() {
            links[x].remove(&gone);
        }
        if gone_links.len() > keep_links.len() {
            std::mem::swap(&mut gone_links, &mut keep_links);
        }
        for (x, link) in gone_links {
            let entry = keep_links.entry(x).or_default();
            entry.logit_sum += link.logit_sum;
            entry.pairs += link.pairs;
        }
        let size = members[keep].len();
        let mut neighbors: Vec<(usize, Link)> = keep_links.iter().map(|(&x, &l)| (x, l)).collect();
        neighbors.sort_unstable_by_key(|&(x, _)| x);
        for (x, link) in neighbors {
            links[x].insert(keep, link);
            let (a, b) = if keep < x { (keep, x) } else { (x, keep) };
            heap.push(HeapEntry {
                log_odds: log_odds(&link, size, members[x].len()),
                a,
                b,
                version_a: version[a],
                version_b: version[b],
            });
        }
        links[keep] = keep_links;
    }

    let groups: Vec<Vec<usize>> = members.into_iter().filter(|m| !m.is_empty()).collect();
    Ok((Clustering::from_groups(n, &groups)?, trace))
}

pub fn probabilistic_cluster(store: &PairProbabilityStore, n: usize, merge_threshold: f64) -> Result<Clustering> {
    probabilistic_cluster_traced(store, n, merge_threshold).map(|(c, _)| c)
}

/// Probability recorded for a merge step.
pub fn step_probability(step: &MergeStep) -> f64 {
    sigmoid(step.log_odds)
}

/// Ward-linkage agglomeration cut at `k` clusters.
pub fn ward_clusters(dataset: &Dataset, k: usize) -> Result<Vec<usize>> {
    let n = dataset.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("agglomerative init needs 1 <= k <= {n}, got {k}")));
    }
    if n > AGGLOMERATIVE_MAX_SAMPLES {
        return Err(Error::Config(format!(
            "agglomerative init supports at most {AGGLOMERATIVE_MAX_SAMPLES} samples, got {n}"
        )));
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            condensed.push(dataset.distance(i, j));
        }
    }
    let dendrogram = kodama::linkage(&mut condensed, n, kodama::Method::Ward);

    // Label n + i is the cluster created by step i; track one sample per label.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut representative: Vec<usize> = (0..n).collect();
    for step in dendrogram.steps().iter().take(n - k) {
        let ra = find(&mut parent, representative[step.cluster1]);
        let rb = find(&mut parent, representative[step.cluster2]);
        let root = ra.min(rb);
        parent[ra.max(rb)] = root;
        representative.push(root);
    }
    let mut compact: HashMap<usize, usize> = HashMap::new();
    Ok((0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = compact.len();
            *compact.entry(root).or_insert(next)
        })
        .collect())
}

/// Result of the initialization stage.
#[derive(Clone, Debug)]
pub struct Initialization {
    pub clustering: Clustering,
    /// Cluster count found by the probabilistic pass (or the override).
    pub adaptive_k: usize,
}

/// Builds the initial clustering with the configured method.
pub fn initialize(
    dataset: &Dataset,
    store: &PairProbabilityStore,
    config: &InitConfig,
    seed: u64,
) -> Result<Initialization> {
    config.validate()?;
    let n = dataset.len();
    if let Some(k) = config.k_override {
        if k > n {
            return Err(Error::Config(format!("k override {k} exceeds sample count {n}")));
        }
    }
    if config.method == InitMethod::Probabilistic {
        let clustering = probabilistic_cluster(store, n, config.merge_threshold)?;
        let adaptive_k = clustering.k();
        return Ok(Initialization { clustering, adaptive_k });
    }
    let adaptive_k = match config.k_override {
        Some(k) => k,
        None => probabilistic_cluster(store, n, config.merge_threshold)?.k(),
    };
    let target = ((config.ratio * adaptive_k as f64).round() as usize).clamp(1, n);
    let clustering = if target == n {
        Clustering::singletons(n)
    } else {
        let labels = match config.method {
            InitMethod::Kmeans => kmeans(dataset.features(), target, seed)?,
            _ => ward_clusters(dataset, target)?,
        };
        Clustering::from_labels(&labels)
    };
    Ok(Initialization { clustering, adaptive_k })
}
