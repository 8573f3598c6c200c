//! Dataset, partition, and geometric primitives shared by every stage.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite reals, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::SizeMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::invalid(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.row(i), self.row(j))
    }
}

#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Samples to cluster, plus whatever the oracles need to answer about them.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    assets: Option<Vec<String>>,
    views: Vec<Matrix>,
}

impl Dataset {
    pub fn new(features: Matrix) -> Result<Self> {
        if features.rows() < 2 {
            return Err(Error::invalid(format!(
                "dataset needs at least 2 samples, got {}",
                features.rows()
            )));
        }
        if features.cols() < 1 {
            return Err(Error::invalid("dataset needs at least 1 feature column"));
        }
        Ok(Self {
            features,
            labels: None,
            assets: None,
            views: Vec::new(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_assets(mut self, assets: Vec<String>) -> Result<Self> {
        if assets.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found: assets.len(),
            });
        }
        self.assets = Some(assets);
        Ok(self)
    }

    /// Attaches extra feature views; each must describe the same samples.
    pub fn with_views(mut self, views: Vec<Matrix>) -> Result<Self> {
        for view in &views {
            if view.rows() != self.len() {
                return Err(Error::SizeMismatch {
                    expected: self.len(),
                    found: view.rows(),
                });
            }
            if view.cols() < 1 {
                return Err(Error::invalid("view needs at least 1 feature column"));
            }
        }
        self.views = views;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn assets(&self) -> Option<&[String]> {
        self.assets.as_deref()
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.features.distance(i, j)
    }

    /// Ground-truth partition, when labels are present.
    pub fn truth(&self) -> Option<Clustering> {
        self.labels.as_deref().map(Clustering::from_labels)
    }
}

/// Identifier of a cluster inside a [`Clustering`]. Ids are never reused:
/// every merge or split retires the old ids and mints fresh ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub usize);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A partition of sample ids `0..n` into disjoint, non-empty clusters.
///
/// Member lists are kept sorted ascending so iteration order is reproducible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<ClusterId>,
    clusters: BTreeMap<ClusterId, Vec<usize>>,
    next_id: usize,
}

impl Clustering {
    /// Builds a partition whose cluster ids are the given labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut clusters: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
        for (sample, &label) in labels.iter().enumerate() {
            clusters.entry(ClusterId(label)).or_default().push(sample);
        }
        let next_id = labels.iter().max().map_or(0, |m| m + 1);
        Self {
            assignment: labels.iter().map(|&l| ClusterId(l)).collect(),
            clusters,
            next_id,
        }
    }

    /// Builds a partition from member groups; group `g` gets id `g`.
    pub fn from_groups(n: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::invalid(format!("group {g} is empty")));
            }
            for &m in members {
                if m >= n {
                    return Err(Error::invalid(format!("sample {m} out of range 0..{n}")));
                }
                if labels[m] != usize::MAX {
                    return Err(Error::invalid(format!("sample {m} appears twice")));
                }
                labels[m] = g;
            }
        }
        if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::invalid(format!("sample {missing} is not covered")));
        }
        Ok(Self::from_labels(&labels))
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn assignment(&self) -> &[ClusterId] {
        &self.assignment
    }

    #[inline]
    pub fn cluster_of(&self, sample: usize) -> ClusterId {
        self.assignment[sample]
    }

    pub fn contains(&self, id: ClusterId) -> bool {
        self.clusters.contains_key(&id)
    }

    pub fn members(&self, id: ClusterId) -> Result<&[usize]> {
        self.clusters
            .get(&id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownCluster(id.0))
    }

    pub fn size(&self, id: ClusterId) -> usize {
        self.clusters.get(&id).map_or(0, Vec::len)
    }

    pub fn ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, &[usize])> + '_ {
        self.clusters.iter().map(|(&id, m)| (id, m.as_slice()))
    }

    pub fn sizes(&self) -> BTreeMap<ClusterId, usize> {
        self.clusters.iter().map(|(&id, m)| (id, m.len())).collect()
    }

    /// The id the next merge or split will mint.
    pub fn next_id(&self) -> ClusterId {
        ClusterId(self.next_id)
    }

    /// Raw cluster id per sample.
    pub fn labels(&self) -> Vec<usize> {
        self.assignment.iter().map(|c| c.0).collect()
    }

    /// Cluster ids renumbered `0..k` in order of each cluster's smallest member.
    pub fn compact_labels(&self) -> Vec<usize> {
        let mut order: Vec<(usize, ClusterId)> =
            self.clusters.iter().map(|(&id, m)| (m[0], id)).collect();
        order.sort_unstable();
        let rank: BTreeMap<ClusterId, usize> =
            order.iter().enumerate().map(|(r, &(_, id))| (id, r)).collect();
        self.assignment.iter().map(|c| rank[c]).collect()
    }

    /// Replaces clusters `i` and `j` by their union under a fresh id.
    pub fn merge(&mut self, i: ClusterId, j: ClusterId) -> Result<ClusterId> {
        if i == j {
            return Err(Error::invalid(format!("cannot merge cluster {i} with itself")));
        }
        if !self.contains(i) {
            return Err(Error::UnknownCluster(i.0));
        }
        if !self.contains(j) {
            return Err(Error::UnknownCluster(j.0));
        }
        let a = self.clusters.remove(&i).unwrap_or_default();
        let b = self.clusters.remove(&j).unwrap_or_default();
        let mut merged = Vec::with_capacity(a.len() + b.len());
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            if a[x] < b[y] {
                merged.push(a[x]);
                x += 1;
            } else {
                merged.push(b[y]);
                y += 1;
            }
        }
        merged.extend_from_slice(&a[x..]);
        merged.extend_from_slice(&b[y..]);
        let id = self.mint();
        for &s in &merged {
            self.assignment[s] = id;
        }
        self.clusters.insert(id, merged);
        Ok(id)
    }

    /// Retires `w` and installs each group as a new cluster, in order.
    pub fn split(&mut self, w: ClusterId, groups: &[Vec<usize>]) -> Result<Vec<ClusterId>> {
        let members = self.members(w)?;
        let mut incoming: Vec<usize> = groups.iter().flatten().copied().collect();
        incoming.sort_unstable();
        if incoming != members || groups.iter().any(Vec::is_empty) {
            return Err(Error::invalid(format!(
                "split groups do not partition the members of cluster {w}"
            )));
        }
        self.clusters.remove(&w);
        let mut ids = Vec::with_capacity(groups.len());
        for group in groups {
            let id = self.mint();
            let mut sorted = group.clone();
            sorted.sort_unstable();
            for &s in &sorted {
                self.assignment[s] = id;
            }
            self.clusters.insert(id, sorted);
            ids.push(id);
        }
        Ok(ids)
    }

    /// Checks the partition invariants: disjoint, covering, no empty cluster,
    /// assignment consistent with member lists.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n()];
        for (&id, members) in &self.clusters {
            if members.is_empty() {
                return Err(Error::invalid(format!("cluster {id} is empty")));
            }
            for &s in members {
                if s >= self.n() || seen[s] {
                    return Err(Error::invalid(format!("sample {s} misplaced in cluster {id}")));
                }
                seen[s] = true;
                if self.assignment[s] != id {
                    return Err(Error::invalid(format!(
                        "sample {s} listed in {id} but assigned to {}",
                        self.assignment[s]
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&v| !v) {
            return Err(Error::invalid(format!("sample {missing} not covered")));
        }
        Ok(())
    }

    fn mint(&mut self) -> ClusterId {
        let id = ClusterId(self.next_id);
        self.next_id += 1;
        id
    }
}

/// One entry of a sample's neighbor list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist: f64,
}

/// Exact k-nearest-neighbor lists, sorted ascending by distance.
#[derive(Clone, Debug)]
pub struct NeighborGraph {
    lists: Vec<Vec<Neighbor>>,
}

#[inline]
fn by_distance_then_id(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id))
}

impl NeighborGraph {
    pub fn from_lists(lists: Vec<Vec<Neighbor>>) -> Self {
        Self { lists }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    /// Unordered neighbor pairs `(min, max, distance)`, deduplicated and
    /// sorted by sample ids.
    pub fn unique_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut edges: Vec<(usize, usize, f64)> = self
            .lists
            .iter()
            .enumerate()
            .flat_map(|(i, list)| {
                list.iter()
                    .map(move |nb| (i.min(nb.id), i.max(nb.id), nb.dist))
            })
            .collect();
        edges.sort_unstable_by_key(|a| (a.0, a.1));
        edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        edges
    }

    /// For each sample, the samples that list it as a neighbor.
    pub fn reverse(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.lists.len()];
        for (i, list) in self.lists.iter().enumerate() {
            for nb in list {
                rev[nb.id].push(i);
            }
        }
        rev
    }
}

/// Exact brute-force kNN over a feature matrix.
pub fn neighbor_graph_of(features: &Matrix, m: usize) -> Result<NeighborGraph> {
    let n = features.rows();
    if m == 0 {
        return Err(Error::invalid("neighbor count must be positive"));
    }
    if m >= n {
        return Err(Error::invalid(format!(
            "neighbor count {m} must be smaller than the sample count {n}"
        )));
    }
    // One scratch buffer per worker; a fresh row-sized allocation per sample
    // costs more than the distances themselves at large N.
    let lists = (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |all: &mut Vec<Neighbor>, i| {
                let row = features.row(i);
                all.clear();
                all.extend((0..n).filter(|&j| j != i).map(|j| Neighbor {
                    id: j,
                    dist: euclidean(row, features.row(j)),
                }));
                if m < all.len() {
                    all.select_nth_unstable_by(m - 1, by_distance_then_id);
                }
                let mut nearest = all[..m].to_vec();
                nearest.sort_unstable_by(by_distance_then_id);
                nearest
            },
        )
        .collect();
    Ok(NeighborGraph { lists })
}

pub fn build_neighbor_graph(dataset: &Dataset, m: usize) -> Result<NeighborGraph> {
    neighbor_graph_of(dataset.features(), m)
}

/// The member with the smallest total distance to the other members.
pub fn medoid(members: &[usize], dataset: &Dataset) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::invalid("medoid of an empty cluster"));
    }
    let total = |&i: &usize| -> (f64, usize) {
        let s: f64 = members.iter().map(|&j| dataset.distance(i, j)).sum();
        (s, i)
    };
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let best = if members.len() > 256 {
        members.par_iter().map(total).min_by(cmp)
    } else {
        members.iter().map(total).min_by(cmp)
    };
    Ok(best.map(|(_, i)| i).unwrap_or(members[0]))
}

/// Members ordered by distance from `center`, center first, ties by id.
pub fn distance_ranking(members: &[usize], center: usize, dataset: &Dataset) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = members
        .iter()
        .filter(|&&j| j != center)
        .map(|&j| (j, dataset.distance(center, j)))
        .collect();
    ranked.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.insert(0, (center, 0.0));
    ranked
}

/// Rank (1-based) of the member bounding a sphere that holds a `rho` fraction
/// of a cluster of `size` members.
pub(crate) fn radius_rank(rho: f64, size: usize) -> usize {
    // Guard against 0.7 * 10 landing a hair above 7.
    let rank = (rho * size as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, size)
}

/// The member whose distance from `center` bounds a sphere that holds
/// `ceil(rho * |members|)` members, the center included.
pub fn radius_sample(members: &[usize], center: usize, rho: f64, dataset: &Dataset) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1], got {rho}")));
    }
    if !members.contains(&center) {
        return Err(Error::invalid(format!("center {center} is not a cluster member")));
    }
    let ranked = distance_ranking(members, center, dataset);
    Ok(ranked[radius_rank(rho, members.len()) - 1].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    fn random_2d(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Dataset::new(Matrix::new(1, 1, vec![0.0]).unwrap()).is_err());
        let ds = line(&[0.0, 1.0]);
        assert!(ds.clone().with_labels(vec![0]).is_err());
        assert!(ds
            .with_views(vec![Matrix::new(3, 1, vec![0.0; 3]).unwrap()])
            .is_err());
    }

    #[test]
    fn collinear_nearest_neighbors() {
        let g = build_neighbor_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        let firsts: Vec<usize> = (0..3).map(|i| g.neighbors(i)[0].id).collect();
        assert_eq!(firsts, vec![1, 0, 1]);
    }

    #[test]
    fn full_ranking_when_m_is_n_minus_one() {
        let ds = random_2d(12, 3);
        let g = build_neighbor_graph(&ds, 11).unwrap();
        for i in 0..12 {
            let ids: Vec<usize> = g.neighbors(i).iter().map(|nb| nb.id).collect();
            let mut expect: Vec<usize> = (0..12).filter(|&j| j != i).collect();
            expect.sort_by(|&a, &b| {
                ds.distance(i, a).total_cmp(&ds.distance(i, b)).then(a.cmp(&b))
            });
            assert_eq!(ids, expect);
        }
    }

    #[test]
    fn knn_matches_brute_force_sort() {
        let ds = random_2d(100, 11);
        let g = build_neighbor_graph(&ds, 5).unwrap();
        for i in 0..100 {
            let mut all: Vec<(f64, usize)> = (0..100)
                .filter(|&j| j != i)
                .map(|j| {
                    let (a, b) = (ds.features().row(i), ds.features().row(j));
                    (((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(), j)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all.iter().take(5).map(|p| p.1).collect();
            let got: Vec<usize> = g.neighbors(i).iter().map(|nb| nb.id).collect();
            assert_eq!(got, expect, "sample {i}");
            assert!(g.neighbors(i).windows(2).all(|w| w[0].dist <= w[1].dist));
        }
    }

    #[test]
    fn knn_ties_break_toward_lower_id() {
        let g = build_neighbor_graph(&line(&[0.0, -1.0, 1.0, 5.0]), 2).unwrap();
        let ids: Vec<usize> = g.neighbors(0).iter().map(|nb| nb.id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn knn_rejects_bad_neighbor_counts() {
        let ds = line(&[0.0, 1.0, 2.0]);
        assert!(build_neighbor_graph(&ds, 0).is_err());
        assert!(build_neighbor_graph(&ds, 3).is_err());
    }

    #[test]
    fn medoid_cases() {
        let ds = line(&[0.0, 1.0, 10.0, 4.0, 4.0, 4.0, 4.0, 7.0]);
        assert_eq!(medoid(&[7], &ds).unwrap(), 7);
        assert_eq!(medoid(&[0, 1, 2], &ds).unwrap(), 1);
        // identical points tie, lowest id wins
        assert_eq!(medoid(&[6, 5, 4, 3], &ds).unwrap(), 3);
        assert!(medoid(&[], &ds).is_err());
    }

    #[test]
    fn medoid_matches_exhaustive_search_and_ignores_order() {
        let ds = random_2d(50, 5);
        let members: Vec<usize> = (0..50).collect();
        let mut best = (f64::INFINITY, 0);
        for &i in &members {
            let s: f64 = members.iter().map(|&j| ds.distance(i, j)).sum();
            if s < best.0 {
                best = (s, i);
            }
        }
        assert_eq!(medoid(&members, &ds).unwrap(), best.1);
        let mut shuffled = members.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        assert_eq!(medoid(&shuffled, &ds).unwrap(), best.1);
    }

    #[test]
    fn radius_sample_cases() {
        let ds = line(&(0..10).map(f64::from).collect::<Vec<_>>());
        let members: Vec<usize> = (0..10).collect();
        assert_eq!(radius_sample(&members, 0, 0.5, &ds).unwrap(), 4);
        assert_eq!(radius_sample(&members, 0, 1.0, &ds).unwrap(), 9);
        assert_eq!(radius_sample(&members, 0, 0.7, &ds).unwrap(), 6);
        assert_eq!(radius_sample(&[3], 3, 0.7, &ds).unwrap(), 3);
        assert!(radius_sample(&members, 0, 0.0, &ds).is_err());
        assert!(radius_sample(&members, 0, 1.5, &ds).is_err());
        assert!(radius_sample(&[1, 2], 0, 0.5, &ds).is_err());
    }

    #[test]
    fn radius_sample_full_sphere_is_farthest_member() {
        let ds = random_2d(30, 8);
        let members: Vec<usize> = (5..20).collect();
        let far = members
            .iter()
            .copied()
            .max_by(|&a, &b| ds.distance(9, a).total_cmp(&ds.distance(9, b)))
            .unwrap();
        assert_eq!(radius_sample(&members, 9, 1.0, &ds).unwrap(), far);
    }

    #[test]
    fn clustering_merge_and_split() {
        let mut c = Clustering::from_labels(&[0, 0, 1, 2]);
        let m = c.merge(ClusterId(1), ClusterId(2)).unwrap();
        assert_eq!(c.members(m).unwrap(), &[2, 3]);
        assert_eq!(c.k(), 2);
        c.validate().unwrap();
        let ids = c.split(m, &[vec![3], vec![2]]).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(c.members(ids[0]).unwrap(), &[3]);
        c.validate().unwrap();
        assert!(c.split(ClusterId(0), &[vec![0]]).is_err());
        assert!(c.merge(ClusterId(0), ClusterId(0)).is_err());
        assert!(matches!(c.merge(ClusterId(0), ClusterId(99)), Err(Error::UnknownCluster(99))));
    }

    #[test]
    fn partition_stays_valid_under_random_merges_and_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 40;
        let mut c = Clustering::singletons(n);
        for _ in 0..1000 {
            let ids: Vec<ClusterId> = c.ids().collect();
            if ids.len() > 1 && rng.random_bool(0.6) {
                let a = ids[rng.random_range(0..ids.len())];
                let b = ids[rng.random_range(0..ids.len())];
                if a != b {
                    c.merge(a, b).unwrap();
                }
            } else {
                let w = ids[rng.random_range(0..ids.len())];
                let members = c.members(w).unwrap().to_vec();
                let parts = rng.random_range(1..=members.len());
                let mut groups = vec![Vec::new(); parts];
                for (i, &m) in members.iter().enumerate() {
                    let g = if i < parts { i } else { rng.random_range(0..parts) };
                    groups[g].push(m);
                }
                c.split(w, &groups).unwrap();
            }
            c.validate().unwrap();
            assert_eq!(c.sizes().values().sum::<usize>(), n);
        }
    }

    #[test]
    fn compact_labels_are_order_stable() {
        let c = Clustering::from_labels(&[7, 3, 7, 9]);
        assert_eq!(c.compact_labels(), vec![0, 1, 0, 2]);
    }
}
