//! Calibrated same-class probabilities for neighboring sample pairs.
//!
//! Pseudo-labels from k-means turn every kNN pair into a binary training
//! example `(distance, same pseudo-label)`; a non-increasing isotonic fit of
//! those examples maps any distance to `P(same class)`.

use std::fmt::Write as _;

use rustc_hash::FxHashMap;

use crate::constraints::canonical;
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::model::{neighbor_graph_of, Dataset, NeighborGraph};

/// Probabilities are kept inside `[DEFAULT_EPSILON, 1 - DEFAULT_EPSILON]`.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[inline]
pub fn clip(p: f64, epsilon: f64) -> f64 {
    p.clamp(epsilon, 1.0 - epsilon)
}

#[inline]
pub fn logit(p: f64) -> f64 {
    p.ln() - (1.0 - p).ln()
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without underflow for very negative `x`.
#[inline]
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// k-means pseudo-labels on the primary features.
pub fn generate_pseudo_labels(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans(dataset.features(), k, seed)
}

/// Default pseudo-class count: `round(sqrt(n))`, at least 1.
pub fn default_pseudo_k(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(1, n.max(1))
}

/// One `(distance, target)` record per unordered kNN pair, target 1 when the
/// pseudo-labels agree.
pub fn build_training_pairs(graph: &NeighborGraph, pseudo: &[usize]) -> Result<Vec<(f64, f64)>> {
    if graph.len() != pseudo.len() {
        return Err(Error::SizeMismatch {
            expected: graph.len(),
            found: pseudo.len(),
        });
    }
    Ok(graph
        .unique_edges()
        .into_iter()
        .map(|(s, t, d)| (d, if pseudo[s] == pseudo[t] { 1.0 } else { 0.0 }))
        .collect())
}

/// Weighted pool-adjacent-violators fit, non-increasing in `x`.
///
/// `points` holds `(x, y, weight)` sorted by strictly increasing `x`; the
/// result is the least-squares non-increasing fit at each point.
pub fn pava_nonincreasing(points: &[(f64, f64, f64)]) -> Vec<f64> {
    // (weighted sum, weight, number of points)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for &(_, y, w) in points {
        blocks.push((y * w, w, 1));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.0 / prev.1 >= last.0 / last.1 {
                break;
            }
            blocks.pop();
            let merged = blocks.last_mut().expect("two blocks present");
            merged.0 += last.0;
            merged.1 += last.1;
            merged.2 += last.2;
        }
    }
    blocks
        .into_iter()
        .flat_map(|(sum, w, count)| std::iter::repeat_n(sum / w, count))
        .collect()
}

/// Piecewise-linear non-increasing map from distance to probability.
#[derive(Clone, Debug, PartialEq)]
pub struct IsotonicModel {
    knots: Vec<f64>,
    values: Vec<f64>,
    epsilon: f64,
}

impl IsotonicModel {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `P(same class | distance d)`: linear between knots, flat beyond them.
    pub fn predict(&self, d: f64) -> Result<f64> {
        if d.is_nan() || d < 0.0 {
            return Err(Error::invalid(format!("distance must be non-negative, got {d}")));
        }
        Ok(self.predict_unchecked(d))
    }

    pub(crate) fn predict_unchecked(&self, d: f64) -> f64 {
        let last = self.knots.len() - 1;
        if d <= self.knots[0] {
            return self.values[0];
        }
        if d >= self.knots[last] {
            return self.values[last];
        }
        let hi = self.knots.partition_point(|&k| k <= d);
        let lo = hi - 1;
        let (x0, x1) = (self.knots[lo], self.knots[hi]);
        let (y0, y1) = (self.values[lo], self.values[hi]);
        let p = y0 + (y1 - y0) * (d - x0) / (x1 - x0);
        clip(p, self.epsilon)
    }

    /// Two-column text table `distance<TAB>probability`, one knot per line.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.knots.iter().zip(&self.values) {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }

    pub fn from_table(text: &str, epsilon: f64) -> Result<Self> {
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(['\t', ',', ' ']).filter(|s| !s.is_empty());
            let parse = |v: Option<&str>| -> Result<f64> {
                v.ok_or_else(|| Error::invalid(format!("line {}: expected two columns", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))
            };
            knots.push(parse(cols.next())?);
            values.push(clip(parse(cols.next())?, epsilon));
        }
        if knots.is_empty() {
            return Err(Error::invalid("isotonic table has no knots"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) || values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid(
                "isotonic table must have increasing knots and non-increasing values",
            ));
        }
        Ok(Self { knots, values, epsilon })
    }
}

/// Fits a non-increasing isotonic regression of targets on distances.
pub fn fit_isotonic(pairs: &[(f64, f64)], epsilon: f64) -> Result<IsotonicModel> {
    if pairs.is_empty() {
        return Err(Error::invalid("isotonic fit needs at least one training pair"));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    if pairs.iter().any(|&(d, y)| !d.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("training pairs must be finite"));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Tied distances collapse into one weighted point.
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for (d, y) in sorted {
        match points.last_mut() {
            Some(last) if last.0 == d => {
                last.1 += y;
                last.2 += 1.0;
            }
            _ => points.push((d, y, 1.0)),
        }
    }
    for p in &mut points {
        p.1 /= p.2;
    }
    let fitted = pava_nonincreasing(&points);

    // Only the ends of each constant run are needed for interpolation.
    let mut knots = Vec::new();
    let mut values = Vec::new();
    for i in 0..points.len() {
        let v = fitted[i];
        let starts_run = i == 0 || fitted[i - 1] != v;
        let ends_run = i + 1 == points.len() || fitted[i + 1] != v;
        if starts_run || ends_run {
            knots.push(points[i].0);
            values.push(clip(v, epsilon));
        }
    }
    Ok(IsotonicModel { knots, values, epsilon })
}

pub fn predict_pair_probability(model: &IsotonicModel, d: f64) -> Result<f64> {
    model.predict(d)
}

/// Combines per-view probabilities: `prod p / (prod p + prod (1 - p))`.
pub fn fuse_views(per_view: &[f64], epsilon: f64) -> Result<f64> {
    if per_view.is_empty() {
        return Err(Error::invalid("fusion needs at least one view"));
    }
    if let Some(bad) = per_view.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::invalid(format!("view probability {bad} outside (0, 1)")));
    }
    if per_view.len() == 1 {
        return Ok(clip(per_view[0], epsilon));
    }
    let log_odds: f64 = per_view.iter().map(|&p| logit(p)).sum();
    Ok(clip(sigmoid(log_odds), epsilon))
}

/// Sparse symmetric map of pair probabilities; absent pairs read as
/// `epsilon`.
#[derive(Clone, Debug)]
pub struct PairProbabilityStore {
    probs: FxHashMap<(u32, u32), f64>,
    epsilon: f64,
}

#[inline]
fn key(s: usize, t: usize) -> (u32, u32) {
    let (a, b) = canonical(s, t);
    (a as u32, b as u32)
}

impl PairProbabilityStore {
    pub fn new(epsilon: f64) -> Self {
        Self {
            probs: FxHashMap::default(),
            epsilon,
        }
    }

    /// Store from explicit entries, clipped to `[epsilon, 1 - epsilon]`.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, usize, f64)>, epsilon: f64) -> Self {
        let mut store = Self::new(epsilon);
        for (s, t, p) in entries {
            store.insert(s, t, p);
        }
        store
    }

    pub fn insert(&mut self, s: usize, t: usize, p: f64) {
        self.probs.insert(key(s, t), clip(p, self.epsilon));
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn default_probability(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn contains(&self, s: usize, t: usize) -> bool {
        self.probs.contains_key(&key(s, t))
    }

    /// `P(e_st = 1)`; a sample with itself reads `1 - epsilon`.
    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        if s == t {
            return 1.0 - self.epsilon;
        }
        self.probs.get(&key(s, t)).copied().unwrap_or(self.epsilon)
    }

    /// Log-odds `ln p - ln(1 - p)` of the pair.
    #[inline]
    pub fn log_odds(&self, s: usize, t: usize) -> f64 {
        logit(self.get(s, t))
    }

    /// Stored entries sorted by pair.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = self
            .probs
            .iter()
            .map(|(&(s, t), &p)| (s as usize, t as usize, p))
            .collect();
        out.sort_unstable_by_key(|a| (a.0, a.1));
        out
    }
}

/// Fills a store with one entry per kNN pair of `graph`.
///
/// With one model, entries are predictions on the primary feature distance.
/// With one model per view, each view predicts on its own distance and the
/// results are fused.
pub fn build_store(graph: &NeighborGraph, models: &[IsotonicModel], dataset: &Dataset) -> Result<PairProbabilityStore> {
    let epsilon = models
        .first()
        .ok_or_else(|| Error::invalid("no pair model supplied"))?
        .epsilon();
    let views = dataset.views();
    if models.len() > 1 && models.len() != views.len() {
        return Err(Error::SizeMismatch {
            expected: views.len(),
            found: models.len(),
        });
    }
    let mut store = PairProbabilityStore::new(epsilon);
    store.probs.reserve(graph.len() * 8);
    let mut per_view = vec![0.0; models.len()];
    for (s, t, d) in graph.unique_edges() {
        let p = if models.len() == 1 {
            models[0].predict_unchecked(d)
        } else {
            for ((slot, model), view) in per_view.iter_mut().zip(models).zip(views) {
                *slot = model.predict_unchecked(view.distance(s, t));
            }
            fuse_views(&per_view, epsilon)?
        };
        store.insert(s, t, p);
    }
    Ok(store)
}

/// Knobs for estimating pair probabilities.
#[derive(Clone, Debug)]
pub struct PairwiseConfig {
    pub neighbors: usize,
    /// Pseudo-class count; `None` uses `round(sqrt(n))`.
    pub pseudo_k: Option<usize>,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        Self {
            neighbors: 50,
            pseudo_k: None,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

/// Output of the probability-estimation stage.
#[derive(Clone, Debug)]
pub struct PairwiseModel {
    pub graph: NeighborGraph,
    pub store: PairProbabilityStore,
    pub models: Vec<IsotonicModel>,
}

/// Neighbor graph, fitted model(s), and the filled store for a dataset.
pub fn estimate(dataset: &Dataset, config: &PairwiseConfig) -> Result<PairwiseModel> {
    let n = dataset.len();
    let neighbors = config.neighbors.min(n - 1);
    let pseudo_k = config.pseudo_k.unwrap_or_else(|| default_pseudo_k(n));
    let graph = neighbor_graph_of(dataset.features(), neighbors)?;
    let models = if dataset.views().is_empty() {
        let pseudo = kmeans(dataset.features(), pseudo_k, config.seed)?;
        vec![fit_isotonic(&build_training_pairs(&graph, &pseudo)?, config.epsilon)?]
    } else {
        dataset
            .views()
            .iter()
            .map(|view| {
                let view_graph = neighbor_graph_of(view, neighbors)?;
                let pseudo = kmeans(view, pseudo_k, config.seed)?;
                fit_isotonic(&build_training_pairs(&view_graph, &pseudo)?, config.epsilon)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let store = build_store(&graph, &models, dataset)?;
    Ok(PairwiseModel { graph, store, models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Matrix, Neighbor};

    fn line(xs: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn isotonic_already_monotone() {
        let m = fit_isotonic(&[(1.0, 1.0), (2.0, 1.0), (3.0, 0.0)], 0.01).unwrap();
        assert_eq!(m.knots(), &[1.0, 2.0, 3.0]);
        assert_eq!(m.values(), &[0.99, 0.99, 0.01]);
        let raw = pava_nonincreasing(&[(1.0, 1.0, 1.0), (2.0, 1.0, 1.0), (3.0, 0.0, 1.0)]);
        assert_eq!(raw, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn isotonic_pools_violators() {
        let m = fit_isotonic(&[(1.0, 0.0), (2.0, 1.0)], 0.01).unwrap();
        assert_eq!(m.values(), &[0.5, 0.5]);
    }

    #[test]
    fn isotonic_constant_data() {
        let m = fit_isotonic(&[(0.5, 1.0), (1.0, 1.0), (4.0, 1.0)], DEFAULT_EPSILON).unwrap();
        for d in [0.0, 0.7, 3.0, 10.0] {
            assert_eq!(m.predict(d).unwrap(), 1.0 - DEFAULT_EPSILON);
        }
    }

    #[test]
    fn isotonic_rejects_bad_input() {
        assert!(fit_isotonic(&[], 0.01).is_err());
        assert!(fit_isotonic(&[(1.0, 1.0)], 0.0).is_err());
        assert!(fit_isotonic(&[(1.0, 1.0)], 0.5).is_err());
    }

    #[test]
    fn tied_distances_are_averaged() {
        let m = fit_isotonic(&[(1.0, 1.0), (1.0, 0.0), (2.0, 0.0)], 0.01).unwrap();
        assert_eq!(m.predict(1.0).unwrap(), 0.5);
    }

    #[test]
    fn prediction_clamps_and_interpolates() {
        let m = IsotonicModel::from_table("1\t0.8\n3\t0.4\n", 0.01).unwrap();
        assert_eq!(m.predict(0.2).unwrap(), 0.8);
        assert_eq!(m.predict(9.0).unwrap(), 0.4);
        assert!((m.predict(2.0).unwrap() - 0.6).abs() < 1e-12);
        assert!(m.predict(-0.1).is_err());
    }

    #[test]
    fn table_round_trip() {
        let m = fit_isotonic(&[(0.3, 1.0), (0.9, 0.0), (1.5, 1.0), (2.0, 0.0)], 0.01).unwrap();
        let back = IsotonicModel::from_table(&m.to_table(), 0.01).unwrap();
        assert_eq!(back, m);
        assert!(IsotonicModel::from_table("1 0.2\n2 0.9\n", 0.01).is_err());
    }

    #[test]
    fn fusion_cases() {
        assert!((fuse_views(&[0.7], 1e-4).unwrap() - 0.7).abs() < 1e-15);
        assert!((fuse_views(&[0.5, 0.5], 1e-4).unwrap() - 0.5).abs() < 1e-12);
        assert!((fuse_views(&[0.8, 0.9], 1e-4).unwrap() - 0.72 / 0.74).abs() < 1e-12);
        assert!(fuse_views(&[0.0, 0.5], 1e-4).is_err());
        assert!(fuse_views(&[1.0], 1e-4).is_err());
        assert!(fuse_views(&[], 1e-4).is_err());
    }

    #[test]
    fn training_pairs_dedup() {
        let g = NeighborGraph::from_lists(vec![
            vec![Neighbor { id: 1, dist: 2.5 }],
            vec![Neighbor { id: 0, dist: 2.5 }],
        ]);
        assert_eq!(build_training_pairs(&g, &[3, 3]).unwrap(), vec![(2.5, 1.0)]);
        assert_eq!(build_training_pairs(&g, &[3, 4]).unwrap(), vec![(2.5, 0.0)]);
        assert!(build_training_pairs(&g, &[1]).is_err());
    }

    #[test]
    fn store_entries_follow_model() {
        let ds = line(&[0.0, 2.0]);
        let g = NeighborGraph::from_lists(vec![
            vec![Neighbor { id: 1, dist: 2.0 }],
            vec![Neighbor { id: 0, dist: 2.0 }],
        ]);
        let m = IsotonicModel::from_table("1\t0.9\n3\t0.1\n", 1e-4).unwrap();
        let store = build_store(&g, std::slice::from_ref(&m), &ds).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get(1, 0), m.predict(2.0).unwrap());
        let far = PairProbabilityStore::new(1e-4);
        assert_eq!(far.get(3, 9), 1e-4);
    }

    #[test]
    fn pseudo_labels_are_seeded() {
        let ds = line(&(0..30).map(|i| (i % 10) as f64 + if i < 15 { 0.0 } else { 100.0 }).collect::<Vec<_>>());
        let a = generate_pseudo_labels(&ds, 3, 5).unwrap();
        assert_eq!(a, generate_pseudo_labels(&ds, 3, 5).unwrap());
        let same = line(&[1.0; 6]);
        assert!(generate_pseudo_labels(&same, 1, 0).unwrap().iter().all(|&l| l == 0));
        assert!(generate_pseudo_labels(&ds, 31, 0).is_err());
    }

    #[test]
    fn log_domain_helpers() {
        assert!((sigmoid(logit(0.3)) - 0.3).abs() < 1e-15);
        assert!((ln_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!((ln_sigmoid(2.0) - sigmoid(2.0).ln()).abs() < 1e-15);
    }
}
