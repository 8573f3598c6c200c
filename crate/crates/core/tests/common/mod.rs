//! Independent reference implementations shared by the property suites and
//! the acceptance target. Everything here is deliberately naive.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use a3s::constraints::Relation;
use a3s::metrics::{cluster_purity, nmi};
use a3s::pairwise::PairProbabilityStore;
use a3s::strategy::check_aggregation_guarantee;
use a3s::{Clustering, Dataset, Matrix};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Closure = BTreeMap<(usize, usize), Relation>;

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    parent[x] = r;
    r
}

/// Fixpoint closure of a constraint set by components: `None` when some
/// cannot-link falls inside a must-link component.
pub fn brute_closure(n: usize, constraints: &[(usize, usize, Relation)]) -> Option<Closure> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(s, t, r) in constraints {
        if r == Relation::Must {
            let (a, b) = (find(&mut parent, s), find(&mut parent, t));
            parent[a] = b;
        }
    }
    let comp: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut apart = std::collections::HashSet::new();
    for &(s, t, r) in constraints {
        if r == Relation::Cannot {
            if comp[s] == comp[t] {
                return None;
            }
            apart.insert((comp[s].min(comp[t]), comp[s].max(comp[t])));
        }
    }
    let touched: Vec<bool> = {
        let mut v = vec![false; n];
        for &(s, t, _) in constraints {
            v[s] = true;
            v[t] = true;
        }
        v
    };
    let mut out = Closure::new();
    for s in 0..n {
        for t in s + 1..n {
            if !touched[s] || !touched[t] {
                continue;
            }
            let (a, b) = (comp[s], comp[t]);
            if a == b {
                out.insert((s, t), Relation::Must);
            } else if apart.contains(&(a.min(b), a.max(b))) {
                out.insert((s, t), Relation::Cannot);
            }
        }
    }
    Some(out)
}

pub fn store_closure(store: &a3s::ConstraintStore) -> Closure {
    store.entries().into_iter().map(|(s, t, r)| ((s, t), r)).collect()
}

fn plogp_term(c: f64, n: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        -(c / n) * (c / n).ln()
    }
}

/// NMI from a dense contingency table built with nested loops.
pub fn brute_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; kb]; ka];
    for i in 0..a.len() {
        table[a[i]][b[i]] += 1.0;
    }
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let used_a = row.iter().filter(|&&c| c > 0.0).count();
    let used_b = col.iter().filter(|&&c| c > 0.0).count();
    if used_a <= 1 && used_b <= 1 {
        return 1.0;
    }
    if used_a <= 1 || used_b <= 1 {
        return 0.0;
    }
    let ha: f64 = row.iter().map(|&c| plogp_term(c, n)).sum();
    let hb: f64 = col.iter().map(|&c| plogp_term(c, n)).sum();
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0.0 {
                mi += (c / n) * ((c * n) / (row[i] * col[j])).ln();
            }
        }
    }
    2.0 * mi / (ha + hb)
}

/// ARI from the four pair counts, enumerating every pair.
pub fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (ss * dd - sd * ds) / denom
}

pub fn brute_purity(clusters: &[usize], truth: &[usize]) -> f64 {
    let mut best = 0usize;
    let ids: std::collections::BTreeSet<usize> = clusters.iter().copied().collect();
    for w in ids {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for i in 0..clusters.len() {
            if clusters[i] == w {
                *counts.entry(truth[i]).or_default() += 1;
            }
        }
        best += counts.values().max().copied().unwrap_or(0);
    }
    best as f64 / clusters.len() as f64
}

pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// A copy of `c` with `a` and `b` merged.
pub fn merged(c: &Clustering, a: a3s::ClusterId, b: a3s::ClusterId) -> Clustering {
    let mut m = c.clone();
    m.merge(a, b).unwrap();
    m
}

pub type Q = Ratio<i128>;

/// Exact aggregation probability: prod p / (prod p + prod (1 - p)).
pub fn exact_aggregation(probs: &[Q]) -> Q {
    let one = Q::from_integer(1);
    let yes = probs.iter().fold(one, |acc, p| acc * p);
    let no = probs.iter().fold(one, |acc, p| acc * (one - p));
    yes / (yes + no)
}

pub fn to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub const EPS: f64 = 1e-4;

pub fn store_of(a: &[usize], b: &[usize], probs: &[Q]) -> PairProbabilityStore {
    let entries = a
        .iter()
        .flat_map(|&s| b.iter().map(move |&t| (s, t)))
        .zip(probs)
        .map(|((s, t), p)| (s, t, to_f64(p)));
    PairProbabilityStore::from_entries(entries, EPS)
}

/// Distinct, unevenly spaced positions on a line.
pub fn line(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = Vec::new();
    while xs.len() < n {
        let x = f64::from(rng.random_range(0..1000u32)) / 10.0;
        if !xs.contains(&x) {
            xs.push(x);
        }
    }
    let rows: Vec<Vec<f64>> = xs.into_iter().map(|x| vec![x]).collect();
    Dataset::new(Matrix::from_rows(&rows).unwrap()).unwrap()
}

/// Every probability assignment from `grid` over every shape up to 3x3.
pub fn instances(grid: &[Q]) -> Vec<(usize, usize, Vec<Q>)> {
    let mut out = Vec::new();
    for a in 1..=3 {
        for b in 1..=3 {
            let cells = a * b;
            let total = grid.len().pow(cells as u32);
            for code in 0..total {
                let mut c = code;
                let probs = (0..cells)
                    .map(|_| {
                        let p = grid[c % grid.len()];
                        c /= grid.len();
                        p
                    })
                    .collect();
                out.push((a, b, probs));
            }
        }
    }
    out
}

pub fn grid() -> Vec<Q> {
    vec![Q::new(1, 5), Q::new(1, 2), Q::new(4, 5)]
}

/// Exact kNN-restricted value: each sample of the smaller cluster against
/// its `kappa` nearest members of the larger one.
pub fn exact_knn(ga: &[usize], gb: &[usize], probs: &[Q], kappa: usize, ds: &Dataset) -> Q {
    let prob = |s: usize, t: usize| {
        let (i, j) = if ga.contains(&s) { (s, t) } else { (t, s) };
        let row = ga.iter().position(|&x| x == i).unwrap();
        let col = gb.iter().position(|&x| x == j).unwrap();
        probs[row * gb.len() + col]
    };
    let a_first = ga.len() < gb.len() || (ga.len() == gb.len() && ga.iter().min() <= gb.iter().min());
    let (small, large) = if a_first { (ga, gb) } else { (gb, ga) };
    let mut chosen = Vec::new();
    for &s in small {
        let mut ranked: Vec<usize> = large.to_vec();
        ranked.sort_by(|&x, &y| ds.distance(s, x).total_cmp(&ds.distance(s, y)).then(x.cmp(&y)));
        chosen.extend(ranked.into_iter().take(kappa).map(|t| prob(s, t)));
    }
    exact_aggregation(&chosen)
}

/// Random clustering where `a` and `b` share a dominant class with purity
/// at least 0.7; `None` when the draw misses.
pub fn guarantee_instance(rng: &mut ChaCha8Rng) -> Option<(Clustering, Clustering, a3s::ClusterId, a3s::ClusterId)> {
    let n = rng.random_range(20..=500);
    let classes = rng.random_range(2..=8);
    let truth_labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let noise = rng.random_range(0.0..0.3);
    let split = rng.random_range(1..=4);
    let labels: Vec<usize> = truth_labels
        .iter()
        .map(|&c| {
            if rng.random_bool(noise) {
                rng.random_range(0..classes * split)
            } else {
                c * split + rng.random_range(0..split)
            }
        })
        .collect();
    let truth = Clustering::from_labels(&truth_labels);
    let clustering = Clustering::from_labels(&labels);
    let ids: Vec<_> = clustering.ids().collect();
    let a = ids[rng.random_range(0..ids.len())];
    let b = ids[rng.random_range(0..ids.len())];
    if a == b {
        return None;
    }
    let (ta, ca, _) = cluster_purity(clustering.members(a).unwrap(), &truth);
    let (tb, cb, _) = cluster_purity(clustering.members(b).unwrap(), &truth);
    let n1 = nmi(&clustering, &truth).unwrap();
    (ca == cb && check_aggregation_guarantee(ta, tb, n1)).then_some((clustering, truth, a, b))
}
