//! Seeded Lloyd k-means with k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{squared_euclidean, Matrix};

const MAX_ITERATIONS: usize = 100;

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_euclidean(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(features: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.rows();
    let mut centers = vec![features.row(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(features.row(i), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let center = features.row(pick).to_vec();
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(features.row(i), &center));
        }
        centers.push(center);
    }
    centers
}

/// Partitions the rows of `features` into `k` groups; returns a group index
/// per row. Deterministic for a fixed seed.
pub fn kmeans(features: &Matrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = features.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= {n}, got {k}")));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let dim = features.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(features, k, &mut rng);
    let mut labels = vec![usize::MAX; n];

    for _ in 0..MAX_ITERATIONS {
        let assigned: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(features.row(i), &centers))
            .collect();
        let changed = assigned
            .iter()
            .zip(&labels)
            .any(|(&(c, _), &old)| c != old);
        for (label, &(c, _)) in labels.iter_mut().zip(&assigned) {
            *label = c;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (acc, v) in sums[c].iter_mut().zip(features.row(i)) {
                *acc += v;
            }
        }
        // Re-seed empty clusters with the points farthest from their centers.
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
        let mut far = far.into_iter();
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] == 0 {
                if let Some(p) = far.next() {
                    let old = labels[p];
                    if counts[old] > 1 {
                        counts[old] -= 1;
                        for (acc, v) in sums[old].iter_mut().zip(features.row(p)) {
                            *acc -= v;
                        }
                        labels[p] = c;
                        counts[c] = 1;
                        sums[c] = features.row(p).to_vec();
                        reseeded = true;
                    }
                }
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed && !reseeded {
            break;
        }
    }
    Ok(labels)
}
