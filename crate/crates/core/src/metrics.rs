//! Partition-comparison measures. Natural logarithms throughout.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterId, Clustering};

/// Snapshot of clustering quality against the ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi: f64,
    pub ari: f64,
    pub purity: f64,
    /// Fission rate: resulting cluster count over true class count.
    pub upsilon: f64,
    /// Entropy ratio H(result) / H(truth).
    pub entropy_ratio: f64,
    pub k: usize,
}

impl MetricsReport {
    pub fn compute(clustering: &Clustering, truth: &Clustering) -> Result<Self> {
        check_same_n(clustering, truth)?;
        Ok(Self {
            nmi: nmi(clustering, truth)?,
            ari: ari(clustering, truth)?,
            purity: purity(clustering, truth)?,
            upsilon: fission_rate(clustering.k(), truth.k())?,
            // A single-class truth has no entropy to compare against.
            entropy_ratio: entropy_ratio(clustering, truth).unwrap_or(f64::NAN),
            k: clustering.k(),
        })
    }
}

fn check_same_n(a: &Clustering, b: &Clustering) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::SizeMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    Ok(())
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    let n = n as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Shannon entropy of the cluster-size distribution.
pub fn entropy(partition: &Clustering) -> f64 {
    if partition.k() <= 1 {
        return 0.0;
    }
    entropy_of_counts(partition.iter().map(|(_, m)| m.len()), partition.n())
}

struct Contingency {
    n: usize,
    left: HashMap<ClusterId, usize>,
    right: HashMap<ClusterId, usize>,
    joint: HashMap<(ClusterId, ClusterId), usize>,
}

impl Contingency {
    fn build(a: &Clustering, b: &Clustering) -> Self {
        let mut joint = HashMap::new();
        for (&x, &y) in a.assignment().iter().zip(b.assignment()) {
            *joint.entry((x, y)).or_insert(0) += 1;
        }
        Self {
            n: a.n(),
            left: a.sizes().into_iter().collect(),
            right: b.sizes().into_iter().collect(),
            joint,
        }
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut cells: Vec<(&(ClusterId, ClusterId), &usize)> = self.joint.iter().collect();
        // fixed summation order keeps results bit-reproducible
        cells.sort_unstable_by_key(|(k, _)| **k);
        cells
            .into_iter()
            .map(|(&(x, y), &c)| {
                let c = c as f64;
                let (ax, by) = (self.left[&x] as f64, self.right[&y] as f64);
                (c / n) * ((c * n) / (ax * by)).ln()
            })
            .sum()
    }
}

/// Mutual information between two partitions of the same samples.
pub fn mutual_information(a: &Clustering, b: &Clustering) -> Result<f64> {
    check_same_n(a, b)?;
    Ok(Contingency::build(a, b).mutual_information().max(0.0))
}

/// Normalized mutual information `2 I(a;b) / (H(a) + H(b))`.
///
/// Two single-cluster partitions score 1; exactly one single-cluster
/// partition scores 0.
pub fn nmi(a: &Clustering, b: &Clustering) -> Result<f64> {
    check_same_n(a, b)?;
    match (a.k() <= 1, b.k() <= 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let table = Contingency::build(a, b);
    // A one-to-one table means identical partitions up to relabeling.
    if table.joint.len() == table.left.len() && table.joint.len() == table.right.len() {
        return Ok(1.0);
    }
    let (ha, hb) = (entropy(a), entropy(b));
    let mi = table.mutual_information();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

fn comb2(v: usize) -> f64 {
    let v = v as f64;
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index under the permutation model.
pub fn ari(a: &Clustering, b: &Clustering) -> Result<f64> {
    check_same_n(a, b)?;
    let table = Contingency::build(a, b);
    let total = comb2(table.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let index: f64 = table.joint.values().copied().map(comb2).sum();
    let sum_a: f64 = table.left.values().copied().map(comb2).sum();
    let sum_b: f64 = table.right.values().copied().map(comb2).sum();
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denominator = max_index - expected;
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denominator)
}

/// Per-cluster purity `max_j |w ∩ c_j| / |w|`, plus the dominant class.
pub fn cluster_purity(members: &[usize], truth: &Clustering) -> (f64, ClusterId, usize) {
    let mut counts: HashMap<ClusterId, usize> = HashMap::new();
    for &s in members {
        *counts.entry(truth.cluster_of(s)).or_insert(0) += 1;
    }
    let (class, count) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap_or((ClusterId(0), 0));
    let frac = if members.is_empty() {
        0.0
    } else {
        count as f64 / members.len() as f64
    };
    (frac, class, count)
}

/// Fraction of samples that belong to their cluster's dominant class.
pub fn purity(clustering: &Clustering, truth: &Clustering) -> Result<f64> {
    check_same_n(clustering, truth)?;
    let dominant: usize = clustering
        .iter()
        .map(|(_, members)| cluster_purity(members, truth).2)
        .sum();
    Ok(dominant as f64 / clustering.n() as f64)
}

/// Purity of each cluster, keyed by id.
pub fn purity_by_cluster(clustering: &Clustering, truth: &Clustering) -> Result<HashMap<ClusterId, f64>> {
    check_same_n(clustering, truth)?;
    Ok(clustering
        .iter()
        .map(|(id, members)| (id, cluster_purity(members, truth).0))
        .collect())
}

pub fn fission_rate(k: usize, true_k: usize) -> Result<f64> {
    if true_k == 0 {
        return Err(Error::invalid("fission rate needs at least one true class"));
    }
    Ok(k as f64 / true_k as f64)
}

pub fn entropy_ratio(omega: &Clustering, truth: &Clustering) -> Result<f64> {
    check_same_n(omega, truth)?;
    let ht = entropy(truth);
    if ht == 0.0 {
        return Err(Error::invalid("entropy ratio undefined: truth has zero entropy"));
    }
    Ok(entropy(omega) / ht)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(labels: &[usize]) -> Clustering {
        Clustering::from_labels(labels)
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&c(&[0, 0, 0, 0])), 0.0);
        assert!((entropy(&c(&[0, 1, 2, 3, 4])) - 5f64.ln()).abs() < 1e-12);
        let expect = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((entropy(&c(&[0, 1, 1, 1])) - expect).abs() < 1e-12);
        assert!((expect - 0.562335).abs() < 1e-6);
    }

    #[test]
    fn nmi_cases() {
        let a = c(&[0, 0, 1, 1, 2]);
        assert!((nmi(&a, &c(&[5, 5, 3, 3, 9])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&c(&[0, 0, 0, 0]), &c(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert!(nmi(&c(&[0, 0, 1, 1]), &c(&[0, 1, 0, 1])).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&c(&[0, 0]), &c(&[1, 1])).unwrap(), 1.0);
        assert!(nmi(&c(&[0, 0]), &c(&[1, 1, 1])).is_err());
    }

    #[test]
    fn ari_cases() {
        let a = c(&[0, 0, 1, 1, 2]);
        assert!((ari(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ari(&c(&[0, 0, 0]), &c(&[4, 4, 4])).unwrap(), 1.0);
        assert!(ari(&c(&[0]), &c(&[0, 1])).is_err());
    }

    #[test]
    fn purity_cases() {
        let truth = c(&[0, 0, 1]);
        assert_eq!(purity(&truth, &truth).unwrap(), 1.0);
        let (p, class, count) = cluster_purity(&[0, 1, 2], &truth);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((class, count), (ClusterId(0), 2));
    }

    #[test]
    fn ratios() {
        assert!((fission_rate(41, 20).unwrap() - 2.05).abs() < 1e-12);
        assert_eq!(fission_rate(7, 7).unwrap(), 1.0);
        assert!(fission_rate(3, 0).is_err());
        let t = c(&[0, 0, 1, 2]);
        assert!((entropy_ratio(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(entropy_ratio(&t, &c(&[0, 0, 0, 0])).is_err());
    }

    #[test]
    fn symmetric_and_relabel_invariant() {
        let a = c(&[0, 0, 1, 1, 1, 2, 2, 3]);
        let b = c(&[1, 1, 1, 0, 0, 0, 2, 2]);
        let a2 = c(&[9, 9, 4, 4, 4, 7, 7, 1]);
        assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
        assert!((ari(&a, &b).unwrap() - ari(&b, &a).unwrap()).abs() < 1e-12);
        assert!((nmi(&a, &b).unwrap() - nmi(&a2, &b).unwrap()).abs() < 1e-12);
        assert!((ari(&a, &b).unwrap() - ari(&a2, &b).unwrap()).abs() < 1e-12);
        assert_eq!(purity(&a, &b).unwrap(), purity(&a2, &b).unwrap());
    }

    #[test]
    fn merging_same_class_subsets_keeps_purity() {
        let truth = c(&[0, 0, 0, 1, 1, 1]);
        let mut omega = c(&[0, 1, 2, 3, 3, 4]);
        let before = purity(&omega, &truth).unwrap();
        omega.merge(ClusterId(0), ClusterId(1)).unwrap();
        assert!(purity(&omega, &truth).unwrap() >= before);
    }
}
