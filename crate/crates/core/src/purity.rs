//! Density screen, oracle purity test, threshold heuristic, and subcluster
//! partition of impure clusters.

use serde::{Deserialize, Serialize};

use crate::constraints::Relation;
use crate::error::{Error, Result};
use crate::gate::QueryGate;
use crate::model::{distance_ranking, medoid, radius_rank, radius_sample, Clustering, Dataset};
use crate::oracle::{Oracle, QueryReason};
use crate::pairwise::PairProbabilityStore;

/// Clusters at or below this size pass the density screen outright.
pub const SMALL_CLUSTER: usize = 3;
/// Fraction of the cluster enclosed by the purity-probe sphere.
pub const PROBE_RHO: f64 = 0.7;
/// Threshold used when no cluster is large enough to estimate one.
pub const DEFAULT_TAU: f64 = 0.5;

/// Average affinity of each member to the far half of its cluster.
///
/// For member `i`, the far set holds the members whose probability with `i`
/// is strictly below that of `i`'s half-radius sample. Empty far sets
/// everywhere read as perfect homogeneity.
pub fn density_value(members: &[usize], store: &PairProbabilityStore, dataset: &Dataset) -> f64 {
    if members.len() <= SMALL_CLUSTER {
        return 1.0;
    }
    let half_rank = radius_rank(0.5, members.len());
    let (mut sum, mut count) = (0.0, 0usize);
    for &i in members {
        let half = distance_ranking(members, i, dataset)[half_rank - 1].0;
        let bar = store.get(i, half);
        for &j in members {
            let p = store.get(i, j);
            if p < bar {
                sum += p;
                count += 1;
            }
        }
    }
    if count == 0 {
        1.0
    } else {
        (sum / count as f64).clamp(0.0, 1.0)
    }
}

/// Mean density of clusters larger than [`SMALL_CLUSTER`], minus 0.1,
/// clamped to `[0, 1]`.
pub fn choose_tau(clustering: &Clustering, store: &PairProbabilityStore, dataset: &Dataset) -> f64 {
    let densities: Vec<f64> = clustering
        .iter()
        .filter(|(_, m)| m.len() > SMALL_CLUSTER)
        .map(|(_, m)| density_value(m, store, dataset))
        .collect();
    if densities.is_empty() {
        return DEFAULT_TAU;
    }
    let mean = densities.iter().sum::<f64>() / densities.len() as f64;
    (mean - 0.1).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityVerdict {
    pub passed: bool,
    pub density_value: f64,
    pub density_passed: bool,
    pub oracle_queries_spent: usize,
}

/// Purity test with a precomputed density value.
///
/// Passes for free when `density > tau`; otherwise asks whether the medoid
/// and its 0.7-radius sample are must-linked.
pub fn purity_test_with_density(
    members: &[usize],
    density: f64,
    tau: f64,
    gate: &mut QueryGate,
    oracle: &mut dyn Oracle,
    dataset: &Dataset,
) -> Result<PurityVerdict> {
    if members.is_empty() {
        return Err(Error::invalid("purity test on an empty cluster"));
    }
    if density > tau {
        return Ok(PurityVerdict {
            passed: true,
            density_value: density,
            density_passed: true,
            oracle_queries_spent: 0,
        });
    }
    let center = medoid(members, dataset)?;
    let probe = radius_sample(members, center, PROBE_RHO, dataset)?;
    let (passed, spent) = if probe == center {
        (true, 0)
    } else {
        let answer = gate.ask(oracle, center, probe, QueryReason::PurityTest)?;
        (answer.relation == Relation::Must, usize::from(answer.billed))
    };
    Ok(PurityVerdict {
        passed,
        density_value: density,
        density_passed: false,
        oracle_queries_spent: spent,
    })
}

pub fn purity_test(
    members: &[usize],
    tau: f64,
    gate: &mut QueryGate,
    oracle: &mut dyn Oracle,
    store: &PairProbabilityStore,
    dataset: &Dataset,
) -> Result<PurityVerdict> {
    let density = density_value(members, store, dataset);
    purity_test_with_density(members, density, tau, gate, oracle, dataset)
}

/// Subclusters found by [`subcluster_partition`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    /// Must-link cliques in creation order.
    pub groups: Vec<Vec<usize>>,
    /// Members left unprocessed when the budget ran out.
    pub residual: Option<Vec<usize>>,
    pub queries: usize,
}

impl Partition {
    /// All groups, the residual last.
    pub fn all_groups(&self) -> Vec<Vec<usize>> {
        let mut out = self.groups.clone();
        out.extend(self.residual.clone());
        out
    }
}

/// Splits a cluster into oracle-certified pure subclusters.
///
/// Members are visited by distance from the medoid. Each one is compared
/// with the first member of every existing subcluster, oldest first, and
/// joins the first that answers must-link; otherwise it opens a new one.
pub fn subcluster_partition(
    members: &[usize],
    gate: &mut QueryGate,
    oracle: &mut dyn Oracle,
    dataset: &Dataset,
) -> Result<Partition> {
    if members.len() < 2 {
        return Err(Error::invalid("subcluster partition needs at least 2 members"));
    }
    let center = medoid(members, dataset)?;
    let order: Vec<usize> = distance_ranking(members, center, dataset)
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut queries = 0;
    for (pos, &i) in order.iter().enumerate() {
        let mut home = None;
        for (g, group) in groups.iter().enumerate() {
            match gate.ask(oracle, i, group[0], QueryReason::Split) {
                Ok(answer) => {
                    queries += usize::from(answer.billed);
                    if answer.relation == Relation::Must {
                        home = Some(g);
                        break;
                    }
                }
                Err(Error::BudgetExhausted(_)) => {
                    return Ok(Partition {
                        groups,
                        residual: Some(order[pos..].to_vec()),
                        queries,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        match home {
            Some(g) => groups[g].push(i),
            None => groups.push(vec![i]),
        }
    }
    Ok(Partition {
        groups,
        residual: None,
        queries,
    })
}
