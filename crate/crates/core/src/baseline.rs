//! Random-pair querying, the reference strategy for comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::Relation;
use crate::error::{Error, Result};
use crate::gate::QueryGate;
use crate::metrics::nmi;
use crate::model::Clustering;
use crate::oracle::{Oracle, QueryReason};

/// Draws without success before the baseline gives up on finding a fresh
/// cross-cluster pair.
const MAX_DRAWS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun {
    pub clustering: Clustering,
    pub queries: usize,
    /// Queries spent when NMI first reached the target, if it did.
    pub queries_to_target: Option<usize>,
    /// `(queries, nmi)` after every merge.
    pub curve: Vec<(usize, f64)>,
}

/// Starting from `initial`, repeatedly asks about a uniformly drawn pair of
/// samples in different clusters whose relation is still unknown, merging
/// the two clusters on must-link. Stops at `target_nmi` or `max_queries`.
pub fn random_pair_baseline(
    initial: &Clustering,
    truth: &Clustering,
    oracle: &mut dyn Oracle,
    target_nmi: f64,
    max_queries: usize,
    seed: u64,
) -> Result<BaselineRun> {
    let n = initial.n();
    let mut clustering = initial.clone();
    let mut gate = QueryGate::new(max_queries);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = nmi(&clustering, truth)?;
    let mut curve = vec![(0, current)];
    let mut reached = (current >= target_nmi).then_some(0);

    while reached.is_none() && gate.queries_used() < max_queries && clustering.k() > 1 {
        let mut pair = None;
        for _ in 0..MAX_DRAWS {
            let s = rng.random_range(0..n);
            let t = rng.random_range(0..n);
            if s != t
                && clustering.cluster_of(s) != clustering.cluster_of(t)
                && gate.constraints().query_state(s, t).is_none()
            {
                pair = Some((s, t));
                break;
            }
        }
        let Some((s, t)) = pair else { break };
        match gate.ask(oracle, s, t, QueryReason::Baseline) {
            Ok(answer) if answer.relation == Relation::Must => {
                clustering.merge(clustering.cluster_of(s), clustering.cluster_of(t))?;
                current = nmi(&clustering, truth)?;
                curve.push((gate.queries_used(), current));
                if current >= target_nmi {
                    reached = Some(gate.queries_used());
                }
            }
            Ok(_) => {}
            Err(Error::BudgetExhausted(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(BaselineRun {
        clustering,
        queries: gate.queries_used(),
        queries_to_target: reached,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SimulatedOracle;

    #[test]
    fn converges_on_a_tiny_problem() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        let truth = Clustering::from_labels(&labels);
        let mut oracle = SimulatedOracle::new(labels);
        let run = random_pair_baseline(&Clustering::singletons(6), &truth, &mut oracle, 1.0, 100, 3).unwrap();
        assert_eq!(run.queries_to_target, Some(run.queries));
        assert_eq!(run.clustering.k(), 2);
        assert!(run.curve.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn respects_the_cap() {
        let labels: Vec<usize> = (0..40).map(|i| i % 8).collect();
        let truth = Clustering::from_labels(&labels);
        let mut oracle = SimulatedOracle::new(labels);
        let run = random_pair_baseline(&Clustering::singletons(40), &truth, &mut oracle, 1.0, 5, 1).unwrap();
        assert!(run.queries <= 5);
        assert_eq!(run.queries, oracle.calls());
    }
}
