//! Answer sources for pairwise queries.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::Relation;
use crate::error::{Error, Result};

/// Why the engine is asking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryReason {
    PurityTest,
    Merge,
    Split,
    Refinement,
    Baseline,
}

impl fmt::Display for QueryReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryReason::PurityTest => "purity_test",
            QueryReason::Merge => "merge",
            QueryReason::Split => "split",
            QueryReason::Refinement => "refinement",
            QueryReason::Baseline => "baseline",
        })
    }
}

/// Progress information handed to the oracle with each query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryContext {
    pub reason: QueryReason,
    pub queries_used: usize,
    pub budget: usize,
    pub k: usize,
}

/// Judges whether two samples share a true class. May block.
pub trait Oracle {
    fn answer(&mut self, s: usize, t: usize, context: &QueryContext) -> Result<Relation>;
}

impl<F> Oracle for F
where
    F: FnMut(usize, usize, &QueryContext) -> Result<Relation>,
{
    fn answer(&mut self, s: usize, t: usize, context: &QueryContext) -> Result<Relation> {
        self(s, t, context)
    }
}

/// Truthful oracle backed by ground-truth labels.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    labels: Vec<usize>,
    calls: usize,
}

impl SimulatedOracle {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels, calls: 0 }
    }

    /// Number of answers given so far.
    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Oracle for SimulatedOracle {
    fn answer(&mut self, s: usize, t: usize, _: &QueryContext) -> Result<Relation> {
        let (ls, lt) = match (self.labels.get(s), self.labels.get(t)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::invalid(format!(
                    "query ({s}, {t}) outside 0..{}",
                    self.labels.len()
                )))
            }
        };
        self.calls += 1;
        Ok(if ls == lt { Relation::Must } else { Relation::Cannot })
    }
}

/// Answers a fixed number of queries truthfully, then reports itself
/// unavailable. Stands in for an interrupted session.
#[derive(Clone, Debug)]
pub struct FailingOracle {
    inner: SimulatedOracle,
    remaining: usize,
}

impl FailingOracle {
    pub fn new(labels: Vec<usize>, answers: usize) -> Self {
        Self {
            inner: SimulatedOracle::new(labels),
            remaining: answers,
        }
    }
}

impl Oracle for FailingOracle {
    fn answer(&mut self, s: usize, t: usize, context: &QueryContext) -> Result<Relation> {
        if self.remaining == 0 {
            return Err(Error::OracleUnavailable("session interrupted".into()));
        }
        self.remaining -= 1;
        self.inner.answer(s, t, context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CTX: QueryContext = QueryContext {
        reason: QueryReason::Merge,
        queries_used: 0,
        budget: 10,
        k: 2,
    };

    #[test]
    fn simulated_answers_follow_labels() {
        let mut o = SimulatedOracle::new(vec![0, 0, 1]);
        assert_eq!(o.answer(0, 1, &CTX).unwrap(), Relation::Must);
        assert_eq!(o.answer(1, 2, &CTX).unwrap(), Relation::Cannot);
        assert_eq!(o.calls(), 2);
        assert!(o.answer(0, 7, &CTX).is_err());
    }

    #[test]
    fn failing_oracle_stops() {
        let mut o = FailingOracle::new(vec![0, 0], 1);
        assert!(o.answer(0, 1, &CTX).is_ok());
        assert!(matches!(o.answer(0, 1, &CTX), Err(Error::OracleUnavailable(_))));
    }

    #[test]
    fn closures_are_oracles() {
        let mut o = |_: usize, _: usize, _: &QueryContext| Ok(Relation::Cannot);
        assert_eq!(Oracle::answer(&mut o, 0, 1, &CTX).unwrap(), Relation::Cannot);
    }
}
