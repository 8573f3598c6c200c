//! Must-link / cannot-link bookkeeping with incremental transitive closure.
//!
//! The store keeps every pair relation explicitly (sparse, keyed by the
//! ordered pair) and restores closure after each insertion by touching only
//! the must-link and cannot-link neighborhoods of the two endpoints.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unordered sample pair stored as `(min, max)`.
pub type SamplePair = (usize, usize);

#[inline]
pub fn canonical(s: usize, t: usize) -> SamplePair {
    if s <= t {
        (s, t)
    } else {
        (t, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Must,
    Cannot,
}

impl Relation {
    pub fn opposite(self) -> Self {
        match self {
            Relation::Must => Relation::Cannot,
            Relation::Cannot => Relation::Must,
        }
    }

    /// Two-letter code used in the constraint log.
    pub fn code(self) -> &'static str {
        match self {
            Relation::Must => "ML",
            Relation::Cannot => "CL",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Must => "must-link",
            Relation::Cannot => "cannot-link",
        })
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" | "must" | "must-link" => Ok(Relation::Must),
            "cl" | "cannot" | "cannot-link" => Ok(Relation::Cannot),
            other => Err(Error::invalid(format!("unknown relation '{other}'"))),
        }
    }
}

/// Sparse symmetric constraint matrix kept transitively closed.
#[derive(Clone, Debug, Default)]
pub struct ConstraintStore {
    state: HashMap<SamplePair, Relation>,
    must: HashMap<usize, BTreeSet<usize>>,
    cannot: HashMap<usize, BTreeSet<usize>>,
}

impl PartialEq for ConstraintStore {
    fn eq(&self, other: &Self) -> bool {
        self.state == other.state
    }
}

impl ConstraintStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of stored (queried or inferred) pairs.
    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    /// Relation of `(s, t)`; a sample is always must-linked to itself.
    pub fn query_state(&self, s: usize, t: usize) -> Option<Relation> {
        if s == t {
            return Some(Relation::Must);
        }
        self.state.get(&canonical(s, t)).copied()
    }

    pub fn must_linked(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.must.get(&s).into_iter().flatten().copied()
    }

    pub fn cannot_linked(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.cannot.get(&s).into_iter().flatten().copied()
    }

    /// True if `s` appears in any stored pair.
    pub fn touches(&self, s: usize) -> bool {
        self.must.get(&s).is_some_and(|m| !m.is_empty())
            || self.cannot.get(&s).is_some_and(|c| !c.is_empty())
    }

    /// Checks whether adding `(s, t) = relation` would be consistent.
    pub fn check(&self, s: usize, t: usize, relation: Relation) -> Result<()> {
        if s == t {
            return if relation == Relation::Must {
                Ok(())
            } else {
                Err(Error::SelfPair(s))
            };
        }
        match self.query_state(s, t) {
            Some(existing) if existing != relation => Err(Error::Contradiction {
                pair: canonical(s, t),
                attempted: relation,
                conflict: canonical(s, t),
                existing,
            }),
            _ => Ok(()),
        }
    }

    /// Records `(s, t) = relation` and restores closure.
    ///
    /// Returns the inferred pairs whose state changed, excluding `(s, t)`
    /// itself, sorted by pair. On contradiction nothing is modified.
    pub fn add_constraint(
        &mut self,
        s: usize,
        t: usize,
        relation: Relation,
    ) -> Result<Vec<(SamplePair, Relation)>> {
        if s == t {
            return Err(Error::SelfPair(s));
        }
        self.check(s, t, relation)?;
        if self.query_state(s, t).is_some() {
            return Ok(Vec::new());
        }

        let mut journal: Vec<SamplePair> = Vec::new();
        let origin = canonical(s, t);
        let outcome = self.set(s, t, relation, origin, relation, &mut journal).and_then(|_| {
            for i in [s, t] {
                let mut ml: Vec<usize> = self.must_linked(i).collect();
                ml.push(i);
                let cl: Vec<usize> = self.cannot_linked(i).collect();
                for (x, &p) in ml.iter().enumerate() {
                    for &q in &ml[x + 1..] {
                        self.set(p, q, Relation::Must, origin, relation, &mut journal)?;
                    }
                    for &q in &cl {
                        self.set(p, q, Relation::Cannot, origin, relation, &mut journal)?;
                    }
                }
            }
            Ok(())
        });

        if let Err(err) = outcome {
            for &(p, q) in journal.iter().rev() {
                self.unset(p, q);
            }
            return Err(err);
        }

        let mut inferred: Vec<(SamplePair, Relation)> = journal
            .into_iter()
            .filter(|&pair| pair != origin)
            .map(|pair| (pair, self.state[&pair]))
            .collect();
        inferred.sort_unstable();
        Ok(inferred)
    }

    fn set(
        &mut self,
        p: usize,
        q: usize,
        relation: Relation,
        origin: SamplePair,
        attempted: Relation,
        journal: &mut Vec<SamplePair>,
    ) -> Result<()> {
        if p == q {
            return if relation == Relation::Must {
                Ok(())
            } else {
                Err(Error::Contradiction {
                    pair: origin,
                    attempted,
                    conflict: (p, p),
                    existing: Relation::Must,
                })
            };
        }
        let key = canonical(p, q);
        match self.state.get(&key) {
            Some(&existing) if existing == relation => Ok(()),
            Some(&existing) => Err(Error::Contradiction {
                pair: origin,
                attempted,
                conflict: key,
                existing,
            }),
            None => {
                self.state.insert(key, relation);
                let sets = match relation {
                    Relation::Must => &mut self.must,
                    Relation::Cannot => &mut self.cannot,
                };
                sets.entry(p).or_default().insert(q);
                sets.entry(q).or_default().insert(p);
                journal.push(key);
                Ok(())
            }
        }
    }

    fn unset(&mut self, p: usize, q: usize) {
        if let Some(relation) = self.state.remove(&canonical(p, q)) {
            let sets = match relation {
                Relation::Must => &mut self.must,
                Relation::Cannot => &mut self.cannot,
            };
            if let Some(set) = sets.get_mut(&p) {
                set.remove(&q);
            }
            if let Some(set) = sets.get_mut(&q) {
                set.remove(&p);
            }
        }
    }

    /// Relation between two disjoint groups of samples: must if any cross
    /// pair is must-linked, cannot if any is cannot-linked and none must.
    pub fn cluster_relation(&self, a: &[usize], b: &[usize]) -> Option<Relation> {
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let large: HashSet<usize> = large.iter().copied().collect();
        self.relation_where(small, |t| large.contains(&t))
    }

    /// Same as [`cluster_relation`](Self::cluster_relation) with the second
    /// group given as a membership predicate.
    pub fn relation_where(&self, group: &[usize], in_other: impl Fn(usize) -> bool) -> Option<Relation> {
        let mut cannot = false;
        for &s in group {
            if self.must_linked(s).any(&in_other) {
                return Some(Relation::Must);
            }
            if !cannot && self.cannot_linked(s).any(&in_other) {
                cannot = true;
            }
        }
        cannot.then_some(Relation::Cannot)
    }

    /// All stored pairs, sorted.
    pub fn entries(&self) -> Vec<(usize, usize, Relation)> {
        let mut out: Vec<(usize, usize, Relation)> =
            self.state.iter().map(|(&(s, t), &r)| (s, t, r)).collect();
        out.sort_unstable();
        out
    }

    /// Rebuilds a store verbatim from stored pairs, without re-deriving
    /// closure. Rejects self-pairs and duplicate pairs.
    pub fn from_entries(entries: &[(usize, usize, Relation)]) -> Result<Self> {
        let mut store = Self::new();
        let mut journal = Vec::new();
        for &(s, t, r) in entries {
            if s == t {
                return Err(Error::SelfPair(s));
            }
            let key = canonical(s, t);
            store.set(s, t, r, key, r, &mut journal)?;
        }
        Ok(store)
    }
}

impl Serialize for ConstraintStore {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConstraintStore {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<(usize, usize, Relation)>::deserialize(deserializer)?;
        ConstraintStore::from_entries(&entries).map_err(serde::de::Error::custom)
    }
}

/// Where a logged constraint came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Oracle,
    Inferred,
}

/// One line of the append-only constraint log:
/// `seq,sample_s,sample_t,ML|CL,oracle|inferred,timestamp_ms`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub seq: u64,
    pub s: usize,
    pub t: usize,
    pub relation: Relation,
    pub source: Source,
    pub timestamp_ms: u128,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.seq,
            self.s,
            self.t,
            self.relation.code(),
            match self.source {
                Source::Oracle => "oracle",
                Source::Inferred => "inferred",
            },
            self.timestamp_ms
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::invalid(format!(
                "constraint log line needs 6 fields, got {}: '{line}'",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<u128> {
            fields[i]
                .parse::<u128>()
                .map_err(|e| Error::invalid(format!("field {} of '{line}': {e}", i + 1)))
        };
        let source = match fields[4] {
            "oracle" => Source::Oracle,
            "inferred" => Source::Inferred,
            other => return Err(Error::invalid(format!("unknown constraint source '{other}'"))),
        };
        Ok(Self {
            seq: num(0)? as u64,
            s: num(1)? as usize,
            t: num(2)? as usize,
            relation: fields[3].parse()?,
            source,
            timestamp_ms: num(5)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_example_with_four_samples() {
        let mut store = ConstraintStore::new();
        assert!(store.add_constraint(1, 2, Relation::Must).unwrap().is_empty());
        let second = store.add_constraint(2, 3, Relation::Must).unwrap();
        assert_eq!(second, vec![((1, 3), Relation::Must)]);
        let third = store.add_constraint(1, 4, Relation::Cannot).unwrap();
        assert_eq!(third, vec![((2, 4), Relation::Cannot), ((3, 4), Relation::Cannot)]);
        assert_eq!(store.query_state(4, 3), Some(Relation::Cannot));
        assert_eq!(store.query_state(3, 1), Some(Relation::Must));
    }

    #[test]
    fn lookups() {
        let store = ConstraintStore::new();
        assert_eq!(store.query_state(3, 8), None);
        assert_eq!(store.query_state(5, 5), Some(Relation::Must));
    }

    #[test]
    fn contradictions_leave_store_untouched() {
        let mut store = ConstraintStore::new();
        store.add_constraint(0, 1, Relation::Must).unwrap();
        let snapshot = store.clone();
        let err = store.add_constraint(1, 0, Relation::Cannot).unwrap_err();
        assert!(matches!(err, Error::Contradiction { existing: Relation::Must, .. }));
        assert_eq!(store, snapshot);
        assert!(matches!(store.add_constraint(2, 2, Relation::Must), Err(Error::SelfPair(2))));
    }

    #[test]
    fn repeated_constraint_is_a_no_op() {
        let mut store = ConstraintStore::new();
        store.add_constraint(0, 1, Relation::Must).unwrap();
        store.add_constraint(1, 2, Relation::Cannot).unwrap();
        let before = store.clone();
        assert!(store.add_constraint(2, 1, Relation::Cannot).unwrap().is_empty());
        assert_eq!(store, before);
    }

    #[test]
    fn cluster_relation_cases() {
        let mut store = ConstraintStore::new();
        assert_eq!(store.cluster_relation(&[0, 1], &[2, 3]), None);
        store.add_constraint(1, 3, Relation::Cannot).unwrap();
        assert_eq!(store.cluster_relation(&[0, 1], &[2, 3]), Some(Relation::Cannot));
        store.add_constraint(4, 5, Relation::Must).unwrap();
        assert_eq!(store.cluster_relation(&[5], &[4, 6]), Some(Relation::Must));
    }

    #[test]
    fn serde_round_trip() {
        let mut store = ConstraintStore::new();
        store.add_constraint(0, 1, Relation::Must).unwrap();
        store.add_constraint(1, 2, Relation::Must).unwrap();
        store.add_constraint(5, 2, Relation::Cannot).unwrap();
        let json = serde_json::to_string(&store).unwrap();
        let back: ConstraintStore = serde_json::from_str(&json).unwrap();
        assert_eq!(back.entries(), store.entries());
        assert_eq!(back.cannot_linked(0).collect::<Vec<_>>(), vec![5]);
    }

    #[test]
    fn log_line_round_trip() {
        let rec = LogRecord {
            seq: 7,
            s: 3,
            t: 11,
            relation: Relation::Cannot,
            source: Source::Inferred,
            timestamp_ms: 1_700_000_000_123,
        };
        assert_eq!(rec.to_line(), "7,3,11,CL,inferred,1700000000123");
        assert_eq!(LogRecord::parse(&rec.to_line()).unwrap(), rec);
        assert!(LogRecord::parse("1,2,3,XX,oracle,0").is_err());
        assert!(LogRecord::parse("1,2,3").is_err());
    }
}
