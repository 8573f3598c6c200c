//! The single path every pairwise question takes: constraint store first,
//! then any replayed answer, then the budget check, then the oracle.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::constraints::{canonical, ConstraintStore, LogRecord, Relation, SamplePair, Source};
use crate::error::{Error, Result};
use crate::oracle::{Oracle, QueryContext, QueryReason};
use crate::runlog::{Event, RunLog};

/// Outcome of one gated question.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Answer {
    pub relation: Relation,
    /// Whether the question was charged against the budget.
    pub billed: bool,
}

#[derive(Debug)]
pub struct QueryGate {
    constraints: ConstraintStore,
    budget: usize,
    used: usize,
    k: usize,
    replay: HashMap<SamplePair, Relation>,
    constraint_log: Option<(PathBuf, BufWriter<File>)>,
    next_seq: u64,
    log: RunLog,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Reads a constraint log written by a previous session.
pub fn load_constraint_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(LogRecord::parse(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

impl QueryGate {
    pub fn new(budget: usize) -> Self {
        Self {
            constraints: ConstraintStore::new(),
            budget,
            used: 0,
            k: 0,
            replay: HashMap::new(),
            constraint_log: None,
            next_seq: 0,
            log: RunLog::new(),
        }
    }

    /// Appends every answer to `path`; existing content is kept when
    /// `append` is set, otherwise the file is truncated.
    pub fn with_constraint_log(mut self, path: &Path, append: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.constraint_log = Some((path.to_path_buf(), BufWriter::new(file)));
        Ok(self)
    }

    /// Answers from an earlier session, served instead of the oracle.
    /// Sequence numbers continue after the last record. Fails if the
    /// recorded answers contradict one another.
    pub fn with_replay(mut self, records: &[LogRecord]) -> Result<Self> {
        let mut check = ConstraintStore::new();
        for r in records.iter().filter(|r| r.source == Source::Oracle) {
            check.add_constraint(r.s, r.t, r.relation)?;
            self.replay.insert(canonical(r.s, r.t), r.relation);
        }
        self.next_seq = records.iter().map(|r| r.seq + 1).max().unwrap_or(0);
        Ok(self)
    }

    pub fn with_log(mut self, log: RunLog) -> Self {
        self.log = log;
        self
    }

    pub fn constraints(&self) -> &ConstraintStore {
        &self.constraints
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut RunLog {
        &mut self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    pub fn queries_used(&self) -> usize {
        self.used
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.used)
    }

    pub fn add_budget(&mut self, extra: usize) {
        self.budget += extra;
    }

    /// Current cluster count, passed to the oracle as context.
    pub fn set_k(&mut self, k: usize) {
        self.k = k;
    }

    /// Relation between `s` and `t`, billing only when the answer is new.
    pub fn ask(&mut self, oracle: &mut dyn Oracle, s: usize, t: usize, reason: QueryReason) -> Result<Answer> {
        if let Some(relation) = self.constraints.query_state(s, t) {
            return Ok(Answer {
                relation,
                billed: false,
            });
        }
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted(self.used));
        }
        let (relation, fresh) = match self.replay.get(&canonical(s, t)) {
            Some(&r) => (r, false),
            None => {
                let context = QueryContext {
                    reason,
                    queries_used: self.used,
                    budget: self.budget,
                    k: self.k,
                };
                (oracle.answer(s, t, &context)?, true)
            }
        };
        let inferred = self.constraints.add_constraint(s, t, relation)?;
        self.used += 1;
        if fresh {
            self.append(s, t, relation, Source::Oracle)?;
            for ((a, b), r) in inferred {
                self.append(a, b, r, Source::Inferred)?;
            }
        }
        self.log.push(Event::Query {
            s,
            t,
            answer: relation,
            reason,
            queries_used: self.used,
        })?;
        Ok(Answer {
            relation,
            billed: true,
        })
    }

    fn append(&mut self, s: usize, t: usize, relation: Relation, source: Source) -> Result<()> {
        let seq = self.next_seq;
        self.next_seq += 1;
        if let Some((path, writer)) = &mut self.constraint_log {
            let record = LogRecord {
                seq,
                s,
                t,
                relation,
                source,
                timestamp_ms: now_ms(),
            };
            writeln!(writer, "{}", record.to_line())
                .and_then(|_| writer.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SimulatedOracle;

    #[test]
    fn known_pairs_are_free() {
        let mut oracle = SimulatedOracle::new(vec![0, 0, 0, 1]);
        let mut gate = QueryGate::new(10);
        assert!(gate.ask(&mut oracle, 0, 1, QueryReason::Merge).unwrap().billed);
        assert!(gate.ask(&mut oracle, 1, 2, QueryReason::Merge).unwrap().billed);
        let inferred = gate.ask(&mut oracle, 2, 0, QueryReason::Merge).unwrap();
        assert_eq!(inferred, Answer { relation: Relation::Must, billed: false });
        assert!(!gate.ask(&mut oracle, 1, 0, QueryReason::Split).unwrap().billed);
        assert_eq!((gate.queries_used(), oracle.calls()), (2, 2));
    }

    #[test]
    fn budget_is_enforced() {
        let mut oracle = SimulatedOracle::new(vec![0, 1, 2]);
        let mut gate = QueryGate::new(1);
        gate.ask(&mut oracle, 0, 1, QueryReason::Merge).unwrap();
        assert!(matches!(
            gate.ask(&mut oracle, 0, 2, QueryReason::Merge),
            Err(Error::BudgetExhausted(1))
        ));
        gate.add_budget(1);
        assert!(gate.ask(&mut oracle, 0, 2, QueryReason::Merge).is_ok());
    }

    #[test]
    fn replayed_answers_skip_the_oracle_but_bill() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("constraints.log");
        {
            let mut oracle = SimulatedOracle::new(vec![0, 0, 0]);
            let mut gate = QueryGate::new(5).with_constraint_log(&path, false).unwrap();
            gate.ask(&mut oracle, 0, 1, QueryReason::Merge).unwrap();
            gate.ask(&mut oracle, 1, 2, QueryReason::Merge).unwrap();
        }
        let records = load_constraint_log(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].source, Source::Inferred);

        let mut never = |_: usize, _: usize, _: &QueryContext| -> Result<Relation> {
            Err(Error::OracleUnavailable("not expected".into()))
        };
        let mut gate = QueryGate::new(5)
            .with_replay(&records)
            .unwrap()
            .with_constraint_log(&path, true)
            .unwrap();
        gate.ask(&mut never, 0, 1, QueryReason::Merge).unwrap();
        gate.ask(&mut never, 2, 1, QueryReason::Merge).unwrap();
        assert_eq!(gate.queries_used(), 2);
        assert_eq!(load_constraint_log(&path).unwrap().len(), 3);
        assert!(gate.ask(&mut never, 0, 3, QueryReason::Merge).is_err());
    }

    #[test]
    fn inferred_relations_answer_later_questions() {
        let mut gate = QueryGate::new(5);
        let mut liar = {
            let mut n = 0;
            move |_: usize, _: usize, _: &QueryContext| -> Result<Relation> {
                n += 1;
                Ok(if n < 3 { Relation::Must } else { Relation::Cannot })
            }
        };
        gate.ask(&mut liar, 0, 1, QueryReason::Merge).unwrap();
        gate.ask(&mut liar, 1, 2, QueryReason::Merge).unwrap();
        gate.ask(&mut liar, 2, 3, QueryReason::Merge).unwrap();
        assert_eq!(gate.constraints().query_state(0, 3), Some(Relation::Cannot));
        assert_eq!(gate.log().len(), 3);
    }

    #[test]
    fn contradictory_replay_is_refused() {
        let record = |seq, s, t, relation| LogRecord {
            seq,
            s,
            t,
            relation,
            source: Source::Oracle,
            timestamp_ms: 0,
        };
        let records = [
            record(0, 0, 1, Relation::Must),
            record(1, 1, 2, Relation::Must),
            record(2, 0, 2, Relation::Cannot),
        ];
        let err = QueryGate::new(5).with_replay(&records).err().unwrap();
        assert!(matches!(err, Error::Contradiction { .. }));
        assert!(QueryGate::new(5).with_replay(&records[..2]).is_ok());
    }
}
