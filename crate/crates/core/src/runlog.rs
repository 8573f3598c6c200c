//! Append-only record of a session, one JSON object per line.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::Relation;
use crate::error::{Error, Result};
use crate::init::InitMethod;
use crate::metrics::MetricsReport;
use crate::model::{ClusterId, Clustering};
use crate::oracle::QueryReason;

/// Metric snapshot; quality fields are absent when no ground truth exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub queries_used: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl Snapshot {
    pub fn structural(queries_used: usize, k: usize) -> Self {
        Self {
            queries_used,
            k,
            nmi: None,
            ari: None,
            purity: None,
            upsilon: None,
            r: None,
        }
    }

    pub fn with_report(queries_used: usize, report: &MetricsReport) -> Self {
        Self {
            queries_used,
            k: report.k,
            nmi: Some(report.nmi),
            ari: Some(report.ari),
            purity: Some(report.purity),
            upsilon: Some(report.upsilon),
            r: report.entropy_ratio.is_finite().then_some(report.entropy_ratio),
        }
    }

    /// `queries_used,k,nmi,ari,purity,upsilon,r`; missing values are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.queries_used,
            self.k,
            opt(self.nmi),
            opt(self.ari),
            opt(self.purity),
            opt(self.upsilon),
            opt(self.r)
        )
    }
}

pub const METRICS_CSV_HEADER: &str = "queries_used,k,nmi,ari,purity,upsilon,r";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The query budget ran out.
    Budget,
    /// The iteration cap was reached.
    MaxIterations,
    /// No eligible cluster pair remained.
    NoCandidates,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::MaxIterations => "max_iterations",
            StopReason::NoCandidates => "no_candidates",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Init {
        method: InitMethod,
        k: usize,
        tau: f64,
        assignment: Vec<ClusterId>,
    },
    Query {
        s: usize,
        t: usize,
        answer: Relation,
        reason: QueryReason,
        queries_used: usize,
    },
    PurityTest {
        cluster: ClusterId,
        passed: bool,
        density: f64,
        density_passed: bool,
        queries: usize,
    },
    Merge {
        a: ClusterId,
        b: ClusterId,
        into: ClusterId,
        reason: QueryReason,
        /// `ln` of the expected gain that ranked this pair, when it came
        /// from candidate selection.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_gain: Option<f64>,
    },
    Split {
        cluster: ClusterId,
        into: Vec<ClusterId>,
        groups: Vec<Vec<usize>>,
        unresolved: bool,
    },
    Snapshot(Snapshot),
    Stop {
        reason: StopReason,
        queries_used: usize,
    },
}

/// Ordered event list, optionally mirrored to a JSONL file as it grows.
#[derive(Debug, Default)]
pub struct RunLog {
    events: Vec<Event>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Log that also writes every event to `path`, truncating it first.
    pub fn to_file(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            events: Vec::new(),
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    pub fn push(&mut self, event: Event) -> Result<()> {
        if let Some((path, writer)) = &mut self.sink {
            let line = serde_json::to_string(&event).map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(writer, "{line}")
                .and_then(|_| writer.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The last `n` events.
    pub fn tail(&self, n: usize) -> &[Event] {
        &self.events[self.events.len().saturating_sub(n)..]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.events.iter().filter_map(|e| match e {
            Event::Snapshot(s) => Some(s),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(events)
}

/// Rebuilds the clustering a log describes, checking every recorded id.
pub fn replay(events: &[Event]) -> Result<Clustering> {
    let mut clustering: Option<Clustering> = None;
    for event in events {
        match event {
            Event::Init { assignment, .. } => {
                let labels: Vec<usize> = assignment.iter().map(|c| c.0).collect();
                clustering = Some(Clustering::from_labels(&labels));
            }
            Event::Merge { a, b, into, .. } => {
                let c = clustering.as_mut().ok_or_else(|| Error::invalid("merge before init"))?;
                let got = c.merge(*a, *b)?;
                if got != *into {
                    return Err(Error::invalid(format!("replayed merge produced {got}, log says {into}")));
                }
            }
            Event::Split { cluster, into, groups, .. } => {
                let c = clustering.as_mut().ok_or_else(|| Error::invalid("split before init"))?;
                let got = c.split(*cluster, groups)?;
                if &got != into {
                    return Err(Error::invalid(format!("replayed split of {cluster} produced different ids")));
                }
            }
            _ => {}
        }
    }
    clustering.ok_or_else(|| Error::invalid("log has no init event"))
}
