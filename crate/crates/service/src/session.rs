//! One interactive session: the engine thread, the human oracle it blocks
//! on, and the state the HTTP handlers read.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use a3s::constraints::Relation;
use a3s::runlog::{Event, Snapshot, StopReason};
use a3s::{ConstraintStore, Dataset, Engine, Oracle, QueryContext, QueryReason, SessionConfig};
use serde::Serialize;
use tokio::sync::Notify;

use crate::error::ApiError;
use crate::projection::pca_2d;
use crate::spec::KnownConstraint;

/// Run-log events kept for `GET /log`.
pub const LOG_TAIL_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Fitting the pair model and building the initial clustering.
    Starting,
    Running,
    Finished,
    Failed,
    Cancelled,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Finished | Phase::Failed | Phase::Cancelled)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub queries_used: usize,
    pub budget: usize,
    pub k: usize,
}

/// What the annotator sees of one sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleView {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
    /// PCA display coordinates.
    pub xy: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PendingQuery {
    pub query_id: u64,
    pub s: SampleView,
    pub t: SampleView,
    pub reason: QueryReason,
    pub progress: Progress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Config,
    Contradiction,
    Io,
    Oracle,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl From<&a3s::Error> for Failure {
    fn from(e: &a3s::Error) -> Self {
        let kind = match e {
            a3s::Error::Config(_) => FailureKind::Config,
            a3s::Error::Contradiction { .. } => FailureKind::Contradiction,
            a3s::Error::Io { .. } | a3s::Error::Parse { .. } => FailureKind::Io,
            a3s::Error::OracleUnavailable(_) => FailureKind::Oracle,
            _ => FailureKind::Other,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

/// Body of `GET /status`.
#[derive(Clone, Debug, Serialize)]
pub struct Status {
    pub id: String,
    pub phase: Phase,
    pub progress: Progress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Snapshot>,
    /// Cluster size to number of clusters of that size.
    pub histogram: BTreeMap<usize, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pending: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    /// Final cluster id per sample, once finished.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Submitted {
    Accepted,
    /// The same verdict for an already answered query; nothing changed.
    Duplicate,
}

struct State {
    phase: Phase,
    progress: Progress,
    stop_reason: Option<StopReason>,
    metrics: Option<Snapshot>,
    histogram: BTreeMap<usize, usize>,
    failure: Option<Failure>,
    assignment: Option<Vec<usize>>,
    pending: Option<PendingQuery>,
    next_query_id: u64,
    answered: HashMap<u64, Relation>,
    slot: Option<Relation>,
    /// Known constraints plus every accepted answer, closed.
    mirror: ConstraintStore,
    log: VecDeque<Event>,
    cancelled: bool,
}

pub struct Session {
    id: String,
    state: Mutex<State>,
    /// Wakes the engine thread (answers, cancellation) and blocking waiters.
    cv: Condvar,
    /// Wakes async waiters on any state change.
    changed: Notify,
    coords: Vec<[f64; 2]>,
    assets: Option<Vec<String>>,
}

impl Session {
    /// Validates the known constraints and launches the engine thread.
    pub fn start(
        id: String,
        dataset: Dataset,
        config: SessionConfig,
        known: &[KnownConstraint],
    ) -> Result<Arc<Self>, ApiError> {
        let mut mirror = ConstraintStore::new();
        for c in known {
            if c.s >= dataset.len() || c.t >= dataset.len() {
                return Err(ApiError::BadRequest(format!("constraint ({}, {}) names a missing sample", c.s, c.t)));
            }
            mirror
                .add_constraint(c.s, c.t, c.verdict)
                .map_err(|e| ApiError::BadRequest(format!("known constraints are inconsistent: {e}")))?;
        }
        let session = Arc::new(Self {
            id,
            state: Mutex::new(State {
                phase: Phase::Starting,
                progress: Progress {
                    budget: config.budget,
                    ..Progress::default()
                },
                stop_reason: None,
                metrics: None,
                histogram: BTreeMap::new(),
                failure: None,
                assignment: None,
                pending: None,
                next_query_id: 1,
                answered: HashMap::new(),
                slot: None,
                mirror,
                log: VecDeque::new(),
                cancelled: false,
            }),
            cv: Condvar::new(),
            changed: Notify::new(),
            coords: pca_2d(dataset.features()),
            assets: dataset.assets().map(<[String]>::to_vec),
        });
        let driver = Arc::clone(&session);
        std::thread::Builder::new()
            .name(format!("session-{}", session.id))
            .spawn(move || driver.drive(dataset, config))
            .map_err(|e| ApiError::Internal(format!("cannot start engine thread: {e}")))?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // A panic elsewhere must not take the whole service down.
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn notify(&self) {
        self.cv.notify_all();
        self.changed.notify_waiters();
    }

    pub fn sample(&self, i: usize) -> Option<SampleView> {
        let xy = *self.coords.get(i)?;
        Some(SampleView {
            id: i,
            asset: self.assets.as_ref().map(|a| a[i].clone()),
            xy,
        })
    }

    fn drive(self: Arc<Self>, dataset: Dataset, config: SessionConfig) {
        let refine_budget = config.refine_budget;
        let out = config.out.clone();
        let mut published = 0;
        let outcome = (|| -> a3s::Result<()> {
            let mut engine = Engine::new(&dataset, config)?;
            self.publish(&engine, &mut published, Phase::Running);
            let mut oracle = HumanOracle {
                session: Arc::clone(&self),
            };
            engine.run_observed(&mut oracle, |e| self.publish(e, &mut published, Phase::Running))?;
            if refine_budget > 0 {
                engine.refine(&mut oracle, refine_budget)?;
            }
            if let Some(dir) = &out {
                engine.write_outputs(dir)?;
            }
            self.publish(&engine, &mut published, Phase::Finished);
            Ok(())
        })();
        if let Err(e) = outcome {
            let mut st = self.lock();
            st.pending = None;
            st.phase = if st.cancelled { Phase::Cancelled } else { Phase::Failed };
            st.failure = Some(Failure::from(&e));
            drop(st);
            self.notify();
        }
    }

    fn publish(&self, engine: &Engine<'_>, published: &mut usize, phase: Phase) {
        let clustering = engine.clustering();
        let mut histogram = BTreeMap::new();
        for (_, members) in clustering.iter() {
            *histogram.entry(members.len()).or_insert(0) += 1;
        }
        let metrics = engine.current_snapshot().ok();
        let events = &engine.log().events()[*published..];
        *published += events.len();

        let mut st = self.lock();
        st.phase = phase;
        st.progress = Progress {
            queries_used: engine.queries_used(),
            budget: engine.budget(),
            k: clustering.k(),
        };
        st.stop_reason = engine.stop_reason();
        st.metrics = metrics;
        st.histogram = histogram;
        if phase == Phase::Finished {
            st.assignment = Some(clustering.labels());
        }
        st.log.extend(events.iter().cloned());
        let excess = st.log.len().saturating_sub(LOG_TAIL_CAP);
        st.log.drain(..excess);
        drop(st);
        self.notify();
    }

    pub fn status(&self) -> Status {
        let st = self.lock();
        Status {
            id: self.id.clone(),
            phase: st.phase,
            progress: st.progress,
            stop_reason: st.stop_reason,
            metrics: st.metrics,
            histogram: st.histogram.clone(),
            pending: st.pending.as_ref().map(|p| p.query_id),
            failure: st.failure.clone(),
            assignment: st.assignment.clone(),
        }
    }

    pub fn pending(&self) -> Option<PendingQuery> {
        self.lock().pending.clone()
    }

    pub fn log_tail(&self, n: usize) -> Vec<Event> {
        let st = self.lock();
        st.log.iter().skip(st.log.len().saturating_sub(n)).cloned().collect()
    }

    /// Waits until `ready` holds or `wait` elapses; returns the last check.
    async fn wait_for<T>(&self, wait: Duration, ready: impl Fn(&State) -> Option<T>) -> Option<T> {
        let deadline = Instant::now() + wait;
        loop {
            let notified = self.changed.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            if let Some(v) = ready(&self.lock()) {
                return Some(v);
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() || tokio::time::timeout(left, notified).await.is_err() {
                return ready(&self.lock());
            }
        }
    }

    /// Long-poll for a pending query; `None` when there is none after `wait`.
    pub async fn wait_pending(&self, wait: Duration) -> Option<PendingQuery> {
        self.wait_for(wait, |st| match (&st.pending, st.phase.is_terminal()) {
            (Some(p), _) => Some(Some(p.clone())),
            (None, true) => Some(None),
            (None, false) => None,
        })
        .await
        .flatten()
    }

    /// Waits until the engine has moved past `query_id`: a different query
    /// is pending or the session is over.
    pub async fn wait_advance(&self, query_id: u64, wait: Duration) {
        self.wait_for(wait, |st| {
            let moved = st.pending.as_ref().is_some_and(|p| p.query_id != query_id);
            (moved || st.phase.is_terminal()).then_some(())
        })
        .await;
    }

    /// Records the annotator's verdict for `query_id`.
    pub fn submit(&self, query_id: u64, verdict: Relation) -> Result<Submitted, ApiError> {
        let mut st = self.lock();
        if let Some(&previous) = st.answered.get(&query_id) {
            return if previous == verdict {
                Ok(Submitted::Duplicate)
            } else {
                Err(ApiError::Stale(format!(
                    "query {query_id} was already answered {previous}"
                )))
            };
        }
        let Some(pending) = st.pending.as_ref().filter(|p| p.query_id == query_id) else {
            return Err(ApiError::Stale(format!("query {query_id} is not pending")));
        };
        let (s, t) = (pending.s.id, pending.t.id);
        let mut mirror = st.mirror.clone();
        mirror.add_constraint(s, t, verdict)?;
        st.mirror = mirror;
        st.answered.insert(query_id, verdict);
        st.slot = Some(verdict);
        drop(st);
        self.notify();
        Ok(Submitted::Accepted)
    }

    /// Stops the session at the engine's next query. The phase turns
    /// `cancelled` once the engine thread has unwound.
    pub fn cancel(&self) {
        let mut st = self.lock();
        st.cancelled = true;
        st.pending = None;
        drop(st);
        self.notify();
    }

    /// Blocks the calling thread until the session ends.
    pub fn wait_done(&self) -> Status {
        let mut st = self.lock();
        while !st.phase.is_terminal() {
            st = self.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
        drop(st);
        self.status()
    }
}

/// Oracle that publishes each question and blocks until it is answered.
struct HumanOracle {
    session: Arc<Session>,
}

impl Oracle for HumanOracle {
    fn answer(&mut self, s: usize, t: usize, context: &QueryContext) -> a3s::Result<Relation> {
        let session = &self.session;
        let (Some(sv), Some(tv)) = (session.sample(s), session.sample(t)) else {
            return Err(a3s::Error::InvalidInput(format!("query ({s}, {t}) is out of range")));
        };
        let mut st = session.lock();
        if st.cancelled {
            return Err(a3s::Error::OracleUnavailable("session cancelled".into()));
        }
        let query_id = st.next_query_id;
        st.next_query_id += 1;
        st.slot = None;
        st.pending = Some(PendingQuery {
            query_id,
            s: sv,
            t: tv,
            reason: context.reason,
            progress: Progress {
                queries_used: context.queries_used,
                budget: context.budget,
                k: context.k,
            },
        });
        drop(st);
        session.notify();

        let mut st = session.lock();
        loop {
            if st.cancelled {
                st.pending = None;
                return Err(a3s::Error::OracleUnavailable("session cancelled".into()));
            }
            if let Some(verdict) = st.slot.take() {
                st.pending = None;
                drop(st);
                session.notify();
                return Ok(verdict);
            }
            st = session.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }
}
