//! The active clustering loop: pick a cluster pair, test both clusters for
//! purity, then merge on a must-link medoid answer or split what failed.

mod candidates;
mod output;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintStore, Relation};
use crate::error::{Error, Result};
use crate::gate::{load_constraint_log, QueryGate};
use crate::init::{initialize, InitConfig};
use crate::metrics::MetricsReport;
use crate::model::{medoid, ClusterId, Clustering, Dataset};
use crate::oracle::{Oracle, QueryReason};
use crate::pairwise::{estimate, PairwiseConfig, PairwiseModel, DEFAULT_EPSILON};
use crate::purity::{choose_tau, density_value, purity_test_with_density, subcluster_partition, PurityVerdict};
use crate::runlog::{Event, RunLog, Snapshot, StopReason};
use crate::strategy::{AggregationMode, CandidatePair, Scorer};

pub use candidates::CandidateIndex;
pub use output::{write_assignment, write_metrics_csv, Summary};

pub const ASSIGNMENT_FILE: &str = "assignment.txt";
pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONSTRAINTS_FILE: &str = "constraints.log";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Oracle queries the main loop may spend.
    pub budget: usize,
    /// Extra queries for outlier refinement after the main loop.
    pub refine_budget: usize,
    /// Iteration cap; `None` means four times the initial cluster count.
    pub max_iterations: Option<usize>,
    /// How many of the most probable pairs compete on expected gain.
    pub batch: usize,
    /// Density threshold; `None` picks it from the initial clustering.
    pub tau: Option<f64>,
    pub init: InitConfig,
    pub neighbors: usize,
    pub aggregation: AggregationMode,
    pub pseudo_k: Option<usize>,
    pub epsilon: f64,
    pub seed: u64,
    /// Output directory; nothing is written when absent.
    pub out: Option<PathBuf>,
    /// Serve answers recorded in `out/constraints.log` before asking the
    /// oracle.
    pub resume: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            budget: 1000,
            refine_budget: 0,
            max_iterations: None,
            batch: 10,
            tau: None,
            init: InitConfig::default(),
            neighbors: 50,
            aggregation: AggregationMode::default(),
            pseudo_k: None,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            out: None,
            resume: false,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Config("max iterations must be at least 1".into()));
        }
        if self.neighbors == 0 {
            return Err(Error::Config("neighbor count must be positive".into()));
        }
        if let Some(tau) = self.tau {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
            }
        }
        if let AggregationMode::Knn { kappa: 0 } = self.aggregation {
            return Err(Error::Config("kappa must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon)));
        }
        if self.resume && self.out.is_none() {
            return Err(Error::Config("resume needs an output directory".into()));
        }
        Ok(())
    }

    pub fn pairwise(&self) -> PairwiseConfig {
        PairwiseConfig {
            neighbors: self.neighbors,
            pseudo_k: self.pseudo_k,
            epsilon: self.epsilon,
            seed: self.seed,
        }
    }
}

/// What refinement did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineReport {
    pub absorbed: usize,
    pub queries: usize,
    pub budget_exhausted: bool,
}

pub struct Engine<'d> {
    dataset: &'d Dataset,
    config: SessionConfig,
    model: PairwiseModel,
    reverse: Vec<Vec<usize>>,
    clustering: Clustering,
    initial: Clustering,
    truth: Option<Clustering>,
    gate: QueryGate,
    index: CandidateIndex,
    medoids: HashMap<ClusterId, usize>,
    densities: HashMap<ClusterId, f64>,
    trusted: HashSet<ClusterId>,
    tau: f64,
    adaptive_k: usize,
    max_iterations: usize,
    iterations: usize,
    stop: Option<StopReason>,
    started: Instant,
}

impl<'d> Engine<'d> {
    /// Fits the pair model and initializes a session.
    pub fn new(dataset: &'d Dataset, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let model = estimate(dataset, &config.pairwise())?;
        Self::with_model(dataset, config, model)
    }

    /// Initializes a session around an already fitted pair model.
    pub fn with_model(dataset: &'d Dataset, config: SessionConfig, model: PairwiseModel) -> Result<Self> {
        config.validate()?;
        let started = Instant::now();
        let init = initialize(dataset, &model.store, &config.init, config.seed)?;
        let clustering = init.clustering;
        let tau = config
            .tau
            .unwrap_or_else(|| choose_tau(&clustering, &model.store, dataset));
        let max_iterations = config.max_iterations.unwrap_or(4 * clustering.k()).max(1);

        let mut gate = QueryGate::new(config.budget);
        if let Some(out) = &config.out {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let clog = out.join(CONSTRAINTS_FILE);
            if config.resume && clog.exists() {
                let records = load_constraint_log(&clog)?;
                gate = gate.with_replay(&records)?.with_constraint_log(&clog, true)?;
            } else {
                gate = gate.with_constraint_log(&clog, false)?;
            }
            gate = gate.with_log(RunLog::to_file(&out.join(RUNLOG_FILE))?);
        }
        gate.set_k(clustering.k());

        let reverse = model.graph.reverse();
        let index = {
            let scorer = Scorer {
                dataset,
                graph: &model.graph,
                store: &model.store,
                mode: config.aggregation,
            };
            CandidateIndex::build(&clustering, &scorer, &reverse)
        };
        let mut engine = Self {
            dataset,
            truth: dataset.truth(),
            initial: clustering.clone(),
            clustering,
            config,
            model,
            reverse,
            gate,
            index,
            medoids: HashMap::new(),
            densities: HashMap::new(),
            trusted: HashSet::new(),
            tau,
            adaptive_k: init.adaptive_k,
            max_iterations,
            iterations: 0,
            stop: None,
            started,
        };
        engine.gate.log_mut().push(Event::Init {
            method: engine.config.init.method,
            k: engine.clustering.k(),
            tau,
            assignment: engine.clustering.assignment().to_vec(),
        })?;
        engine.snapshot()?;
        Ok(engine)
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn model(&self) -> &PairwiseModel {
        &self.model
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    pub fn initial(&self) -> &Clustering {
        &self.initial
    }

    pub fn constraints(&self) -> &ConstraintStore {
        self.gate.constraints()
    }

    pub fn log(&self) -> &RunLog {
        self.gate.log()
    }

    pub fn queries_used(&self) -> usize {
        self.gate.queries_used()
    }

    pub fn budget(&self) -> usize {
        self.gate.budget()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn adaptive_k(&self) -> usize {
        self.adaptive_k
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn is_trusted(&self, id: ClusterId) -> bool {
        self.trusted.contains(&id)
    }

    pub fn candidate_index(&self) -> &CandidateIndex {
        &self.index
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer {
            dataset: self.dataset,
            graph: &self.model.graph,
            store: &self.model.store,
            mode: self.config.aggregation,
        }
    }

    /// Metrics against the ground truth, when labels exist.
    pub fn report(&self) -> Result<Option<MetricsReport>> {
        self.truth
            .as_ref()
            .map(|t| MetricsReport::compute(&self.clustering, t))
            .transpose()
    }

    pub fn current_snapshot(&self) -> Result<Snapshot> {
        Ok(match self.report()? {
            Some(r) => Snapshot::with_report(self.queries_used(), &r),
            None => Snapshot::structural(self.queries_used(), self.clustering.k()),
        })
    }

    fn snapshot(&mut self) -> Result<()> {
        let snap = self.current_snapshot()?;
        self.gate.set_k(self.clustering.k());
        self.gate.log_mut().push(Event::Snapshot(snap))
    }

    fn medoid_of(&mut self, id: ClusterId) -> Result<usize> {
        if let Some(&m) = self.medoids.get(&id) {
            return Ok(m);
        }
        let m = medoid(self.clustering.members(id)?, self.dataset)?;
        self.medoids.insert(id, m);
        Ok(m)
    }

    fn density_of(&mut self, id: ClusterId) -> Result<f64> {
        if let Some(&d) = self.densities.get(&id) {
            return Ok(d);
        }
        let d = density_value(self.clustering.members(id)?, &self.model.store, self.dataset);
        self.densities.insert(id, d);
        Ok(d)
    }

    fn retire(&mut self, id: ClusterId) {
        self.medoids.remove(&id);
        self.densities.remove(&id);
        self.trusted.remove(&id);
        self.index.remove_cluster(id);
    }

    fn admit(&mut self, id: ClusterId) {
        let scorer = Scorer {
            dataset: self.dataset,
            graph: &self.model.graph,
            store: &self.model.store,
            mode: self.config.aggregation,
        };
        self.index.add_cluster(id, &self.clustering, &scorer, &self.reverse);
    }

    /// Replaces `a` and `b` by their union and logs it.
    pub fn merge_clusters(&mut self, a: ClusterId, b: ClusterId, reason: QueryReason, log_gain: Option<f64>) -> Result<ClusterId> {
        let into = self.clustering.merge(a, b)?;
        self.retire(a);
        self.retire(b);
        self.admit(into);
        self.gate.log_mut().push(Event::Merge {
            a,
            b,
            into,
            reason,
            log_gain,
        })?;
        self.snapshot()?;
        Ok(into)
    }

    /// Replaces `w` by the given groups and logs it. Groups other than an
    /// unresolved remainder are known pure and become trusted.
    pub fn apply_split(&mut self, w: ClusterId, groups: Vec<Vec<usize>>, unresolved: bool) -> Result<Vec<ClusterId>> {
        let into = self.clustering.split(w, &groups)?;
        self.retire(w);
        let certified = if unresolved { into.len() - 1 } else { into.len() };
        for &id in &into[..certified] {
            self.trusted.insert(id);
        }
        for &id in &into {
            self.admit(id);
        }
        self.gate.log_mut().push(Event::Split {
            cluster: w,
            into: into.clone(),
            groups,
            unresolved,
        })?;
        self.snapshot()?;
        Ok(into)
    }

    /// Best candidate under the current state, without side effects on the
    /// clustering.
    pub fn peek_candidate(&mut self) -> Option<CandidatePair> {
        let scorer = Scorer {
            dataset: self.dataset,
            graph: &self.model.graph,
            store: &self.model.store,
            mode: self.config.aggregation,
        };
        self.index
            .select(&self.clustering, &scorer, self.gate.constraints(), self.config.batch)
    }

    fn test_purity(&mut self, id: ClusterId, oracle: &mut dyn Oracle) -> Result<PurityVerdict> {
        let density = self.density_of(id)?;
        let members = self.clustering.members(id)?.to_vec();
        let verdict = purity_test_with_density(&members, density, self.tau, &mut self.gate, oracle, self.dataset)?;
        self.gate.log_mut().push(Event::PurityTest {
            cluster: id,
            passed: verdict.passed,
            density: verdict.density_value,
            density_passed: verdict.density_passed,
            queries: verdict.oracle_queries_spent,
        })?;
        if verdict.passed {
            self.trusted.insert(id);
        }
        Ok(verdict)
    }

    fn split(&mut self, id: ClusterId, oracle: &mut dyn Oracle) -> Result<bool> {
        let members = self.clustering.members(id)?.to_vec();
        let partition = subcluster_partition(&members, &mut self.gate, oracle, self.dataset)?;
        let unresolved = partition.residual.is_some();
        self.apply_split(id, partition.all_groups(), unresolved)?;
        Ok(unresolved)
    }

    /// One iteration of the main loop; `Some` when the loop should stop.
    pub fn step(&mut self, oracle: &mut dyn Oracle) -> Result<Option<StopReason>> {
        if self.iterations >= self.max_iterations {
            return Ok(Some(StopReason::MaxIterations));
        }
        let Some(candidate) = self.peek_candidate() else {
            return Ok(Some(StopReason::NoCandidates));
        };
        self.iterations += 1;

        let mut failed = Vec::new();
        for id in [candidate.a, candidate.b] {
            if self.trusted.contains(&id) {
                continue;
            }
            match self.test_purity(id, oracle) {
                Ok(v) if !v.passed => failed.push(id),
                Ok(_) => {}
                Err(Error::BudgetExhausted(_)) => return Ok(Some(StopReason::Budget)),
                Err(e) => return Err(e),
            }
        }

        if failed.is_empty() {
            let ma = self.medoid_of(candidate.a)?;
            let mb = self.medoid_of(candidate.b)?;
            match self.gate.ask(oracle, ma, mb, QueryReason::Merge) {
                Ok(answer) if answer.relation == Relation::Must => {
                    self.merge_clusters(candidate.a, candidate.b, QueryReason::Merge, Some(candidate.log_gain()))?;
                }
                Ok(_) => self.index.remove_pair(candidate.a, candidate.b),
                Err(Error::BudgetExhausted(_)) => return Ok(Some(StopReason::Budget)),
                Err(e) => return Err(e),
            }
        } else {
            for id in failed {
                if self.split(id, oracle)? {
                    return Ok(Some(StopReason::Budget));
                }
            }
        }
        Ok(None)
    }

    /// Runs the main loop until budget, iteration cap, or candidates run out.
    pub fn run(&mut self, oracle: &mut dyn Oracle) -> Result<StopReason> {
        self.run_observed(oracle, |_| {})
    }

    /// [`Engine::run`], calling `observe` after every iteration.
    pub fn run_observed(&mut self, oracle: &mut dyn Oracle, mut observe: impl FnMut(&Self)) -> Result<StopReason> {
        let reason = loop {
            if let Some(reason) = self.step(oracle)? {
                break reason;
            }
            observe(self);
        };
        self.stop = Some(reason);
        let queries_used = self.queries_used();
        self.gate.log_mut().push(Event::Stop { reason, queries_used })?;
        Ok(reason)
    }

    /// Tries to attach every singleton to a neighboring cluster, spending up
    /// to `extra` additional queries.
    ///
    /// Each singleton is compared with the medoids of its kNN-adjacent
    /// clusters, most probable first, until one answers must-link.
    pub fn refine(&mut self, oracle: &mut dyn Oracle, extra: usize) -> Result<RefineReport> {
        self.gate.add_budget(extra);
        let start = self.queries_used();
        let mut report = RefineReport::default();
        let singletons: Vec<ClusterId> = self
            .clustering
            .iter()
            .filter(|(_, m)| m.len() == 1)
            .map(|(id, _)| id)
            .collect();
        'outer: for id in singletons {
            if self.clustering.size(id) != 1 {
                continue;
            }
            let s = self.clustering.members(id)?[0];
            let neighbors: BTreeSet<ClusterId> =
                candidates::adjacent_clusters(&[s], id, &self.clustering, &self.model.graph, &self.reverse);
            let mut ranked: Vec<(f64, ClusterId)> = {
                let scorer = self.scorer();
                neighbors
                    .into_iter()
                    .map(|c| {
                        let lo = scorer.log_odds(&[s], self.clustering.members(c).expect("live cluster"));
                        (lo, c)
                    })
                    .collect()
            };
            ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            for (_, target) in ranked {
                let m = self.medoid_of(target)?;
                match self.gate.ask(oracle, s, m, QueryReason::Refinement) {
                    Ok(answer) if answer.relation == Relation::Must => {
                        self.merge_clusters(id, target, QueryReason::Refinement, None)?;
                        report.absorbed += 1;
                        break;
                    }
                    Ok(_) => {}
                    Err(Error::BudgetExhausted(_)) => {
                        report.budget_exhausted = true;
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        report.queries = self.queries_used() - start;
        let reason = if report.budget_exhausted {
            StopReason::Budget
        } else {
            StopReason::NoCandidates
        };
        let queries_used = self.queries_used();
        self.gate.log_mut().push(Event::Stop { reason, queries_used })?;
        Ok(report)
    }

    pub fn summary(&self) -> Result<Summary> {
        let initial = match &self.truth {
            Some(t) => Some(Snapshot::with_report(0, &MetricsReport::compute(&self.initial, t)?)),
            None => None,
        };
        Ok(Summary {
            n: self.dataset.len(),
            adaptive_k: self.adaptive_k,
            k_init: self.initial.k(),
            k_final: self.clustering.k(),
            tau: self.tau,
            queries_used: self.queries_used(),
            budget: self.gate.budget(),
            iterations: self.iterations,
            stop_reason: self.stop,
            seed: self.config.seed,
            initial,
            last: self.current_snapshot()?,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        })
    }

    /// Writes assignment, metrics, and summary files into `dir`. The run log
    /// and constraint log are streamed there already when `out` is set.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_assignment(&dir.join(ASSIGNMENT_FILE), &self.clustering)?;
        write_metrics_csv(&dir.join(METRICS_FILE), self.log().snapshots())?;
        let summary = serde_json::to_string_pretty(&self.summary()?).map_err(|e| Error::invalid(e.to_string()))?;
        let path = dir.join(SUMMARY_FILE);
        fs::write(&path, summary + "\n").map_err(|e| Error::io(path, e))?;
        if self.config.out.as_deref() != Some(dir) {
            let path = dir.join(RUNLOG_FILE);
            fs::write(&path, self.log().to_jsonl()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Full batch session: fit, initialize, run, optionally refine, and write
/// outputs when an output directory is configured.
pub fn run_session(dataset: &Dataset, config: SessionConfig, oracle: &mut dyn Oracle) -> Result<Clustering> {
    let refine_budget = config.refine_budget;
    let mut engine = Engine::new(dataset, config)?;
    engine.run(oracle)?;
    if refine_budget > 0 {
        engine.refine(oracle, refine_budget)?;
    }
    if let Some(out) = engine.config().out.clone() {
        engine.write_outputs(&out)?;
    }
    Ok(engine.clustering().clone())
}
