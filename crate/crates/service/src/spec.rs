//! The `POST /session` request body.

use std::path::PathBuf;

use a3s::constraints::Relation;
use a3s::init::InitMethod;
use a3s::io::load_dataset;
use a3s::strategy::AggregationMode;
use a3s::{Dataset, Matrix, SessionConfig};
use serde::Deserialize;

use crate::error::ApiError;

/// A constraint known before the session starts.
#[derive(Clone, Copy, Debug, Deserialize)]
pub struct KnownConstraint {
    pub s: usize,
    pub t: usize,
    pub verdict: Relation,
}

/// Session parameters. Data comes from files (`data`, `labels`, `assets`)
/// or inline (`points`, `truth`); everything else has engine defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSpec {
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub points: Option<Vec<Vec<f64>>>,
    pub truth: Option<Vec<usize>>,
    pub budget: Option<usize>,
    pub refine_budget: Option<usize>,
    pub batch: Option<usize>,
    pub neighbors: Option<usize>,
    pub tau: Option<f64>,
    pub knn_agg: Option<usize>,
    pub init: Option<InitMethod>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub resume: bool,
    /// Answers that contradict the closure of these are refused.
    pub constraints: Vec<KnownConstraint>,
}

impl SessionSpec {
    pub fn dataset(&self) -> Result<Dataset, ApiError> {
        let ds = match (&self.data, &self.points) {
            (Some(path), None) => load_dataset(path, self.labels.as_deref(), self.assets.as_deref())?,
            (None, Some(rows)) => {
                let mut ds = Dataset::new(Matrix::from_rows(rows)?)?;
                if let Some(truth) = &self.truth {
                    ds = ds.with_labels(truth.clone())?;
                }
                ds
            }
            (Some(_), Some(_)) => return Err(ApiError::BadRequest("give either `data` or `points`, not both".into())),
            (None, None) => return Err(ApiError::BadRequest("a session needs `data` or `points`".into())),
        };
        if self.data.is_none() && (self.labels.is_some() || self.assets.is_some()) {
            return Err(ApiError::BadRequest("`labels` and `assets` files go with `data`".into()));
        }
        Ok(ds)
    }

    pub fn config(&self) -> Result<SessionConfig, ApiError> {
        let defaults = SessionConfig::default();
        let mut config = SessionConfig {
            budget: self.budget.unwrap_or(defaults.budget),
            refine_budget: self.refine_budget.unwrap_or(0),
            batch: self.batch.unwrap_or(defaults.batch),
            neighbors: self.neighbors.unwrap_or(defaults.neighbors),
            tau: self.tau,
            aggregation: self.knn_agg.map_or(defaults.aggregation, AggregationMode::from_knn_agg),
            seed: self.seed.unwrap_or(defaults.seed),
            out: self.out.clone(),
            resume: self.resume,
            ..defaults
        };
        if let Some(method) = self.init {
            config.init.method = method;
        }
        config.validate()?;
        Ok(config)
    }
}
