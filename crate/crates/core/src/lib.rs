//! Active clustering with pairwise must-link / cannot-link queries.
//!
//! A calibrated pair model seeds an over-segmented initial clustering; the
//! [`engine`] then spends an oracle budget merging pure neighboring clusters
//! and splitting impure ones, ranking cluster pairs by expected NMI gain.

pub mod baseline;
pub mod constraints;
pub mod engine;
pub mod error;
pub mod gate;
pub mod init;
pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod pairwise;
pub mod purity;
pub mod runlog;
pub mod strategy;
pub mod synth;

pub use constraints::{ConstraintStore, Relation};
pub use engine::{run_session, Engine, SessionConfig};
pub use error::{Error, Result};
pub use model::{ClusterId, Clustering, Dataset, Matrix};
pub use oracle::{Oracle, QueryContext, QueryReason, SimulatedOracle};
