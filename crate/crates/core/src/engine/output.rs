use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Clustering;
use crate::runlog::{Snapshot, StopReason, METRICS_CSV_HEADER};

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub adaptive_k: usize,
    pub k_init: usize,
    pub k_final: usize,
    pub tau: f64,
    pub queries_used: usize,
    pub budget: usize,
    pub iterations: usize,
    pub stop_reason: Option<StopReason>,
    pub seed: u64,
    /// Metrics of the initial clustering, when labels exist.
    pub initial: Option<Snapshot>,
    pub last: Snapshot,
    pub elapsed_ms: u64,
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// One cluster id per line, in sample order.
pub fn write_assignment(path: &Path, clustering: &Clustering) -> Result<()> {
    write_with(path, |w| {
        for id in clustering.assignment() {
            writeln!(w, "{id}")?;
        }
        Ok(())
    })
}

pub fn write_metrics_csv<'a>(path: &Path, snapshots: impl Iterator<Item = &'a Snapshot>) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{METRICS_CSV_HEADER}")?;
        for s in snapshots {
            writeln!(w, "{}", s.csv_row())?;
        }
        Ok(())
    })
}
