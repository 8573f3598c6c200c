use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use a3s::{Dataset, SessionConfig};

use crate::error::ApiError;
use crate::session::Session;
use crate::spec::{KnownConstraint, SessionSpec};

/// Live sessions by id.
#[derive(Clone, Default)]
pub struct SessionManager {
    sessions: Arc<Mutex<HashMap<String, Arc<Session>>>>,
    counter: Arc<AtomicU64>,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads the data and starts the engine. Blocking: reads files and
    /// projects the dataset.
    pub fn create(&self, spec: &SessionSpec) -> Result<Arc<Session>, ApiError> {
        self.start(spec.dataset()?, spec.config()?, &spec.constraints)
    }

    pub fn start(
        &self,
        dataset: Dataset,
        config: SessionConfig,
        known: &[KnownConstraint],
    ) -> Result<Arc<Session>, ApiError> {
        let id = format!("s{}", self.counter.fetch_add(1, Ordering::Relaxed) + 1);
        let session = Session::start(id.clone(), dataset, config, known)?;
        self.table().insert(id, Arc::clone(&session));
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.table()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    /// Cancels and forgets a session.
    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        let session = self
            .table()
            .remove(id)
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))?;
        session.cancel();
        Ok(())
    }

    fn table(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<Session>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }
}
