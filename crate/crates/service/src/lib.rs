//! REST service for the co-creative loop: sessions hold levels, a label
//! vocabulary and annotations; training runs as background jobs; every
//! session lives in its own directory and survives restarts.

pub mod api;
pub mod error;
pub mod jobs;
pub mod pipeline;
pub mod session;

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use tokio::sync::Semaphore;

pub use api::router;
pub use error::{ApiError, ApiResult, ErrorBody};
pub use jobs::{Job, JobKind, JobState, Progress, SessionHandle};
pub use pipeline::TrainingDefaults;
pub use session::{Origin, Session, StoredAnnotation};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub max_parallel_jobs: usize,
    pub training: TrainingDefaults,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), max_parallel_jobs: 1, training: TrainingDefaults::default() }
    }
}

struct Inner {
    config: ServiceConfig,
    sessions: RwLock<BTreeMap<String, SessionHandle>>,
    next_session: Mutex<u64>,
    permits: Arc<Semaphore>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Open the data directory, reloading every stored session.
    pub fn open(config: ServiceConfig) -> ApiResult<Self> {
        let root = config.data_dir.join("sessions");
        fs::create_dir_all(&root)?;
        let mut sessions = BTreeMap::new();
        let mut next = 1u64;
        for entry in fs::read_dir(&root)? {
            let dir = entry?.path();
            if !dir.join("session.json").is_file() {
                continue;
            }
            let s = Session::open(dir)?;
            if let Some(n) = s.id.strip_prefix("s-").and_then(|n| n.parse::<u64>().ok()) {
                next = next.max(n + 1);
            }
            sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        tracing::info!(sessions = sessions.len(), dir = %config.data_dir.display(), "service state loaded");
        let permits = Arc::new(Semaphore::new(config.max_parallel_jobs.max(1)));
        Ok(Self {
            inner: Arc::new(Inner { config, sessions: RwLock::new(sessions), next_session: Mutex::new(next), permits }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn session(&self, id: &str) -> ApiResult<SessionHandle> {
        self.inner.sessions.read().get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.inner.sessions.read().keys().cloned().collect()
    }

    pub fn create_session(&self) -> ApiResult<String> {
        let mut next = self.inner.next_session.lock();
        let id = format!("s-{:06}", *next);
        let dir = self.inner.config.data_dir.join("sessions").join(&id);
        let s = Session::create(dir, id.clone())?;
        *next += 1;
        self.inner.sessions.write().insert(id.clone(), Arc::new(Mutex::new(s)));
        Ok(id)
    }

    pub(crate) fn permits(&self) -> &Arc<Semaphore> {
        &self.inner.permits
    }
}

/// Bind `addr` and serve until Ctrl-C.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
