//! Background jobs. Work runs on the blocking pool under a global
//! semaphore and only touches the session again to report progress and to
//! commit its result, so reads never wait on training.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;

use crate::error::{ApiError, ApiResult, ErrorBody};
use crate::session::Session;

pub type SessionHandle = Arc<Mutex<Session>>;

/// Applied to the session under its lock once the work succeeded; returns
/// the job's result payload.
pub type Commit = Box<dyn FnOnce(&mut Session) -> ApiResult<Value> + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Classifier,
    Feedback,
    Autolabel,
    GeneratorFull,
    GeneratorTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub epoch: usize,
    pub max_epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    pub trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Job {
    pub fn new(id: String, kind: JobKind) -> Self {
        Self { id, kind, state: JobState::Queued, progress: Progress::default(), result: None, error: None }
    }

    /// Move to `next` if that is forward; terminal states never change.
    fn advance(&mut self, next: JobState) -> bool {
        if self.state.is_terminal() || next <= self.state {
            return false;
        }
        self.state = next;
        true
    }

    pub fn finish(&mut self, result: Value) {
        if self.advance(JobState::Done) {
            self.result = Some(result);
        }
    }

    pub fn fail(&mut self, error: ErrorBody) {
        if self.advance(JobState::Failed) {
            self.error = Some(error);
        }
    }
}

/// Handle given to running work for progress reports.
pub struct ProgressSink {
    session: SessionHandle,
    job: String,
}

impl ProgressSink {
    pub fn update(&self, f: impl FnOnce(&mut Progress)) {
        if let Some(job) = self.session.lock().jobs.get_mut(&self.job) {
            f(&mut job.progress);
        }
    }
}

/// Register a queued job on the locked session and start it. Refused with
/// 409 while another job of the session is queued or running.
pub fn start<W>(
    session: &mut Session,
    handle: &SessionHandle,
    permits: &Arc<Semaphore>,
    kind: JobKind,
    work: W,
) -> ApiResult<Job>
where
    W: FnOnce(&ProgressSink) -> ApiResult<Commit> + Send + 'static,
{
    if let Some(active) = session.active_job() {
        return Err(ApiError::conflict("JobConflict", format!("job {} is still {:?}", active.id, active.state))
            .with_detail(serde_json::json!({ "job": active.id })));
    }
    let job = Job::new(session.next_job_id(), kind);
    session.jobs.insert(job.id.clone(), job.clone());
    session.commit_counters()?;
    session.save_jobs()?;

    let handle = handle.clone();
    let permits = permits.clone();
    let id = job.id.clone();
    tokio::spawn(async move {
        let _permit = permits.acquire_owned().await;
        {
            let mut s = handle.lock();
            if let Some(j) = s.jobs.get_mut(&id) {
                j.advance(JobState::Running);
            }
            let _ = s.save_jobs();
        }
        let sink = ProgressSink { session: handle.clone(), job: id.clone() };
        let outcome = tokio::task::spawn_blocking(move || work(&sink)).await;
        let mut s = handle.lock();
        let outcome = match outcome {
            Ok(Ok(commit)) => commit(&mut s),
            Ok(Err(e)) => Err(e),
            Err(e) => Err(ApiError::internal(format!("job panicked: {e}"))),
        };
        if let Err(e) = &outcome {
            tracing::warn!(session = %s.id, job = %id, "job failed: {e}");
        }
        if let Some(j) = s.jobs.get_mut(&id) {
            match outcome {
                Ok(v) => j.finish(v),
                Err(e) => j.fail(e.body),
            }
        }
        if let Err(e) = s.save_jobs() {
            tracing::error!(session = %s.id, "could not persist jobs: {e}");
        }
    });
    Ok(job)
}
