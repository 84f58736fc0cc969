//! Background jobs run one at a time on a dedicated worker thread.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use url::Url;

use gaps_core::geometry::read_geojson;
use gaps_core::model::{parse_catalogue, sync_datasets_with_progress, Fetcher, UrlFetcher};

use crate::precompute::{precompute, Scope};
use crate::workspace::Workspace;
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobKind {
    RefreshObservations { year: i32 },
    SyncModel,
    Precompute {
        #[serde(flatten)]
        scope: Scope,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    #[serde(flatten)]
    pub kind: JobKind,
    pub status: JobStatus,
    pub progress: f64,
    pub created: DateTime<Utc>,
    pub started: Option<DateTime<Utc>>,
    pub finished: Option<DateTime<Utc>>,
    pub message: Option<String>,
}

type Jobs = Arc<Mutex<BTreeMap<String, Job>>>;

pub struct JobManager {
    jobs: Jobs,
    next_id: AtomicU64,
    tx: Mutex<Option<mpsc::Sender<String>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl std::fmt::Debug for JobManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobManager").field("jobs", &self.jobs.lock().len()).finish()
    }
}

impl JobManager {
    pub fn start(ws: Arc<Workspace>) -> Self {
        Self::with_fetcher(ws, Arc::new(UrlFetcher::default()))
    }

    /// The worker thread owns `fetcher`, so a blocking HTTP client inside it
    /// is never dropped on an async runtime thread.
    pub fn with_fetcher(ws: Arc<Workspace>, fetcher: Arc<dyn Fetcher>) -> Self {
        let jobs: Jobs = Arc::default();
        let (tx, rx) = mpsc::channel::<String>();
        let worker = {
            let jobs = jobs.clone();
            std::thread::Builder::new()
                .name("gaps-jobs".into())
                .spawn(move || {
                    for id in rx {
                        run_one(&ws, fetcher.as_ref(), &jobs, &id);
                    }
                })
                .expect("spawn job worker")
        };
        JobManager {
            jobs,
            next_id: AtomicU64::new(1),
            tx: Mutex::new(Some(tx)),
            worker: Mutex::new(Some(worker)),
        }
    }

    pub fn submit(&self, kind: JobKind) -> Result<Job, ServiceError> {
        if let JobKind::RefreshObservations { year } = kind {
            if !(1900..=9999).contains(&year) {
                return Err(ServiceError::Invalid(format!("year {year} out of range")));
            }
        }
        let id = format!("job-{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let job = Job {
            id: id.clone(),
            kind,
            status: JobStatus::Queued,
            progress: 0.0,
            created: Utc::now(),
            started: None,
            finished: None,
            message: None,
        };
        self.jobs.lock().insert(id.clone(), job.clone());
        let sent = self.tx.lock().as_ref().map(|tx| tx.send(id.clone()).is_ok()).unwrap_or(false);
        if !sent {
            self.jobs.lock().remove(&id);
            return Err(ServiceError::Invalid("job manager is shut down".into()));
        }
        Ok(job)
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().get(id).cloned()
    }

    pub fn list(&self) -> Vec<Job> {
        self.jobs.lock().values().cloned().collect()
    }

    /// Stops accepting jobs and waits for the queue to drain.
    pub fn shutdown(&self) {
        self.tx.lock().take();
        if let Some(w) = self.worker.lock().take() {
            let _ = w.join();
        }
    }
}

impl Drop for JobManager {
    fn drop(&mut self) {
        self.tx.lock().take();
    }
}

fn update(jobs: &Jobs, id: &str, f: impl FnOnce(&mut Job)) {
    if let Some(j) = jobs.lock().get_mut(id) {
        f(j);
    }
}

fn run_one(ws: &Workspace, fetcher: &dyn Fetcher, jobs: &Jobs, id: &str) {
    let Some(kind) = jobs.lock().get(id).map(|j| j.kind.clone()) else {
        return;
    };
    update(jobs, id, |j| {
        j.status = JobStatus::Running;
        j.started = Some(Utc::now());
        j.progress = 0.01;
    });
    let mut progress = |done: usize, total: usize| {
        // Keep strictly below 1 until the job has actually finished.
        let p = if total == 0 { 0.5 } else { 0.05 + 0.9 * done as f64 / total as f64 };
        update(jobs, id, |j| j.progress = p.min(0.99));
    };
    let result = match &kind {
        JobKind::RefreshObservations { year } => refresh_observations(ws, fetcher, *year, &mut progress),
        JobKind::SyncModel => sync_model(ws, fetcher, &mut progress),
        JobKind::Precompute { scope } => precompute(ws, scope, &mut progress)
            .map(|r| format!("{} computed, {} cached, {} failed", r.computed, r.hits, r.failures.len())),
    };
    match &result {
        Ok(msg) => tracing::info!(job = id, message = %msg, "job succeeded"),
        Err(e) => tracing::warn!(job = id, error = %e, "job failed"),
    }
    update(jobs, id, |j| {
        j.finished = Some(Utc::now());
        match result {
            Ok(msg) => {
                j.status = JobStatus::Succeeded;
                j.progress = 1.0;
                j.message = Some(msg);
            }
            Err(e) => {
                j.status = JobStatus::Failed;
                j.message = Some(e.to_string());
            }
        }
    });
}

fn refresh_observations(
    ws: &Workspace,
    fetcher: &dyn Fetcher,
    year: i32,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<String, ServiceError> {
    let template = ws
        .config()
        .observations_url
        .as_deref()
        .ok_or_else(|| ServiceError::Config("observations_url is not configured".into()))?;
    let url = Url::parse(&template.replace("{year}", &year.to_string()))
        .map_err(|e| ServiceError::Config(format!("observations_url: {e}")))?;
    progress(0, 2);
    let bytes = fetcher.fetch(&url)?;
    progress(1, 2);
    let report = ws.ingest_observations(&bytes)?;
    Ok(format!(
        "{} rows: {} created, {} updated, {} rejected",
        report.rows,
        report.created,
        report.updated,
        report.rejected.len()
    ))
}

fn sync_model(
    ws: &Workspace,
    fetcher: &dyn Fetcher,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<String, ServiceError> {
    let cfg = ws.config();
    let cat_url = cfg
        .catalogue_url
        .as_deref()
        .ok_or_else(|| ServiceError::Config("catalogue_url is not configured".into()))?;
    let cat_url = Url::parse(cat_url).map_err(|e| ServiceError::Config(format!("catalogue_url: {e}")))?;
    let roi_path = cfg.roi.as_ref().ok_or_else(|| ServiceError::Config("roi is not configured".into()))?;
    let roi = read_geojson(&std::fs::read(cfg.resolve(roi_path))?)?;
    let entries = parse_catalogue(&fetcher.fetch(&cat_url)?)?;
    let report = sync_datasets_with_progress(ws.model(), &entries, &roi, fetcher, progress);
    if report.stored == 0 && !report.failures.is_empty() {
        let reasons: Vec<String> = report.failures.iter().map(|f| format!("{}: {}", f.id, f.reason)).collect();
        return Err(ServiceError::Invalid(format!("no dataset stored: {}", reasons.join("; "))));
    }
    Ok(format!("{} datasets, {} stored, {} failed", report.fetched, report.stored, report.failures.len()))
}
