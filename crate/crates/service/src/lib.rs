//! HTTP API, background jobs, on-disk result cache and upstream fallback
//! over the stores of `gaps-core`.

pub mod api;
pub mod cache;
pub mod config;
pub mod jobs;
pub mod precompute;
pub mod proxy;
pub mod workspace;

use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use gaps_core::model::{schedule_refresh, RefreshHandle, SystemClock};

pub use api::{router, AppState};
pub use cache::DiskCache;
pub use config::{Config, ScheduleConfig, Threshold};
pub use jobs::{Job, JobKind, JobManager, JobStatus};
pub use precompute::{precompute, PrecomputeReport, Scope};
pub use proxy::Upstream;
pub use workspace::Workspace;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error(transparent)]
    Obs(#[from] gaps_core::obs::ObsError),
    #[error(transparent)]
    Model(#[from] gaps_core::model::ModelError),
    #[error(transparent)]
    Grid(#[from] gaps_core::grid::GridError),
    #[error(transparent)]
    Geometry(#[from] gaps_core::geometry::GeometryError),
    #[error(transparent)]
    Stats(#[from] gaps_core::stats::StatsError),
    #[error(transparent)]
    Calendar(#[from] gaps_core::calendar::CalendarError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A running server. Dropping it without calling [`ServerHandle::shutdown`]
/// leaves the server running until the runtime stops.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
    refresh: Option<RefreshHandle>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(r) = self.refresh.take() {
            let _ = tokio::task::spawn_blocking(move || r.cancel()).await;
        }
        let _ = (&mut self.task).await;
    }

    /// Resolves when the server stops on its own.
    pub async fn wait(mut self) {
        let _ = (&mut self.task).await;
    }
}

/// Opens the stores, binds `config.bind` and serves the API on the current
/// tokio runtime. A configured schedule submits `sync_model` jobs.
pub async fn serve(config: Config) -> Result<ServerHandle, ServiceError> {
    let config = Arc::new(config);
    let ws = {
        let c = config.clone();
        tokio::task::spawn_blocking(move || Workspace::open(&c))
            .await
            .map_err(|e| ServiceError::Config(e.to_string()))??
    };
    let ws = Arc::new(ws);
    let jobs = Arc::new(JobManager::start(ws.clone()));
    let upstream = match &config.upstream_url {
        Some(u) => Some(Upstream::new(u)?),
        None => None,
    };
    let state = AppState::new(ws, jobs.clone(), upstream);

    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| ServiceError::Bind { addr: config.bind.clone(), reason: e.to_string() })?;
    let addr = listener
        .local_addr()
        .map_err(|e| ServiceError::Bind { addr: config.bind.clone(), reason: e.to_string() })?;

    let refresh = match &config.schedule {
        Some(s) => {
            let jobs = jobs.clone();
            let h = schedule_refresh(s.day_of_year, s.interval_days, Arc::new(SystemClock), move || {
                jobs.submit(JobKind::SyncModel).map(|_| ()).map_err(|e| e.to_string())
            })?;
            tracing::info!(first = %h.first_due(), "model refresh scheduled");
            Some(h)
        }
        None => None,
    };

    let app = router(state.clone(), config.dashboard_dir.as_deref());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let res = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        if let Err(e) = res {
            tracing::error!(error = %e, "server stopped");
        }
    });
    tracing::info!(%addr, "listening");
    Ok(ServerHandle { addr, state, shutdown: Some(tx), task, refresh })
}
