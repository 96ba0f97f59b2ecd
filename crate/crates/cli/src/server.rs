//! HTTP preview service and mesh job queue.
//!
//! Tiles and previews render on the blocking pool and may run side by side.
//! Jobs go through one queue with a single consumer, so at most one mesh job
//! runs at a time.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use statica_core::families::{EscapeParams, PathEvaluator};
use statica_core::model::PathSpec;
use statica_core::raster::{self, RasterConfig, Window, JULIA_WINDOW};
use statica_core::stack::encode_gray_png;
use tokio::sync::mpsc;
use tower_http::cors::CorsLayer;

use crate::commands;
use crate::config::JobConfig;

pub const DEFAULT_PORT: u16 = 8737;
pub const MAX_TILE_PX: usize = 2048;
pub const MAX_PREVIEW_SAMPLES: usize = 64;
pub const PREVIEW_RESOLUTION: usize = 192;
pub const PREVIEW_MAX_ITER: u32 = 200;
pub const TILE_MAX_ITER: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
struct JobRecord {
    hash: String,
    config: JobConfig,
    status: JobStatus,
    progress: f64,
    error: Option<String>,
    stl: Option<PathBuf>,
}

#[derive(Default)]
struct Jobs {
    records: HashMap<String, JobRecord>,
    by_hash: HashMap<String, String>,
    next: u64,
}

/// Shared server state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    jobs: Arc<Mutex<Jobs>>,
    queue: mpsc::UnboundedSender<String>,
    workdir: PathBuf,
}

impl AppState {
    /// Starts the job worker on the current tokio runtime.
    pub fn new(workdir: PathBuf) -> Self {
        let (queue, rx) = mpsc::unbounded_channel();
        let state = Self {
            jobs: Arc::default(),
            queue,
            workdir,
        };
        tokio::spawn(worker(state.clone(), rx));
        state
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(r) = self.jobs.lock().expect("job lock").records.get_mut(id) {
            f(r);
        }
    }
}

async fn worker(state: AppState, mut rx: mpsc::UnboundedReceiver<String>) {
    while let Some(id) = rx.recv().await {
        let Some(mut config) = state
            .jobs
            .lock()
            .expect("job lock")
            .records
            .get(&id)
            .map(|r| r.config.clone())
        else {
            continue;
        };
        state.update(&id, |r| r.status = JobStatus::Running);
        config.redirect_output(&state.workdir.join("jobs").join(&id));
        let (st, job) = (state.clone(), id.clone());
        let result = tokio::task::spawn_blocking(move || {
            let progress = |p: f64| st.update(&job, |r| r.progress = r.progress.max(p));
            commands::cmd_run(&config, &progress).map(|_| config.stl_path())
        })
        .await;
        state.update(&id, |r| match result {
            Ok(Ok(stl)) => {
                r.status = JobStatus::Done;
                r.progress = 1.0;
                r.stl = Some(stl);
            }
            Ok(Err(e)) => {
                r.status = JobStatus::Failed;
                r.error = Some(e.to_string());
            }
            Err(e) => {
                r.status = JobStatus::Failed;
                r.error = Some(format!("job panicked: {e}"));
            }
        });
        log::info!("job {id} finished");
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/mandelbrot", get(mandelbrot))
        .route("/api/path/preview", post(path_preview))
        .route("/api/jobs", post(submit_job))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/jobs/{id}/model.stl", get(job_stl))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `port` on localhost and serves until the process ends.
pub async fn serve(port: u16, workdir: PathBuf) -> std::io::Result<()> {
    std::fs::create_dir_all(&workdir)?;
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(AppState::new(workdir))).await
}

fn bad_request(message: impl std::fmt::Display) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": message.to_string() })),
    )
        .into_response()
}

async fn render<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": e.to_string() })),
        )
            .into_response()
    })
}

fn query_value<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str, default: T) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    match q.get(key) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|e| format!("bad value for {key}: {e}")),
    }
}

fn tile_request(q: &HashMap<String, String>) -> Result<(RasterConfig, u32), String> {
    let window = Window::new(
        query_value(q, "x_min", -2.0)?,
        query_value(q, "x_max", 1.0)?,
        query_value(q, "y_min", -1.5)?,
        query_value(q, "y_max", 1.5)?,
    );
    let px: usize = query_value(q, "px", 256)?;
    let max_iter: u32 = query_value(q, "max_iter", TILE_MAX_ITER)?;
    if px == 0 || px > MAX_TILE_PX {
        return Err(format!("px must lie in 1..={MAX_TILE_PX}, got {px}"));
    }
    if max_iter == 0 {
        return Err("max_iter must be at least 1".into());
    }
    let cfg = RasterConfig::new(px, window, 1).map_err(|e| e.to_string())?;
    Ok((cfg, max_iter))
}

async fn mandelbrot(Query(q): Query<HashMap<String, String>>) -> Response {
    let (cfg, max_iter) = match tile_request(&q) {
        Ok(v) => v,
        Err(e) => return bad_request(e),
    };
    let png = render(move || {
        let frame = raster::rasterize_mandelbrot(max_iter, &cfg).map_err(|e| e.to_string())?;
        encode_gray_png(frame.values(), frame.width(), frame.height())
    })
    .await;
    match png {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Ok(Err(e)) => bad_request(e),
        Err(r) => r,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    pub path: PathSpec,
    pub samples: usize,
    #[serde(default)]
    pub raster: Option<RasterConfig>,
    #[serde(default)]
    pub max_iter: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreviewFrame {
    pub t: f64,
    pub c_re: f64,
    pub c_im: f64,
    pub png_base64: String,
}

fn preview(req: PreviewRequest) -> Result<Vec<PreviewFrame>, String> {
    if req.samples == 0 || req.samples > MAX_PREVIEW_SAMPLES {
        return Err(format!(
            "samples must lie in 1..={MAX_PREVIEW_SAMPLES}, got {}",
            req.samples
        ));
    }
    let cfg = match req.raster {
        Some(r) => {
            r.validate().map_err(|e| e.to_string())?;
            r
        }
        None => RasterConfig::new(PREVIEW_RESOLUTION, JULIA_WINDOW, 2).map_err(|e| e.to_string())?,
    };
    let max_iter = req.max_iter.unwrap_or(PREVIEW_MAX_ITER);
    let path = PathEvaluator::new(&req.path).map_err(|e| e.to_string())?;
    path.samples(req.samples)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(t, c)| {
            let p =
                EscapeParams::new(c, max_iter, EscapeParams::DEFAULT_RADIUS).map_err(|e| e.to_string())?;
            let frame = raster::rasterize_escape(&p, &cfg).map_err(|e| e.to_string())?;
            let png = encode_gray_png(frame.values(), frame.width(), frame.height())?;
            Ok(PreviewFrame {
                t,
                c_re: c.re,
                c_im: c.im,
                png_base64: base64::engine::general_purpose::STANDARD.encode(png),
            })
        })
        .collect()
}

async fn path_preview(body: Bytes) -> Response {
    let req: PreviewRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(e),
    };
    match render(move || preview(req)).await {
        Ok(Ok(frames)) => Json(json!({ "frames": frames })).into_response(),
        Ok(Err(e)) => bad_request(e),
        Err(r) => r,
    }
}

async fn submit_job(State(state): State<AppState>, body: Bytes) -> Response {
    let value: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return bad_request(e),
    };
    let config = match JobConfig::from_value(value) {
        Ok(c) => c,
        Err(e) => return bad_request(e),
    };
    let hash = config.job_hash();
    let mut jobs = state.jobs.lock().expect("job lock");
    if let Some(id) = jobs.by_hash.get(&hash).cloned() {
        let failed = jobs
            .records
            .get(&id)
            .is_some_and(|r| r.status == JobStatus::Failed);
        if !failed {
            return (StatusCode::CONFLICT, Json(json!({ "job_id": id }))).into_response();
        }
    }
    jobs.next += 1;
    let id = format!("{}-{}", jobs.next, &hash[..12]);
    jobs.by_hash.insert(hash.clone(), id.clone());
    jobs.records.insert(
        id.clone(),
        JobRecord {
            hash,
            config,
            status: JobStatus::Queued,
            progress: 0.0,
            error: None,
            stl: None,
        },
    );
    drop(jobs);
    if state.queue.send(id.clone()).is_err() {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "job worker has stopped" })),
        )
            .into_response();
    }
    (StatusCode::ACCEPTED, Json(json!({ "job_id": id }))).into_response()
}

#[derive(Debug, Serialize)]
struct JobView {
    status: JobStatus,
    progress: f64,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stl_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn not_found(id: &str) -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(json!({ "error": format!("unknown job {id}") })),
    )
        .into_response()
}

async fn job_status(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let jobs = state.jobs.lock().expect("job lock");
    let Some(r) = jobs.records.get(&id) else {
        return not_found(&id);
    };
    Json(JobView {
        status: r.status,
        progress: r.progress,
        config_hash: r.hash.clone(),
        stl_url: r.stl.as_ref().map(|_| format!("/api/jobs/{id}/model.stl")),
        error: r.error.clone(),
    })
    .into_response()
}

async fn job_stl(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let stl = {
        let jobs = state.jobs.lock().expect("job lock");
        match jobs.records.get(&id) {
            None => return not_found(&id),
            Some(r) => r.stl.clone(),
        }
    };
    let Some(stl) = stl else {
        return (
            StatusCode::NOT_FOUND,
            Json(json!({ "error": format!("job {id} has no model yet") })),
        )
            .into_response();
    };
    match tokio::fs::read(&stl).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response(),
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": format!("{}: {e}", stl.display()) })),
        )
            .into_response(),
    }
}
