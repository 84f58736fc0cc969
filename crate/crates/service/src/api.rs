//! HTTP routes. Every error answers with `{status, code, message}`.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Serialize;

use gaps_core::calendar::{format_timestamp, parse_period, parse_timestamp, Period, Resolution};
use gaps_core::geometry::{contains_point, Point, Rect};
use gaps_core::grid::{render_overlay, write_ascii_grid, ColorMap, GeoGrid, Sample};
use gaps_core::model::{LayerKey, ModelError, Quantity};
use gaps_core::obs::ObsError;
use gaps_core::stats::{Evaluation, RegionalStats, StatsError};

use crate::jobs::{JobKind, JobManager};
use crate::precompute::{evaluation_payload, regional_payload};
use crate::proxy::{Upstream, BBOX_HEADER, SOURCE_HEADER};
use crate::workspace::{Workspace, LANDCOVER_KINDS};
use crate::ServiceError;

pub const CACHE_HEADER: &str = "x-gaps-cache";

#[derive(Clone)]
pub struct AppState {
    pub ws: Arc<Workspace>,
    pub jobs: Arc<JobManager>,
    pub upstream: Option<Upstream>,
}

impl AppState {
    pub fn new(ws: Arc<Workspace>, jobs: Arc<JobManager>, upstream: Option<Upstream>) -> Self {
        AppState { ws, jobs, upstream }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(serialize_with = "ser_status")]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

fn ser_status<S: serde::Serializer>(s: &StatusCode, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_u16(s.as_u16())
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        let (status, code) = match &e {
            ServiceError::NotFound(_) => (S::NOT_FOUND, "not_found"),
            ServiceError::Invalid(_) | ServiceError::Calendar(_) | ServiceError::Geometry(_) => {
                (S::BAD_REQUEST, "invalid_request")
            }
            ServiceError::Config(_) => (S::SERVICE_UNAVAILABLE, "not_configured"),
            ServiceError::Obs(o) => match o {
                ObsError::NotFound(_) => (S::NOT_FOUND, "not_found"),
                ObsError::Io(_) => (S::INTERNAL_SERVER_ERROR, "internal"),
                _ => (S::BAD_REQUEST, "invalid_request"),
            },
            ServiceError::Model(m) => match m {
                ModelError::NotFound(_) => (S::NOT_FOUND, "not_found"),
                ModelError::OutsideExtent { .. } => (S::BAD_REQUEST, "outside_extent"),
                ModelError::Stack(_) => (S::BAD_REQUEST, "invalid_request"),
                _ => (S::INTERNAL_SERVER_ERROR, "internal"),
            },
            ServiceError::Stats(s) => match s {
                StatsError::NotFound(_) => (S::NOT_FOUND, "not_found"),
                _ => (S::UNPROCESSABLE_ENTITY, "undefined_result"),
            },
            ServiceError::Grid(_) | ServiceError::Io(_) | ServiceError::Bind { .. } => {
                (S::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        if status.is_server_error() {
            tracing::error!(error = %msg, "request failed");
        }
        ApiError::new(status, code, msg)
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

/// Query string with typed accessors that fail as 400 ApiErrors.
struct Params(HashMap<String, String>);

impl Params {
    fn opt(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(|s| s.trim()).filter(|s| !s.is_empty())
    }

    fn req(&self, name: &str) -> ApiResult<&str> {
        self.opt(name)
            .ok_or_else(|| ApiError::bad(format!("missing query parameter {name:?}")))
    }

    fn parse<T: FromStr>(&self, name: &str) -> ApiResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.req(name)?;
        raw.parse().map_err(|e| ApiError::bad(format!("{name}={raw:?}: {e}")))
    }

    fn parse_or<T: FromStr>(&self, name: &str, default: T) -> ApiResult<T>
    where
        T::Err: std::fmt::Display,
    {
        if self.opt(name).is_none() {
            Ok(default)
        } else {
            self.parse(name)
        }
    }

    fn point(&self) -> ApiResult<Point> {
        let lon: f64 = self.parse("lon")?;
        let lat: f64 = self.parse("lat")?;
        Point::new(lon, lat).map_err(|e| ApiError::bad(e.to_string()))
    }

    fn quantity(&self) -> ApiResult<Quantity> {
        self.parse_or("quantity", Quantity::Concentration)
    }

    fn period(&self) -> ApiResult<Period> {
        let raw = self.req("date")?;
        parse_period(raw).map_err(|e| ApiError::bad(e.to_string()))
    }

    fn timestamp(&self) -> ApiResult<DateTime<Utc>> {
        let raw = self.req("date")?;
        parse_period(raw)
            .map(|p| p.start)
            .or_else(|_| parse_timestamp(raw))
            .map_err(|e| ApiError::bad(e.to_string()))
    }

    fn layer_key(&self) -> ApiResult<LayerKey> {
        LayerKey::new(self.req("pollutant")?, self.quantity()?, self.parse("resolution")?, self.timestamp()?)
            .map_err(|e| ApiError::bad(e.to_string()))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn header_value(s: &str) -> HeaderValue {
    HeaderValue::from_str(s).unwrap_or_else(|_| HeaderValue::from_static("invalid"))
}

fn bbox_text(r: &Rect) -> String {
    format!("{},{},{},{}", r.min_lon, r.min_lat, r.max_lon, r.max_lat)
}

fn csv_response(body: String, filename: &str) -> Response {
    (
        [
            (header::CONTENT_TYPE, header_value("text/csv; charset=utf-8")),
            (header::CONTENT_DISPOSITION, header_value(&format!("attachment; filename=\"{filename}\""))),
        ],
        body,
    )
        .into_response()
}

fn json_bytes(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

pub fn router(state: AppState, dashboard_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/status", get(status))
        .route("/api/stations", get(stations))
        .route("/api/stations/{id}/pollutants", get(station_pollutants))
        .route("/api/observations", get(observations))
        .route("/api/model/layers", get(model_layers))
        .route("/api/model/value", get(model_value))
        .route("/api/model/timeseries", get(model_timeseries))
        .route("/api/model/overlay", get(model_overlay))
        .route("/api/model/grid", get(model_grid))
        .route("/api/model/exceedance", get(model_exceedance))
        .route("/api/model/regional", get(model_regional))
        .route("/api/evaluation", get(evaluation))
        .route("/api/landcover", get(landcover))
        .route("/api/geonames/autocomplete", get(autocomplete))
        .route("/api/geonames/lookup", get(lookup))
        .route("/api/jobs", post(submit_job).get(list_jobs))
        .route("/api/jobs/{id}", get(job_status))
        .with_state(state);
    let dashboard = dashboard_dir.map(Path::to_path_buf);
    api.fallback(move |uri: Uri| fallback(uri, dashboard.clone()))
}

async fn fallback(uri: Uri, dashboard: Option<PathBuf>) -> Response {
    let not_found = || ApiError::not_found(format!("no route for {}", uri.path())).into_response();
    let Some(root) = dashboard else {
        return not_found();
    };
    if uri.path().starts_with("/api/") {
        return not_found();
    }
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return not_found();
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => {
            let mime = match path.extension().and_then(|e| e.to_str()) {
                Some("html") => "text/html; charset=utf-8",
                Some("js") => "text/javascript",
                Some("css") => "text/css",
                Some("json") => "application/json",
                Some("png") => "image/png",
                Some("svg") => "image/svg+xml",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, HeaderValue::from_static(mime))], bytes).into_response()
        }
        Err(_) => not_found(),
    }
}

#[derive(Serialize)]
struct StatusPayload {
    obs_generation: u64,
    model_generation: u64,
    stations: usize,
    layers: usize,
    toponyms: usize,
    regions: Vec<String>,
    landcover: Vec<String>,
    cache_computations: u64,
    cache_hits: u64,
    jobs: usize,
}

async fn status(State(s): State<AppState>) -> Json<StatusPayload> {
    let ws = &s.ws;
    Json(StatusPayload {
        obs_generation: ws.obs_generation(),
        model_generation: ws.model().generation(),
        stations: ws.obs().stations().count(),
        layers: ws.model().snapshot().len(),
        toponyms: ws.gazetteer().len(),
        regions: ws.regions().keys().cloned().collect(),
        landcover: LANDCOVER_KINDS
            .iter()
            .filter(|k| ws.landcover(k).is_some())
            .map(|k| k.to_string())
            .collect(),
        cache_computations: ws.cache().computations(),
        cache_hits: ws.cache().hits(),
        jobs: s.jobs.list().len(),
    })
}

async fn stations(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let obs = s.ws.obs();
    let list: Vec<_> = match q.opt("region") {
        Some(r) => {
            let region = s.ws.region(r)?;
            obs.stations().filter(|st| contains_point(region, st.location)).cloned().collect()
        }
        None => obs.stations().cloned().collect(),
    };
    Ok(Json(list).into_response())
}

async fn station_pollutants(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let list = s.ws.obs().list_pollutants(&id).map_err(ServiceError::from)?;
    Ok(Json(list).into_response())
}

#[derive(Debug, Serialize)]
pub struct SeriesPoint {
    pub timestamp: String,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct ObservationsPayload {
    pub station: String,
    pub pollutant: String,
    pub resolution: Resolution,
    pub unit: &'static str,
    pub period_start: String,
    pub period_end: String,
    /// Hourly data capture over the requested period.
    pub capture: f64,
    pub points: Vec<SeriesPoint>,
}

async fn observations(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let station = q.req("station")?.to_string();
    let pollutant = q.req("pollutant")?.to_string();
    let period = q.period()?;
    let resolution = q.parse_or("resolution", period.resolution)?;
    let obs = s.ws.obs();
    let series = obs
        .query(&station, &pollutant, &period, resolution)
        .map_err(ServiceError::from)?;
    let capture = obs
        .data_capture(&station, &pollutant, &period)
        .map_err(ServiceError::from)?;
    Ok(Json(ObservationsPayload {
        station,
        pollutant,
        resolution,
        unit: gaps_core::obs::OBSERVATION_UNIT,
        period_start: format_timestamp(period.start),
        period_end: format_timestamp(period.end),
        capture: capture.fraction,
        points: series
            .points
            .into_iter()
            .map(|(t, value)| SeriesPoint { timestamp: format_timestamp(t), value })
            .collect(),
    })
    .into_response())
}

#[derive(Debug, Serialize)]
pub struct LayerSeries {
    pub pollutant: String,
    pub quantity: Quantity,
    pub resolution: Resolution,
    pub timestamps: Vec<String>,
}

async fn model_layers(State(s): State<AppState>) -> Json<Vec<LayerSeries>> {
    let mut out: Vec<LayerSeries> = Vec::new();
    for key in s.ws.model().list_layers() {
        match out.last_mut() {
            Some(l) if l.pollutant == key.pollutant && l.quantity == key.quantity && l.resolution == key.resolution => {
                l.timestamps.push(format_timestamp(key.timestamp));
            }
            _ => out.push(LayerSeries {
                pollutant: key.pollutant.clone(),
                quantity: key.quantity,
                resolution: key.resolution,
                timestamps: vec![format_timestamp(key.timestamp)],
            }),
        }
    }
    Json(out)
}

#[derive(Debug, Serialize)]
pub struct ValuePayload {
    pub pollutant: String,
    pub quantity: Quantity,
    pub resolution: Resolution,
    pub timestamp: String,
    pub lon: f64,
    pub lat: f64,
    pub value: Option<f64>,
    /// `value`, `nodata` or `out_of_bounds`.
    pub status: &'static str,
}

async fn model_value(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let key = q.layer_key()?;
    let p = q.point()?;
    let grid = s.ws.model().get_layer(&key).map_err(ServiceError::from)?;
    let (value, status) = match grid.sample_value(p) {
        Sample::Value(v) => (Some(v), "value"),
        Sample::NoData => (None, "nodata"),
        Sample::OutOfBounds => (None, "out_of_bounds"),
    };
    Ok(Json(ValuePayload {
        pollutant: key.pollutant,
        quantity: key.quantity,
        resolution: key.resolution,
        timestamp: format_timestamp(key.timestamp),
        lon: p.lon,
        lat: p.lat,
        value,
        status,
    })
    .into_response())
}

async fn model_timeseries(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let pollutant = q.req("pollutant")?.to_string();
    let quantity = q.quantity()?;
    let resolution: Resolution = q.parse("resolution")?;
    let p = q.point()?;
    let from: i32 = q.parse_or("from", i32::MIN)?;
    let to: i32 = q.parse_or("to", i32::MAX)?;
    let years = from..=to;
    let ws = s.ws.clone();
    let pol = pollutant.clone();
    let series = blocking(move || Ok(ws.model().extract_point_series(&pol, quantity, resolution, years, p)?)).await?;
    let mut body = String::from("timestamp,value\n");
    for (t, v) in series {
        body.push_str(&format!("{},{v}\n", format_timestamp(t)));
    }
    let name = format!("{pollutant}_{quantity}_{resolution}_{}_{}.csv", p.lat, p.lon);
    Ok(csv_response(body, &name))
}

enum Format {
    Ascii,
    Ppm,
    Png,
}

fn image_format(q: &Params, default: &str) -> ApiResult<Format> {
    match q.opt("format").unwrap_or(default) {
        "asc" => Ok(Format::Ascii),
        "ppm" => Ok(Format::Ppm),
        "png" => Ok(Format::Png),
        other => Err(ApiError::bad(format!("unknown format {other:?}; use asc, ppm or png"))),
    }
}

fn grid_response(g: &GeoGrid, format: Format) -> Result<Response, ServiceError> {
    let (mime, body) = match format {
        Format::Ascii => ("text/plain; charset=utf-8", write_ascii_grid(g)),
        Format::Ppm => ("image/x-portable-pixmap", render_overlay(g, &ColorMap::default())?.to_ppm()),
        Format::Png => ("image/png", render_overlay(g, &ColorMap::default())?.to_png()),
    };
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(mime)),
            (HeaderName::from_static(BBOX_HEADER), header_value(&bbox_text(&g.extent()))),
            (HeaderName::from_static(SOURCE_HEADER), HeaderValue::from_static("local")),
        ],
        body,
    )
        .into_response())
}

/// Serves the layer locally when stored, otherwise asks the upstream with
/// the same path and query. Both unavailable is a 502.
async fn local_or_upstream(s: &AppState, uri: &Uri, q: &Params, default_format: &str) -> ApiResult {
    let key = q.layer_key()?;
    let format = image_format(q, default_format)?;
    match s.ws.model().get_layer(&key) {
        Ok(g) => return blocking(move || grid_response(&g, format)).await,
        Err(ModelError::NotFound(_)) => {}
        Err(e) => return Err(ServiceError::from(e).into()),
    }
    let Some(up) = &s.upstream else {
        return Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            "upstream_unavailable",
            format!("layer {key} is not stored and no upstream is configured"),
        ));
    };
    match up.fetch(uri.path(), uri.query()).await {
        Ok(r) => {
            let mut resp = r.body.into_response();
            for (name, value) in r.headers {
                if let Ok(n) = HeaderName::from_str(&name) {
                    resp.headers_mut().insert(n, header_value(&value));
                }
            }
            resp.headers_mut()
                .insert(HeaderName::from_static(SOURCE_HEADER), HeaderValue::from_static("upstream"));
            Ok(resp)
        }
        Err(reason) => {
            tracing::warn!(%key, %reason, "upstream fallback failed");
            Err(ApiError::new(
                StatusCode::BAD_GATEWAY,
                "upstream_unavailable",
                format!("layer {key} is not stored and the upstream failed: {reason}"),
            ))
        }
    }
}

async fn model_overlay(State(s): State<AppState>, uri: Uri, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    local_or_upstream(&s, &uri, &Params(q), "png").await
}

async fn model_grid(State(s): State<AppState>, uri: Uri, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    local_or_upstream(&s, &uri, &Params(q), "asc").await
}

async fn model_exceedance(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let key = q.layer_key()?;
    let format = image_format(&q, "asc")?;
    let threshold = match q.opt("threshold") {
        Some(_) => q.parse::<f64>("threshold")?,
        None => {
            let t = s.ws.config().thresholds.get(&key.pollutant);
            let v = if key.quantity.is_deposition() {
                t.and_then(|t| t.critical_load)
            } else {
                t.and_then(|t| t.critical_level)
            };
            v.ok_or_else(|| {
                ApiError::bad(format!(
                    "no threshold given and none configured for {} {}",
                    key.pollutant, key.quantity
                ))
            })?
        }
    };
    if !threshold.is_finite() {
        return Err(ApiError::bad("threshold must be finite"));
    }
    let grid = s.ws.model().get_layer(&key).map_err(ServiceError::from)?;
    blocking(move || grid_response(&grid.compute_exceedance(threshold), format)).await
}

fn want_csv(q: &Params) -> ApiResult<bool> {
    match q.opt("format").unwrap_or("json") {
        "json" => Ok(false),
        "csv" => Ok(true),
        other => Err(ApiError::bad(format!("unknown format {other:?}; use json or csv"))),
    }
}

fn cache_header(resp: &mut Response, hit: bool) {
    resp.headers_mut()
        .insert(HeaderName::from_static(CACHE_HEADER), HeaderValue::from_static(if hit { "hit" } else { "miss" }));
}

async fn model_regional(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let region = q.req("region")?.to_string();
    let pollutant = q.req("pollutant")?.to_string();
    let quantity = q.quantity()?;
    let resolution: Resolution = q.parse("resolution")?;
    let date = match q.opt("date") {
        Some(_) => Some(q.timestamp()?),
        None => None,
    };
    let csv = want_csv(&q)?;
    let ws = s.ws.clone();
    let (payload, hit) = blocking(move || regional_payload(&ws, &pollutant, quantity, resolution, &region)).await?;
    let mut resp = if date.is_none() && !csv {
        json_bytes(payload)
    } else {
        let mut rows: Vec<RegionalStats> = serde_json::from_slice(&payload)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        if let Some(t) = date {
            rows.retain(|r| r.timestamp == t);
            if rows.is_empty() {
                return Err(ApiError::not_found(format!("no regional value at {}", format_timestamp(t))));
            }
        }
        if csv {
            let mut body = String::from("region,timestamp,min,max,weighted_mean\n");
            for r in &rows {
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.region,
                    format_timestamp(r.timestamp),
                    r.min,
                    r.max,
                    r.weighted_mean
                ));
            }
            csv_response(body, "regional.csv")
        } else {
            Json(rows).into_response()
        }
    };
    cache_header(&mut resp, hit);
    Ok(resp)
}

fn evaluation_csv(evals: &[Evaluation]) -> String {
    let mut body = String::from("region,pollutant,resolution,timestamp,n,fac2,fb,nmse,accepted,error\n");
    for e in evals {
        let cols = match &e.result {
            Some(r) => format!("{},{},{},{},{},", r.n, r.fac2, r.fb, r.nmse, r.accepted),
            None => format!(",,,,,{}", e.error.as_deref().unwrap_or_default().replace(',', ";")),
        };
        body.push_str(&format!(
            "{},{},{},{},{cols}\n",
            e.region,
            e.pollutant,
            e.resolution,
            format_timestamp(e.timestamp)
        ));
    }
    body
}

async fn evaluation(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let region = q.req("region")?.to_string();
    let pollutant = q.req("pollutant")?.to_string();
    let resolution: Resolution = q.parse("resolution")?;
    let date = match q.opt("date") {
        Some(_) => Some(q.timestamp()?),
        None => None,
    };
    let csv = want_csv(&q)?;
    let ws = s.ws.clone();
    let (payload, hit) = blocking(move || evaluation_payload(&ws, &pollutant, resolution, &region)).await?;
    let mut resp = match (date, csv) {
        (None, false) => json_bytes(payload),
        _ => {
            let mut evals: Vec<Evaluation> = serde_json::from_slice(&payload)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
            if let Some(t) = date {
                evals.retain(|e| e.timestamp == t);
            }
            match (date, csv) {
                (Some(t), false) => {
                    let e = evals
                        .pop()
                        .ok_or_else(|| ApiError::not_found(format!("no evaluation at {}", format_timestamp(t))))?;
                    Json(e).into_response()
                }
                _ => csv_response(evaluation_csv(&evals), "evaluation.csv"),
            }
        }
    };
    cache_header(&mut resp, hit);
    Ok(resp)
}

#[derive(Debug, Serialize)]
pub struct LandcoverPayload {
    pub kind: String,
    pub lon: f64,
    pub lat: f64,
    /// Legend class; `None` off the grid or over nodata.
    pub class: Option<String>,
}

async fn landcover(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let kind = q.req("kind")?;
    if !LANDCOVER_KINDS.contains(&kind) {
        return Err(ApiError::bad(format!("kind must be landuse or ecosystem, got {kind:?}")));
    }
    let p = q.point()?;
    let lc = s
        .ws
        .landcover(kind)
        .ok_or_else(|| ApiError::not_found(format!("no {kind} layer loaded")))?;
    let class = lc.grid.classify_point(&lc.legend, p).map_err(ServiceError::from)?;
    Ok(Json(LandcoverPayload { kind: kind.to_string(), lon: p.lon, lat: p.lat, class }).into_response())
}

async fn autocomplete(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    let prefix = q.0.get("q").map(String::as_str).unwrap_or_default();
    let limit: usize = q.parse_or("limit", 10)?;
    if limit == 0 {
        return Err(ApiError::bad("limit must be at least 1"));
    }
    Ok(Json(s.ws.gazetteer().autocomplete(prefix, limit)).into_response())
}

async fn lookup(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let q = Params(q);
    Ok(Json(s.ws.gazetteer().lookup(q.req("name")?)).into_response())
}

async fn submit_job(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let kind: JobKind = serde_json::from_slice(&body).map_err(|e| ApiError::bad(format!("job request: {e}")))?;
    let job = s.jobs.submit(kind)?;
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn list_jobs(State(s): State<AppState>) -> ApiResult {
    Ok(Json(s.jobs.list()).into_response())
}

async fn job_status(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let job = s.jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("job {id}")))?;
    Ok(Json(job).into_response())
}
