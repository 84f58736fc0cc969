//! Cached derived payloads: regional series and evaluations.
//!
//! Regional series depend on the model store only and carry version
//! `m<model generation>`; evaluations also read observations and carry
//! `o<obs generation>-m<model generation>`.

use serde::{Deserialize, Serialize};

use gaps_core::calendar::Resolution;
use gaps_core::model::Quantity;
use gaps_core::stats::{build_regional_series, evaluation_series};

use crate::workspace::Workspace;
use crate::ServiceError;

pub fn regional_key(pollutant: &str, quantity: Quantity, resolution: Resolution, region: &str) -> String {
    format!("regional|{pollutant}|{quantity}|{resolution}|{region}")
}

pub fn evaluation_key(pollutant: &str, resolution: Resolution, region: &str) -> String {
    format!("evaluation|{pollutant}|{resolution}|{region}")
}

pub fn regional_version(ws: &Workspace) -> String {
    format!("m{}", ws.model().generation())
}

pub fn evaluation_version(ws: &Workspace) -> String {
    format!("o{}-m{}", ws.obs_generation(), ws.model().generation())
}

fn cached(
    ws: &Workspace,
    key: &str,
    version: impl Fn(&Workspace) -> String,
    compute: impl FnOnce() -> Result<Vec<u8>, ServiceError>,
) -> Result<(Vec<u8>, bool), ServiceError> {
    let v = version(ws);
    ws.cache().get_or_compute_if(key, &v, compute, || version(ws) == v)
}

/// JSON array of `RegionalStats`, oldest first. The flag is true when the
/// payload came from the cache.
pub fn regional_payload(
    ws: &Workspace,
    pollutant: &str,
    quantity: Quantity,
    resolution: Resolution,
    region: &str,
) -> Result<(Vec<u8>, bool), ServiceError> {
    let polygon = ws.region(region)?;
    let key = regional_key(pollutant, quantity, resolution, region);
    cached(ws, &key, regional_version, || {
        let series = build_regional_series(ws.model(), pollutant, quantity, resolution, region, polygon, ws.weights())?;
        Ok(serde_json::to_vec(&series).expect("regional stats serialise"))
    })
}

/// JSON array of `Evaluation`, one per stored concentration layer.
pub fn evaluation_payload(
    ws: &Workspace,
    pollutant: &str,
    resolution: Resolution,
    region: &str,
) -> Result<(Vec<u8>, bool), ServiceError> {
    let polygon = ws.region(region)?;
    let key = evaluation_key(pollutant, resolution, region);
    cached(ws, &key, evaluation_version, || {
        let evals = evaluation_series(&ws.obs(), ws.model(), pollutant, resolution, region, polygon)?;
        Ok(serde_json::to_vec(&evals).expect("evaluations serialise"))
    })
}

/// Pollutants × resolutions × regions. An empty list selects everything
/// available.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scope {
    pub pollutants: Vec<String>,
    pub resolutions: Vec<Resolution>,
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeEntry {
    pub key: String,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeFailure {
    pub key: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeReport {
    pub entries: Vec<PrecomputeEntry>,
    pub computed: usize,
    pub hits: usize,
    pub failures: Vec<PrecomputeFailure>,
}

enum Task {
    Regional(String, Quantity, Resolution, String),
    Evaluation(String, Resolution, String),
    Missing(String),
}

fn plan(ws: &Workspace, scope: &Scope) -> Result<Vec<Task>, ServiceError> {
    let layers = ws.model().list_layers();
    let pollutants: Vec<String> = if scope.pollutants.is_empty() {
        let mut p: Vec<String> = layers.iter().map(|k| k.pollutant.clone()).collect();
        p.dedup();
        p
    } else {
        scope.pollutants.clone()
    };
    let resolutions = if scope.resolutions.is_empty() { Resolution::ALL.to_vec() } else { scope.resolutions.clone() };
    let regions: Vec<String> = if scope.regions.is_empty() {
        ws.regions().keys().cloned().collect()
    } else {
        for r in &scope.regions {
            ws.region(r)?;
        }
        scope.regions.clone()
    };

    let mut tasks = Vec::new();
    for pol in &pollutants {
        for &res in &resolutions {
            let quantities: Vec<Quantity> = Quantity::ALL
                .into_iter()
                .filter(|&q| layers.iter().any(|k| &k.pollutant == pol && k.quantity == q && k.resolution == res))
                .collect();
            if quantities.is_empty() {
                // Selecting everything should not report gaps the user never asked for.
                if !scope.pollutants.is_empty() && !scope.resolutions.is_empty() {
                    tasks.push(Task::Missing(format!("{pol}|{res}")));
                }
                continue;
            }
            for region in &regions {
                for &q in &quantities {
                    tasks.push(Task::Regional(pol.clone(), q, res, region.clone()));
                }
                if quantities.contains(&Quantity::Concentration) {
                    tasks.push(Task::Evaluation(pol.clone(), res, region.clone()));
                }
            }
        }
    }
    Ok(tasks)
}

/// Fills the cache for `scope`. Per-key failures are recorded and the
/// remaining keys still run. `progress(done, total)` follows every key.
pub fn precompute(
    ws: &Workspace,
    scope: &Scope,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<PrecomputeReport, ServiceError> {
    let tasks = plan(ws, scope)?;
    let mut report = PrecomputeReport::default();
    let total = tasks.len();
    for (i, task) in tasks.into_iter().enumerate() {
        let (key, result) = match task {
            Task::Regional(p, q, r, region) => {
                (regional_key(&p, q, r, &region), regional_payload(ws, &p, q, r, &region))
            }
            Task::Evaluation(p, r, region) => (evaluation_key(&p, r, &region), evaluation_payload(ws, &p, r, &region)),
            Task::Missing(key) => (key.clone(), Err(ServiceError::NotFound(format!("no model layers for {key}")))),
        };
        match result {
            Ok((_, hit)) => {
                if hit {
                    report.hits += 1;
                } else {
                    report.computed += 1;
                }
                report.entries.push(PrecomputeEntry { key, hit });
            }
            Err(e) => {
                tracing::warn!(%key, error = %e, "precompute failed");
                report.failures.push(PrecomputeFailure { key, reason: e.to_string() });
            }
        }
        progress(i + 1, total);
    }
    Ok(report)
}
