use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{evaluate, EvalResult, PairedSample, StatsError};
use crate::calendar::{Period, Resolution};
use crate::geometry::MultiPolygon;
use crate::grid::{GeoGrid, Sample};
use crate::model::{ModelStore, Quantity};
use crate::obs::{ObsStore, Station};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoObservation,
    OutOfBounds,
    NoData,
    NonPositiveObservation,
    NegativePrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub station_id: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<PairedSample>,
    pub excluded: Vec<Exclusion>,
}

/// Pairs each station's observed value with the layer value at its pixel.
/// Stations off the grid, over nodata, with Co <= 0 or without an observed
/// value are excluded with a reason.
pub fn pair_stations_with_layer(
    stations: &[Station],
    observed: &BTreeMap<String, f64>,
    layer: &GeoGrid,
) -> Pairing {
    let mut out = Pairing::default();
    for s in stations {
        let exclude = |reason| Exclusion { station_id: s.id.clone(), reason };
        let Some(&co) = observed.get(&s.id) else {
            out.excluded.push(exclude(ExclusionReason::NoObservation));
            continue;
        };
        let cp = match layer.sample_value(s.location) {
            Sample::Value(v) => v,
            Sample::NoData => {
                out.excluded.push(exclude(ExclusionReason::NoData));
                continue;
            }
            Sample::OutOfBounds => {
                out.excluded.push(exclude(ExclusionReason::OutOfBounds));
                continue;
            }
        };
        if !(co > 0.0) {
            out.excluded.push(exclude(ExclusionReason::NonPositiveObservation));
        } else if cp < 0.0 {
            out.excluded.push(exclude(ExclusionReason::NegativePrediction));
        } else {
            out.pairs.push(PairedSample::new(s.id.clone(), co, cp));
        }
    }
    for e in &out.excluded {
        tracing::debug!(station = %e.station_id, reason = ?e.reason, "station excluded from pairing");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEval {
    pub station_id: String,
    pub result: EvalResult,
}

/// Evaluation of one concentration layer against the valid stations of a
/// region: pooled metrics over all pairs plus one result per station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub region: String,
    pub pollutant: String,
    pub resolution: Resolution,
    pub timestamp: DateTime<Utc>,
    pub stations: Vec<String>,
    pub pairs: Vec<PairedSample>,
    pub excluded: Vec<Exclusion>,
    pub result: Option<EvalResult>,
    /// Why `result` is absent.
    pub error: Option<String>,
    pub per_station: Vec<StationEval>,
}

pub fn evaluate_layer(
    obs: &ObsStore,
    layer: &GeoGrid,
    pollutant: &str,
    period: &Period,
    region_id: &str,
    region: &MultiPolygon,
) -> Evaluation {
    let stations = obs.select_valid_stations(pollutant, period, region);
    let mut observed = BTreeMap::new();
    for s in &stations {
        if let Ok(series) = obs.query(&s.id, pollutant, period, period.resolution) {
            if let Some((_, v)) = series.points.first() {
                observed.insert(s.id.clone(), *v);
            }
        }
    }
    let pairing = pair_stations_with_layer(&stations, &observed, layer);
    let (result, error) = match evaluate(&pairing.pairs) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let per_station = pairing
        .pairs
        .iter()
        .filter_map(|p| {
            evaluate(std::slice::from_ref(p))
                .ok()
                .map(|result| StationEval { station_id: p.station_id.clone(), result })
        })
        .collect();
    Evaluation {
        region: region_id.to_string(),
        pollutant: pollutant.to_string(),
        resolution: period.resolution,
        timestamp: period.start,
        stations: stations.into_iter().map(|s| s.id).collect(),
        pairs: pairing.pairs,
        excluded: pairing.excluded,
        result,
        error,
        per_station,
    }
}

/// Evaluates every stored concentration layer of `pollutant` at
/// `resolution`, oldest first.
pub fn evaluation_series(
    obs: &ObsStore,
    model: &ModelStore,
    pollutant: &str,
    resolution: Resolution,
    region_id: &str,
    region: &MultiPolygon,
) -> Result<Vec<Evaluation>, StatsError> {
    let stack = model.series(pollutant, Quantity::Concentration, resolution, None);
    if stack.is_empty() {
        return Err(StatsError::NotFound(format!("{pollutant}/concentration/{resolution}")));
    }
    stack
        .iter()
        .map(|(t, g)| {
            let period = Period::bucket(resolution, *t).map_err(|e| StatsError::NotFound(e.to_string()))?;
            Ok(evaluate_layer(obs, g, pollutant, &period, region_id, region))
        })
        .collect()
}
