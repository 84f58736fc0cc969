//! Model evaluation metrics and area-weighted regional statistics.

mod eval;
mod metrics;
mod zonal;

use thiserror::Error;

pub use eval::{
    evaluate_layer, evaluation_series, pair_stations_with_layer, Evaluation, Exclusion, ExclusionReason, Pairing,
    StationEval,
};
pub use metrics::{
    acceptance, compute_metrics, evaluate, EvalResult, Metrics, PairedSample, FAC2_MIN, FB_MAX_ABS, NMSE_MAX,
};
pub use zonal::{build_regional_series, region_weights, weighted_stats, RegionalStats, WeightCache, WeightMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no pairs to evaluate")]
    EmptyInput,
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("region {0:?} has no data cells")]
    EmptyRegion(String),
    #[error("invalid weight map: {0}")]
    InvalidWeights(String),
    #[error("no layers for {0}")]
    NotFound(String),
}

#[cfg(test)]
mod tests;
