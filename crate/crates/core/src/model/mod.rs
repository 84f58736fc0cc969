//! Model-prediction layers: catalogue parsing, fetching, clipped storage and
//! scheduled refresh.
//!
//! A catalogue lists datasets; each dataset URL points at a manifest naming
//! one ESRI ASCII grid per timestep. Grids are masked to the region of
//! interest before they are stored.

mod catalogue;
mod fetch;
mod schedule;
mod store;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalogue::{parse_catalogue, parse_manifest, CatalogueEntry, Manifest, ManifestFile};
pub use fetch::{Fetcher, UrlFetcher};
pub use schedule::{schedule_refresh, Clock, RefreshHandle, SimulatedClock, SystemClock};
pub use store::{sync_datasets, sync_datasets_with_progress, ModelStore, SyncFailure, SyncReport};

use crate::calendar::{is_aligned, Resolution};
use crate::grid::GridError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("catalogue {location}: {reason}")]
    Catalogue { location: String, reason: String },
    #[error("duplicate catalogue id {id:?} at {location}")]
    DuplicateId { id: String, location: String },
    #[error("{location}: unknown {field} {value:?}")]
    UnknownValue { location: String, field: &'static str, value: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("fetch {url}: {reason}")]
    Fetch { url: String, reason: String },
    #[error("no layers for {0}")]
    NotFound(String),
    #[error("point ({lon}, {lat}) is outside the layer extent")]
    OutsideExtent { lon: f64, lat: f64 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("inconsistent layer stack: {0}")]
    Stack(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Concentration,
    WetDeposition,
    DryDeposition,
    TotalDeposition,
}

impl Quantity {
    pub const ALL: [Quantity; 4] =
        [Quantity::Concentration, Quantity::WetDeposition, Quantity::DryDeposition, Quantity::TotalDeposition];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Concentration => "concentration",
            Quantity::WetDeposition => "wet_deposition",
            Quantity::DryDeposition => "dry_deposition",
            Quantity::TotalDeposition => "total_deposition",
        }
    }

    pub fn is_deposition(self) -> bool {
        self != Quantity::Concentration
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown quantity {s:?}"))
    }
}

/// Identifies one stored grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayerKey {
    pub pollutant: String,
    pub quantity: Quantity,
    pub resolution: Resolution,
    pub timestamp: DateTime<Utc>,
}

impl LayerKey {
    pub fn new(
        pollutant: impl Into<String>,
        quantity: Quantity,
        resolution: Resolution,
        timestamp: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        let pollutant = pollutant.into();
        if pollutant.is_empty() || pollutant.contains(['/', '\\']) || pollutant.starts_with('.') {
            return Err(ModelError::Stack(format!("unusable pollutant code {pollutant:?}")));
        }
        if !is_aligned(timestamp, resolution) {
            return Err(ModelError::Stack(format!("{timestamp} is not a {resolution} boundary")));
        }
        Ok(LayerKey { pollutant, quantity, resolution, timestamp })
    }

    pub fn year(&self) -> i32 {
        self.timestamp.year()
    }

    pub fn same_series(&self, other: &LayerKey) -> bool {
        self.pollutant == other.pollutant && self.quantity == other.quantity && self.resolution == other.resolution
    }
}

impl fmt::Display for LayerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.pollutant,
            self.quantity,
            self.resolution,
            self.timestamp.format("%Y-%m-%dT%H")
        )
    }
}
