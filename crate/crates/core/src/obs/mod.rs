//! Station registry and hourly observation store.
//!
//! Stations are ingested through the generic [`table`] machinery from a
//! registry CSV (`id,name,lat,lon,influence,environment`); observations come
//! from a separate CSV (`station_id,timestamp,pollutant,value,unit`) and are
//! kept at their hourly base resolution. Everything coarser is computed on
//! demand from the hourly values.

mod coord;
pub mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coord::{parse_coordinate, CoordFormat};
pub use table::{
    ColumnType, CoordinateColumns, Database, ForeignLink, IngestReport, ParserConfig, RejectedRow, Row,
    Table, Value,
};

use crate::calendar::{self, bucket_start, format_timestamp, is_aligned, Period, Resolution};
use crate::fsutil::write_atomic;
use crate::geometry::{contains_point, MultiPolygon, Point};

/// Capture fraction a station must strictly exceed to be used.
pub const MIN_CAPTURE_FRACTION: f64 = 0.75;

pub const STATIONS_TABLE: &str = "stations";
pub const OBSERVATION_UNIT: &str = "ug/m3";

#[derive(Debug, Error)]
pub enum ObsError {
    #[error("malformed coordinate {0:?}")]
    Coordinate(String),
    #[error("parser configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error(transparent)]
    Calendar(#[from] calendar::CalendarError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Influence {
    Background,
    Traffic,
    Industrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Urban,
    Suburban,
    Rural,
}

impl std::str::FromStr for Influence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "background" => Ok(Influence::Background),
            "traffic" => Ok(Influence::Traffic),
            "industrial" => Ok(Influence::Industrial),
            _ => Err(format!("unknown influence {s:?}")),
        }
    }
}

impl std::str::FromStr for Environment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "urban" => Ok(Environment::Urban),
            "suburban" => Ok(Environment::Suburban),
            "rural" => Ok(Environment::Rural),
            _ => Err(format!("unknown environment {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub location: Point,
    pub influence: Influence,
    pub environment: Environment,
}

impl Station {
    fn from_row(id: &str, row: &Row) -> Option<Station> {
        Some(Station {
            id: id.to_string(),
            name: row.get("name")?.as_str()?.to_string(),
            location: row.get("location")?.as_point()?,
            influence: row.get("influence")?.as_str()?.parse().ok()?,
            environment: row.get("environment")?.as_str()?.parse().ok()?,
        })
    }
}

/// Parser configuration of the station registry CSV.
pub fn station_registry_config() -> ParserConfig {
    ParserConfig {
        coordinates: Some(CoordinateColumns {
            lat_column: "lat".into(),
            lon_column: "lon".into(),
            format: CoordFormat::Decimal,
            crs: "WGS84".into(),
            field: "location".into(),
        }),
        primary_key: "id".into(),
        foreign_links: Vec::new(),
        column_types: BTreeMap::from([
            ("name".to_string(), ColumnType::String),
            ("influence".to_string(), ColumnType::String),
            ("environment".to_string(), ColumnType::String),
        ]),
    }
}

/// Timestamped values of one station and pollutant at a single resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSeries {
    pub station_id: String,
    pub pollutant: String,
    pub resolution: Resolution,
    pub points: Vec<(DateTime<Utc>, f64)>,
}

impl ObservationSeries {
    pub fn new(
        station_id: impl Into<String>,
        pollutant: impl Into<String>,
        resolution: Resolution,
        points: Vec<(DateTime<Utc>, f64)>,
    ) -> Result<Self, ObsError> {
        for w in points.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(ObsError::InvalidSeries(format!(
                    "timestamps not strictly increasing at {}",
                    format_timestamp(w[1].0)
                )));
            }
        }
        for (t, v) in &points {
            if !v.is_finite() {
                return Err(ObsError::InvalidSeries(format!("non-finite value at {}", format_timestamp(*t))));
            }
            if !is_aligned(*t, resolution) {
                return Err(ObsError::InvalidSeries(format!(
                    "{} is not on a {resolution} boundary",
                    format_timestamp(*t)
                )));
            }
        }
        Ok(ObservationSeries {
            station_id: station_id.into(),
            pollutant: pollutant.into(),
            resolution,
            points,
        })
    }

    pub fn value_at(&self, t: DateTime<Utc>) -> Option<f64> {
        self.points
            .binary_search_by(|(ts, _)| ts.cmp(&t))
            .ok()
            .map(|i| self.points[i].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptureReport {
    pub station_id: String,
    pub pollutant: String,
    pub period: Period,
    pub expected: u32,
    pub observed: u32,
    pub fraction: f64,
}

/// Mean of the available values per calendar bucket of `target`; buckets
/// without any value are omitted.
pub fn aggregate_temporal(series: &ObservationSeries, target: Resolution) -> Result<ObservationSeries, ObsError> {
    if series.resolution != Resolution::Hourly {
        return Err(ObsError::InvalidSeries(format!(
            "aggregation starts from hourly data, got {}",
            series.resolution
        )));
    }
    if target == Resolution::Hourly {
        return Ok(series.clone());
    }
    let mut points: Vec<(DateTime<Utc>, f64)> = Vec::new();
    let mut current: Option<(DateTime<Utc>, f64, u32)> = None;
    for &(t, v) in &series.points {
        let b = bucket_start(t, target);
        match &mut current {
            Some((start, sum, n)) if *start == b => {
                *sum += v;
                *n += 1;
            }
            _ => {
                if let Some((start, sum, n)) = current.take() {
                    points.push((start, sum / n as f64));
                }
                current = Some((b, v, 1));
            }
        }
    }
    if let Some((start, sum, n)) = current {
        points.push((start, sum / n as f64));
    }
    ObservationSeries::new(series.station_id.clone(), series.pollutant.clone(), target, points)
}

type SeriesKey = (String, String);

/// Stations plus hourly observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObsStore {
    db: Database,
    stations: BTreeMap<String, Station>,
    series: BTreeMap<SeriesKey, BTreeMap<DateTime<Utc>, f64>>,
}

impl ObsStore {
    pub fn database(&self) -> &Database {
        &self.db
    }

    /// Generic table ingestion into the store's database.
    pub fn ingest_table(&mut self, table: &str, csv: &[u8], config: &ParserConfig) -> Result<IngestReport, ObsError> {
        let report = self.db.ingest_table(table, csv, config)?;
        if table == STATIONS_TABLE {
            self.rebuild_stations();
        }
        Ok(report)
    }

    /// Ingests the station registry CSV. Rows with an unknown influence or
    /// environment label are rejected.
    pub fn ingest_stations(&mut self, csv: &[u8]) -> Result<IngestReport, ObsError> {
        let check = |row: &Row| -> Result<(), (String, String)> {
            for col in ["influence", "environment"] {
                let text = row.get(col).and_then(Value::as_str).unwrap_or_default();
                let ok = if col == "influence" {
                    text.parse::<Influence>().map(|_| ())
                } else {
                    text.parse::<Environment>().map(|_| ())
                };
                ok.map_err(|e| (col.to_string(), e))?;
            }
            Ok(())
        };
        let report = self
            .db
            .ingest_table_checked(STATIONS_TABLE, csv, &station_registry_config(), &check)?;
        self.rebuild_stations();
        Ok(report)
    }

    fn rebuild_stations(&mut self) {
        self.stations = self
            .db
            .table(STATIONS_TABLE)
            .map(|t| {
                t.rows
                    .iter()
                    .filter_map(|(id, row)| Station::from_row(id, row).map(|s| (id.clone(), s)))
                    .collect()
            })
            .unwrap_or_default();
    }

    /// Ingests an observations CSV. Each row must reference a known station,
    /// carry an hour-aligned UTC timestamp, a finite value and the unit
    /// `ug/m3`. Existing (station, pollutant, timestamp) values are replaced.
    pub fn ingest_observations(&mut self, csv_bytes: &[u8]) -> Result<IngestReport, ObsError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_bytes);
        let header = reader.headers().map_err(|e| ObsError::Csv(e.to_string()))?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ObsError::Config(format!("column {name:?} not found in header")))
        };
        let (i_station, i_ts, i_pol, i_val, i_unit) =
            (col("station_id")?, col("timestamp")?, col("pollutant")?, col("value")?, col("unit")?);

        let mut staged = self.series.clone();
        let mut report = IngestReport {
            table: "observations".into(),
            created_table: self.series.is_empty(),
            ..Default::default()
        };
        let mut seen = BTreeSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| ObsError::Csv(e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            report.rows += 1;
            let cell = |i: usize| record.get(i).unwrap_or_default();
            let reject = |column: &str, reason: String| RejectedRow {
                line,
                column: Some(column.to_string()),
                reason,
            };
            let station = cell(i_station);
            if !self.stations.contains_key(station) {
                report.rejected.push(reject("station_id", format!("unknown station {station:?}")));
                continue;
            }
            let ts = match calendar::parse_timestamp(cell(i_ts)) {
                Ok(t) if is_aligned(t, Resolution::Hourly) => t,
                Ok(_) => {
                    report.rejected.push(reject("timestamp", "timestamp is not on an hour boundary".into()));
                    continue;
                }
                Err(e) => {
                    report.rejected.push(reject("timestamp", e.to_string()));
                    continue;
                }
            };
            let pollutant = cell(i_pol);
            if pollutant.is_empty() {
                report.rejected.push(reject("pollutant", "empty pollutant code".into()));
                continue;
            }
            let value = match cell(i_val).parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    report.rejected.push(reject("value", format!("{:?} is not a valid Float", cell(i_val))));
                    continue;
                }
            };
            if cell(i_unit) != OBSERVATION_UNIT {
                report.rejected.push(reject("unit", format!("unit must be {OBSERVATION_UNIT}")));
                continue;
            }
            let key = (station.to_string(), pollutant.to_string());
            if !seen.insert((key.clone(), ts)) {
                report.rejected.push(reject("timestamp", "duplicate observation in input".into()));
                continue;
            }
            if staged.entry(key).or_default().insert(ts, value).is_some() {
                report.updated += 1;
            } else {
                report.created += 1;
            }
        }
        self.series = staged;
        Ok(report)
    }

    pub fn stations(&self) -> impl Iterator<Item = &Station> {
        self.stations.values()
    }

    pub fn station(&self, id: &str) -> Result<&Station, ObsError> {
        self.stations
            .get(id)
            .ok_or_else(|| ObsError::NotFound(format!("station {id}")))
    }

    /// Distinct pollutant codes with at least one stored value, sorted.
    pub fn list_pollutants(&self, station_id: &str) -> Result<Vec<String>, ObsError> {
        self.station(station_id)?;
        Ok(self
            .series
            .range((station_id.to_string(), String::new())..)
            .take_while(|((s, _), _)| s == station_id)
            .filter(|(_, values)| !values.is_empty())
            .map(|((_, p), _)| p.clone())
            .collect())
    }

    fn hourly_map(&self, station_id: &str, pollutant: &str) -> Result<&BTreeMap<DateTime<Utc>, f64>, ObsError> {
        self.station(station_id)?;
        self.series
            .get(&(station_id.to_string(), pollutant.to_string()))
            .ok_or_else(|| ObsError::NotFound(format!("pollutant {pollutant} at station {station_id}")))
    }

    /// Hourly values of one station and pollutant inside `period`.
    pub fn hourly_series(&self, station_id: &str, pollutant: &str, period: &Period) -> Result<ObservationSeries, ObsError> {
        let map = self.hourly_map(station_id, pollutant)?;
        let points = map.range(period.start..period.end).map(|(t, v)| (*t, *v)).collect();
        ObservationSeries::new(station_id, pollutant, Resolution::Hourly, points)
    }

    /// Observations inside `period`, averaged to `resolution`.
    pub fn query(
        &self,
        station_id: &str,
        pollutant: &str,
        period: &Period,
        resolution: Resolution,
    ) -> Result<ObservationSeries, ObsError> {
        aggregate_temporal(&self.hourly_series(station_id, pollutant, period)?, resolution)
    }

    /// Expected hourly samples in `period` versus the number stored.
    pub fn data_capture(&self, station_id: &str, pollutant: &str, period: &Period) -> Result<CaptureReport, ObsError> {
        let map = self.hourly_map(station_id, pollutant)?;
        let expected = period.hours();
        let observed = map.range(period.start..period.end).count() as u32;
        let fraction = if expected == 0 { 0.0 } else { observed as f64 / expected as f64 };
        Ok(CaptureReport {
            station_id: station_id.to_string(),
            pollutant: pollutant.to_string(),
            period: *period,
            expected,
            observed,
            fraction,
        })
    }

    /// Background stations inside `region` whose capture over `period`
    /// strictly exceeds 75%.
    pub fn select_valid_stations(&self, pollutant: &str, period: &Period, region: &MultiPolygon) -> Vec<Station> {
        self.stations
            .values()
            .filter(|s| s.influence == Influence::Background)
            .filter(|s| contains_point(region, s.location))
            .filter(|s| {
                self.data_capture(&s.id, pollutant, period)
                    .map(|c| c.fraction > MIN_CAPTURE_FRACTION)
                    .unwrap_or(false)
            })
            .cloned()
            .collect()
    }

    /// Canonical CSV of every stored observation, sorted by station,
    /// pollutant and time.
    pub fn observations_csv(&self) -> String {
        let mut out = String::from("station_id,timestamp,pollutant,value,unit\n");
        for ((station, pollutant), values) in &self.series {
            for (t, v) in values {
                let _ = writeln!(out, "{station},{},{pollutant},{v},{OBSERVATION_UNIT}", format_timestamp(*t));
            }
        }
        out
    }

    /// Persists tables as JSON under `dir/tables` and observations as
    /// `dir/observations.csv`.
    pub fn save(&self, dir: &Path) -> Result<(), ObsError> {
        self.db.save(&dir.join("tables"))?;
        write_atomic(&dir.join("observations.csv"), self.observations_csv().as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ObsError> {
        let mut store = ObsStore { db: Database::load(&dir.join("tables"))?, ..Default::default() };
        store.rebuild_stations();
        let obs = dir.join("observations.csv");
        if obs.exists() {
            let report = store.ingest_observations(&std::fs::read(obs)?)?;
            if !report.rejected.is_empty() {
                return Err(ObsError::Csv(format!(
                    "stored observations contain {} invalid rows",
                    report.rejected.len()
                )));
            }
        }
        Ok(store)
    }
}
