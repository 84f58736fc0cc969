//! Configurable ingestion of tabular (CSV) data into keyed tables.
//!
//! A [`ParserConfig`] is filled in four steps: which columns carry the
//! coordinates (and in which format and reference system), which column is
//! the primary key, which columns link to other tables, and the types of the
//! remaining columns.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::coord::{parse_coordinate, CoordFormat};
use super::ObsError;
use crate::calendar::{format_timestamp, parse_timestamp};
use crate::fsutil::write_atomic;
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    Integer,
    Float,
    String,
    DateTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateColumns {
    pub lat_column: String,
    pub lon_column: String,
    pub format: CoordFormat,
    /// Only `WGS84` is accepted.
    pub crs: String,
    /// Name of the fused point field in stored rows.
    #[serde(default = "default_point_field")]
    pub field: String,
}

fn default_point_field() -> String {
    "location".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignLink {
    pub column: String,
    pub table: String,
    pub target_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub coordinates: Option<CoordinateColumns>,
    pub primary_key: String,
    #[serde(default)]
    pub foreign_links: Vec<ForeignLink>,
    /// Types of the remaining columns; untyped columns are kept as strings.
    #[serde(default)]
    pub column_types: BTreeMap<String, ColumnType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Integer(i64),
    Float(f64),
    String(String),
    DateTime(DateTime<Utc>),
    Point(Point),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<Point> {
        match self {
            Value::Point(p) => Some(*p),
            _ => None,
        }
    }

    /// Text form used to match foreign keys against raw cells.
    pub fn to_text(&self) -> String {
        match self {
            Value::Integer(i) => i.to_string(),
            Value::Float(f) => f.to_string(),
            Value::String(s) => s.clone(),
            Value::DateTime(t) => format_timestamp(*t),
            Value::Point(p) => format!("{} {}", p.lon, p.lat),
        }
    }
}

pub type Row = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub key_column: String,
    pub rows: BTreeMap<String, Row>,
}

impl Table {
    fn has_value(&self, column: &str, text: &str) -> Option<&Value> {
        if column == self.key_column {
            return self.rows.get(text).and_then(|r| r.get(column));
        }
        self.rows
            .values()
            .filter_map(|r| r.get(column))
            .find(|v| v.to_text() == text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub column: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct IngestReport {
    pub table: String,
    pub created_table: bool,
    pub rows: usize,
    pub created: usize,
    pub updated: usize,
    pub rejected: Vec<RejectedRow>,
}

/// A set of named keyed tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Database {
    tables: BTreeMap<String, Table>,
}

/// Extra per-row check applied after type coercion.
pub type RowCheck<'a> = &'a dyn Fn(&Row) -> Result<(), (String, String)>;

impl Database {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn ingest_table(
        &mut self,
        table: &str,
        csv_bytes: &[u8],
        config: &ParserConfig,
    ) -> Result<IngestReport, ObsError> {
        self.ingest_table_checked(table, csv_bytes, config, &|_| Ok(()))
    }

    /// Ingests all rows of a CSV file. The file is applied atomically: on a
    /// fatal error the database is untouched; rejected rows are reported and
    /// the rest is stored. Rows whose key already exists are replaced.
    pub fn ingest_table_checked(
        &mut self,
        table: &str,
        csv_bytes: &[u8],
        config: &ParserConfig,
        check: RowCheck<'_>,
    ) -> Result<IngestReport, ObsError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_bytes);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| ObsError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let plan = ColumnPlan::new(&header, config)?;

        let created_table = !self.tables.contains_key(table);
        let mut target = self.tables.get(table).cloned().unwrap_or_else(|| Table {
            name: table.to_string(),
            key_column: config.primary_key.clone(),
            rows: BTreeMap::new(),
        });
        if target.key_column != config.primary_key {
            return Err(ObsError::Config(format!(
                "table {table} is keyed by {}, not {}",
                target.key_column, config.primary_key
            )));
        }

        let mut report = IngestReport { table: table.to_string(), created_table, ..Default::default() };
        let mut seen = BTreeSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| ObsError::Csv(e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            report.rows += 1;
            let reject = |column: Option<&str>, reason: String| RejectedRow {
                line,
                column: column.map(str::to_string),
                reason,
            };
            let row = match plan.coerce(&record, self) {
                Ok(row) => row,
                Err((col, reason)) => {
                    report.rejected.push(reject(Some(&col), reason));
                    continue;
                }
            };
            if let Err((col, reason)) = check(&row) {
                report.rejected.push(reject(Some(&col), reason));
                continue;
            }
            let key = record.get(plan.key_idx).unwrap_or_default().to_string();
            if key.is_empty() {
                report.rejected.push(reject(Some(&config.primary_key), "empty primary key".into()));
                continue;
            }
            if !seen.insert(key.clone()) {
                report.rejected.push(reject(
                    Some(&config.primary_key),
                    format!("duplicate primary key {key:?}"),
                ));
                continue;
            }
            if target.rows.insert(key, row).is_some() {
                report.updated += 1;
            } else {
                report.created += 1;
            }
        }
        self.tables.insert(table.to_string(), target);
        Ok(report)
    }

    /// Writes one JSON file per table under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ObsError> {
        std::fs::create_dir_all(dir)?;
        for (name, table) in &self.tables {
            let bytes = serde_json::to_vec_pretty(table).map_err(|e| ObsError::Csv(e.to_string()))?;
            write_atomic(&dir.join(format!("{name}.json")), &bytes)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ObsError> {
        let mut db = Database::default();
        if !dir.exists() {
            return Ok(db);
        }
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let table: Table = serde_json::from_slice(&std::fs::read(&path)?)
                .map_err(|e| ObsError::Csv(format!("{}: {e}", path.display())))?;
            db.tables.insert(table.name.clone(), table);
        }
        Ok(db)
    }
}

/// Column roles resolved against a concrete header.
struct ColumnPlan {
    key_idx: usize,
    coords: Option<(usize, usize, CoordFormat, String)>,
    links: Vec<(usize, ForeignLink)>,
    typed: Vec<(usize, String, ColumnType)>,
}

impl ColumnPlan {
    fn new(header: &[String], config: &ParserConfig) -> Result<Self, ObsError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ObsError::Config(format!("column {name:?} not found in header")))
        };
        let key_idx = find(&config.primary_key)?;

        let mut reserved = BTreeSet::new();
        let coords = match &config.coordinates {
            None => None,
            Some(c) => {
                if !c.crs.eq_ignore_ascii_case("WGS84") {
                    return Err(ObsError::Config(format!("unsupported coordinate system {:?}", c.crs)));
                }
                reserved.insert(c.lat_column.clone());
                reserved.insert(c.lon_column.clone());
                Some((find(&c.lat_column)?, find(&c.lon_column)?, c.format, c.field.clone()))
            }
        };
        let mut links = Vec::new();
        for link in &config.foreign_links {
            reserved.insert(link.column.clone());
            links.push((find(&link.column)?, link.clone()));
        }
        for col in config.column_types.keys() {
            find(col)?;
            if reserved.contains(col) {
                return Err(ObsError::Config(format!(
                    "column {col:?} is a coordinate or linked column and cannot be typed"
                )));
            }
        }
        let typed = header
            .iter()
            .enumerate()
            .filter(|(_, h)| !reserved.contains(*h))
            .map(|(i, h)| (i, h.clone(), config.column_types.get(h).copied().unwrap_or(ColumnType::String)))
            .collect();
        Ok(ColumnPlan { key_idx, coords, links, typed })
    }

    fn coerce(&self, record: &csv::StringRecord, db: &Database) -> Result<Row, (String, String)> {
        let mut row = Row::new();
        let cell = |i: usize| record.get(i).unwrap_or_default();
        if let Some((lat_i, lon_i, format, field)) = &self.coords {
            let lat = parse_coordinate(cell(*lat_i), *format).map_err(|e| (field.clone(), e.to_string()))?;
            let lon = parse_coordinate(cell(*lon_i), *format).map_err(|e| (field.clone(), e.to_string()))?;
            let p = Point::new(lon, lat).map_err(|e| (field.clone(), e.to_string()))?;
            row.insert(field.clone(), Value::Point(p));
        }
        for (i, link) in &self.links {
            let text = cell(*i);
            let target = db
                .table(&link.table)
                .and_then(|t| t.has_value(&link.target_column, text))
                .ok_or_else(|| {
                    (
                        link.column.clone(),
                        format!("no {}.{} equal to {text:?}", link.table, link.target_column),
                    )
                })?;
            row.insert(link.column.clone(), target.clone());
        }
        for (i, name, ty) in &self.typed {
            let text = cell(*i);
            let bad = |what: &str| (name.clone(), format!("{text:?} is not a valid {what}"));
            let v = match ty {
                ColumnType::String => Value::String(text.to_string()),
                ColumnType::Integer => Value::Integer(text.parse().map_err(|_| bad("Integer"))?),
                ColumnType::Float => {
                    let f: f64 = text.parse().map_err(|_| bad("Float"))?;
                    if !f.is_finite() {
                        return Err(bad("Float"));
                    }
                    Value::Float(f)
                }
                ColumnType::DateTime => Value::DateTime(parse_timestamp(text).map_err(|_| bad("DateTime"))?),
            };
            row.insert(name.clone(), v);
        }
        Ok(row)
    }
}
