use std::collections::HashSet;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use url::Url;

use super::{ModelError, Quantity};
use crate::calendar::{is_aligned, parse_period, parse_timestamp, Resolution};

const CATALOGUE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogueEntry {
    pub id: String,
    pub pollutant: String,
    pub quantity: Quantity,
    pub year: i32,
    pub resolution: Resolution,
    pub url: Url,
}

fn malformed(location: impl Into<String>, reason: impl Into<String>) -> ModelError {
    ModelError::Catalogue { location: location.into(), reason: reason.into() }
}

fn text_field<'a>(obj: &'a serde_json::Map<String, Json>, loc: &str, key: &str) -> Result<&'a str, ModelError> {
    match obj.get(key) {
        Some(Json::String(s)) if !s.trim().is_empty() => Ok(s.trim()),
        Some(Json::String(_)) => Err(malformed(format!("{loc}.{key}"), "must not be empty")),
        Some(_) => Err(malformed(format!("{loc}.{key}"), "expected a string")),
        None => Err(malformed(loc, format!("missing field {key:?}"))),
    }
}

/// Parses the JSON catalogue `{ "version": 1, "entries": [...] }`. Errors
/// name the offending location (`entries[i].field`).
pub fn parse_catalogue(doc: &[u8]) -> Result<Vec<CatalogueEntry>, ModelError> {
    let root: Json = serde_json::from_slice(doc)
        .map_err(|e| malformed(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let Json::Object(root) = root else {
        return Err(malformed("$", "expected an object"));
    };
    match root.get("version") {
        Some(Json::Number(n)) if n.as_u64() == Some(CATALOGUE_VERSION) => {}
        Some(other) => return Err(malformed("version", format!("unsupported version {other}"))),
        None => return Err(malformed("$", "missing field \"version\"")),
    }
    let Some(Json::Array(raw)) = root.get("entries") else {
        return Err(malformed("$", "missing array \"entries\""));
    };

    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(raw.len());
    for (i, item) in raw.iter().enumerate() {
        let loc = format!("entries[{i}]");
        let Json::Object(obj) = item else {
            return Err(malformed(loc, "expected an object"));
        };
        let id = text_field(obj, &loc, "id")?.to_string();
        if !seen.insert(id.clone()) {
            return Err(ModelError::DuplicateId { id, location: loc });
        }
        let pollutant = text_field(obj, &loc, "pollutant")?.to_string();
        if pollutant.contains(['/', '\\']) || pollutant.starts_with('.') {
            return Err(malformed(format!("{loc}.pollutant"), "not a valid code"));
        }
        let q = text_field(obj, &loc, "quantity")?;
        let quantity = q.parse::<Quantity>().map_err(|_| ModelError::UnknownValue {
            location: format!("{loc}.quantity"),
            field: "quantity",
            value: q.to_string(),
        })?;
        let r = text_field(obj, &loc, "resolution")?;
        let resolution = r.parse::<Resolution>().map_err(|_| ModelError::UnknownValue {
            location: format!("{loc}.resolution"),
            field: "resolution",
            value: r.to_string(),
        })?;
        let year = match obj.get("year") {
            Some(Json::Number(n)) => n.as_i64().filter(|y| (1900..=9999).contains(y)).ok_or_else(|| {
                malformed(format!("{loc}.year"), format!("year must be an integer from 1900, got {n}"))
            })? as i32,
            Some(_) => return Err(malformed(format!("{loc}.year"), "expected an integer")),
            None => return Err(malformed(&loc, "missing field \"year\"")),
        };
        let raw_url = text_field(obj, &loc, "url")?;
        let url = Url::parse(raw_url).map_err(|e| malformed(format!("{loc}.url"), e.to_string()))?;
        if !matches!(url.scheme(), "file" | "http" | "https") {
            return Err(ModelError::UnknownValue {
                location: format!("{loc}.url"),
                field: "url scheme",
                value: url.scheme().to_string(),
            });
        }
        entries.push(CatalogueEntry { id, pollutant, quantity, year, resolution, url });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub timestamp: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid_files: Vec<ManifestFile>,
}

/// Parses a dataset manifest and resolves its grid paths against the
/// manifest URL. Timestamps must fall in `entry.year`, sit on a boundary of
/// the entry's resolution and be unique; the result is sorted by time.
pub fn parse_manifest(entry: &CatalogueEntry, doc: &[u8]) -> Result<Vec<(DateTime<Utc>, Url)>, ModelError> {
    let manifest: Manifest = serde_json::from_slice(doc).map_err(|e| ModelError::Manifest(e.to_string()))?;
    if manifest.grid_files.is_empty() {
        return Err(ModelError::Manifest("no grid files listed".into()));
    }
    let mut out = Vec::with_capacity(manifest.grid_files.len());
    for (i, f) in manifest.grid_files.iter().enumerate() {
        let t = parse_timestamp(&f.timestamp)
            .or_else(|_| parse_period(&f.timestamp).map(|p| p.start))
            .map_err(|e| ModelError::Manifest(format!("grid_files[{i}].timestamp: {e}")))?;
        if t.year() != entry.year {
            return Err(ModelError::Manifest(format!(
                "grid_files[{i}].timestamp {} is outside year {}",
                f.timestamp, entry.year
            )));
        }
        if !is_aligned(t, entry.resolution) {
            return Err(ModelError::Manifest(format!(
                "grid_files[{i}].timestamp {} is not a {} boundary",
                f.timestamp, entry.resolution
            )));
        }
        let url = entry
            .url
            .join(&f.path)
            .map_err(|e| ModelError::Manifest(format!("grid_files[{i}].path: {e}")))?;
        out.push((t, url));
    }
    out.sort_by_key(|(t, _)| *t);
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ModelError::Manifest(format!("timestamp {} listed twice", w[0].0)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(entries: &str) -> Vec<u8> {
        format!(r#"{{"version": 1, "entries": [{entries}]}}"#).into_bytes()
    }

    const E1: &str = r#"{"id":"no2-2017","pollutant":"NO2","quantity":"concentration","year":2017,"resolution":"monthly","url":"file:///data/no2/manifest.json"}"#;
    const E2: &str = r#"{"id":"wdep-2017","pollutant":"SOX","quantity":"wet_deposition","year":2017,"resolution":"annual","url":"http://example.org/wdep.json"}"#;

    #[test]
    fn two_entries_in_order() {
        let entries = parse_catalogue(&doc(&format!("{E1},{E2}"))).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].id, "no2-2017");
        assert_eq!(entries[1].quantity, Quantity::WetDeposition);
        assert_eq!(entries[1].resolution, Resolution::Annual);
    }

    #[test]
    fn duplicate_id_is_named() {
        match parse_catalogue(&doc(&format!("{E1},{E1}"))) {
            Err(ModelError::DuplicateId { id, location }) => {
                assert_eq!(id, "no2-2017");
                assert_eq!(location, "entries[1]");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_enum_values() {
        let weekly = E1.replace("monthly", "weekly");
        match parse_catalogue(&doc(&weekly)) {
            Err(ModelError::UnknownValue { field, value, location }) => {
                assert_eq!((field, value.as_str(), location.as_str()), ("resolution", "weekly", "entries[0].resolution"));
            }
            other => panic!("{other:?}"),
        }
        let q = E1.replace("concentration", "column");
        assert!(matches!(parse_catalogue(&doc(&q)), Err(ModelError::UnknownValue { field: "quantity", .. })));
        let ftp = E1.replace("file:///", "ftp://host/");
        assert!(matches!(parse_catalogue(&doc(&ftp)), Err(ModelError::UnknownValue { field: "url scheme", .. })));
    }

    #[test]
    fn malformed_documents() {
        let err = parse_catalogue(b"{\"version\": 1,\n \"entries\": [}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_catalogue(br#"{"version": 2, "entries": []}"#).is_err());
        assert!(parse_catalogue(&doc(&E1.replace("2017", "1850"))).is_err());
        assert!(parse_catalogue(&doc(&E1.replace(r#""year":2017,"#, ""))).is_err());
    }

    #[test]
    fn manifest_paths_resolve_relative_to_entry() {
        let entry = &parse_catalogue(&doc(E1)).unwrap()[0];
        let m = br#"{"grid_files":[{"timestamp":"2017-02","path":"feb.asc"},{"timestamp":"2017-01-01T00:00:00Z","path":"sub/jan.asc"}]}"#;
        let files = parse_manifest(entry, m).unwrap();
        assert_eq!(files[0].1.as_str(), "file:///data/no2/sub/jan.asc");
        assert_eq!(files[1].1.as_str(), "file:///data/no2/feb.asc");
    }

    #[test]
    fn manifest_rejects_misaligned_and_foreign_years() {
        let entry = &parse_catalogue(&doc(E1)).unwrap()[0];
        assert!(parse_manifest(entry, br#"{"grid_files":[{"timestamp":"2017-01-15","path":"a.asc"}]}"#).is_err());
        assert!(parse_manifest(entry, br#"{"grid_files":[{"timestamp":"2018-01","path":"a.asc"}]}"#).is_err());
        assert!(parse_manifest(entry, br#"{"grid_files":[]}"#).is_err());
        assert!(parse_manifest(
            entry,
            br#"{"grid_files":[{"timestamp":"2017-01","path":"a.asc"},{"timestamp":"2017-01","path":"b.asc"}]}"#
        )
        .is_err());
    }
}
