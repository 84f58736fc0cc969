use std::collections::BTreeMap;

use super::GridError;

/// Class code to class name table for categorical rasters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Legend {
    classes: BTreeMap<i64, String>,
}

impl Legend {
    pub fn new(entries: impl IntoIterator<Item = (i64, String)>) -> Result<Self, GridError> {
        let mut classes = BTreeMap::new();
        for (i, (code, name)) in entries.into_iter().enumerate() {
            let line = i + 1;
            if name.trim().is_empty() {
                return Err(GridError::Legend { line, reason: format!("empty name for code {code}") });
            }
            if classes.insert(code, name).is_some() {
                return Err(GridError::Legend { line, reason: format!("duplicate code {code}") });
            }
        }
        Ok(Legend { classes })
    }

    pub fn name(&self, code: i64) -> Option<&str> {
        self.classes.get(&code).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &str)> {
        self.classes.iter().map(|(c, n)| (*c, n.as_str()))
    }
}

/// Reads a `code,name` CSV with a header row.
pub fn read_legend_csv(bytes: &[u8]) -> Result<Legend, GridError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| GridError::Legend { line, reason: e.to_string() })?;
        let code = record
            .get(0)
            .and_then(|c| c.parse::<i64>().ok())
            .ok_or_else(|| GridError::Legend { line, reason: "code is not an integer".into() })?;
        let name = record.get(1).unwrap_or_default().to_string();
        entries.push((code, name));
    }
    Legend::new(entries)
}
