use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Critical level (concentration) and critical load (deposition) for one
/// pollutant. No defaults are shipped; exceedance requests without an
/// explicit threshold need these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub critical_level: Option<f64>,
    pub critical_load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub day_of_year: u32,
    pub interval_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub upstream_url: Option<String>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, Threshold>,
    /// Region name to GeoJSON path. Empty means every
    /// `<data_dir>/regions/*.geojson`.
    #[serde(default)]
    pub regions: BTreeMap<String, PathBuf>,
    /// Region of interest used to mask synced model layers.
    #[serde(default)]
    pub roi: Option<PathBuf>,
    #[serde(default)]
    pub catalogue_url: Option<String>,
    /// Observation CSV source; `{year}` is replaced by the requested year.
    #[serde(default)]
    pub observations_url: Option<String>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub dashboard_dir: Option<PathBuf>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".to_string()
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Config {
            data_dir: data_dir.into(),
            bind: default_bind(),
            upstream_url: None,
            thresholds: BTreeMap::new(),
            regions: BTreeMap::new(),
            roi: None,
            catalogue_url: None,
            observations_url: None,
            schedule: None,
            dashboard_dir: None,
        }
    }

    /// Reads a JSON config and applies `GAPS_DATA_DIR` / `GAPS_UPSTREAM_URL`.
    /// Relative paths inside the file resolve against the data directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let bytes = std::fs::read(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Config =
            serde_json::from_slice(&bytes).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(d) = var("GAPS_DATA_DIR").filter(|s| !s.is_empty()) {
            self.data_dir = d.into();
        }
        if let Some(u) = var("GAPS_UPSTREAM_URL").filter(|s| !s.is_empty()) {
            self.upstream_url = Some(u);
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if let Some(s) = &self.schedule {
            if !(1..=366).contains(&s.day_of_year) || s.interval_days == 0 {
                return Err(ServiceError::Config(format!(
                    "schedule needs day_of_year in 1..=366 and interval_days >= 1, got {s:?}"
                )));
            }
        }
        for (p, t) in &self.thresholds {
            for v in [t.critical_level, t.critical_load].into_iter().flatten() {
                if !v.is_finite() {
                    return Err(ServiceError::Config(format!("threshold for {p} is not finite")));
                }
            }
        }
        if let Some(u) = &self.upstream_url {
            url::Url::parse(u).map_err(|e| ServiceError::Config(format!("upstream_url: {e}")))?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }
}
