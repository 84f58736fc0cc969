use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Datelike, Utc};
use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use super::{parse_manifest, CatalogueEntry, Fetcher, LayerKey, ModelError, Quantity};
use crate::calendar::{parse_timestamp, Resolution};
use crate::fsutil::write_atomic;
use crate::geometry::{MultiPolygon, Point};
use crate::grid::{read_ascii_grid, write_ascii_grid, GeoGrid, Sample};

type LayerMap = BTreeMap<LayerKey, Arc<GeoGrid>>;

const GENERATION_FILE: &str = "GENERATION";

/// Stored model layers. Readers take cheap snapshots of an immutable map;
/// writers build a new map and swap it in, one writer at a time.
pub struct ModelStore {
    root: Option<PathBuf>,
    layers: RwLock<Arc<LayerMap>>,
    generation: AtomicU64,
    writer: Mutex<()>,
}

impl std::fmt::Debug for ModelStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelStore")
            .field("root", &self.root)
            .field("layers", &self.layers.read().len())
            .field("generation", &self.generation())
            .finish()
    }
}

fn layer_file_name(t: DateTime<Utc>) -> String {
    format!("{}.asc", t.format("%Y-%m-%dT%H"))
}

impl ModelStore {
    pub fn in_memory() -> Self {
        ModelStore {
            root: None,
            layers: RwLock::new(Arc::default()),
            generation: AtomicU64::new(0),
            writer: Mutex::new(()),
        }
    }

    /// Opens (or creates) the store under `<data_dir>/model`, loading every
    /// `<pollutant>/<quantity>/<resolution>/<timestamp>.asc` found there.
    pub fn open(data_dir: &Path) -> Result<Self, ModelError> {
        let root = data_dir.join("model");
        std::fs::create_dir_all(&root)?;
        let mut map = LayerMap::new();
        for pol in read_dirs(&root)? {
            let pollutant = file_name(&pol);
            for qd in read_dirs(&pol)? {
                let Ok(quantity) = file_name(&qd).parse::<Quantity>() else {
                    tracing::warn!(path = %qd.display(), "skipping unknown quantity directory");
                    continue;
                };
                for rd in read_dirs(&qd)? {
                    let Ok(resolution) = file_name(&rd).parse::<Resolution>() else {
                        tracing::warn!(path = %rd.display(), "skipping unknown resolution directory");
                        continue;
                    };
                    for entry in std::fs::read_dir(&rd)? {
                        let path = entry?.path();
                        if path.extension().and_then(|e| e.to_str()) != Some("asc") {
                            continue;
                        }
                        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                        let Ok(t) = parse_timestamp(stem) else {
                            tracing::warn!(path = %path.display(), "skipping layer with unparseable timestamp");
                            continue;
                        };
                        let key = LayerKey::new(pollutant.clone(), quantity, resolution, t)?;
                        let grid = read_ascii_grid(&std::fs::read(&path)?)?;
                        map.insert(key, Arc::new(grid));
                    }
                }
            }
        }
        let generation = match std::fs::read_to_string(root.join(GENERATION_FILE)) {
            Ok(s) => s.trim().parse().unwrap_or(0),
            Err(_) => 0,
        };
        Ok(ModelStore {
            root: Some(root),
            layers: RwLock::new(Arc::new(map)),
            generation: AtomicU64::new(generation),
            writer: Mutex::new(()),
        })
    }

    /// Bumped whenever stored content changes.
    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::SeqCst)
    }

    pub fn snapshot(&self) -> Arc<LayerMap> {
        self.layers.read().clone()
    }

    pub fn get_layer(&self, key: &LayerKey) -> Result<Arc<GeoGrid>, ModelError> {
        self.snapshot().get(key).cloned().ok_or_else(|| ModelError::NotFound(key.to_string()))
    }

    pub fn list_layers(&self) -> Vec<LayerKey> {
        self.snapshot().keys().cloned().collect()
    }

    /// Stored timesteps for one series, chronological, optionally limited to
    /// a year range.
    pub fn series(
        &self,
        pollutant: &str,
        quantity: Quantity,
        resolution: Resolution,
        years: Option<RangeInclusive<i32>>,
    ) -> Vec<(DateTime<Utc>, Arc<GeoGrid>)> {
        self.snapshot()
            .iter()
            .filter(|(k, _)| k.pollutant == pollutant && k.quantity == quantity && k.resolution == resolution)
            .filter(|(k, _)| years.as_ref().is_none_or(|y| y.contains(&k.year())))
            .map(|(k, g)| (k.timestamp, g.clone()))
            .collect()
    }

    /// Samples every stored timestep at `p`; nodata timesteps are omitted.
    pub fn extract_point_series(
        &self,
        pollutant: &str,
        quantity: Quantity,
        resolution: Resolution,
        years: RangeInclusive<i32>,
        p: Point,
    ) -> Result<Vec<(DateTime<Utc>, f64)>, ModelError> {
        let stack = self.series(pollutant, quantity, resolution, Some(years.clone()));
        if stack.is_empty() {
            return Err(ModelError::NotFound(format!(
                "{pollutant}/{quantity}/{resolution} in {}..={}",
                years.start(),
                years.end()
            )));
        }
        let mut out = Vec::with_capacity(stack.len());
        for (t, g) in stack {
            match g.sample_value(p) {
                Sample::Value(v) => out.push((t, v)),
                Sample::NoData => {}
                Sample::OutOfBounds => return Err(ModelError::OutsideExtent { lon: p.lon, lat: p.lat }),
            }
        }
        Ok(out)
    }

    /// Replaces every layer of (pollutant, quantity, resolution, year) with
    /// `layers`. Returns whether anything changed.
    pub fn replace_year(
        &self,
        pollutant: &str,
        quantity: Quantity,
        resolution: Resolution,
        year: i32,
        layers: Vec<(DateTime<Utc>, GeoGrid)>,
    ) -> Result<bool, ModelError> {
        let mut keyed = Vec::with_capacity(layers.len());
        for (t, g) in layers {
            if t.year() != year {
                return Err(ModelError::Stack(format!("{t} is outside year {year}")));
            }
            keyed.push((LayerKey::new(pollutant, quantity, resolution, t)?, Arc::new(g)));
        }
        if keyed.windows(2).any(|w| w[0].0.timestamp >= w[1].0.timestamp) {
            return Err(ModelError::Stack("timestamps must be strictly increasing".into()));
        }
        if let Some((_, first)) = keyed.first() {
            if keyed.iter().any(|(_, g)| g.georef().key() != first.georef().key()) {
                return Err(ModelError::Stack("grids in one stack must share georeferencing".into()));
            }
        }

        let _guard = self.writer.lock();
        let current = self.snapshot();
        let in_prefix = |k: &LayerKey| {
            k.pollutant == pollutant && k.quantity == quantity && k.resolution == resolution && k.year() == year
        };
        let old: Vec<(&LayerKey, &Arc<GeoGrid>)> = current.iter().filter(|(k, _)| in_prefix(k)).collect();
        let unchanged = old.len() == keyed.len()
            && old.iter().zip(&keyed).all(|((ok, og), (nk, ng))| *ok == nk && ***og == **ng);
        if unchanged {
            return Ok(false);
        }

        if let Some(root) = &self.root {
            let dir = root.join(pollutant).join(quantity.as_str()).join(resolution.as_str());
            for (k, g) in &keyed {
                write_atomic(&dir.join(layer_file_name(k.timestamp)), &write_ascii_grid(g))?;
            }
            for (k, _) in &old {
                if !keyed.iter().any(|(nk, _)| nk == *k) {
                    let path = dir.join(layer_file_name(k.timestamp));
                    if let Err(e) = std::fs::remove_file(&path) {
                        tracing::warn!(path = %path.display(), error = %e, "could not remove replaced layer");
                    }
                }
            }
        }

        let mut next: LayerMap = current.iter().filter(|(k, _)| !in_prefix(k)).map(|(k, g)| (k.clone(), g.clone())).collect();
        next.extend(keyed);
        *self.layers.write() = Arc::new(next);
        let generation = self.generation.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(root) = &self.root {
            write_atomic(&root.join(GENERATION_FILE), generation.to_string().as_bytes())?;
        }
        Ok(true)
    }
}

fn read_dirs(dir: &Path) -> Result<Vec<PathBuf>, ModelError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SyncReport {
    /// Entries attempted.
    pub fetched: usize,
    /// Entries whose whole stack was stored.
    pub stored: usize,
    pub failures: Vec<SyncFailure>,
}

fn fetch_stack(
    entry: &CatalogueEntry,
    roi: &MultiPolygon,
    fetcher: &dyn Fetcher,
) -> Result<Vec<(DateTime<Utc>, GeoGrid)>, ModelError> {
    let manifest = fetcher.fetch(&entry.url)?;
    let files = parse_manifest(entry, &manifest)?;
    let mut stack = Vec::with_capacity(files.len());
    for (t, url) in files {
        let grid = read_ascii_grid(&fetcher.fetch(&url)?)
            .map_err(|e| ModelError::Manifest(format!("{url}: {e}")))?;
        stack.push((t, grid.clip_mask(roi, 0.0)?));
    }
    Ok(stack)
}

pub fn sync_datasets(
    store: &ModelStore,
    entries: &[CatalogueEntry],
    roi: &MultiPolygon,
    fetcher: &dyn Fetcher,
) -> SyncReport {
    sync_datasets_with_progress(store, entries, roi, fetcher, &mut |_, _| {})
}

/// Fetches each entry's stack, masks it to `roi` and replaces the stored
/// year. A failing entry is recorded and leaves its stored layers untouched.
/// `progress(done, total)` is called after every entry.
pub fn sync_datasets_with_progress(
    store: &ModelStore,
    entries: &[CatalogueEntry],
    roi: &MultiPolygon,
    fetcher: &dyn Fetcher,
    progress: &mut dyn FnMut(usize, usize),
) -> SyncReport {
    let mut report = SyncReport::default();
    for (i, entry) in entries.iter().enumerate() {
        report.fetched += 1;
        let result = fetch_stack(entry, roi, fetcher).and_then(|stack| {
            store.replace_year(&entry.pollutant, entry.quantity, entry.resolution, entry.year, stack)
        });
        match result {
            Ok(changed) => {
                tracing::info!(id = %entry.id, changed, "synced dataset");
                report.stored += 1;
            }
            Err(e) => {
                tracing::warn!(id = %entry.id, error = %e, "dataset sync failed");
                report.failures.push(SyncFailure { id: entry.id.clone(), reason: e.to_string() });
            }
        }
        progress(i + 1, entries.len());
    }
    report
}
