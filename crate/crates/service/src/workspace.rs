//! All stores of one data directory.
//!
//! Layout under the data directory:
//! `obs/` (tables and observations, plus `GENERATION`), `model/` (layers),
//! `gazetteer.tsv`, `landcover/<kind>.asc` with `landcover/<kind>.csv`,
//! `regions/*.geojson` and `cache/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use gaps_core::gazetteer::{Gazetteer, LoadReport};
use gaps_core::geometry::{read_geojson, MultiPolygon};
use gaps_core::grid::{read_ascii_grid, read_legend_csv, GeoGrid, Legend};
use gaps_core::model::ModelStore;
use gaps_core::obs::{IngestReport, ObsStore};
use gaps_core::stats::WeightCache;

use crate::cache::{write_atomic, DiskCache};
use crate::config::Config;
use crate::ServiceError;

pub const LANDCOVER_KINDS: [&str; 2] = ["landuse", "ecosystem"];

#[derive(Debug)]
pub struct Landcover {
    pub grid: GeoGrid,
    pub legend: Legend,
}

#[derive(Debug, Clone, Serialize)]
pub struct LandcoverReport {
    pub kind: String,
    pub ncols: usize,
    pub nrows: usize,
    pub classes: usize,
}

pub struct Workspace {
    config: Config,
    obs: RwLock<Arc<ObsStore>>,
    obs_generation: AtomicU64,
    obs_writer: Mutex<()>,
    model: ModelStore,
    gazetteer: RwLock<Arc<Gazetteer>>,
    landcover: RwLock<Arc<BTreeMap<String, Arc<Landcover>>>>,
    regions: BTreeMap<String, MultiPolygon>,
    cache: DiskCache,
    weights: WeightCache,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("data_dir", &self.config.data_dir)
            .field("obs_generation", &self.obs_generation())
            .field("model", &self.model)
            .field("regions", &self.regions.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn read_generation(path: &Path) -> Result<u64, ServiceError> {
    match std::fs::read_to_string(path) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| ServiceError::Config(format!("{} is not a generation number", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(e.into()),
    }
}

fn load_regions(config: &Config) -> Result<BTreeMap<String, MultiPolygon>, ServiceError> {
    let mut out = BTreeMap::new();
    let mut paths: Vec<(String, PathBuf)> = config
        .regions
        .iter()
        .map(|(name, p)| (name.clone(), config.resolve(p)))
        .collect();
    if paths.is_empty() {
        let dir = config.data_dir.join("regions");
        if dir.is_dir() {
            for e in std::fs::read_dir(&dir)? {
                let p = e?.path();
                if p.extension().is_some_and(|x| x == "geojson") {
                    if let Some(stem) = p.file_stem() {
                        paths.push((stem.to_string_lossy().into_owned(), p));
                    }
                }
            }
        }
    }
    for (name, p) in paths {
        let bytes = std::fs::read(&p).map_err(|e| ServiceError::Config(format!("region {name}: {}: {e}", p.display())))?;
        let mp = read_geojson(&bytes).map_err(|e| ServiceError::Config(format!("region {name}: {e}")))?;
        out.insert(name, mp);
    }
    Ok(out)
}

impl Workspace {
    /// Opens every store under `config.data_dir`, creating the directory
    /// when missing.
    pub fn open(config: &Config) -> Result<Self, ServiceError> {
        let dir = &config.data_dir;
        std::fs::create_dir_all(dir)?;
        let obs_dir = dir.join("obs");
        let obs = ObsStore::load(&obs_dir)?;
        let obs_generation = read_generation(&obs_dir.join("GENERATION"))?;
        let model = ModelStore::open(dir)?;

        let gaz_path = dir.join("gazetteer.tsv");
        let gazetteer = if gaz_path.exists() {
            Gazetteer::load(&std::fs::read(&gaz_path)?).0
        } else {
            Gazetteer::default()
        };

        let mut landcover = BTreeMap::new();
        for kind in LANDCOVER_KINDS {
            let asc = dir.join("landcover").join(format!("{kind}.asc"));
            let csv = dir.join("landcover").join(format!("{kind}.csv"));
            if asc.exists() && csv.exists() {
                let lc = Landcover {
                    grid: read_ascii_grid(&std::fs::read(&asc)?)?,
                    legend: read_legend_csv(&std::fs::read(&csv)?)?,
                };
                landcover.insert(kind.to_string(), Arc::new(lc));
            }
        }

        Ok(Workspace {
            config: config.clone(),
            obs: RwLock::new(Arc::new(obs)),
            obs_generation: AtomicU64::new(obs_generation),
            obs_writer: Mutex::new(()),
            model,
            gazetteer: RwLock::new(Arc::new(gazetteer)),
            landcover: RwLock::new(Arc::new(landcover)),
            regions: load_regions(config)?,
            cache: DiskCache::open(&dir.join("cache"))?,
            weights: WeightCache::default(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    pub fn obs(&self) -> Arc<ObsStore> {
        self.obs.read().clone()
    }

    /// Bumped whenever an ingest changes the observation store.
    pub fn obs_generation(&self) -> u64 {
        self.obs_generation.load(Ordering::SeqCst)
    }

    pub fn model(&self) -> &ModelStore {
        &self.model
    }

    pub fn gazetteer(&self) -> Arc<Gazetteer> {
        self.gazetteer.read().clone()
    }

    pub fn landcover(&self, kind: &str) -> Option<Arc<Landcover>> {
        self.landcover.read().get(kind).cloned()
    }

    pub fn regions(&self) -> &BTreeMap<String, MultiPolygon> {
        &self.regions
    }

    pub fn region(&self, name: &str) -> Result<&MultiPolygon, ServiceError> {
        self.regions
            .get(name)
            .ok_or_else(|| ServiceError::NotFound(format!("region {name}")))
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    pub fn weights(&self) -> &WeightCache {
        &self.weights
    }

    /// Applies `f` to a copy of the observation store; the copy replaces the
    /// live store (on disk first) only if `f` succeeds and changed something.
    fn update_obs(
        &self,
        f: impl FnOnce(&mut ObsStore) -> Result<IngestReport, ServiceError>,
    ) -> Result<IngestReport, ServiceError> {
        let _w = self.obs_writer.lock();
        let current = self.obs();
        let mut next = (*current).clone();
        let report = f(&mut next)?;
        if next != *current {
            let dir = self.config.data_dir.join("obs");
            next.save(&dir)?;
            let generation = self.obs_generation() + 1;
            write_atomic(&dir.join("GENERATION"), generation.to_string().as_bytes())?;
            *self.obs.write() = Arc::new(next);
            self.obs_generation.store(generation, Ordering::SeqCst);
        }
        Ok(report)
    }

    pub fn ingest_stations(&self, csv: &[u8]) -> Result<IngestReport, ServiceError> {
        self.update_obs(|s| Ok(s.ingest_stations(csv)?))
    }

    pub fn ingest_observations(&self, csv: &[u8]) -> Result<IngestReport, ServiceError> {
        self.update_obs(|s| Ok(s.ingest_observations(csv)?))
    }

    pub fn ingest_gazetteer(&self, tsv: &[u8]) -> Result<LoadReport, ServiceError> {
        let (g, report) = Gazetteer::load(tsv);
        write_atomic(&self.config.data_dir.join("gazetteer.tsv"), tsv)?;
        *self.gazetteer.write() = Arc::new(g);
        Ok(report)
    }

    pub fn ingest_landcover(&self, kind: &str, asc: &[u8], legend_csv: &[u8]) -> Result<LandcoverReport, ServiceError> {
        if !LANDCOVER_KINDS.contains(&kind) {
            return Err(ServiceError::Invalid(format!("landcover kind must be landuse or ecosystem, got {kind:?}")));
        }
        let grid = read_ascii_grid(asc)?;
        let legend = read_legend_csv(legend_csv)?;
        for (_, _, v) in grid.data_cells() {
            if v.fract() != 0.0 || legend.name(v as i64).is_none() {
                return Err(ServiceError::Invalid(format!("cell value {v} has no class in the legend")));
            }
        }
        let dir = self.config.data_dir.join("landcover");
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(format!("{kind}.asc")), asc)?;
        write_atomic(&dir.join(format!("{kind}.csv")), legend_csv)?;
        let report = LandcoverReport {
            kind: kind.to_string(),
            ncols: grid.ncols(),
            nrows: grid.nrows(),
            classes: legend.len(),
        };
        let mut map = (**self.landcover.read()).clone();
        map.insert(kind.to_string(), Arc::new(Landcover { grid, legend }));
        *self.landcover.write() = Arc::new(map);
        Ok(report)
    }
}
