use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::calendar::Resolution;
use crate::geometry::{intersection_area, MultiPolygon};
use crate::grid::{GeoGrid, GeoRef};
use crate::model::{ModelStore, Quantity};

/// Pixel weights (km² of overlap) for one region over one grid layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightMap {
    georef: GeoRef,
    weights: BTreeMap<(usize, usize), f64>,
}

impl WeightMap {
    pub fn new(georef: GeoRef, weights: BTreeMap<(usize, usize), f64>) -> Result<Self, StatsError> {
        for (&(r, c), &w) in &weights {
            if r >= georef.nrows || c >= georef.ncols {
                return Err(StatsError::InvalidWeights(format!("cell ({r}, {c}) is outside the grid")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(StatsError::InvalidWeights(format!("weight {w} at ({r}, {c}) is not positive")));
            }
        }
        Ok(WeightMap { georef, weights })
    }

    pub fn georef(&self) -> &GeoRef {
        &self.georef
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.weights.get(&(row, col)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Weight of every cell overlapping `region`, in km². Cells with no overlap
/// are left out, so a disjoint region gives an empty map.
pub fn region_weights(g: &GeoGrid, region: &MultiPolygon) -> WeightMap {
    let gr = *g.georef();
    let (x0, y0, x1, y1) = region.bbox();
    let cs = gr.cellsize;
    let col_lo = ((x0 - gr.xll) / cs).floor().max(0.0) as usize;
    let col_hi = (((x1 - gr.xll) / cs).ceil().max(0.0) as usize).min(gr.ncols);
    // Rows count from the north.
    let top = gr.yll + gr.nrows as f64 * cs;
    let row_lo = ((top - y1) / cs).floor().max(0.0) as usize;
    let row_hi = (((top - y0) / cs).ceil().max(0.0) as usize).min(gr.nrows);

    let mut weights = BTreeMap::new();
    for row in row_lo..row_hi {
        for col in col_lo..col_hi {
            let fp = gr.footprint(row, col).expect("cell index in range");
            let w = intersection_area(region, &fp);
            if w > 0.0 {
                weights.insert((row, col), w);
            }
        }
    }
    WeightMap { georef: gr, weights }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalStats {
    pub region: String,
    pub timestamp: DateTime<Utc>,
    pub min: f64,
    pub max: f64,
    pub weighted_mean: f64,
}

/// Area-weighted mean, min and max over the non-nodata cells of `w`.
pub fn weighted_stats(
    g: &GeoGrid,
    w: &WeightMap,
    region_id: &str,
    timestamp: DateTime<Utc>,
) -> Result<RegionalStats, StatsError> {
    if g.georef().key() != w.georef.key() {
        return Err(StatsError::InvalidWeights("weight map was built for a different grid".into()));
    }
    let mut sum_w = 0.0;
    let mut sum_wv = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for ((r, c), wt) in w.iter() {
        let v = g.get(r, c).expect("weight map cells are inside the grid");
        if g.is_nodata(v) {
            continue;
        }
        sum_w += wt;
        sum_wv += wt * v;
        min = min.min(v);
        max = max.max(v);
    }
    if sum_w == 0.0 {
        return Err(StatsError::EmptyRegion(region_id.to_string()));
    }
    Ok(RegionalStats {
        region: region_id.to_string(),
        timestamp,
        min,
        max,
        // Rounding can push the quotient a hair outside the data range.
        weighted_mean: (sum_wv / sum_w).clamp(min, max),
    })
}

fn region_fingerprint(region: &MultiPolygon) -> u64 {
    let mut h = DefaultHasher::new();
    for part in region.parts() {
        for ring in part.rings() {
            ring.vertices().len().hash(&mut h);
            for v in ring.vertices() {
                v.lon.to_bits().hash(&mut h);
                v.lat.to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}

type WeightKey = ((usize, usize, u64, u64, u64), u64);

/// Reuses weight maps across timesteps that share a grid layout.
#[derive(Debug, Default)]
pub struct WeightCache {
    maps: Mutex<HashMap<WeightKey, Arc<WeightMap>>>,
    builds: std::sync::atomic::AtomicUsize,
}

impl WeightCache {
    pub fn get_or_build(&self, g: &GeoGrid, region: &MultiPolygon) -> Arc<WeightMap> {
        let key = (g.georef().key(), region_fingerprint(region));
        if let Some(w) = self.maps.lock().get(&key) {
            return w.clone();
        }
        let w = Arc::new(region_weights(g, region));
        self.builds.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.maps.lock().entry(key).or_insert(w).clone()
    }

    /// Number of weight maps computed so far.
    pub fn builds(&self) -> usize {
        self.builds.load(std::sync::atomic::Ordering::Relaxed)
    }
}

/// One [`RegionalStats`] per stored timestep of the selection, oldest first.
pub fn build_regional_series(
    store: &ModelStore,
    pollutant: &str,
    quantity: Quantity,
    resolution: Resolution,
    region_id: &str,
    region: &MultiPolygon,
    cache: &WeightCache,
) -> Result<Vec<RegionalStats>, StatsError> {
    let stack = store.series(pollutant, quantity, resolution, None);
    if stack.is_empty() {
        return Err(StatsError::NotFound(format!("{pollutant}/{quantity}/{resolution}")));
    }
    stack
        .iter()
        .map(|(t, g)| weighted_stats(g, &cache.get_or_build(g, region), region_id, *t))
        .collect()
}
