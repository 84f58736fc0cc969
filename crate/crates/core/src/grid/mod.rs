//! Georeferenced regular lon/lat rasters.
//!
//! Row 0 is the northernmost row. Cells are half-open on both axes, so a
//! point on the shared edge of two cells belongs to the cell east/north of it
//! and points on the top or right edge of the extent fall outside the grid.

mod ascii;
mod legend;
mod render;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, MultiPolygon, Point, Rect};

pub use ascii::{read_ascii_grid, write_ascii_grid};
pub use legend::{read_legend_csv, Legend};
pub use render::{render_overlay, ColorMap, RgbaImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive (ncols={ncols}, nrows={nrows})")]
    EmptyDimensions { ncols: usize, nrows: usize },
    #[error("cellsize must be positive and finite, got {0}")]
    BadCellsize(f64),
    #[error("nodata sentinel must be finite, got {0}")]
    BadNodata(f64),
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value {value} at index {index} is neither finite nor nodata")]
    NonFiniteValue { index: usize, value: f64 },
    #[error("line {line}: missing header key {key}")]
    MissingHeaderKey { line: usize, key: &'static str },
    #[error("line {line}: bad header line {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    ValueCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: non-numeric token {token:?}")]
    NonNumeric { line: usize, token: String },
    #[error("cell ({row}, {col}) outside a {nrows}x{ncols} grid")]
    IndexOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("min_coverage must lie in [0, 1], got {0}")]
    BadCoverage(f64),
    #[error("unknown class code {0}")]
    UnknownClass(i64),
    #[error("class value {0} is not an integer")]
    NonIntegerClass(f64),
    #[error("grid has no data cells")]
    EmptyRange,
    #[error("legend line {line}: {reason}")]
    Legend { line: usize, reason: String },
    #[error("colour map: {0}")]
    ColorMap(String),
    #[error("geometry: {0}")]
    Geometry(#[from] geometry::GeometryError),
}

/// Georeferencing of a grid without its values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoRef {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
}

impl GeoRef {
    /// Exact bitwise identity, usable as a map key.
    pub fn key(&self) -> (usize, usize, u64, u64, u64) {
        (
            self.ncols,
            self.nrows,
            self.xll.to_bits(),
            self.yll.to_bits(),
            self.cellsize.to_bits(),
        )
    }

    pub fn extent(&self) -> Rect {
        Rect {
            min_lon: self.xll,
            min_lat: self.yll,
            max_lon: self.xll + self.ncols as f64 * self.cellsize,
            max_lat: self.yll + self.nrows as f64 * self.cellsize,
        }
    }

    pub fn locate(&self, p: Point) -> Option<(usize, usize)> {
        let fx = ((p.lon - self.xll) / self.cellsize).floor();
        let fy = ((p.lat - self.yll) / self.cellsize).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.ncols as f64 || fy >= self.nrows as f64 {
            return None;
        }
        Some((self.nrows - 1 - fy as usize, fx as usize))
    }

    pub fn footprint(&self, row: usize, col: usize) -> Result<Rect, GridError> {
        if row >= self.nrows || col >= self.ncols {
            return Err(GridError::IndexOutOfRange { row, col, nrows: self.nrows, ncols: self.ncols });
        }
        let south = self.nrows - 1 - row;
        Ok(Rect {
            min_lon: self.xll + col as f64 * self.cellsize,
            min_lat: self.yll + south as f64 * self.cellsize,
            max_lon: self.xll + (col + 1) as f64 * self.cellsize,
            max_lat: self.yll + (south + 1) as f64 * self.cellsize,
        })
    }
}

/// Result of sampling a grid at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Value(f64),
    NoData,
    OutOfBounds,
}

impl Sample {
    pub fn value(self) -> Option<f64> {
        match self {
            Sample::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    georef: GeoRef,
    nodata: f64,
    values: Vec<f64>,
}

impl GeoGrid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self, GridError> {
        if ncols == 0 || nrows == 0 {
            return Err(GridError::EmptyDimensions { ncols, nrows });
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(GridError::BadCellsize(cellsize));
        }
        if !nodata.is_finite() {
            return Err(GridError::BadNodata(nodata));
        }
        if values.len() != ncols * nrows {
            return Err(GridError::LengthMismatch { expected: ncols * nrows, actual: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFiniteValue { index, value });
        }
        Ok(GeoGrid { georef: GeoRef { ncols, nrows, xll, yll, cellsize }, nodata, values })
    }

    /// Grid with the same georeferencing and nodata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, GridError> {
        let g = self.georef;
        GeoGrid::new(g.ncols, g.nrows, g.xll, g.yll, g.cellsize, self.nodata, values)
    }

    pub fn georef(&self) -> &GeoRef {
        &self.georef
    }
    pub fn ncols(&self) -> usize {
        self.georef.ncols
    }
    pub fn nrows(&self) -> usize {
        self.georef.nrows
    }
    pub fn xll(&self) -> f64 {
        self.georef.xll
    }
    pub fn yll(&self) -> f64 {
        self.georef.yll
    }
    pub fn cellsize(&self) -> f64 {
        self.georef.cellsize
    }
    pub fn nodata(&self) -> f64 {
        self.nodata
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn extent(&self) -> Rect {
        self.georef.extent()
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row < self.nrows() && col < self.ncols() {
            Some(self.values[row * self.ncols() + col])
        } else {
            None
        }
    }

    /// Iterates `(row, col, value)` over cells that hold data.
    pub fn data_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let ncols = self.ncols();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| !self.is_nodata(v))
            .map(move |(i, &v)| (i / ncols, i % ncols, v))
    }

    pub fn locate_pixel(&self, p: Point) -> Option<(usize, usize)> {
        self.georef.locate(p)
    }

    pub fn sample_value(&self, p: Point) -> Sample {
        match self.locate_pixel(p) {
            None => Sample::OutOfBounds,
            Some((r, c)) => {
                let v = self.values[r * self.ncols() + c];
                if self.is_nodata(v) {
                    Sample::NoData
                } else {
                    Sample::Value(v)
                }
            }
        }
    }

    pub fn pixel_footprint(&self, row: usize, col: usize) -> Result<Rect, GridError> {
        self.georef.footprint(row, col)
    }

    /// Masks every cell whose covered fraction by `region` is `<= min_coverage`.
    pub fn clip_mask(&self, region: &MultiPolygon, min_coverage: f64) -> Result<GeoGrid, GridError> {
        if !(0.0..=1.0).contains(&min_coverage) {
            return Err(GridError::BadCoverage(min_coverage));
        }
        let (bx0, by0, bx1, by1) = region.bbox();
        let mut values = self.values.clone();
        for row in 0..self.nrows() {
            for col in 0..self.ncols() {
                let fp = self.pixel_footprint(row, col)?;
                let overlaps_bbox =
                    fp.min_lon <= bx1 && fp.max_lon >= bx0 && fp.min_lat <= by1 && fp.max_lat >= by0;
                let coverage = if overlaps_bbox {
                    geometry::intersection_area_deg2(region, &fp) / fp.area_deg2()
                } else {
                    0.0
                };
                if coverage <= min_coverage {
                    values[row * self.ncols() + col] = self.nodata;
                }
            }
        }
        Ok(GeoGrid { georef: self.georef, nodata: self.nodata, values })
    }

    /// Per-cell `value - threshold`; positive cells exceed the threshold.
    pub fn compute_exceedance(&self, threshold: f64) -> GeoGrid {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { v } else { v - threshold })
            .collect();
        GeoGrid { georef: self.georef, nodata: self.nodata, values }
    }

    /// Legend class at `p`; `None` for nodata or outside the grid.
    pub fn classify_point(&self, legend: &Legend, p: Point) -> Result<Option<String>, GridError> {
        let Sample::Value(v) = self.sample_value(p) else {
            return Ok(None);
        };
        if v.fract() != 0.0 {
            return Err(GridError::NonIntegerClass(v));
        }
        let code = v as i64;
        legend
            .name(code)
            .map(|n| Some(n.to_string()))
            .ok_or(GridError::UnknownClass(code))
    }

    /// Minimum and maximum over data cells.
    pub fn data_range(&self) -> Option<(f64, f64)> {
        self.data_cells().fold(None, |acc, (_, _, v)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}
