//! Core data engine for air-pollution geo-data portals.
//!
//! The modules are layered bottom-up: [`geometry`] and [`calendar`] are pure
//! primitives, [`grid`] is the raster type, [`obs`] and [`model`] hold station
//! observations and model-prediction layers, [`stats`] evaluates models and
//! aggregates rasters over regions, and [`gazetteer`] resolves place names.

pub mod calendar;
pub mod gazetteer;
pub mod geometry;
pub mod grid;
pub mod model;
pub mod obs;
pub mod stats;

pub(crate) mod fsutil;
