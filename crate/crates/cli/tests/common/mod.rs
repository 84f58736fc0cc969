#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, TimeZone, Utc};
use serde_json::json;

use gaps_core::calendar::Resolution;
use gaps_core::geometry::{write_geojson, MultiPolygon, Point, Rect};
use gaps_core::grid::{write_ascii_grid, GeoGrid};

pub const NCOLS: usize = 40;
pub const NROWS: usize = 30;
pub const XLL: f64 = -10.0;
pub const YLL: f64 = 36.0;
pub const CELL: f64 = 0.2;

pub const STATIONS: &str = "id,name,lat,lon,influence,environment
PT01,Braga,41.1,-8.5,background,urban
PT02,Viseu,40.6,-7.6,background,rural
PT03,Beja,38.0,-8.0,background,suburban
";

pub const GAZETTEER: &str = "2267057\tLisboa\tLisboa\t38.71667\t-9.13333\tPT\t517802
2267095\tLeiria\tLeiria\t39.74362\t-8.80705\tPT\t45112
2735943\tPorto\tPorto\t41.14961\t-8.61099\tPT\t249633
2742032\tBraga\tBraga\t41.55032\t-8.42005\tPT\t121394
";

pub fn norte() -> MultiPolygon {
    Rect::new(-9.0, 40.0, -7.0, 42.0).unwrap().into()
}

pub fn sul() -> MultiPolygon {
    Rect::new(-9.0, 37.0, -7.0, 39.0).unwrap().into()
}

pub fn roi() -> MultiPolygon {
    Rect::new(-9.6, 36.9, -6.1, 42.2).unwrap().into()
}

pub fn station_points() -> Vec<(&'static str, Point)> {
    vec![
        ("PT01", Point { lon: -8.5, lat: 41.1 }),
        ("PT02", Point { lon: -7.6, lat: 40.6 }),
        ("PT03", Point { lon: -8.0, lat: 38.0 }),
    ]
}

pub fn month_start(year: i32, m: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, m, 1, 0, 0, 0).unwrap()
}

/// Monthly NO2 concentration: a west-east gradient with a winter peak.
pub fn model_value(m: u32, p: Point) -> f64 {
    let col = ((p.lon - XLL) / CELL).floor();
    let row_from_south = ((p.lat - YLL) / CELL).floor();
    let season = 1.0 + 0.3 * ((m as f64 - 1.0) * std::f64::consts::PI / 6.0).cos();
    (12.0 + 0.5 * col + 0.25 * row_from_south) * season
}

fn cell_center(r: usize, c: usize) -> Point {
    Point { lon: XLL + (c as f64 + 0.5) * CELL, lat: YLL + (NROWS - r) as f64 * CELL - 0.5 * CELL }
}

pub fn monthly_grid(m: u32) -> GeoGrid {
    let values = (0..NROWS)
        .flat_map(|r| (0..NCOLS).map(move |c| model_value(m, cell_center(r, c))))
        .collect();
    GeoGrid::new(NCOLS, NROWS, XLL, YLL, CELL, -9999.0, values).unwrap()
}

/// Mean of the twelve monthly grids.
pub fn annual_grid() -> GeoGrid {
    let values = (0..NROWS)
        .flat_map(|r| (0..NCOLS).map(move |c| (1..=12).map(|m| model_value(m, cell_center(r, c))).sum::<f64>() / 12.0))
        .collect();
    GeoGrid::new(NCOLS, NROWS, XLL, YLL, CELL, -9999.0, values).unwrap()
}

/// Hourly value at a station, wobbling around 1.1 × the model.
pub fn observed(p: Point, t: DateTime<Utc>) -> f64 {
    let h = t.timestamp() as f64 / 3600.0;
    model_value(t.month(), p) * (1.1 + 0.2 * (h / 7.0).sin())
}

/// Every hour of `year` for the three stations.
pub fn observations_csv(year: i32) -> String {
    let mut out = String::from("station_id,timestamp,pollutant,value,unit\n");
    let end = month_start(year + 1, 1);
    for (id, p) in station_points() {
        let mut t = month_start(year, 1);
        while t < end {
            out.push_str(&format!("{id},{},NO2,{:.4},ug/m3\n", t.format("%Y-%m-%dT%H:%M:%SZ"), observed(p, t)));
            t += Duration::hours(1);
        }
    }
    out
}

/// Which model datasets a desk catalogue lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Datasets {
    Monthly,
    Annual,
    Both,
}

/// A data directory holding every input file the commands read, with the
/// model datasets published under `upstream/` and listed in
/// `catalogue.json`.
pub struct Desk {
    pub dir: tempfile::TempDir,
}

impl Desk {
    pub fn data(&self) -> &Path {
        self.dir.path()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// `gaps --data-dir <data> args...`
    pub fn run(&self, args: &[&str]) -> gaps_cli::CommandResult {
        let mut argv = vec!["gaps".to_string(), "--quiet".into(), "--data-dir".into(), self.data().display().to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        gaps_cli::run(argv)
    }

    pub fn run_ok(&self, args: &[&str]) -> gaps_cli::CommandResult {
        let r = self.run(args);
        assert_eq!(r.exit_code, 0, "{args:?}: {}", r.summary);
        r
    }
}

fn publish(dir: &Path, id: &str, res: Resolution, grids: &[(String, GeoGrid)]) -> serde_json::Value {
    let ds = dir.join(id);
    std::fs::create_dir_all(&ds).unwrap();
    let mut files = Vec::new();
    for (stamp, g) in grids {
        let name = format!("{stamp}.asc");
        std::fs::write(ds.join(&name), write_ascii_grid(g)).unwrap();
        files.push(json!({"timestamp": stamp, "path": name}));
    }
    std::fs::write(ds.join("manifest.json"), json!({ "grid_files": files }).to_string()).unwrap();
    let url = url::Url::from_file_path(ds.join("manifest.json")).unwrap();
    json!({"id": id, "pollutant": "NO2", "quantity": "concentration", "year": 2017, "resolution": res.as_str(), "url": url})
}

pub fn desk(datasets: Datasets) -> Desk {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    let regions = data.join("regions");
    std::fs::create_dir_all(&regions).unwrap();
    std::fs::write(regions.join("norte.geojson"), write_geojson(&norte())).unwrap();
    std::fs::write(regions.join("sul.geojson"), write_geojson(&sul())).unwrap();
    std::fs::write(data.join("roi.geojson"), write_geojson(&roi())).unwrap();
    std::fs::write(data.join("stations.csv"), STATIONS).unwrap();
    std::fs::write(data.join("obs-2017.csv"), observations_csv(2017)).unwrap();
    std::fs::write(data.join("gazetteer.tsv"), GAZETTEER).unwrap();

    let upstream = data.join("upstream");
    let mut entries = Vec::new();
    if datasets != Datasets::Annual {
        let grids: Vec<_> = (1..=12).map(|m| (format!("2017-{m:02}"), monthly_grid(m))).collect();
        entries.push(publish(&upstream, "no2-2017-monthly", Resolution::Monthly, &grids));
    }
    if datasets != Datasets::Monthly {
        entries.push(publish(&upstream, "no2-2017-annual", Resolution::Annual, &[("2017".into(), annual_grid())]));
    }
    std::fs::write(data.join("catalogue.json"), json!({"version": 1, "entries": entries}).to_string()).unwrap();
    Desk { dir }
}

/// Runs the ingest and sync commands a fresh deployment starts with.
pub fn load_desk(d: &Desk) {
    d.run_ok(&["ingest-stations", "stations.csv"]);
    d.run_ok(&["ingest-gazetteer", "gazetteer.tsv"]);
    d.run_ok(&["sync-model", "catalogue.json", "--roi", "roi.geojson"]);
    d.run_ok(&["ingest-obs", "obs-2017.csv"]);
}
