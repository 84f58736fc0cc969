#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};

use gaps_core::calendar::Resolution;
use gaps_core::geometry::{write_geojson, MultiPolygon, Point, Rect};
use gaps_core::grid::GeoGrid;
use gaps_core::model::Quantity;
use gaps_service::{Config, Threshold, Workspace};

pub const NCOLS: usize = 20;
pub const NROWS: usize = 24;
pub const XLL: f64 = -10.0;
pub const YLL: f64 = 36.0;
pub const CELL: f64 = 0.25;

pub const STATIONS: &str = "id,name,lat,lon,influence,environment
S1,Braga,41.1,-8.5,background,urban
S2,Viseu,40.6,-7.6,background,rural
S3,Porto Boavista,41.16,-8.63,traffic,urban
S4,Beja,38.0,-8.0,background,suburban
";

pub const GAZETTEER: &str = "2267057\tLisboa\tLisboa\t38.71667\t-9.13333\tPT\t517802
2267095\tLeiria\tLeiria\t39.74362\t-8.80705\tPT\t45112
2735943\tPorto\tPorto\t41.14961\t-8.61099\tPT\t249633
3448439\tSão Paulo\tSao Paulo\t-23.5475\t-46.63611\tBR\t10021295
";

pub fn month(m: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2017, m, 1, 0, 0, 0).unwrap()
}

pub fn norte() -> MultiPolygon {
    Rect::new(-9.0, 40.0, -7.0, 42.0).unwrap().into()
}

pub fn sul() -> MultiPolygon {
    Rect::new(-9.0, 37.0, -7.0, 39.0).unwrap().into()
}

/// NO2 concentration for month `m`; smooth in space, scaled per month.
pub fn model_value(m: u32, p: Point) -> f64 {
    let col = ((p.lon - XLL) / CELL).floor();
    let row_from_south = ((p.lat - YLL) / CELL).floor();
    (10.0 + col + 0.5 * row_from_south) * (1.0 + 0.1 * m as f64)
}

pub fn model_grid(m: u32) -> GeoGrid {
    let mut values = Vec::with_capacity(NCOLS * NROWS);
    for r in 0..NROWS {
        for c in 0..NCOLS {
            let p = Point {
                lon: XLL + (c as f64 + 0.5) * CELL,
                lat: YLL + (NROWS - r) as f64 * CELL - 0.5 * CELL,
            };
            values.push(model_value(m, p));
        }
    }
    GeoGrid::new(NCOLS, NROWS, XLL, YLL, CELL, -9999.0, values).unwrap()
}

/// Hourly NO2 value at a station; wobbles around 1.1 × the model value.
pub fn observed(station: Point, t: DateTime<Utc>) -> f64 {
    let h = (t - month(1)).num_hours() as f64;
    let m = chrono::Datelike::month(&t);
    model_value(m, station) * (1.1 + 0.2 * (h / 7.0).sin())
}

pub fn station_points() -> Vec<(&'static str, Point)> {
    vec![
        ("S1", Point { lon: -8.5, lat: 41.1 }),
        ("S2", Point { lon: -7.6, lat: 40.6 }),
        ("S3", Point { lon: -8.63, lat: 41.16 }),
        ("S4", Point { lon: -8.0, lat: 38.0 }),
    ]
}

/// Hourly NO2 for every station over January 2017 (plus a few O3 hours at
/// S1); `skip` drops hours for S2 to push its capture below 75%.
pub fn observations_csv(month_no: u32, skip_s2: bool) -> String {
    let mut out = String::from("station_id,timestamp,pollutant,value,unit\n");
    let start = month(month_no);
    let end = if month_no == 12 { Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap() } else { month(month_no + 1) };
    for (id, p) in station_points() {
        let mut t = start;
        let mut i = 0;
        while t < end {
            if !(skip_s2 && id == "S2" && i % 3 == 0) {
                out.push_str(&format!("{id},{},NO2,{},ug/m3\n", t.to_rfc3339(), observed(p, t)));
            }
            t += Duration::hours(1);
            i += 1;
        }
    }
    for h in 0..3 {
        out.push_str(&format!("S1,{},O3,{},ug/m3\n", (start + Duration::hours(h)).to_rfc3339(), 40 + h));
    }
    out
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: Config,
}

impl Fixture {
    pub fn data(&self) -> &Path {
        self.dir.path()
    }
}

/// Stations, January observations, two monthly NO2 layers, two regions,
/// a landuse grid and the gazetteer.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let regions = dir.path().join("regions");
    std::fs::create_dir_all(&regions).unwrap();
    std::fs::write(regions.join("norte.geojson"), write_geojson(&norte())).unwrap();
    std::fs::write(regions.join("sul.geojson"), write_geojson(&sul())).unwrap();

    let mut config = Config::new(dir.path());
    config.bind = "127.0.0.1:0".into();
    config.thresholds.insert("NO2".into(), Threshold { critical_level: Some(30.0), critical_load: None });

    let ws = Workspace::open(&config).unwrap();
    ws.ingest_stations(STATIONS.as_bytes()).unwrap();
    let r = ws.ingest_observations(observations_csv(1, false).as_bytes()).unwrap();
    assert!(r.rejected.is_empty(), "{:?}", r.rejected.first());
    ws.ingest_gazetteer(GAZETTEER.as_bytes()).unwrap();
    let lu = "ncols 4\nnrows 2\nxllcorner -10\nyllcorner 38\ncellsize 1\nNODATA_value -9999\n1 1 2 2\n3 3 -9999 1\n";
    ws.ingest_landcover("landuse", lu.as_bytes(), b"code,name\n1,Forest\n2,Agriculture\n3,Urban fabric\n")
        .unwrap();
    ws.model()
        .replace_year(
            "NO2",
            Quantity::Concentration,
            Resolution::Monthly,
            2017,
            vec![(month(1), model_grid(1)), (month(2), model_grid(2))],
        )
        .unwrap();
    Fixture { dir, config }
}

/// Serves `app` on an ephemeral port for the rest of the test.
pub async fn spawn_stub(app: axum::Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    addr
}

/// An address nothing listens on.
pub fn dead_addr() -> SocketAddr {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap()
}
