use std::collections::BTreeMap;

use approx::assert_relative_eq;
use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::calendar::{format_timestamp, Period, Resolution};
use crate::geometry::{intersection_area, MultiPolygon, Point, Polygon, Rect, Ring, KM_PER_DEGREE};
use crate::grid::GeoGrid;
use crate::model::{ModelStore, Quantity};
use crate::obs::{Environment, Influence, ObsStore, Station};

fn pairs(obs: &[f64], pred: &[f64]) -> Vec<PairedSample> {
    obs.iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (o, p))| PairedSample::new(format!("S{i}"), *o, *p))
        .collect()
}

#[test]
fn worked_metric_example() {
    let m = compute_metrics(&pairs(&[2.0, 4.0], &[1.2, 9.0])).unwrap();
    assert_eq!(m.n, 2);
    assert_eq!(m.fac2, 0.5);
    assert_relative_eq!(m.fb, (3.0 - 5.1) / 4.05, max_relative = 1e-12);
    assert_relative_eq!(m.fb, -0.518518518518, max_relative = 1e-9);
    assert_relative_eq!(m.nmse, (0.64 + 25.0) / 2.0 / 15.3, max_relative = 1e-12);
    assert_relative_eq!(m.nmse, 0.837908496732, max_relative = 1e-9);
    let r = acceptance(m);
    assert_eq!((r.pass_fac2, r.pass_fb, r.pass_nmse, r.accepted), (true, false, true, true));
}

#[test]
fn perfect_prediction() {
    let r = evaluate(&pairs(&[1.0, 5.0, 9.0], &[1.0, 5.0, 9.0])).unwrap();
    assert_eq!((r.fac2, r.fb, r.nmse), (1.0, 0.0, 0.0));
    assert!(r.accepted);
}

#[test]
fn metric_errors() {
    assert_eq!(compute_metrics(&[]), Err(StatsError::EmptyInput));
    assert!(matches!(compute_metrics(&pairs(&[1.0, 2.0], &[0.0, 0.0])), Err(StatsError::UndefinedMetric(_))));
    assert!(matches!(compute_metrics(&pairs(&[0.0], &[1.0])), Err(StatsError::UndefinedMetric(_))));
}

fn metrics(fac2: f64, fb: f64, nmse: f64) -> Metrics {
    Metrics { fac2, fb, nmse, n: 10 }
}

#[test]
fn acceptance_examples() {
    let r = acceptance(metrics(0.4, 0.5, 2.0));
    assert_eq!((r.pass_fac2, r.pass_fb, r.pass_nmse, r.accepted), (false, false, false, false));
    let r = acceptance(metrics(0.5, 0.3, 1.5));
    assert_eq!((r.pass_fac2, r.pass_fb, r.pass_nmse, r.accepted), (true, true, true, true));
    let r = acceptance(metrics(0.5, -0.3, 1.6));
    assert_eq!((r.pass_fb, r.accepted), (true, true));
    let r = acceptance(metrics(0.49, -0.31, 1.4));
    assert!(!r.accepted);
}

/// Sum-based restatement of the metric formulas.
fn oracle(obs: &[f64], pred: &[f64]) -> (f64, f64, f64) {
    let n = obs.len() as f64;
    let (mut so, mut sp, mut sq, mut inside) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..obs.len() {
        so += obs[i];
        sp += pred[i];
        sq += (obs[i] - pred[i]) * (obs[i] - pred[i]);
        if pred[i] >= 0.5 * obs[i] && pred[i] <= 2.0 * obs[i] {
            inside += 1;
        }
    }
    (inside as f64 / n, 2.0 * (so - sp) / (so + sp), n * sq / (so * sp))
}

fn arb_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| {
        (prop::collection::vec(0.01f64..500.0, n), prop::collection::vec(0.01f64..500.0, n))
    })
}

proptest! {
    #[test]
    fn matches_sum_oracle((obs, pred) in arb_pairs()) {
        let m = compute_metrics(&pairs(&obs, &pred)).unwrap();
        let (fac2, fb, nmse) = oracle(&obs, &pred);
        prop_assert_eq!(m.fac2, fac2);
        prop_assert!((m.fb - fb).abs() <= 1e-9 * fb.abs().max(1e-12));
        prop_assert!((m.nmse - nmse).abs() <= 1e-9 * nmse.abs().max(1e-12));
    }

    #[test]
    fn scale_invariance((obs, pred) in arb_pairs(), k in 1e-3f64..1e3) {
        let a = compute_metrics(&pairs(&obs, &pred)).unwrap();
        let so: Vec<f64> = obs.iter().map(|v| v * k).collect();
        let sp: Vec<f64> = pred.iter().map(|v| v * k).collect();
        let b = compute_metrics(&pairs(&so, &sp)).unwrap();
        // Ratios that sit within an ulp of 0.5 or 2 may flip under rescaling.
        let near_edge = obs.iter().zip(&pred).any(|(o, p)| ((p / o) - 0.5).abs() < 1e-9 || ((p / o) - 2.0).abs() < 1e-9);
        if !near_edge {
            prop_assert_eq!(a.fac2, b.fac2);
        }
        prop_assert!((a.fb - b.fb).abs() <= 1e-12 * a.fb.abs().max(1e-12) + 1e-15);
        prop_assert!((a.nmse - b.nmse).abs() <= 1e-12 * a.nmse.abs().max(1e-12) + 1e-15);
    }

    #[test]
    fn ranges_and_antisymmetry((obs, pred) in arb_pairs()) {
        let a = compute_metrics(&pairs(&obs, &pred)).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.fac2));
        prop_assert!((-2.0..=2.0).contains(&a.fb));
        prop_assert!(a.nmse >= 0.0);
        let b = compute_metrics(&pairs(&pred, &obs)).unwrap();
        prop_assert_eq!(a.fb, -b.fb);
    }

    #[test]
    fn acceptance_is_monotone(fac2 in 0.0f64..1.0, fb in -2.0f64..2.0, nmse in 0.0f64..5.0) {
        let base = acceptance(metrics(fac2, fb, nmse));
        for better in [
            acceptance(metrics(fac2.max(FAC2_MIN), fb, nmse)),
            acceptance(metrics(fac2, fb.clamp(-FB_MAX_ABS, FB_MAX_ABS), nmse)),
            acceptance(metrics(fac2, fb, nmse.min(NMSE_MAX))),
        ] {
            prop_assert!(!base.accepted || better.accepted);
        }
        let flags = [base.pass_fac2, base.pass_fb, base.pass_nmse].iter().filter(|b| **b).count();
        prop_assert_eq!(base.accepted, flags >= 2);
    }
}

fn station(id: &str, lon: f64, lat: f64) -> Station {
    Station {
        id: id.into(),
        name: id.into(),
        location: Point::new(lon, lat).unwrap(),
        influence: Influence::Background,
        environment: Environment::Rural,
    }
}

fn grid(nc: usize, nr: usize, xll: f64, yll: f64, cs: f64, values: Vec<f64>) -> GeoGrid {
    GeoGrid::new(nc, nr, xll, yll, cs, -9999.0, values).unwrap()
}

#[test]
fn pairing_cases() {
    // Row 0 is north: values 1 2 / 3 nodata.
    let layer = grid(2, 2, 0.0, 0.0, 1.0, vec![1.0, 2.0, 3.0, -9999.0]);
    let stations = vec![
        station("nw", 0.5, 1.5),
        station("ne", 1.5, 1.5),
        station("sea", 1.5, 0.5),
        station("far", 5.0, 5.0),
        station("zero", 0.5, 0.5),
        station("silent", 0.5, 1.2),
    ];
    let observed: BTreeMap<String, f64> =
        [("nw", 2.0), ("ne", 4.0), ("sea", 1.0), ("far", 1.0), ("zero", 0.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
    let p = pair_stations_with_layer(&stations, &observed, &layer);
    assert_eq!(p.pairs, vec![PairedSample::new("nw", 2.0, 1.0), PairedSample::new("ne", 4.0, 2.0)]);
    let reasons: Vec<_> = p.excluded.iter().map(|e| (e.station_id.as_str(), e.reason)).collect();
    assert_eq!(
        reasons,
        vec![
            ("sea", ExclusionReason::NoData),
            ("far", ExclusionReason::OutOfBounds),
            ("zero", ExclusionReason::NonPositiveObservation),
            ("silent", ExclusionReason::NoObservation),
        ]
    );
}

#[test]
fn full_cover_weights() {
    let g = grid(4, 3, -9.0, 38.0, 0.5, vec![1.0; 12]);
    let w = region_weights(&g, &g.extent().into());
    assert_eq!(w.len(), 12);
    for ((r, c), wt) in w.iter() {
        let fp = g.pixel_footprint(r, c).unwrap();
        assert_relative_eq!(wt, fp.area_km2(), max_relative = 1e-12);
    }
    // Same row, same weight; northern rows lighter.
    assert_eq!(w.get(0, 0), w.get(0, 3));
    assert!(w.get(0, 0).unwrap() < w.get(2, 0).unwrap());
}

#[test]
fn half_covered_pixel_has_half_weight() {
    let g = grid(3, 1, 0.0, 40.0, 1.0, vec![1.0; 3]);
    let region: MultiPolygon = Rect::new(0.0, 40.0, 1.5, 41.0).unwrap().into();
    let w = region_weights(&g, &region);
    assert_eq!(w.len(), 2);
    assert_relative_eq!(w.get(0, 0).unwrap() / w.get(0, 1).unwrap(), 2.0, max_relative = 1e-12);
    let disjoint: MultiPolygon = Rect::new(10.0, 10.0, 11.0, 11.0).unwrap().into();
    assert!(region_weights(&g, &disjoint).is_empty());
}

fn star(cx: f64, cy: f64, radii: &[f64], phase: f64) -> Polygon {
    let k = radii.len();
    let coords: Vec<(f64, f64)> = radii
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    Polygon::new(Ring::from_coords(&coords).unwrap(), vec![]).unwrap()
}

#[test]
fn weights_tile_the_region_near_the_equator() {
    // With the mid-latitude metric the per-pixel and whole-extent scale
    // factors only agree to first order where cos is flat.
    let g = grid(20, 20, 10.0, -2.0, 0.2, vec![1.0; 400]);
    let region: MultiPolygon = star(12.0, 0.0, &[1.5, 1.2, 1.8, 1.0, 1.6, 1.4, 1.7], 0.3).into();
    let total = region_weights(&g, &region).total();
    let whole = intersection_area(&region, &g.extent());
    assert_relative_eq!(total, whole, max_relative = 1e-3);
}

/// Area of a polygon on the equirectangular sphere (km per degree fixed),
/// exact via Green's theorem: A = k² ∮ -F(φ) dλ with F' = cos φ.
fn exact_area_km2(poly: &Polygon) -> f64 {
    let deg = std::f64::consts::PI / 180.0;
    let f = |phi: f64| (phi * deg).sin() / deg;
    let ring_integral = |ring: &Ring| {
        ring.edges()
            .map(|(a, b)| {
                let (dl, dp) = (b.lon - a.lon, b.lat - a.lat);
                if dp.abs() < 1e-12 {
                    -f(0.5 * (a.lat + b.lat)) * dl
                } else {
                    // ∫ F dλ along the edge = (dλ/dφ) ∫ F dφ, ∫ F dφ = -cos/deg².
                    -(dl / dp) * (-(b.lat * deg).cos() + (a.lat * deg).cos()) / (deg * deg)
                }
            })
            .sum::<f64>()
    };
    let mut a = ring_integral(poly.exterior()).abs();
    for h in poly.holes() {
        a -= ring_integral(h).abs();
    }
    a * KM_PER_DEGREE * KM_PER_DEGREE
}

#[test]
fn exact_area_oracle_sanity() {
    let r = Rect::new(-9.0, 38.0, -8.0, 40.0).unwrap();
    let deg = std::f64::consts::PI / 180.0;
    let want = KM_PER_DEGREE * KM_PER_DEGREE * ((40.0 * deg).sin() - (38.0 * deg).sin()) / deg;
    assert_relative_eq!(exact_area_km2(&Polygon::from(r)), want, max_relative = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_sum_to_region_area(
        cx in -9.5f64..-6.5, cy in 37.5f64..40.5,
        radii in prop::collection::vec(0.4f64..1.2, 5..12), phase in 0.0f64..6.0,
    ) {
        let g = grid(60, 60, -11.0, 36.0, 0.1, vec![1.0; 3600]);
        let poly = star(cx, cy, &radii, phase);
        let total = region_weights(&g, &poly.clone().into()).total();
        let exact = exact_area_km2(&poly);
        prop_assert!((total - exact).abs() <= 1e-3 * exact, "total {total} exact {exact}");
    }
}

#[test]
fn weighted_stats_examples() {
    let g = grid(3, 2, 0.0, 0.0, 1.0, vec![7.0; 6]);
    let w = region_weights(&g, &g.extent().into());
    let t = Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).unwrap();
    let s = weighted_stats(&g, &w, "all", t).unwrap();
    assert_eq!((s.min, s.max, s.weighted_mean), (7.0, 7.0, 7.0));

    let g = grid(2, 1, 0.0, 0.0, 1.0, vec![10.0, 20.0]);
    let w = WeightMap::new(*g.georef(), [((0, 0), 1.0), ((0, 1), 0.5)].into_iter().collect()).unwrap();
    let s = weighted_stats(&g, &w, "ab", t).unwrap();
    assert_eq!((s.min, s.max), (10.0, 20.0));
    assert_relative_eq!(s.weighted_mean, 20.0 / 1.5, max_relative = 1e-15);

    let masked = grid(2, 1, 0.0, 0.0, 1.0, vec![-9999.0, -9999.0]);
    assert_eq!(weighted_stats(&masked, &w, "ab", t), Err(StatsError::EmptyRegion("ab".into())));
    assert!(WeightMap::new(*g.georef(), [((0, 5), 1.0)].into_iter().collect()).is_err());
    assert!(WeightMap::new(*g.georef(), [((0, 0), 0.0)].into_iter().collect()).is_err());
}

/// Weighted mean from a 100x finer rasterisation: subcell centres are filled
/// by scanlines across the polygon and weighted by cos(latitude).
fn fine_raster_mean(g: &GeoGrid, ring: &[(f64, f64)], factor: usize) -> Option<f64> {
    let gr = g.georef();
    let cs = gr.cellsize / factor as f64;
    let mut weight = vec![0.0; gr.ncols * gr.nrows];
    let fine_cols = gr.ncols * factor;
    let mut xs = Vec::new();
    for j in 0..gr.nrows * factor {
        let yc = gr.yll + (j as f64 + 0.5) * cs;
        xs.clear();
        for e in ring.windows(2) {
            let ((x1, y1), (x2, y2)) = (e[0], e[1]);
            if (y1 > yc) != (y2 > yc) {
                xs.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        xs.sort_by(f64::total_cmp);
        let cosw = yc.to_radians().cos();
        let prow = gr.nrows - 1 - j / factor;
        for span in xs.chunks(2) {
            let lo = ((span[0] - gr.xll) / cs - 0.5).ceil().max(0.0) as usize;
            let hi_f = ((span[1] - gr.xll) / cs - 0.5).floor();
            if hi_f < 0.0 || lo >= fine_cols {
                continue;
            }
            let hi = (hi_f as usize).min(fine_cols - 1);
            if lo > hi {
                continue;
            }
            for pc in lo / factor..=hi / factor {
                let a = lo.max(pc * factor);
                let b = hi.min(pc * factor + factor - 1);
                weight[prow * gr.ncols + pc] += (b - a + 1) as f64 * cosw;
            }
        }
    }
    let (mut sw, mut swv) = (0.0, 0.0);
    for (i, w) in weight.iter().enumerate() {
        let v = g.values()[i];
        if *w > 0.0 && !g.is_nodata(v) {
            sw += w;
            swv += w * v;
        }
    }
    (sw > 0.0).then(|| swv / sw)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weighted_mean_matches_fine_rasterisation(
        values in prop::collection::vec(1.0f64..100.0, 400),
        holes in prop::collection::vec(prop::bool::weighted(0.1), 400),
        radii in prop::collection::vec(0.3f64..1.0, 5..10),
        phase in 0.0f64..6.0,
        xll in -12.0f64..-6.0, yll in 35.0f64..42.0,
    ) {
        let vals = values.iter().zip(&holes).map(|(v, h)| if *h { -9999.0 } else { *v }).collect();
        let g = grid(20, 20, xll, yll, 0.1, vals);
        let poly = star(xll + 1.0, yll + 1.0, &radii, phase);
        let coords: Vec<(f64, f64)> = poly.exterior().vertices().iter().map(|p| (p.lon, p.lat)).collect();
        let w = region_weights(&g, &poly.into());
        let t = Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).unwrap();
        match (weighted_stats(&g, &w, "r", t), fine_raster_mean(&g, &coords, 100)) {
            (Ok(s), Some(oracle)) => {
                prop_assert!(s.min <= s.weighted_mean && s.weighted_mean <= s.max);
                prop_assert!((s.weighted_mean - oracle).abs() <= 0.02 * oracle, "{} vs {}", s.weighted_mean, oracle);
            }
            (Err(StatsError::EmptyRegion(_)), None) => {}
            (a, b) => prop_assert!(false, "disagreement {a:?} vs {b:?}"),
        }
    }
}

fn month(m: u32) -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2017, m, 1, 0, 0, 0).unwrap()
}

#[test]
fn regional_series() {
    let store = ModelStore::in_memory();
    let layers = (1..=3)
        .map(|m| (month(m), grid(4, 4, -9.0, 38.0, 0.25, (0..16).map(|i| (i as f64) * m as f64).collect())))
        .collect();
    store
        .replace_year("NO2", Quantity::Concentration, Resolution::Monthly, 2017, layers)
        .unwrap();
    let region: MultiPolygon = star(-8.5, 38.5, &[0.3, 0.4, 0.35, 0.45, 0.3], 0.1).into();
    let cache = WeightCache::default();
    let series = build_regional_series(&store, "NO2", Quantity::Concentration, Resolution::Monthly, "r", &region, &cache)
        .unwrap();
    assert_eq!(series.len(), 3);
    assert!(series.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    assert_eq!(cache.builds(), 1);
    for (s, (t, g)) in series.iter().zip(store.series("NO2", Quantity::Concentration, Resolution::Monthly, None)) {
        let w = region_weights(&g, &region);
        assert_eq!(*s, weighted_stats(&g, &w, "r", t).unwrap());
    }
    assert!(matches!(
        build_regional_series(&store, "O3", Quantity::Concentration, Resolution::Monthly, "r", &region, &cache),
        Err(StatsError::NotFound(_))
    ));

    let flat = ModelStore::in_memory();
    let layers = (1..=3).map(|m| (month(m), grid(4, 4, -9.0, 38.0, 0.25, vec![4.0; 16]))).collect();
    flat.replace_year("NO2", Quantity::Concentration, Resolution::Monthly, 2017, layers).unwrap();
    let series = build_regional_series(&flat, "NO2", Quantity::Concentration, Resolution::Monthly, "r", &region, &cache)
        .unwrap();
    assert!(series.iter().all(|s| s.weighted_mean == 4.0 && s.min == 4.0 && s.max == 4.0));
}

#[test]
fn layer_evaluation_pools_valid_stations() {
    let mut obs = ObsStore::default();
    obs.ingest_stations(
        b"id,name,lat,lon,influence,environment\nA,a,38.1,-8.9,background,urban\nB,b,38.9,-8.1,background,rural\nT,t,38.5,-8.5,traffic,urban\n",
    )
    .unwrap();
    let mut csv = String::from("station_id,timestamp,pollutant,value,unit\n");
    for h in 0..744 {
        let t = format_timestamp(month(1) + Duration::hours(h));
        csv.push_str(&format!("A,{t},NO2,2,ug/m3\nB,{t},NO2,4,ug/m3\nT,{t},NO2,50,ug/m3\n"));
    }
    obs.ingest_observations(csv.as_bytes()).unwrap();
    // A sits in the south-west cell, B in the north-east one.
    let layer = grid(2, 2, -9.0, 38.0, 0.5, vec![0.0, 9.0, 1.2, 0.0]);
    let region: MultiPolygon = Rect::new(-9.0, 38.0, -8.0, 39.0).unwrap().into();
    let e = evaluate_layer(&obs, &layer, "NO2", &Period::month(2017, 1), "r", &region);
    assert_eq!(e.stations, vec!["A", "B"]);
    let r = e.result.unwrap();
    assert_eq!(r.fac2, 0.5);
    assert_relative_eq!(r.fb, -0.518518518518, max_relative = 1e-9);
    assert!(r.accepted);
    assert_eq!(e.per_station.len(), 2);
    assert!(e.per_station[0].result.pass_fac2 && !e.per_station[1].result.pass_fac2);

    let empty = evaluate_layer(&obs, &layer, "NO2", &Period::month(2017, 2), "r", &region);
    assert!(empty.result.is_none());
    assert_eq!(empty.error.as_deref(), Some("no pairs to evaluate"));
}
