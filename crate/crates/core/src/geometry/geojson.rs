//! Reading and writing Polygon / MultiPolygon GeoJSON.

use serde_json::{json, Value};

use super::{GeometryError, MultiPolygon, Polygon, Ring};

fn err(msg: impl Into<String>) -> GeometryError {
    GeometryError::GeoJson(msg.into())
}

fn parse_ring(v: &Value) -> Result<Ring, GeometryError> {
    let coords = v.as_array().ok_or_else(|| err("ring must be an array of positions"))?;
    let mut pairs = Vec::with_capacity(coords.len());
    for c in coords {
        let pos = c.as_array().ok_or_else(|| err("position must be an array"))?;
        match (pos.first().and_then(Value::as_f64), pos.get(1).and_then(Value::as_f64)) {
            (Some(lon), Some(lat)) => pairs.push((lon, lat)),
            _ => return Err(err("position must hold two numbers")),
        }
    }
    let vertices = pairs
        .into_iter()
        .map(|(lon, lat)| super::Point::new(lon, lat))
        .collect::<Result<Vec<_>, _>>()?;
    Ring::new(vertices)
}

fn parse_polygon(v: &Value) -> Result<Polygon, GeometryError> {
    let rings = v.as_array().ok_or_else(|| err("polygon coordinates must be an array"))?;
    let (first, rest) = rings.split_first().ok_or_else(|| err("polygon without rings"))?;
    let exterior = parse_ring(first)?;
    let holes = rest.iter().map(parse_ring).collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon::new(exterior, holes)?.normalized())
}

fn collect_geometry(v: &Value, out: &mut Vec<Polygon>) -> Result<(), GeometryError> {
    let kind = v.get("type").and_then(Value::as_str).ok_or_else(|| err("missing \"type\""))?;
    match kind {
        "FeatureCollection" => {
            let features = v
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| err("FeatureCollection without features"))?;
            for f in features {
                collect_geometry(f, out)?;
            }
        }
        "Feature" => {
            let geom = v.get("geometry").ok_or_else(|| err("Feature without geometry"))?;
            collect_geometry(geom, out)?;
        }
        "GeometryCollection" => {
            let geoms = v
                .get("geometries")
                .and_then(Value::as_array)
                .ok_or_else(|| err("GeometryCollection without geometries"))?;
            for g in geoms {
                collect_geometry(g, out)?;
            }
        }
        "Polygon" => {
            out.push(parse_polygon(v.get("coordinates").ok_or_else(|| err("missing coordinates"))?)?);
        }
        "MultiPolygon" => {
            let polys = v
                .get("coordinates")
                .and_then(Value::as_array)
                .ok_or_else(|| err("MultiPolygon coordinates must be an array"))?;
            for p in polys {
                out.push(parse_polygon(p)?);
            }
        }
        other => return Err(err(format!("unsupported geometry type {other}"))),
    }
    Ok(())
}

/// Reads every polygonal geometry in a GeoJSON document into one
/// multipolygon, orienting exteriors counter-clockwise and holes clockwise.
pub fn read_geojson(bytes: &[u8]) -> Result<MultiPolygon, GeometryError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| err(e.to_string()))?;
    let mut parts = Vec::new();
    collect_geometry(&doc, &mut parts)?;
    MultiPolygon::new(parts)
}

fn ring_coords(r: &Ring) -> Value {
    Value::Array(r.vertices().iter().map(|p| json!([p.lon, p.lat])).collect())
}

/// Serialises as a bare MultiPolygon geometry.
pub fn write_geojson(mp: &MultiPolygon) -> Vec<u8> {
    let coords: Vec<Value> = mp
        .parts()
        .iter()
        .map(|p| Value::Array(p.rings().map(ring_coords).collect()))
        .collect();
    serde_json::to_vec(&json!({ "type": "MultiPolygon", "coordinates": coords }))
        .expect("geometry serialises")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contains_point, Point, Rect};

    #[test]
    fn feature_collection_with_clockwise_exterior() {
        let doc = br#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"name":"a"},"geometry":{"type":"Polygon",
             "coordinates":[[[0,0],[0,1],[1,1],[1,0],[0,0]]]}},
            {"type":"Feature","properties":{},"geometry":{"type":"MultiPolygon",
             "coordinates":[[[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}}]}"#;
        let mp = read_geojson(doc).unwrap();
        assert_eq!(mp.parts().len(), 2);
        assert!(mp.parts()[0].exterior().is_ccw());
        assert!(contains_point(&mp, Point::new(5.5, 5.5).unwrap()));
    }

    #[test]
    fn write_then_read() {
        let mp: MultiPolygon = Rect::new(-9.5, 37.0, -6.2, 42.1).unwrap().into();
        assert_eq!(read_geojson(&write_geojson(&mp)).unwrap(), mp);
    }

    #[test]
    fn rejects_open_ring_and_points() {
        let open = br#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}"#;
        assert!(matches!(read_geojson(open), Err(GeometryError::OpenRing)));
        let pt = br#"{"type":"Point","coordinates":[0,0]}"#;
        assert!(read_geojson(pt).is_err());
    }
}
