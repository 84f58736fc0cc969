//! Planar polygon primitives on WGS84 lon/lat coordinates.
//!
//! Everything here works directly in degrees. Areas are converted to km² with
//! an equirectangular approximation: one degree spans [`KM_PER_DEGREE`] km and
//! longitudes shrink by `cos(latitude)` taken at the middle of the clipping
//! rectangle. At the scale of a regional model grid this is far below the
//! model's own resolution.

mod clip;
mod geojson;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clip::{clip_ring_to_rect, clip_to_rect};
pub use geojson::{read_geojson, write_geojson};

/// Length of one degree of latitude in kilometres.
pub const KM_PER_DEGREE: f64 = 111.32;

/// Points closer than this (in degrees) to a ring edge are on the boundary.
pub const BOUNDARY_TOLERANCE_DEG: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("coordinate out of range: lon={lon}, lat={lat}")]
    CoordinateOutOfRange { lon: f64, lat: f64 },
    #[error("ring has {0} vertices, at least 4 are required")]
    TooFewVertices(usize),
    #[error("ring is not closed (first vertex differs from last)")]
    OpenRing,
    #[error("ring repeats vertex {index} consecutively")]
    RepeatedVertex { index: usize },
    #[error("polygon exterior has zero area")]
    ZeroArea,
    #[error("hole {0} lies outside the exterior bounding box")]
    HoleOutsideExterior(usize),
    #[error("multipolygon has no parts")]
    Empty,
    #[error("invalid rectangle [{min_lon}, {min_lat}, {max_lon}, {max_lat}]")]
    InvalidRect {
        min_lon: f64,
        min_lat: f64,
        max_lon: f64,
        max_lat: f64,
    },
    #[error("geojson: {0}")]
    GeoJson(String),
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub lon: f64,
    pub lat: f64,
}

impl Point {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeometryError> {
        if !(lon.is_finite() && lat.is_finite())
            || !(-180.0..=180.0).contains(&lon)
            || !(-90.0..=90.0).contains(&lat)
        {
            return Err(GeometryError::CoordinateOutOfRange { lon, lat });
        }
        Ok(Point { lon, lat })
    }
}

/// A closed sequence of vertices, first equal to last.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    vertices: Vec<Point>,
}

impl Ring {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 4 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.first() != vertices.last() {
            return Err(GeometryError::OpenRing);
        }
        for (i, w) in vertices.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(GeometryError::RepeatedVertex { index: i + 1 });
            }
        }
        for p in &vertices {
            Point::new(p.lon, p.lat)?;
        }
        Ok(Ring { vertices })
    }

    /// Builds a ring from `(lon, lat)` pairs, closing it if the caller did not.
    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self, GeometryError> {
        let mut vertices = coords
            .iter()
            .map(|&(lon, lat)| Point::new(lon, lat))
            .collect::<Result<Vec<_>, _>>()?;
        if let (Some(first), Some(last)) = (vertices.first().copied(), vertices.last()) {
            if first != *last {
                vertices.push(first);
            }
        }
        Ring::new(vertices)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Edges as consecutive vertex pairs.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        bbox_of(self.vertices.iter())
    }

    pub fn is_ccw(&self) -> bool {
        ring_area(self) > 0.0
    }

    pub fn reversed(&self) -> Ring {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Ring { vertices }
    }
}

/// Signed shoelace area in degrees², counter-clockwise positive.
pub fn ring_area(ring: &Ring) -> f64 {
    let v = ring.vertices();
    // Shift to the first vertex to keep the products small.
    let (x0, y0) = (v[0].lon, v[0].lat);
    let mut twice = 0.0;
    for w in v.windows(2) {
        let (ax, ay) = (w[0].lon - x0, w[0].lat - y0);
        let (bx, by) = (w[1].lon - x0, w[1].lat - y0);
        twice += ax * by - bx * ay;
    }
    twice / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Ring,
    holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Result<Self, GeometryError> {
        if ring_area(&exterior) == 0.0 {
            return Err(GeometryError::ZeroArea);
        }
        let (ex0, ey0, ex1, ey1) = exterior.bbox();
        for (i, hole) in holes.iter().enumerate() {
            let (hx0, hy0, hx1, hy1) = hole.bbox();
            if hx0 < ex0 || hy0 < ey0 || hx1 > ex1 || hy1 > ey1 {
                return Err(GeometryError::HoleOutsideExterior(i));
            }
        }
        Ok(Polygon { exterior, holes })
    }

    pub fn exterior(&self) -> &Ring {
        &self.exterior
    }

    pub fn holes(&self) -> &[Ring] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Exterior counter-clockwise, holes clockwise.
    pub fn normalized(&self) -> Polygon {
        let exterior = if self.exterior.is_ccw() {
            self.exterior.clone()
        } else {
            self.exterior.reversed()
        };
        let holes = self
            .holes
            .iter()
            .map(|h| if h.is_ccw() { h.reversed() } else { h.clone() })
            .collect();
        Polygon { exterior, holes }
    }

    /// Unsigned area in degrees², holes subtracted.
    pub fn area_deg2(&self) -> f64 {
        ring_area(&self.exterior).abs() - self.holes.iter().map(|h| ring_area(h).abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPolygon {
    parts: Vec<Polygon>,
}

impl MultiPolygon {
    pub fn new(parts: Vec<Polygon>) -> Result<Self, GeometryError> {
        if parts.is_empty() {
            return Err(GeometryError::Empty);
        }
        Ok(MultiPolygon { parts })
    }

    pub fn parts(&self) -> &[Polygon] {
        &self.parts
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        bbox_of(self.parts.iter().flat_map(|p| p.exterior.vertices().iter()))
    }

    pub fn area_deg2(&self) -> f64 {
        self.parts.iter().map(Polygon::area_deg2).sum()
    }
}

impl From<Polygon> for MultiPolygon {
    fn from(p: Polygon) -> Self {
        MultiPolygon { parts: vec![p] }
    }
}

impl From<Rect> for Polygon {
    fn from(r: Rect) -> Self {
        let exterior = Ring {
            vertices: vec![
                Point { lon: r.min_lon, lat: r.min_lat },
                Point { lon: r.max_lon, lat: r.min_lat },
                Point { lon: r.max_lon, lat: r.max_lat },
                Point { lon: r.min_lon, lat: r.max_lat },
                Point { lon: r.min_lon, lat: r.min_lat },
            ],
        };
        Polygon { exterior, holes: Vec::new() }
    }
}

impl From<Rect> for MultiPolygon {
    fn from(r: Rect) -> Self {
        Polygon::from(r).into()
    }
}

/// Axis-aligned rectangle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl Rect {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeometryError> {
        // Written so that NaN fails too.
        if !(min_lon < max_lon && min_lat < max_lat) {
            return Err(GeometryError::InvalidRect { min_lon, min_lat, max_lon, max_lat });
        }
        Ok(Rect { min_lon, min_lat, max_lon, max_lat })
    }

    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn area_deg2(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn mid_lat(&self) -> f64 {
        (self.min_lat + self.max_lat) / 2.0
    }

    /// km² per degree² at the middle latitude of this rectangle.
    pub fn km2_per_deg2(&self) -> f64 {
        KM_PER_DEGREE * KM_PER_DEGREE * self.mid_lat().to_radians().cos()
    }

    pub fn area_km2(&self) -> f64 {
        self.area_deg2() * self.km2_per_deg2()
    }

    pub fn center(&self) -> Point {
        Point {
            lon: (self.min_lon + self.max_lon) / 2.0,
            lat: self.mid_lat(),
        }
    }

    fn overlaps_bbox(&self, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> bool {
        x0 <= self.max_lon && x1 >= self.min_lon && y0 <= self.max_lat && y1 >= self.min_lat
    }
}

fn bbox_of<'a>(points: impl Iterator<Item = &'a Point>) -> (f64, f64, f64, f64) {
    points.fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), p| (x0.min(p.lon), y0.min(p.lat), x1.max(p.lon), y1.max(p.lat)),
    )
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.lon + t * dx - p.lon, a.lat + t * dy - p.lat);
    (cx * cx + cy * cy).sqrt() <= BOUNDARY_TOLERANCE_DEG
}

fn polygon_contains(poly: &Polygon, p: Point) -> bool {
    let mut inside = false;
    for ring in poly.rings() {
        for (a, b) in ring.edges() {
            if on_segment(p, a, b) {
                return true;
            }
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Even-odd point-in-polygon test; points on any ring edge count as inside.
pub fn contains_point(poly: &MultiPolygon, p: Point) -> bool {
    poly.parts.iter().any(|part| polygon_contains(part, p))
}

/// Unsigned overlap area between `poly` and `r` in degrees².
pub fn intersection_area_deg2(poly: &MultiPolygon, r: &Rect) -> f64 {
    let mut total = 0.0;
    for part in &poly.parts {
        if !r.overlaps_bbox(part.exterior.bbox()) {
            continue;
        }
        let Some(ext) = clip_ring_to_rect(&part.exterior, r) else {
            continue;
        };
        total += ring_area(&ext).abs();
        for hole in &part.holes {
            if let Some(h) = clip_ring_to_rect(hole, r) {
                total -= ring_area(&h).abs();
            }
        }
    }
    total.abs()
}

/// Approximate overlap area between `poly` and `r` in km².
pub fn intersection_area(poly: &MultiPolygon, r: &Rect) -> f64 {
    intersection_area_deg2(poly, r) * r.km2_per_deg2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn unit_square() -> Polygon {
        Rect::new(0.0, 0.0, 1.0, 1.0).unwrap().into()
    }

    #[test]
    fn contains_interior_outside_and_boundary() {
        let sq: MultiPolygon = unit_square().into();
        assert!(contains_point(&sq, Point::new(0.5, 0.5).unwrap()));
        assert!(!contains_point(&sq, Point::new(2.0, 2.0).unwrap()));
        assert!(contains_point(&sq, Point::new(0.0, 0.5).unwrap()));
        assert!(contains_point(&sq, Point::new(1.0, 1.0).unwrap()));
        assert!(contains_point(&sq, Point::new(1.0, 0.25).unwrap()));
    }

    #[test]
    fn hole_excludes_interior_but_not_its_boundary() {
        let ext = Ring::from_coords(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]).unwrap();
        let hole = Ring::from_coords(&[(1.0, 1.0), (1.0, 3.0), (3.0, 3.0), (3.0, 1.0)]).unwrap();
        let mp: MultiPolygon = Polygon::new(ext, vec![hole]).unwrap().into();
        assert!(!contains_point(&mp, Point::new(2.0, 2.0).unwrap()));
        assert!(contains_point(&mp, Point::new(0.5, 2.0).unwrap()));
        assert!(contains_point(&mp, Point::new(1.0, 2.0).unwrap()));
        assert_relative_eq!(mp.area_deg2(), 12.0);
    }

    #[test]
    fn ring_validation() {
        let p = |x, y| Point::new(x, y).unwrap();
        assert_eq!(
            Ring::new(vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 0.0)]),
            Err(GeometryError::TooFewVertices(3))
        );
        assert_eq!(
            Ring::new(vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]),
            Err(GeometryError::OpenRing)
        );
        assert_eq!(
            Ring::new(vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(0.0, 0.0)]),
            Err(GeometryError::RepeatedVertex { index: 2 })
        );
        assert!(Point::new(181.0, 0.0).is_err());
        assert!(Point::new(0.0, -90.5).is_err());
        assert!(Rect::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(MultiPolygon::new(vec![]).is_err());
    }

    #[test]
    fn zero_area_polygon_rejected() {
        let flat = Ring::from_coords(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).unwrap();
        assert_eq!(Polygon::new(flat, vec![]), Err(GeometryError::ZeroArea));
    }

    #[test]
    fn shoelace_orientation() {
        let ccw = Ring::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(ring_area(&ccw), 1.0);
        assert_eq!(ring_area(&ccw.reversed()), -1.0);
        let tri = Ring::from_coords(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(ring_area(&tri), 0.5);
    }

    #[test]
    fn intersection_area_examples() {
        let sq: MultiPolygon = unit_square().into();
        // Fully inside: full square scaled at the rect's middle latitude.
        let r = Rect::new(-1.0, -1.0, 3.0, 2.0).unwrap();
        let expected = KM_PER_DEGREE.powi(2) * 0.5f64.to_radians().cos();
        assert_relative_eq!(intersection_area(&sq, &r), expected, max_relative = 1e-12);

        let disjoint = Rect::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(intersection_area(&sq, &disjoint), 0.0);

        // Half overlap centred on the equator.
        let sq_eq: MultiPolygon = Polygon::from(Rect::new(0.0, -0.5, 1.0, 0.5).unwrap()).into();
        let half = Rect::new(0.5, -0.5, 1.5, 0.5).unwrap();
        assert_relative_eq!(
            intersection_area(&sq_eq, &half),
            0.5 * 111.32 * 111.32,
            max_relative = 1e-12
        );
    }

    #[test]
    fn intersection_area_subtracts_holes() {
        let ext = Ring::from_coords(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]).unwrap();
        let hole = Ring::from_coords(&[(1.0, 1.0), (1.0, 3.0), (3.0, 3.0), (3.0, 1.0)]).unwrap();
        let mp: MultiPolygon = Polygon::new(ext, vec![hole]).unwrap().into();
        let r = Rect::new(0.0, 0.0, 2.0, 4.0).unwrap();
        assert_relative_eq!(intersection_area_deg2(&mp, &r), 8.0 - 2.0, max_relative = 1e-12);
    }

    #[test]
    fn normalization_orients_rings() {
        let ext = Ring::from_coords(&[(0.0, 0.0), (0.0, 4.0), (4.0, 4.0), (4.0, 0.0)]).unwrap();
        let hole = Ring::from_coords(&[(1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0)]).unwrap();
        let p = Polygon::new(ext, vec![hole]).unwrap().normalized();
        assert!(p.exterior().is_ccw());
        assert!(!p.holes()[0].is_ccw());
    }
}
