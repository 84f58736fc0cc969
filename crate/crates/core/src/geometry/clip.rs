//! Sutherland–Hodgman clipping against an axis-aligned rectangle.

use super::{Point, Polygon, Rect, Ring};

#[derive(Clone, Copy)]
enum Edge {
    Left(f64),
    Right(f64),
    Bottom(f64),
    Top(f64),
}

impl Edge {
    fn inside(self, p: Point) -> bool {
        match self {
            Edge::Left(x) => p.lon >= x,
            Edge::Right(x) => p.lon <= x,
            Edge::Bottom(y) => p.lat >= y,
            Edge::Top(y) => p.lat <= y,
        }
    }

    /// Crossing of segment `a`→`b` with this edge's line. Only called when
    /// the endpoints straddle it, so the denominator is nonzero.
    fn intersect(self, a: Point, b: Point) -> Point {
        match self {
            Edge::Left(x) | Edge::Right(x) => {
                let t = (x - a.lon) / (b.lon - a.lon);
                Point { lon: x, lat: a.lat + t * (b.lat - a.lat) }
            }
            Edge::Bottom(y) | Edge::Top(y) => {
                let t = (y - a.lat) / (b.lat - a.lat);
                Point { lon: a.lon + t * (b.lon - a.lon), lat: y }
            }
        }
    }
}

fn clip_half_plane(input: &[Point], edge: Edge) -> Vec<Point> {
    let mut out = Vec::with_capacity(input.len() + 4);
    let Some(&last) = input.last() else {
        return out;
    };
    let mut prev = last;
    for &cur in input {
        match (edge.inside(prev), edge.inside(cur)) {
            (true, true) => out.push(cur),
            (true, false) => out.push(edge.intersect(prev, cur)),
            (false, true) => {
                out.push(edge.intersect(prev, cur));
                out.push(cur);
            }
            (false, false) => {}
        }
        prev = cur;
    }
    out
}

/// Clips one ring. Returns `None` when fewer than three distinct vertices
/// survive, which is how disjoint and degenerate results are reported.
pub fn clip_ring_to_rect(ring: &Ring, r: &Rect) -> Option<Ring> {
    let v = ring.vertices();
    let mut pts: Vec<Point> = v[..v.len() - 1].to_vec();
    for edge in [
        Edge::Left(r.min_lon),
        Edge::Right(r.max_lon),
        Edge::Bottom(r.min_lat),
        Edge::Top(r.max_lat),
    ] {
        pts = clip_half_plane(&pts, edge);
        if pts.is_empty() {
            return None;
        }
    }
    pts.dedup();
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let mut distinct = pts.clone();
    distinct.sort_by(|a, b| a.lon.total_cmp(&b.lon).then(a.lat.total_cmp(&b.lat)));
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    pts.push(pts[0]);
    Some(Ring { vertices: pts })
}

/// Clips every ring of `poly` to `r` independently. The first ring is the
/// clipped exterior, the rest are clipped holes; empty when disjoint.
pub fn clip_to_rect(poly: &Polygon, r: &Rect) -> Vec<Ring> {
    let Some(exterior) = clip_ring_to_rect(poly.exterior(), r) else {
        return Vec::new();
    };
    let mut rings = vec![exterior];
    rings.extend(poly.holes().iter().filter_map(|h| clip_ring_to_rect(h, r)));
    rings
}
