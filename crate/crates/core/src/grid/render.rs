//! Colour rendering of grids into RGBA overlays.

use super::{GeoGrid, GridError};

/// Piecewise-linear colour ramp over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    stops: Vec<(f64, [u8; 3])>,
}

impl Default for ColorMap {
    /// Blue for the lowest values, red for the highest.
    fn default() -> Self {
        ColorMap { stops: vec![(0.0, [0, 0, 255]), (1.0, [255, 0, 0])] }
    }
}

impl ColorMap {
    pub fn new(stops: Vec<(f64, [u8; 3])>) -> Result<Self, GridError> {
        if stops.len() < 2 {
            return Err(GridError::ColorMap("at least two stops are required".into()));
        }
        if stops[0].0 != 0.0 || stops[stops.len() - 1].0 != 1.0 {
            return Err(GridError::ColorMap("stops must start at 0 and end at 1".into()));
        }
        if stops.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(GridError::ColorMap("stop fractions must be strictly increasing".into()));
        }
        Ok(ColorMap { stops })
    }

    pub fn color_at(&self, frac: f64) -> [u8; 3] {
        let f = frac.clamp(0.0, 1.0);
        let i = self
            .stops
            .windows(2)
            .position(|w| f <= w[1].0)
            .unwrap_or(self.stops.len() - 2);
        let (f0, c0) = self.stops[i];
        let (f1, c1) = self.stops[i + 1];
        let t = (f - f0) / (f1 - f0);
        let mut rgb = [0u8; 3];
        for ch in 0..3 {
            let v = c0[ch] as f64 + t * (c1[ch] as f64 - c0[ch] as f64);
            // round half up
            rgb[ch] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
        rgb
    }
}

/// Row-major RGBA image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 4]>,
}

impl RgbaImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 4] {
        self.pixels[row * self.width + col]
    }

    /// Binary PPM (P6). PPM carries no alpha, so transparent pixels are white.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            if p[3] == 0 {
                out.extend_from_slice(&[255, 255, 255]);
            } else {
                out.extend_from_slice(&p[..3]);
            }
        }
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Rgba);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header().expect("in-memory png header");
            let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            writer.write_image_data(&data).expect("in-memory png data");
        }
        out
    }
}

/// Normalises data cells linearly over their `[min, max]` and colours them;
/// nodata cells become fully transparent. A constant grid maps to fraction 0.
pub fn render_overlay(g: &GeoGrid, cmap: &ColorMap) -> Result<RgbaImage, GridError> {
    let (lo, hi) = g.data_range().ok_or(GridError::EmptyRange)?;
    let span = hi - lo;
    let pixels = g
        .values()
        .iter()
        .map(|&v| {
            if g.is_nodata(v) {
                [0, 0, 0, 0]
            } else {
                let frac = if span > 0.0 { (v - lo) / span } else { 0.0 };
                let [r, gr, b] = cmap.color_at(frac);
                [r, gr, b, 255]
            }
        })
        .collect();
    Ok(RgbaImage { width: g.ncols(), height: g.nrows(), pixels })
}
