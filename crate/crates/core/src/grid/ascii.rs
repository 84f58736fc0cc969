//! ESRI ASCII grid reader and writer.

use std::fmt::Write as _;

use super::{GeoGrid, GridError};

const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    xll: Option<f64>,
    yll: Option<f64>,
    x_is_center: bool,
    y_is_center: bool,
    cellsize: Option<f64>,
    nodata: Option<f64>,
}

fn is_header_line(line: &str) -> bool {
    line.trim_start()
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic())
        && line.split_whitespace().next().is_some_and(|t| t.parse::<f64>().is_err())
}

fn parse_number(token: &str, line: usize) -> Result<f64, GridError> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(GridError::NonNumeric { line, token: token.to_string() }),
    }
}

/// Parses an ESRI ASCII grid. Header keys are case-insensitive and may come
/// in any order; `NODATA_value` defaults to -9999 when absent.
pub fn read_ascii_grid(bytes: &[u8]) -> Result<GeoGrid, GridError> {
    let text = String::from_utf8_lossy(bytes);
    let mut header = Header::default();
    let mut lines = text.lines().enumerate().peekable();
    let mut last_header_line = 0;

    while let Some(&(idx, line)) = lines.peek() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        if !is_header_line(line) {
            break;
        }
        lines.next();
        last_header_line = lineno;
        let mut parts = line.split_whitespace();
        let (Some(key), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(GridError::BadHeader { line: lineno, text: line.to_string() });
        };
        let bad = || GridError::BadHeader { line: lineno, text: line.to_string() };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => header.ncols = Some(val.parse().map_err(|_| bad())?),
            "nrows" => header.nrows = Some(val.parse().map_err(|_| bad())?),
            "xllcorner" | "xllcenter" => {
                header.xll = Some(parse_number(val, lineno)?);
                header.x_is_center = key.eq_ignore_ascii_case("xllcenter");
            }
            "yllcorner" | "yllcenter" => {
                header.yll = Some(parse_number(val, lineno)?);
                header.y_is_center = key.eq_ignore_ascii_case("yllcenter");
            }
            "cellsize" => header.cellsize = Some(parse_number(val, lineno)?),
            "nodata_value" => header.nodata = Some(parse_number(val, lineno)?),
            _ => return Err(bad()),
        }
    }

    let missing = |key| GridError::MissingHeaderKey { line: last_header_line + 1, key };
    let ncols = header.ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = header.nrows.ok_or_else(|| missing("nrows"))?;
    let mut xll = header.xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = header.yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = header.cellsize.ok_or_else(|| missing("cellsize"))?;
    let nodata = header.nodata.unwrap_or(DEFAULT_NODATA);
    if header.x_is_center {
        xll -= cellsize / 2.0;
    }
    if header.y_is_center {
        yll -= cellsize / 2.0;
    }

    let expected = ncols * nrows;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = last_header_line;
    for (idx, line) in lines {
        let lineno = idx + 1;
        for token in line.split_whitespace() {
            if values.len() == expected {
                return Err(GridError::ValueCount { line: lineno, expected, found: expected + 1 });
            }
            values.push(parse_number(token, lineno)?);
        }
        if !line.trim().is_empty() {
            last_line = lineno;
        }
    }
    if values.len() != expected {
        return Err(GridError::ValueCount { line: last_line, expected, found: values.len() });
    }
    GeoGrid::new(ncols, nrows, xll, yll, cellsize, nodata, values)
}

/// Canonical serialisation: fixed header order, shortest round-trip decimals,
/// one line per row, north first.
pub fn write_ascii_grid(g: &GeoGrid) -> Vec<u8> {
    let mut out = String::with_capacity(64 + g.values().len() * 8);
    let _ = writeln!(out, "ncols {}", g.ncols());
    let _ = writeln!(out, "nrows {}", g.nrows());
    let _ = writeln!(out, "xllcorner {}", g.xll());
    let _ = writeln!(out, "yllcorner {}", g.yll());
    let _ = writeln!(out, "cellsize {}", g.cellsize());
    let _ = writeln!(out, "NODATA_value {}", g.nodata());
    for row in g.values().chunks(g.ncols()) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out.into_bytes()
}
