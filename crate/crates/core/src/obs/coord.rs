use serde::{Deserialize, Serialize};

use super::ObsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordFormat {
    Decimal,
    Dms,
}

fn split_hemisphere(text: &str) -> (&str, Option<char>) {
    let t = text.trim();
    let last = t.chars().last().map(|c| c.to_ascii_uppercase());
    if let Some(c @ ('N' | 'S' | 'E' | 'W')) = last {
        return (t[..t.len() - 1].trim_end(), Some(c));
    }
    let first = t.chars().next().map(|c| c.to_ascii_uppercase());
    if let Some(c @ ('N' | 'S' | 'E' | 'W')) = first {
        return (t[1..].trim_start(), Some(c));
    }
    (t, None)
}

/// Converts a coordinate token to signed decimal degrees. A trailing (or
/// leading) `S` or `W` negates the value.
pub fn parse_coordinate(text: &str, format: CoordFormat) -> Result<f64, ObsError> {
    let bad = || ObsError::Coordinate(text.to_string());
    let (body, hemi) = split_hemisphere(text);
    if body.is_empty() {
        return Err(bad());
    }
    let magnitude_signed = match format {
        CoordFormat::Decimal => body.parse::<f64>().map_err(|_| bad())?,
        CoordFormat::Dms => {
            let negative = body.starts_with('-');
            let body = body.trim_start_matches(['-', '+']);
            let parts: Vec<&str> = body
                .split(|c: char| !(c.is_ascii_digit() || c == '.'))
                .filter(|s| !s.is_empty())
                .collect();
            if parts.is_empty() || parts.len() > 3 {
                return Err(bad());
            }
            let nums = parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            let deg = nums[0];
            let min = nums.get(1).copied().unwrap_or(0.0);
            let sec = nums.get(2).copied().unwrap_or(0.0);
            if !(0.0..60.0).contains(&min) || !(0.0..60.0).contains(&sec) {
                return Err(bad());
            }
            // Summing in seconds first keeps exact decimal results exact.
            let v = (deg * 3600.0 + min * 60.0 + sec) / 3600.0;
            if negative {
                -v
            } else {
                v
            }
        }
    };
    if !magnitude_signed.is_finite() {
        return Err(bad());
    }
    let v = match hemi {
        Some('S' | 'W') => -magnitude_signed.abs(),
        Some(_) => magnitude_signed.abs(),
        None => magnitude_signed,
    };
    Ok(v)
}
