//! Angle parsing and normalization.
//!
//! Angles are accepted either as decimal radians (`"0.7854"`) or as rational
//! multiples of π (`"pi/4"`, `"-pi/4"`, `"3pi/4"`, `"3*pi/4"`, `"-2π/3"`).

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Reduces an angle to `[0, 2π)`.
pub fn normalize(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Parses an angle in radians or as a rational multiple of π.
pub fn parse_angle(text: &str) -> Result<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::Angle(text.to_string()));
    }
    let lower = s.to_ascii_lowercase().replace('π', "pi");
    let Some(pos) = lower.find("pi") else {
        return lower
            .parse::<f64>()
            .map_err(|_| Error::Angle(text.to_string()));
    };

    let bad = || Error::Angle(text.to_string());
    let head = lower[..pos].trim_end_matches('*');
    let tail = &lower[pos + 2..];

    let numerator = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denominator = match tail {
        "" => 1.0,
        t => {
            let d = t.strip_prefix('/').ok_or_else(bad)?;
            let d = d.parse::<f64>().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            d
        }
    };
    Ok(numerator * PI / denominator)
}
