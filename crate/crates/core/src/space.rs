//! Points and axis-aligned windows in the simulation plane.

use crate::error::{Error, Result};

/// A position in R^d, d ≤ 3. Unused trailing coordinates are zero.
pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn dist2_xy(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let all_finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        if !all_finite || x1 <= x0 || y1 <= y0 {
            return Err(Error::config(
                "window",
                format!("degenerate window {x0}:{y0}:{x1}:{y1}"),
            ));
        }
        Ok(Rect { x0, y0, x1, y1 })
    }

    /// Parses `x0:y0:x1:y1`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config("window", format!("`{s}`: {e}")))?;
        if parts.len() != 4 {
            return Err(Error::config("window", format!("`{s}`: expected x0:y0:x1:y1")));
        }
        Rect::new(parts[0], parts[1], parts[2], parts[3])
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p[0] >= self.x0 && p[0] < self.x1 && p[1] >= self.y0 && p[1] < self.y1
    }
}
