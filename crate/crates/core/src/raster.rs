//! Rectangular rasters and the ASCII grid file format.
//!
//! Row 0 is the top (largest y) row. When the window is not a whole number
//! of cells wide or tall, the last column (right) and last row (bottom) are
//! partial cells clipped to the window.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::space::Rect;

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    window: Rect,
    cellsize: f64,
    ncols: usize,
    nrows: usize,
    values: Vec<f64>,
    nodata: f64,
    partial_col: bool,
    partial_row: bool,
}

fn cells_along(extent: f64, cellsize: f64) -> (usize, bool) {
    let ratio = extent / cellsize;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        ((rounded as usize).max(1), false)
    } else {
        (ratio.ceil() as usize, true)
    }
}

impl RasterGrid {
    pub fn new(window: Rect, cellsize: f64, fill: f64) -> Result<Self> {
        if !(cellsize > 0.0) || !cellsize.is_finite() {
            return Err(Error::config("cellsize", format!("must be positive, got {cellsize}")));
        }
        let (ncols, partial_col) = cells_along(window.width(), cellsize);
        let (nrows, partial_row) = cells_along(window.height(), cellsize);
        Ok(RasterGrid {
            window,
            cellsize,
            ncols,
            nrows,
            values: vec![fill; ncols * nrows],
            nodata: DEFAULT_NODATA,
            partial_col,
            partial_row,
        })
    }

    /// A grid with the same geometry and every cell set to `fill`.
    pub fn like(&self, fill: f64) -> Self {
        RasterGrid {
            values: vec![fill; self.values.len()],
            ..self.clone()
        }
    }

    pub fn window(&self) -> Rect {
        self.window
    }

    pub fn cellsize(&self) -> f64 {
        self.cellsize
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.window == other.window
            && self.cellsize == other.cellsize
            && self.ncols == other.ncols
            && self.nrows == other.nrows
    }

    pub fn is_partial(&self, row: usize, col: usize) -> bool {
        (self.partial_row && row + 1 == self.nrows) || (self.partial_col && col + 1 == self.ncols)
    }

    /// Cell extent clipped to the window.
    pub fn cell_rect(&self, row: usize, col: usize) -> Rect {
        let cs = self.cellsize;
        let x0 = self.window.x0 + col as f64 * cs;
        let x1 = (x0 + cs).min(self.window.x1);
        let y1 = self.window.y1 - row as f64 * cs;
        let y0 = (y1 - cs).max(self.window.y0);
        Rect { x0, y0, x1, y1 }
    }

    pub fn cell_area(&self, row: usize, col: usize) -> f64 {
        if self.is_partial(row, col) {
            self.cell_rect(row, col).area()
        } else {
            self.cellsize * self.cellsize
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let r = self.cell_rect(row, col);
        (0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1))
    }

    /// Cell containing `(x, y)`, if inside the window.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let w = &self.window;
        if !(x >= w.x0 && x < w.x1 && y > w.y0 && y <= w.y1) {
            return None;
        }
        let col = ((x - w.x0) / self.cellsize).floor() as usize;
        let row = ((w.y1 - y) / self.cellsize).floor() as usize;
        Some((row.min(self.nrows - 1), col.min(self.ncols - 1)))
    }

    /// Value at `(x, y)`; `None` outside the window or on nodata cells.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (r, c) = self.locate(x, y)?;
        let v = self.get(r, c);
        (v != self.nodata).then_some(v)
    }

    pub fn parse_ascii(text: &str, origin: &str) -> Result<Self> {
        let perr = |row: usize, col: usize, reason: String| Error::RasterParse {
            path: origin.to_string(),
            row,
            col,
            reason,
        };
        let mut header = std::collections::HashMap::new();
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
        while let Some((_, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_lowercase();
            if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
                break;
            }
            let (lineno, line) = lines.next().unwrap();
            let value: f64 = parts
                .next()
                .ok_or_else(|| perr(lineno + 1, 2, format!("missing value for `{key}`")))?
                .parse()
                .map_err(|e| perr(lineno + 1, 2, format!("bad header value in `{line}`: {e}")))?;
            header.insert(key, value);
        }
        let need = |k: &str| {
            header
                .get(k)
                .copied()
                .ok_or_else(|| perr(0, 0, format!("missing header `{k}`")))
        };
        let ncols = need("ncols")?;
        let nrows = need("nrows")?;
        let xll = need("xllcorner")?;
        let yll = need("yllcorner")?;
        let cellsize = need("cellsize")?;
        let nodata = header.get("nodata_value").copied().unwrap_or(DEFAULT_NODATA);
        if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
            return Err(perr(0, 0, format!("invalid dimensions {ncols} x {nrows}")));
        }
        if !(cellsize > 0.0) {
            return Err(perr(0, 0, format!("invalid cellsize {cellsize}")));
        }
        let (ncols, nrows) = (ncols as usize, nrows as usize);
        let mut values = Vec::with_capacity(ncols * nrows);
        let mut row = 0;
        for (_, line) in lines {
            row += 1;
            if row > nrows {
                return Err(perr(row, 1, format!("more than {nrows} data rows")));
            }
            let mut count = 0;
            for (col, tok) in line.split_whitespace().enumerate() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| perr(row, col + 1, format!("`{tok}`: {e}")))?;
                values.push(v);
                count += 1;
            }
            if count != ncols {
                return Err(perr(row, count + 1, format!("expected {ncols} values, found {count}")));
            }
        }
        if row != nrows {
            return Err(perr(row + 1, 1, format!("expected {nrows} data rows, found {row}")));
        }
        let window = Rect::new(
            xll,
            yll,
            xll + ncols as f64 * cellsize,
            yll + nrows as f64 * cellsize,
        )
        .map_err(|_| perr(0, 0, "degenerate extent".into()))?;
        Ok(RasterGrid {
            window,
            cellsize,
            ncols,
            nrows,
            values,
            nodata,
            partial_col: false,
            partial_row: false,
        })
    }

    pub fn read_ascii(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii(&text, &path.display().to_string())
    }

    /// ASCII grid text. Partial cells are written as whole cells, so the
    /// header extent may exceed the window.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.window.x0);
        let yll = self.window.y1 - self.nrows as f64 * self.cellsize;
        let _ = writeln!(out, "yllcorner {}", yll);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "nodata_value {}", self.nodata);
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -9999\n1 2 3\n4 5 -9999\n";

    #[test]
    fn parse_and_lookup() {
        let g = RasterGrid::parse_ascii(SAMPLE, "mem").unwrap();
        assert_eq!((g.nrows(), g.ncols()), (2, 3));
        // Row 1 of the file is the top row.
        assert_eq!(g.sample(0.5, 1.5), Some(1.0));
        assert_eq!(g.sample(2.5, 1.5), Some(3.0));
        assert_eq!(g.sample(0.5, 0.5), Some(4.0));
        assert_eq!(g.sample(2.5, 0.5), None);
        assert_eq!(g.sample(3.5, 0.5), None);
        let again = RasterGrid::parse_ascii(&g.to_ascii(), "mem").unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let bad = SAMPLE.replace("4 5", "4 x");
        match RasterGrid::parse_ascii(&bad, "mem").unwrap_err() {
            Error::RasterParse { row, col, .. } => assert_eq!((row, col), (2, 2)),
            e => panic!("unexpected {e}"),
        }
        let short = SAMPLE.replace("4 5 -9999\n", "4 5\n");
        assert!(matches!(
            RasterGrid::parse_ascii(&short, "mem"),
            Err(Error::RasterParse { row: 2, .. })
        ));
        let missing = SAMPLE.replace("cellsize 1\n", "");
        assert!(RasterGrid::parse_ascii(&missing, "mem").is_err());
        let extra = format!("{SAMPLE}7 8 9\n");
        assert!(RasterGrid::parse_ascii(&extra, "mem").is_err());
    }

    #[test]
    fn partial_cells_are_flagged_and_clipped() {
        let g = RasterGrid::new(Rect::new(0.0, 0.0, 2.5, 1.0).unwrap(), 1.0, 0.0).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (1, 3));
        assert!(g.is_partial(0, 2));
        assert!(!g.is_partial(0, 1));
        assert_eq!(g.cell_area(0, 2), 0.5);
        assert_eq!(g.cell_center(0, 2), (2.25, 0.5));
        let total: f64 = (0..3).map(|c| g.cell_area(0, c)).sum();
        assert_eq!(total, 2.5);
    }

    #[test]
    fn exact_multiples_are_not_partial() {
        let g = RasterGrid::new(Rect::new(-50.0, -50.0, 50.0, 50.0).unwrap(), 0.25, 0.0).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (400, 400));
        assert!(!g.is_partial(399, 399));
        assert_eq!(g.locate(-50.0, 50.0), Some((0, 0)));
        assert_eq!(g.locate(49.99, -49.99), Some((399, 399)));
    }
}
