//! ESRI ASCII grid rasters.
//!
//! Values are stored row-major with row 0 at the northern edge, exactly as
//! they appear in the file. Cell `(row, col)` covers
//! `x ∈ [xll + col·cs, xll + (col+1)·cs)` and
//! `y ∈ [yll + (nrows−row−1)·cs, yll + (nrows−row)·cs)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid grid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
    pub values: Vec<f64>,
}

/// Grid extent without values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
}

impl GridGeometry {
    /// Smallest cell-aligned extent (origin snapped to multiples of
    /// `cellsize`) covering every `(x, y)`. Returns `None` for no points.
    pub fn covering(xy: impl IntoIterator<Item = (f64, f64)>, cellsize: f64) -> Option<Self> {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        let mut any = false;
        for (x, y) in xy {
            any = true;
            min[0] = min[0].min(x);
            min[1] = min[1].min(y);
            max[0] = max[0].max(x);
            max[1] = max[1].max(y);
        }
        if !any {
            return None;
        }
        let xll = (min[0] / cellsize).floor() * cellsize;
        let yll = (min[1] / cellsize).floor() * cellsize;
        let ncols = ((max[0] - xll) / cellsize).floor() as usize + 1;
        let nrows = ((max[1] - yll) / cellsize).floor() as usize + 1;
        Some(Self {
            ncols,
            nrows,
            xllcorner: xll,
            yllcorner: yll,
            cellsize,
        })
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of the cell containing `(x, y)`, if inside.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.xllcorner) / self.cellsize).floor();
        let r_from_bottom = ((y - self.yllcorner) / self.cellsize).floor();
        if !(c >= 0.0 && r_from_bottom >= 0.0) {
            return None;
        }
        let (c, rb) = (c as usize, r_from_bottom as usize);
        if c >= self.ncols || rb >= self.nrows {
            return None;
        }
        Some((self.nrows - 1 - rb, c))
    }

    /// Like [`cell_of`](Self::cell_of) but clamps outside points to the
    /// nearest edge cell.
    pub fn cell_of_clamped(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.xllcorner) / self.cellsize).floor();
        let rb = ((y - self.yllcorner) / self.cellsize).floor();
        let c = c.clamp(0.0, (self.ncols - 1) as f64) as usize;
        let rb = rb.clamp(0.0, (self.nrows - 1) as f64) as usize;
        (self.nrows - 1 - rb, c)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xllcorner + (col as f64 + 0.5) * self.cellsize,
            self.yllcorner + ((self.nrows - row) as f64 - 0.5) * self.cellsize,
        )
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }
}

impl AsciiGrid {
    pub fn filled(geometry: GridGeometry, value: f64, nodata_value: f64) -> Self {
        Self {
            ncols: geometry.ncols,
            nrows: geometry.nrows,
            xllcorner: geometry.xllcorner,
            yllcorner: geometry.yllcorner,
            cellsize: geometry.cellsize,
            nodata_value,
            values: vec![value; geometry.len()],
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            ncols: self.ncols,
            nrows: self.nrows,
            xllcorner: self.xllcorner,
            yllcorner: self.yllcorner,
            cellsize: self.cellsize,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return Err(GridError::Invalid(format!(
                "cellsize must be positive, got {}",
                self.cellsize
            )));
        }
        if self.values.len() != self.ncols * self.nrows {
            return Err(GridError::Invalid(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.ncols,
                self.nrows
            )));
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata_value || v.is_nan()
    }

    /// Value at `(x, y)`, `None` outside the grid or on NODATA.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (r, c) = self.geometry().cell_of(x, y)?;
        let v = self.get(r, c);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().enumerate().peekable();
        let mut header: [Option<f64>; 6] = [None; 6];
        const KEYS: [&str; 6] = [
            "ncols",
            "nrows",
            "xllcorner",
            "yllcorner",
            "cellsize",
            "nodata_value",
        ];
        while let Some((i, line)) = lines.peek().copied() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            let key = key.to_ascii_lowercase();
            let Some(slot) = KEYS.iter().position(|k| *k == key) else {
                break;
            };
            let value = parts
                .next()
                .ok_or_else(|| GridError::Parse {
                    line: i + 1,
                    msg: format!("missing value for {key}"),
                })?
                .parse::<f64>()
                .map_err(|e| GridError::Parse {
                    line: i + 1,
                    msg: format!("bad {key}: {e}"),
                })?;
            header[slot] = Some(value);
            lines.next();
        }
        for (slot, key) in KEYS.iter().enumerate().take(5) {
            if header[slot].is_none() {
                return Err(GridError::Parse {
                    line: 1,
                    msg: format!("missing header key {key}"),
                });
            }
        }
        let ncols = header[0].unwrap();
        let nrows = header[1].unwrap();
        if ncols < 0.0 || nrows < 0.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
            return Err(GridError::Parse {
                line: 1,
                msg: "ncols/nrows must be non-negative integers".into(),
            });
        }
        let (ncols, nrows) = (ncols as usize, nrows as usize);
        let mut values = Vec::with_capacity(ncols * nrows);
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|e| GridError::Parse {
                    line: i + 1,
                    msg: format!("bad value {tok:?}: {e}"),
                })?;
                values.push(v);
            }
        }
        let grid = Self {
            ncols,
            nrows,
            xllcorner: header[2].unwrap(),
            yllcorner: header[3].unwrap(),
            cellsize: header[4].unwrap(),
            nodata_value: header[5].unwrap_or(-9999.0),
            values,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 4 + 128);
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xllcorner);
        let _ = writeln!(out, "yllcorner {}", self.yllcorner);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata_value);
        for row in self.values.chunks(self.ncols.max(1)) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                if v.is_nan() {
                    let _ = write!(out, "{}", self.nodata_value);
                } else {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "ncols 3\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 0.5\nNODATA_value -9999\n1 2 3\n4 -9999 6\n";

    #[test]
    fn parse_and_write() {
        let g = AsciiGrid::parse(SAMPLE).unwrap();
        assert_eq!((g.ncols, g.nrows), (3, 2));
        assert_eq!(g.get(1, 1), -9999.0);
        assert_eq!(g.to_text(), SAMPLE);
    }

    #[test]
    fn header_keys_are_case_insensitive() {
        let text = SAMPLE.replace("ncols", "NCOLS").replace("NODATA_value", "nodata_value");
        assert!(AsciiGrid::parse(&text).is_ok());
    }

    #[test]
    fn bad_value_reports_line() {
        let text = SAMPLE.replace("4 -9999 6", "4 x 6");
        match AsciiGrid::parse(&text) {
            Err(GridError::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_value_count_rejected() {
        let text = SAMPLE.replace("4 -9999 6\n", "4 5\n");
        assert!(matches!(AsciiGrid::parse(&text), Err(GridError::Invalid(_))));
    }

    #[test]
    fn zero_cellsize_rejected() {
        let text = SAMPLE.replace("cellsize 0.5", "cellsize 0");
        assert!(AsciiGrid::parse(&text).is_err());
    }

    #[test]
    fn cell_lookup_is_north_up() {
        let g = AsciiGrid::parse(SAMPLE).unwrap();
        let geo = g.geometry();
        // Top-left cell spans x [10, 10.5), y [20.5, 21).
        assert_eq!(geo.cell_of(10.1, 20.9), Some((0, 0)));
        assert_eq!(geo.cell_of(10.1, 20.1), Some((1, 0)));
        assert_eq!(geo.cell_of(11.4, 20.1), Some((1, 2)));
        assert_eq!(geo.cell_of(11.5, 20.1), None);
        assert_eq!(geo.cell_of(9.99, 20.1), None);
        assert_eq!(geo.cell_center(0, 0), (10.25, 20.75));
        assert_eq!(g.sample(10.6, 20.2), None);
        assert_eq!(g.sample(10.6, 20.7), Some(2.0));
    }

    #[test]
    fn covering_contains_all_points() {
        let pts = [(0.2, 0.3), (3.7, 1.1), (1.0, 4.99)];
        let geo = GridGeometry::covering(pts, 0.5).unwrap();
        for (x, y) in pts {
            assert!(geo.cell_of(x, y).is_some());
        }
        assert_eq!(geo.xllcorner, 0.0);
        assert_eq!(geo.ncols, 8);
        assert_eq!(geo.nrows, 10);
    }
}
