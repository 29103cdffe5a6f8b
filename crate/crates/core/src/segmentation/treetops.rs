use serde::{Deserialize, Serialize};

use super::chm::Chm;
use crate::exec;
use crate::grid::AsciiGrid;

/// A local maximum of the smoothed canopy height model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeTop {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    /// Smoothed canopy height at the top (m).
    pub height: f64,
}

/// Side of the square smoothing / search window in pixels for a canopy
/// height `h`: 3 below 7 m, 5 below 20 m, 7 below 30 m and 9 above.
pub fn window_for_height(h: f64) -> usize {
    if h < 7.0 {
        3
    } else if h < 20.0 {
        5
    } else if h < 30.0 {
        7
    } else {
        9
    }
}

const WINDOWS: [usize; 4] = [3, 5, 7, 9];

/// Smoothed values this close (relative) count as equal; renormalized edge
/// sums of a flat surface differ in the last bits.
const TIE_EPS: f64 = 1e-12;

/// `w × w` Gaussian weights with σ = w/6, row-major.
fn kernel(w: usize) -> Vec<f64> {
    let sigma = w as f64 / 6.0;
    let half = (w / 2) as isize;
    let mut k = Vec::with_capacity(w * w);
    for dr in -half..=half {
        for dc in -half..=half {
            let d2 = (dr * dr + dc * dc) as f64;
            k.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    k
}

/// Gaussian smoothing with a window chosen per cell from its raw height.
/// Weights are renormalized over in-bounds, valid cells; NODATA cells stay
/// NODATA.
pub fn smooth_chm(chm: &Chm) -> AsciiGrid {
    let g = chm.grid();
    let kernels: Vec<Vec<f64>> = WINDOWS.iter().map(|&w| kernel(w)).collect();
    let (nrows, ncols) = (g.nrows as isize, g.ncols as isize);
    let values = exec::map_range(g.values.len(), |i| {
        let raw = g.values[i];
        if g.is_nodata(raw) {
            return g.nodata_value;
        }
        let w = window_for_height(raw.max(0.0));
        let k = &kernels[WINDOWS.iter().position(|&x| x == w).unwrap()];
        let half = (w / 2) as isize;
        let (r, c) = ((i / g.ncols) as isize, (i % g.ncols) as isize);
        let (mut sum, mut wsum) = (0.0, 0.0);
        let mut ki = 0;
        for dr in -half..=half {
            for dc in -half..=half {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && rr < nrows && cc >= 0 && cc < ncols {
                    let v = g.values[(rr * ncols + cc) as usize];
                    if !g.is_nodata(v) {
                        sum += k[ki] * v;
                        wsum += k[ki];
                    }
                }
                ki += 1;
            }
        }
        sum / wsum
    });
    AsciiGrid {
        values,
        ..g.clone()
    }
}

/// Tree tops of a canopy height model (see [`detect_treetops_on`]).
pub fn detect_treetops(chm: &Chm, min_height: f64) -> Vec<TreeTop> {
    let smoothed = smooth_chm(chm);
    detect_treetops_on(chm, &smoothed, min_height)
}

/// A cell is a top when its smoothed value is at least `min_height`, no
/// smaller than any smoothed value in its height-dependent window, clearly
/// greater than at least one of them, and no equal neighbor precedes it in
/// row-major order. Results are in row-major order.
pub fn detect_treetops_on(chm: &Chm, smoothed: &AsciiGrid, min_height: f64) -> Vec<TreeTop> {
    let g = chm.grid();
    let geo = g.geometry();
    let (nrows, ncols) = (g.nrows as isize, g.ncols as isize);
    let is_top = exec::map_range(g.values.len(), |i| {
        let raw = g.values[i];
        let s = smoothed.values[i];
        if g.is_nodata(raw) || smoothed.is_nodata(s) || s < min_height {
            return false;
        }
        let half = (window_for_height(raw.max(0.0)) / 2) as isize;
        let (r, c) = ((i / g.ncols) as isize, (i % g.ncols) as isize);
        let mut strict = false;
        for rr in (r - half).max(0)..=(r + half).min(nrows - 1) {
            for cc in (c - half).max(0)..=(c + half).min(ncols - 1) {
                let j = (rr * ncols + cc) as usize;
                if j == i {
                    continue;
                }
                let v = smoothed.values[j];
                if smoothed.is_nodata(v) {
                    continue;
                }
                let tie = (v - s).abs() <= TIE_EPS * s.abs().max(1.0);
                if (v > s && !tie) || (tie && j < i) {
                    return false;
                }
                if v < s && !tie {
                    strict = true;
                }
            }
        }
        strict
    });
    is_top
        .iter()
        .enumerate()
        .filter(|(_, &t)| t)
        .map(|(i, _)| {
            let (row, col) = (i / g.ncols, i % g.ncols);
            let (x, y) = geo.cell_center(row, col);
            TreeTop {
                row,
                col,
                x,
                y,
                height: smoothed.values[i],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    pub(crate) fn chm_from(f: impl Fn(f64, f64) -> f64, n: usize) -> Chm {
        let geo = GridGeometry {
            ncols: n,
            nrows: n,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 0.5,
        };
        let mut g = AsciiGrid::filled(geo, 0.0, -9999.0);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = geo.cell_center(r, c);
                g.set(r, c, f(x, y));
            }
        }
        Chm(g)
    }

    #[test]
    fn window_sizes() {
        assert_eq!(window_for_height(0.0), 3);
        assert_eq!(window_for_height(5.0), 3);
        assert_eq!(window_for_height(7.0), 5);
        assert_eq!(window_for_height(19.99), 5);
        assert_eq!(window_for_height(20.0), 7);
        assert_eq!(window_for_height(25.0), 7);
        assert_eq!(window_for_height(30.0), 9);
        assert_eq!(window_for_height(35.0), 9);
    }

    #[test]
    fn single_bump_single_top() {
        let chm = chm_from(
            |x, y| 10.0 * (-((x - 5.25).powi(2) + (y - 5.25).powi(2)) / 4.0).exp(),
            21,
        );
        let tops = detect_treetops(&chm, 2.0);
        assert_eq!(tops.len(), 1);
        assert_eq!((tops[0].x, tops[0].y), (5.25, 5.25));
    }

    #[test]
    fn flat_chm_has_no_tops() {
        let chm = chm_from(|_, _| 10.0, 15);
        assert!(detect_treetops(&chm, 2.0).is_empty());
    }

    #[test]
    fn low_bump_filtered() {
        let chm = chm_from(
            |x, y| 1.5 * (-((x - 5.25).powi(2) + (y - 5.25).powi(2)) / 4.0).exp(),
            21,
        );
        assert!(detect_treetops(&chm, 2.0).is_empty());
    }

    #[test]
    fn smoothing_preserves_constant() {
        let chm = chm_from(|_, _| 4.0, 7);
        let s = smooth_chm(&chm);
        assert!(s.values.iter().all(|v| (v - 4.0).abs() < 1e-12));
    }
}
