//! Orthographic depth images of a segment for image-based models.
//!
//! Seven views per segment: side views at azimuth 0°, 45°, 90° and 135°, a
//! top view, a bottom view, and a side-view close-up of the trunk slice
//! 1.0 m ≤ z ≤ 1.5 m. Each pixel keeps the nearest point; brightness falls
//! from 1.0 (nearest point of the view) to 1/255 (farthest), and empty
//! pixels are 0. The segment is scaled isotropically so its extent fills the
//! frame minus a 5% margin on every side.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{io_err, IngestError};
use crate::model::HasPosition;

pub const DEPTH_VIEW_COUNT: usize = 7;
const MARGIN: f64 = 0.05;
const TRUNK_SLICE: (f64, f64) = (1.0, 1.5);

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at the top.
    pub data: Vec<f32>,
}

impl DepthImage {
    fn empty(res: usize) -> Self {
        Self {
            width: res,
            height: res,
            data: vec![0.0; res * res],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn lit_pixels(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// A projected point: image-plane coordinates (m) and depth along the view.
struct Projected {
    u: f64,
    v: f64,
    depth: f64,
}

fn rasterize(projected: &[Projected], scale: f64, res: usize) -> DepthImage {
    let mut img = DepthImage::empty(res);
    if projected.is_empty() {
        return img;
    }
    let mut depth = vec![f64::INFINITY; res * res];
    let half = res as f64 / 2.0;
    let max = (res - 1) as f64;
    for p in projected {
        let col = (half + p.u * scale).floor().clamp(0.0, max) as usize;
        let row = (half - p.v * scale).floor().clamp(0.0, max) as usize;
        let d = &mut depth[row * res + col];
        if p.depth < *d {
            *d = p.depth;
        }
    }
    let (lo, hi) = depth
        .iter()
        .filter(|d| d.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let range = hi - lo;
    for (px, d) in img.data.iter_mut().zip(&depth) {
        if d.is_finite() {
            let t = if range > 0.0 { (d - lo) / range } else { 0.0 };
            *px = (1.0 - t * 254.0 / 255.0) as f32;
        }
    }
    img
}

struct Frame {
    cx: f64,
    cy: f64,
    zmin: f64,
    zmax: f64,
    radius: f64,
}

impl Frame {
    fn of(points: &[[f64; 3]]) -> Option<Self> {
        let first = points.first()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let cx = 0.5 * (lo[0] + hi[0]);
        let cy = 0.5 * (lo[1] + hi[1]);
        let radius = points
            .iter()
            .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
            .fold(0.0, f64::max);
        Some(Self {
            cx,
            cy,
            zmin: lo[2],
            zmax: hi[2],
            radius,
        })
    }

    fn scale(&self, res: usize, min_vertical_span: f64) -> f64 {
        let span = (2.0 * self.radius)
            .max(self.zmax - self.zmin)
            .max(min_vertical_span);
        if span > 0.0 {
            res as f64 * (1.0 - 2.0 * MARGIN) / span
        } else {
            1.0
        }
    }

    fn side(&self, points: &[[f64; 3]], azimuth_deg: f64, zmid: f64) -> Vec<Projected> {
        let (s, c) = azimuth_deg.to_radians().sin_cos();
        points
            .iter()
            .map(|p| {
                let dx = p[0] - self.cx;
                let dy = p[1] - self.cy;
                Projected {
                    u: -s * dx + c * dy,
                    v: p[2] - zmid,
                    depth: c * dx + s * dy + self.radius,
                }
            })
            .collect()
    }
}

/// Renders the seven depth views at `resolution × resolution` pixels.
pub fn render_depth_views<P: HasPosition>(points: &[P], resolution: usize) -> Vec<DepthImage> {
    assert!(resolution > 0);
    let coords: Vec<[f64; 3]> = points.iter().map(HasPosition::position).collect();
    let Some(frame) = Frame::of(&coords) else {
        return vec![DepthImage::empty(resolution); DEPTH_VIEW_COUNT];
    };
    let scale = frame.scale(resolution, 0.0);
    let zmid = 0.5 * (frame.zmin + frame.zmax);
    let mut views = Vec::with_capacity(DEPTH_VIEW_COUNT);
    for az in [0.0, 45.0, 90.0, 135.0] {
        views.push(rasterize(&frame.side(&coords, az, zmid), scale, resolution));
    }
    let top: Vec<Projected> = coords
        .iter()
        .map(|p| Projected {
            u: p[0] - frame.cx,
            v: p[1] - frame.cy,
            depth: frame.zmax - p[2],
        })
        .collect();
    views.push(rasterize(&top, scale, resolution));
    let bottom: Vec<Projected> = coords
        .iter()
        .map(|p| Projected {
            u: -(p[0] - frame.cx),
            v: p[1] - frame.cy,
            depth: p[2] - frame.zmin,
        })
        .collect();
    views.push(rasterize(&bottom, scale, resolution));

    let slice: Vec<[f64; 3]> = coords
        .iter()
        .copied()
        .filter(|p| p[2] >= TRUNK_SLICE.0 && p[2] <= TRUNK_SLICE.1)
        .collect();
    let closeup = match Frame::of(&slice) {
        Some(f) => {
            let s = f.scale(resolution, TRUNK_SLICE.1 - TRUNK_SLICE.0);
            let mid = 0.5 * (TRUNK_SLICE.0 + TRUNK_SLICE.1);
            rasterize(&f.side(&slice, 0.0, mid), s, resolution)
        }
        None => DepthImage::empty(resolution),
    };
    views.push(closeup);
    views
}

/// Writes `seg<id>_view<k>.png` (8-bit grayscale) for each view; returns
/// the paths in view order.
pub fn write_depth_views(
    dir: &Path,
    segment_id: u32,
    views: &[DepthImage],
) -> Result<Vec<PathBuf>, IngestError> {
    let mut paths = Vec::with_capacity(views.len());
    for (k, img) in views.iter().enumerate() {
        let path = dir.join(format!("seg{segment_id}_view{k}.png"));
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| IngestError::Png(e.to_string()))?;
        w.write_image_data(&img.to_gray8())
            .map_err(|e| IngestError::Png(e.to_string()))?;
        w.finish().map_err(|e| IngestError::Png(e.to_string()))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_lights_center() {
        let views = render_depth_views(&[[3.0, 4.0, 1.2]], 256);
        assert_eq!(views.len(), 7);
        for v in &views {
            assert_eq!(v.lit_pixels(), 1);
        }
        for v in &views[..6] {
            assert_eq!(v.get(128, 128), 1.0);
        }
        // Close-up is centred on the slice (z = 1.25) at 0.9 · 256 px per 0.5 m.
        assert_eq!(views[6].get(151, 128), 1.0);
        let above = render_depth_views(&[[3.0, 4.0, 5.0]], 256);
        assert_eq!(above[6].lit_pixels(), 0);
    }

    #[test]
    fn vertical_line() {
        let pts: Vec<[f64; 3]> = (0..100).map(|i| [1.0, 1.0, i as f64 * 0.1]).collect();
        let views = render_depth_views(&pts, 256);
        for v in &views[..4] {
            let cols: std::collections::BTreeSet<usize> = (0..256 * 256)
                .filter(|&i| v.data[i] > 0.0)
                .map(|i| i % 256)
                .collect();
            assert_eq!(cols.len(), 1);
        }
        assert_eq!(views[4].lit_pixels(), 1);
        assert_eq!(views[5].lit_pixels(), 1);
    }

    #[test]
    fn nearest_point_is_brightest() {
        // Two points on the same pixel ray of the top view.
        let pts = [[0.0, 0.0, 1.0], [0.0, 0.0, 5.0], [1.0, 0.0, 3.0]];
        let views = render_depth_views(&pts, 64);
        let top = &views[4];
        assert_eq!(top.lit_pixels(), 2);
        assert!(top.data.iter().any(|&v| v == 1.0));
    }

    #[test]
    fn png_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let views = render_depth_views(&[[0.0, 0.0, 1.2], [0.5, 0.5, 3.0]], 32);
        let paths = write_depth_views(dir.path(), 17, &views).unwrap();
        assert_eq!(paths.len(), 7);
        assert!(paths[3].ends_with("seg17_view3.png"));
        assert!(paths.iter().all(|p| p.exists()));
    }
}
