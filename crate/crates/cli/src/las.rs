//! Reader for uncompressed LAS 1.0–1.2 files, point formats 0–3.
//!
//! Multispectral sensors deliver one file per channel, so the channel is
//! supplied by the caller. LAS intensity becomes the reflectance value;
//! amplitude and echo deviation are not part of these formats.

use std::path::Path;

use anyhow::{bail, Context, Result};

use canopy_core::PointRecord;

const HEADER_MIN: usize = 227;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn i32_at(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LasHeader {
    pub version: (u8, u8),
    pub point_format: u8,
    pub record_length: usize,
    pub offset_to_points: usize,
    pub n_points: usize,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

pub fn parse_header(bytes: &[u8]) -> Result<LasHeader> {
    if bytes.len() < HEADER_MIN || &bytes[..4] != b"LASF" {
        bail!("not a LAS file");
    }
    let version = (bytes[24], bytes[25]);
    if version.0 != 1 || version.1 > 2 {
        bail!("LAS {}.{} is not supported (1.0 to 1.2 only)", version.0, version.1);
    }
    let point_format = bytes[104];
    if point_format > 3 {
        bail!("point data format {point_format} is not supported (0 to 3 only)");
    }
    let header = LasHeader {
        version,
        point_format,
        record_length: u16_at(bytes, 105) as usize,
        offset_to_points: u32_at(bytes, 96) as usize,
        n_points: u32_at(bytes, 107) as usize,
        scale: [f64_at(bytes, 131), f64_at(bytes, 139), f64_at(bytes, 147)],
        offset: [f64_at(bytes, 155), f64_at(bytes, 163), f64_at(bytes, 171)],
    };
    if header.record_length < 20 {
        bail!("point record length {} is too short", header.record_length);
    }
    Ok(header)
}

/// Decodes every point record. Return numbers of 0 (unset) become 1, and the
/// number of returns is raised to at least the return number.
pub fn parse_las(bytes: &[u8], channel: u8) -> Result<Vec<PointRecord>> {
    if !(1..=3).contains(&channel) {
        bail!("channel {channel} outside 1..=3");
    }
    let h = parse_header(bytes)?;
    let end = h.offset_to_points + h.n_points * h.record_length;
    if bytes.len() < end {
        bail!("file holds {} bytes, header promises {end}", bytes.len());
    }
    let mut out = Vec::with_capacity(h.n_points);
    for k in 0..h.n_points {
        let r = &bytes[h.offset_to_points + k * h.record_length..];
        let flags = r[14];
        let return_number = (flags & 0b111).max(1);
        let num_returns = ((flags >> 3) & 0b111).max(return_number);
        let p = PointRecord {
            x: i32_at(r, 0) as f64 * h.scale[0] + h.offset[0],
            y: i32_at(r, 4) as f64 * h.scale[1] + h.offset[1],
            z: i32_at(r, 8) as f64 * h.scale[2] + h.offset[2],
            channel,
            reflectance: u16_at(r, 12) as f64,
            amplitude: None,
            echo_deviation: None,
            return_number,
            num_returns,
        };
        p.validate().with_context(|| format!("point {k}"))?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_las(path: &Path, channel: u8) -> Result<Vec<PointRecord>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_las(&bytes, channel).with_context(|| format!("decoding {}", path.display()))
}

/// Minimal LAS 1.2 writer (format 0, no VLRs), used for fixtures.
pub fn write_las_bytes(points: &[PointRecord], scale: f64) -> Vec<u8> {
    let offset = [
        points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor(),
        points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor(),
        0.0,
    ];
    let mut b = vec![0u8; HEADER_MIN];
    b[..4].copy_from_slice(b"LASF");
    b[24] = 1;
    b[25] = 2;
    b[94..96].copy_from_slice(&(HEADER_MIN as u16).to_le_bytes());
    b[96..100].copy_from_slice(&(HEADER_MIN as u32).to_le_bytes());
    b[104] = 0;
    b[105..107].copy_from_slice(&20u16.to_le_bytes());
    b[107..111].copy_from_slice(&(points.len() as u32).to_le_bytes());
    for (i, at) in [131, 139, 147].into_iter().enumerate() {
        b[at..at + 8].copy_from_slice(&scale.to_le_bytes());
        b[155 + 8 * i..163 + 8 * i].copy_from_slice(&offset[i].to_le_bytes());
    }
    for p in points {
        for (v, o) in [p.x, p.y, p.z].iter().zip(offset) {
            b.extend_from_slice(&(((v - o) / scale).round() as i32).to_le_bytes());
        }
        b.extend_from_slice(&(p.reflectance.round().clamp(0.0, 65535.0) as u16).to_le_bytes());
        b.push((p.return_number & 0b111) | ((p.num_returns & 0b111) << 3));
        b.extend_from_slice(&[0u8; 5]);
    }
    b
}
