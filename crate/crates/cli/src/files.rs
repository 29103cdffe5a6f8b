//! Small file helpers shared by the stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use canopy_core::model::SegmentLabel;
use canopy_core::{FusedPoint, PointRecord, SegmentCloud};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// First candidate that exists on disk.
pub fn first_existing(candidates: &[PathBuf]) -> Result<PathBuf> {
    if let Some(p) = candidates.iter().find(|p| p.exists()) {
        return Ok(p.clone());
    }
    let list: Vec<String> = candidates.iter().map(|p| p.display().to_string()).collect();
    bail!("none of these inputs exist: {}", list.join(", "))
}

pub fn read_points(path: &Path) -> Result<Vec<(u32, PointRecord)>> {
    canopy_core::ingest::read_points(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_points(path: &Path, points: &[(u32, PointRecord)]) -> Result<()> {
    let mut w = create(path)?;
    canopy_core::ingest::write_points(&mut w, points)
        .with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<SegmentLabel>> {
    canopy_core::ingest::read_labels(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_labels(path: &Path, labels: &[SegmentLabel]) -> Result<()> {
    let w = create(path)?;
    canopy_core::ingest::write_labels(w, labels)
        .with_context(|| format!("writing {}", path.display()))
}

/// Writes `segment_id,footprint_area`.
pub fn write_footprints(path: &Path, segments: &[SegmentCloud]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["segment_id", "footprint_area"])?;
    for s in segments {
        w.write_record([s.segment_id.to_string(), s.footprint_area.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_footprints(path: &Path) -> Result<BTreeMap<u32, f64>> {
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(open(path)?).deserialize::<(u32, f64)>() {
        let (id, area) = row.with_context(|| format!("reading {}", path.display()))?;
        if !(area > 0.0 && area.is_finite()) {
            bail!("{}: segment {id} has footprint {area}", path.display());
        }
        out.insert(id, area);
    }
    Ok(out)
}

/// Segment clouds from `segment_points.csv` and `footprints.csv`, in
/// ascending id order. Points of id 0 are background and skipped.
pub fn load_segments(points: &Path, footprints: &Path) -> Result<Vec<SegmentCloud>> {
    let areas = read_footprints(footprints)?;
    let mut groups: BTreeMap<u32, Vec<FusedPoint>> = BTreeMap::new();
    for (id, p) in read_points(points)? {
        if id != 0 {
            groups.entry(id).or_default().push(FusedPoint::unfused(p));
        }
    }
    groups
        .into_iter()
        .map(|(id, pts)| {
            let area = areas
                .get(&id)
                .with_context(|| format!("segment {id} has no footprint in {}", footprints.display()))?;
            Ok(SegmentCloud::new(id, pts, *area))
        })
        .collect()
}

/// Flattens segments back into `(segment_id, point)` rows.
pub fn segment_rows(segments: &[SegmentCloud]) -> Vec<(u32, PointRecord)> {
    segments
        .iter()
        .flat_map(|s| s.points.iter().map(move |p| (s.segment_id, p.point)))
        .collect()
}
