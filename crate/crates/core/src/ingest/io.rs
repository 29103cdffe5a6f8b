//! `points.csv` and `labels.csv`.
//!
//! Both files are UTF-8, comma separated, `.` decimal separator, with an
//! exact header line. An empty field means "absent".

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::{io_err, IngestError};
use crate::model::{
    CrownClass, FusedPoint, PointRecord, ProfileCategory, SegmentLabel, Species, Split,
};

pub const POINTS_HEADER: [&str; 10] = [
    "segment_id",
    "x",
    "y",
    "z",
    "channel",
    "reflectance",
    "amplitude",
    "echo_deviation",
    "return_number",
    "num_returns",
];

pub const LABELS_HEADER: [&str; 5] = [
    "segment_id",
    "species_code",
    "profile_category",
    "crown_class",
    "split",
];

const FUSED_EXTRA: [&str; 3] = ["refl_c1", "refl_c2", "refl_c3"];

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input)
}

fn check_header(record: &StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let found: Vec<&str> = record.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::BadHeader {
            found: found.join(","),
            expected: expected.join(","),
        });
    }
    Ok(())
}

struct Row<'a> {
    record: &'a StringRecord,
    line: u64,
}

impl Row<'_> {
    fn field(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("").trim()
    }

    fn malformed(&self, msg: impl Into<String>) -> IngestError {
        IngestError::MalformedRow {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn violation(&self, msg: impl Into<String>) -> IngestError {
        IngestError::InvariantViolation {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn f64(&self, i: usize, name: &str) -> Result<f64, IngestError> {
        let s = self.field(i);
        if s.is_empty() {
            return Err(self.malformed(format!("{name} is required")));
        }
        s.parse::<f64>()
            .map_err(|e| self.malformed(format!("{name}={s:?}: {e}")))
    }

    fn opt_f64(&self, i: usize, name: &str) -> Result<Option<f64>, IngestError> {
        let s = self.field(i);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|e| self.malformed(format!("{name}={s:?}: {e}")))
    }

    fn int(&self, i: usize, name: &str) -> Result<i64, IngestError> {
        let s = self.field(i);
        s.parse::<i64>()
            .map_err(|e| self.malformed(format!("{name}={s:?}: {e}")))
    }
}

/// Parses `points.csv` content, keeping row order.
pub fn parse_points<R: Read>(input: R) -> Result<Vec<(u32, PointRecord)>, IngestError> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => check_header(&header?, &POINTS_HEADER)?,
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        let row = Row { record: &rec, line };
        if rec.len() != POINTS_HEADER.len() {
            return Err(row.malformed(format!(
                "expected {} fields, found {}",
                POINTS_HEADER.len(),
                rec.len()
            )));
        }
        let segment_id = row.int(0, "segment_id")?;
        let segment_id = u32::try_from(segment_id)
            .map_err(|_| row.violation(format!("segment_id {segment_id} out of range")))?;
        let x = row.f64(1, "x")?;
        let y = row.f64(2, "y")?;
        let z = row.f64(3, "z")?;
        let channel = row.int(4, "channel")?;
        let reflectance = row.f64(5, "reflectance")?;
        let amplitude = row.opt_f64(6, "amplitude")?;
        let echo_deviation = row.opt_f64(7, "echo_deviation")?;
        let return_number = row.int(8, "return_number")?;
        let num_returns = row.int(9, "num_returns")?;
        if !(1..=3).contains(&channel) {
            return Err(row.violation(format!("channel {channel} outside 1..=3")));
        }
        if return_number < 1 || return_number > num_returns || num_returns > u8::MAX as i64 {
            return Err(row.violation(format!(
                "return_number {return_number} / num_returns {num_returns}"
            )));
        }
        let point = PointRecord {
            x,
            y,
            z,
            channel: channel as u8,
            reflectance,
            amplitude,
            echo_deviation,
            return_number: return_number as u8,
            num_returns: num_returns as u8,
        };
        point
            .validate()
            .map_err(|e| row.violation(e.to_string()))?;
        out.push((segment_id, point));
    }
    Ok(out)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<(u32, PointRecord)>, IngestError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_points(BufReader::new(f))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn point_fields(segment_id: u32, p: &PointRecord) -> [String; 10] {
    [
        segment_id.to_string(),
        p.x.to_string(),
        p.y.to_string(),
        p.z.to_string(),
        p.channel.to_string(),
        p.reflectance.to_string(),
        opt(p.amplitude),
        opt(p.echo_deviation),
        p.return_number.to_string(),
        p.num_returns.to_string(),
    ]
}

pub fn write_points<W: Write>(out: W, points: &[(u32, PointRecord)]) -> Result<(), IngestError> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record(POINTS_HEADER)?;
    for (id, p) in points {
        w.write_record(point_fields(*id, p))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Points plus the fused per-channel reflectance columns (empty = NA).
pub fn write_fused_points<W: Write>(
    out: W,
    points: &[(u32, FusedPoint)],
) -> Result<(), IngestError> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record(POINTS_HEADER.iter().chain(FUSED_EXTRA.iter()))?;
    for (id, p) in points {
        let base = point_fields(*id, &p.point);
        let extra = p.refl.map(opt);
        w.write_record(base.iter().chain(extra.iter()))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses `labels.csv`. Category and split fields may be empty.
pub fn parse_labels<R: Read>(input: R) -> Result<Vec<SegmentLabel>, IngestError> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => check_header(&header?, &LABELS_HEADER)?,
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        let row = Row { record: &rec, line };
        if rec.len() != LABELS_HEADER.len() {
            return Err(row.malformed(format!(
                "expected {} fields, found {}",
                LABELS_HEADER.len(),
                rec.len()
            )));
        }
        let segment_id = row.int(0, "segment_id")?;
        let segment_id = u32::try_from(segment_id)
            .map_err(|_| row.violation(format!("segment_id {segment_id} out of range")))?;
        let code = row.int(1, "species_code")?;
        let species = Species::from_code(code).map_err(|e| row.violation(e.to_string()))?;
        let profile_category =
            ProfileCategory::parse_field(row.field(2)).map_err(|e| row.violation(e.to_string()))?;
        let crown_class =
            CrownClass::parse_field(row.field(3)).map_err(|e| row.violation(e.to_string()))?;
        let split = Split::parse_field(row.field(4)).map_err(|e| row.violation(e.to_string()))?;
        out.push(SegmentLabel {
            segment_id,
            species,
            profile_category,
            crown_class,
            split,
        });
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<SegmentLabel>, IngestError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_labels(BufReader::new(f))
}

pub fn write_labels<W: Write>(out: W, labels: &[SegmentLabel]) -> Result<(), IngestError> {
    let mut w = WriterBuilder::new().from_writer(BufWriter::new(out));
    w.write_record(LABELS_HEADER)?;
    for l in labels {
        w.write_record([
            l.segment_id.to_string(),
            l.species.code().to_string(),
            l.profile_category.as_str().to_string(),
            l.crown_class.as_str().to_string(),
            l.split.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
