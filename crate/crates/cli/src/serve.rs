//! HTTP label service for desk annotation.
//!
//! Labels are appended to a JSON-lines journal that is rewritten atomically
//! (temporary file, then rename) by a single writer thread. The exported
//! label table is a fold over the journal: per segment the latest verified
//! record wins, otherwise the latest proposal.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

use canopy_core::segmentation::{boundaries_to_geojson, trace_boundaries, SegmentRaster};
use canopy_core::{AsciiGrid, Species};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelStatus {
    Proposed,
    Verified,
}

impl LabelStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelStatus::Proposed => "proposed",
            LabelStatus::Verified => "verified",
        }
    }
}

/// One annotation as posted by a client. Species code 0 means unknown or
/// skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub segment_id: u32,
    pub species_code: u8,
    #[serde(default)]
    pub note: String,
    pub annotator: String,
    /// RFC 3339 in UTC, kept verbatim.
    pub timestamp: String,
    pub status: LabelStatus,
}

impl LabelRecord {
    pub fn validate(&self, segments: &BTreeSet<u32>) -> Result<(), String> {
        if self.species_code > 9 {
            return Err(format!("species_code {} outside 0..=9", self.species_code));
        }
        if !segments.contains(&self.segment_id) {
            return Err(format!("unknown segment_id {}", self.segment_id));
        }
        if self.annotator.trim().is_empty() {
            return Err("annotator must not be empty".into());
        }
        let ts = chrono::DateTime::parse_from_rfc3339(&self.timestamp)
            .map_err(|e| format!("timestamp {:?}: {e}", self.timestamp))?;
        if ts.offset().local_minus_utc() != 0 {
            return Err(format!("timestamp {:?} is not UTC", self.timestamp));
        }
        Ok(())
    }
}

/// Active record per segment: a later record replaces an earlier one unless
/// the earlier one is verified and the later one only proposed.
pub fn active_labels(journal: &[LabelRecord]) -> BTreeMap<u32, LabelRecord> {
    let mut out: BTreeMap<u32, LabelRecord> = BTreeMap::new();
    for r in journal {
        let keep_old = out.get(&r.segment_id).is_some_and(|old| {
            old.status == LabelStatus::Verified && r.status == LabelStatus::Proposed
        });
        if !keep_old {
            out.insert(r.segment_id, r.clone());
        }
    }
    out
}

pub fn labels_csv(journal: &[LabelRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment_id", "species_code", "note", "annotator", "timestamp", "status"])?;
    for r in active_labels(journal).values() {
        w.write_record([
            r.segment_id.to_string(),
            r.species_code.to_string(),
            r.note.clone(),
            r.annotator.clone(),
            r.timestamp.clone(),
            r.status.as_str().to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn read_journal(path: &Path) -> Result<Vec<LabelRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Holds `segments.grid` and optionally `chm.grid`, `basemap.png` and
    /// `scores.csv` (`segment_id,score`).
    pub dataset: PathBuf,
    /// Default `<dataset>/labels_journal.jsonl`.
    pub journal: Option<PathBuf>,
    /// Built UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
}

type WriteRequest = (LabelRecord, oneshot::Sender<Result<(), String>>);

struct AppState {
    geojson: String,
    segment_ids: BTreeSet<u32>,
    chm: PathBuf,
    basemap: PathBuf,
    journal: Arc<RwLock<Vec<LabelRecord>>>,
    writer: mpsc::Sender<WriteRequest>,
}

fn read_scores(path: &Path) -> Result<BTreeMap<u32, f64>> {
    let mut out = BTreeMap::new();
    if path.exists() {
        for row in csv::Reader::from_path(path)?.deserialize::<(u32, f64)>() {
            let (id, s) = row.with_context(|| format!("reading {}", path.display()))?;
            out.insert(id, s);
        }
    }
    Ok(out)
}

fn write_atomically(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        for l in lines {
            f.write_all(l.as_bytes())?;
            f.write_all(b"\n")?;
        }
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// The only code that touches the journal file.
fn spawn_writer(path: PathBuf, journal: Arc<RwLock<Vec<LabelRecord>>>) -> mpsc::Sender<WriteRequest> {
    let (tx, mut rx) = mpsc::channel::<WriteRequest>(256);
    std::thread::spawn(move || {
        let mut lines: Vec<String> = journal
            .read()
            .unwrap()
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes"))
            .collect();
        while let Some((record, reply)) = rx.blocking_recv() {
            lines.push(serde_json::to_string(&record).expect("record serializes"));
            let res = write_atomically(&path, &lines).map_err(|e| format!("journal write failed: {e}"));
            match &res {
                Ok(()) => journal.write().unwrap().push(record),
                Err(_) => {
                    lines.pop();
                }
            }
            let _ = reply.send(res);
        }
    });
    tx
}

/// Builds the service router. Fails if the dataset has no segment raster or
/// the journal is unreadable.
pub fn build_app(cfg: &ServiceConfig) -> Result<Router> {
    let grid_path = cfg.dataset.join("segments.grid");
    if !grid_path.exists() {
        bail!("{} not found", grid_path.display());
    }
    let raster = SegmentRaster::from_grid(AsciiGrid::read(&grid_path)?)?;
    let scores = read_scores(&cfg.dataset.join("scores.csv"))?;
    let geo = boundaries_to_geojson(&trace_boundaries(&raster), |id| {
        scores.get(&id).map(|s| {
            let mut m = serde_json::Map::new();
            m.insert("score".into(), json!(s));
            m
        })
    });
    let journal_path = cfg
        .journal
        .clone()
        .unwrap_or_else(|| cfg.dataset.join("labels_journal.jsonl"));
    let journal = Arc::new(RwLock::new(read_journal(&journal_path)?));
    let writer = spawn_writer(journal_path, journal.clone());
    let state = Arc::new(AppState {
        geojson: geo.to_string(),
        segment_ids: raster.ids().into_iter().collect(),
        chm: cfg.dataset.join("chm.grid"),
        basemap: cfg.dataset.join("basemap.png"),
        journal,
        writer,
    });
    let api = Router::new()
        .route("/api/segments", get(segments))
        .route("/api/chm.grid", get(chm))
        .route("/api/basemap.png", get(basemap))
        .route("/api/labels.csv", get(export))
        .route("/api/labels", post(submit))
        .route("/api/progress", get(progress))
        .with_state(state);
    Ok(match &cfg.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    })
}

fn error(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(json!({ "error": reason.into() }))).into_response()
}

async fn segments(State(s): State<Arc<AppState>>) -> Response {
    ([(header::CONTENT_TYPE, "application/geo+json")], s.geojson.clone()).into_response()
}

async fn file_or_404(path: &Path, content_type: &'static str) -> Response {
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type)], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("{} not available", path.file_name().unwrap_or_default().to_string_lossy())),
    }
}

async fn chm(State(s): State<Arc<AppState>>) -> Response {
    file_or_404(&s.chm, "text/plain").await
}

async fn basemap(State(s): State<Arc<AppState>>) -> Response {
    file_or_404(&s.basemap, "image/png").await
}

async fn export(State(s): State<Arc<AppState>>) -> Response {
    let journal = s.journal.read().unwrap().clone();
    match labels_csv(&journal) {
        Ok(text) => ([(header::CONTENT_TYPE, "text/csv")], text).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn submit(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    let record: LabelRecord = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed label record: {e}")),
    };
    if let Err(reason) = record.validate(&s.segment_ids) {
        return error(StatusCode::BAD_REQUEST, reason);
    }
    let (tx, rx) = oneshot::channel();
    if s.writer.send((record.clone(), tx)).await.is_err() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "journal writer stopped");
    }
    match rx.await {
        Ok(Ok(())) => (StatusCode::CREATED, Json(record)).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "journal writer stopped"),
    }
}

/// Species metadata in code order, code 0 first.
pub fn species_metadata() -> Vec<Value> {
    let mut out = vec![json!({ "code": 0, "name": "unknown" })];
    out.extend(Species::ALL.iter().map(|sp| json!({ "code": sp.code(), "name": sp.name() })));
    out
}

async fn progress(State(s): State<Arc<AppState>>) -> Response {
    let journal = s.journal.read().unwrap().clone();
    let active = active_labels(&journal);
    let mut by_status = BTreeMap::from([("proposed", 0usize), ("verified", 0usize)]);
    let mut by_species: BTreeMap<String, usize> = (0..=9).map(|c| (c.to_string(), 0)).collect();
    for r in active.values() {
        *by_status.entry(r.status.as_str()).or_default() += 1;
        *by_species.entry(r.species_code.to_string()).or_default() += 1;
    }
    Json(json!({
        "total_segments": s.segment_ids.len(),
        "labeled": active.len(),
        "unlabeled": s.segment_ids.len() - active.len(),
        "journal_records": journal.len(),
        "by_status": by_status,
        "by_species": by_species,
        "species": species_metadata(),
    }))
    .into_response()
}

/// Serves until Ctrl-C.
pub async fn serve_labels(cfg: ServiceConfig, addr: SocketAddr) -> Result<()> {
    let app = build_app(&cfg)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr} (port busy?)"))?;
    log::info!("label service on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u32, code: u8, status: LabelStatus, ts: &str) -> LabelRecord {
        LabelRecord {
            segment_id: id,
            species_code: code,
            note: String::new(),
            annotator: "a".into(),
            timestamp: ts.into(),
            status,
        }
    }

    #[test]
    fn verification_supersedes_later_proposal() {
        let j = vec![
            rec(1, 2, LabelStatus::Proposed, "2024-01-01T00:00:00Z"),
            rec(1, 3, LabelStatus::Verified, "2024-01-02T00:00:00Z"),
            rec(1, 4, LabelStatus::Proposed, "2024-01-03T00:00:00Z"),
            rec(2, 5, LabelStatus::Proposed, "2024-01-01T00:00:00Z"),
            rec(2, 6, LabelStatus::Proposed, "2024-01-02T00:00:00Z"),
        ];
        let a = active_labels(&j);
        assert_eq!(a[&1].species_code, 3);
        assert_eq!(a[&2].species_code, 6);
    }

    #[test]
    fn validation() {
        let ids: BTreeSet<u32> = [1].into_iter().collect();
        assert!(rec(1, 0, LabelStatus::Proposed, "2024-05-01T10:00:00Z").validate(&ids).is_ok());
        assert!(rec(1, 9, LabelStatus::Proposed, "2024-05-01T10:00:00+00:00").validate(&ids).is_ok());
        assert!(rec(1, 10, LabelStatus::Proposed, "2024-05-01T10:00:00Z").validate(&ids).is_err());
        assert!(rec(2, 1, LabelStatus::Proposed, "2024-05-01T10:00:00Z").validate(&ids).is_err());
        assert!(rec(1, 1, LabelStatus::Proposed, "2024-05-01T10:00:00+02:00").validate(&ids).is_err());
        assert!(rec(1, 1, LabelStatus::Proposed, "yesterday").validate(&ids).is_err());
    }

    #[test]
    fn csv_quotes_notes() {
        let mut r = rec(4, 1, LabelStatus::Verified, "2024-05-01T10:00:00Z");
        r.note = "two stems, \"maybe\" pine".into();
        let text = labels_csv(&[r]).unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let row = rd.records().next().unwrap().unwrap();
        assert_eq!(&row[2], "two stems, \"maybe\" pine");
        assert_eq!(&row[5], "verified");
    }
}
