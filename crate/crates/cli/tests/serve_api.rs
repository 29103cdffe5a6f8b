use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use canopy_cli::serve::{build_app, read_journal, ServiceConfig};
use canopy_core::grid::GridGeometry;
use canopy_core::AsciiGrid;

/// Three segments in a 4×3 raster, one background cell.
fn dataset(dir: &Path, with_chm: bool) {
    let geo = GridGeometry {
        ncols: 4,
        nrows: 3,
        xllcorner: 100.0,
        yllcorner: 200.0,
        cellsize: 0.5,
    };
    let mut g = AsciiGrid::filled(geo, 1.0, -9999.0);
    for c in 2..4 {
        for r in 0..3 {
            g.set(r, c, 2.0);
        }
    }
    g.set(2, 0, 5.0);
    g.set(0, 0, 0.0);
    g.write(dir.join("segments.grid")).unwrap();
    if with_chm {
        AsciiGrid::filled(geo, 12.5, -9999.0).write(dir.join("chm.grid")).unwrap();
    }
    std::fs::write(dir.join("scores.csv"), "segment_id,score\n2,0.75\n").unwrap();
}

fn app(dir: &Path, with_chm: bool) -> Router {
    dataset(dir, with_chm);
    build_app(&ServiceConfig {
        dataset: dir.to_path_buf(),
        journal: None,
        ui_dir: None,
    })
    .unwrap()
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(app: &Router, body: Value) -> (StatusCode, Value) {
    let resp = app
        .clone()
        .oneshot(
            Request::post("/api/labels")
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn record(id: u32, code: u8, note: &str, ts: &str) -> Value {
    json!({
        "segment_id": id,
        "species_code": code,
        "note": note,
        "annotator": "field-team",
        "timestamp": ts,
        "status": "proposed",
    })
}

#[tokio::test]
async fn segments_geojson_has_one_feature_per_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path(), true);
    let (status, body) = get(&app, "/api/segments").await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["type"], "FeatureCollection");
    let features = v["features"].as_array().unwrap();
    let ids: Vec<u64> = features.iter().map(|f| f["properties"]["segment_id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![1, 2, 5]);
    assert_eq!(features[1]["properties"]["score"], 0.75);
    assert!(features[0]["properties"].get("score").is_none());
}

#[tokio::test]
async fn optional_rasters() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path(), true);
    let (status, body) = get(&app, "/api/chm.grid").await;
    assert_eq!(status, StatusCode::OK);
    assert!(AsciiGrid::parse(std::str::from_utf8(&body).unwrap()).is_ok());
    assert_eq!(get(&app, "/api/basemap.png").await.0, StatusCode::NOT_FOUND);

    let tmp2 = tempfile::tempdir().unwrap();
    let bare = self::app(tmp2.path(), false);
    assert_eq!(get(&bare, "/api/chm.grid").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn label_round_trip_verbatim() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path(), false);
    let rec = record(2, 7, "leaning, \"double\" stem", "2024-06-01T08:30:00Z");
    let (status, echoed) = post(&app, rec.clone()).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(echoed, rec);
    let (_, csv) = get(&app, "/api/labels.csv").await;
    let mut rd = csv::Reader::from_reader(csv.as_slice());
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["segment_id", "species_code", "note", "annotator", "timestamp", "status"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(
        rows[0].iter().collect::<Vec<_>>(),
        ["2", "7", "leaning, \"double\" stem", "field-team", "2024-06-01T08:30:00Z", "proposed"]
    );
}

#[tokio::test]
async fn last_write_wins_and_journal_keeps_both() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path(), false);
    post(&app, record(1, 3, "first", "2024-06-01T08:00:00Z")).await;
    post(&app, record(1, 4, "second", "2024-06-01T09:00:00Z")).await;
    let journal = read_journal(&tmp.path().join("labels_journal.jsonl")).unwrap();
    assert_eq!(journal.len(), 2);
    assert_eq!(journal[0].note, "first");
    let (_, csv) = get(&app, "/api/labels.csv").await;
    let text = String::from_utf8(csv).unwrap();
    assert!(text.contains("1,4,second"), "{text}");
    assert!(!text.contains("first"));
    assert!(!tmp.path().join("labels_journal.jsonl.tmp").exists());
}

#[tokio::test]
async fn malformed_posts_are_400_with_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path(), false);
    let cases = [
        (record(9, 1, "", "2024-06-01T08:00:00Z"), "unknown segment_id"),
        (record(1, 10, "", "2024-06-01T08:00:00Z"), "species_code"),
        (record(1, 1, "", "2024-06-01 08:00"), "timestamp"),
        (record(1, 1, "", "2024-06-01T08:00:00+03:00"), "not UTC"),
        (json!({"segment_id": 1}), "malformed"),
        (json!({"segment_id": 1, "species_code": 1, "annotator": "a", "timestamp": "2024-06-01T08:00:00Z", "status": "final"}), "malformed"),
    ];
    for (body, reason) in cases {
        let (status, v) = post(&app, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(v["error"].as_str().unwrap().contains(reason), "{v}");
    }
    assert_eq!(get(&app, "/api/labels.csv").await.1.iter().filter(|&&b| b == b'\n').count(), 1);
}

#[tokio::test]
async fn progress_counts_and_species_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path(), false);
    post(&app, record(1, 3, "", "2024-06-01T08:00:00Z")).await;
    let mut verified = record(2, 0, "", "2024-06-01T08:00:00Z");
    verified["status"] = json!("verified");
    post(&app, verified).await;
    let (status, body) = get(&app, "/api/progress").await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["total_segments"], 3);
    assert_eq!(v["labeled"], 2);
    assert_eq!(v["unlabeled"], 1);
    assert_eq!(v["by_status"]["proposed"], 1);
    assert_eq!(v["by_status"]["verified"], 1);
    assert_eq!(v["by_species"]["3"], 1);
    assert_eq!(v["by_species"]["0"], 1);
    let species = v["species"].as_array().unwrap();
    assert_eq!(species.len(), 10);
    assert_eq!(species[1], json!({"code": 1, "name": "pine"}));
}

#[tokio::test]
async fn journal_survives_restart() {
    let tmp = tempfile::tempdir().unwrap();
    {
        let app = app(tmp.path(), false);
        post(&app, record(5, 2, "kept", "2024-06-01T08:00:00Z")).await;
    }
    let app = build_app(&ServiceConfig {
        dataset: tmp.path().to_path_buf(),
        journal: None,
        ui_dir: None,
    })
    .unwrap();
    let (_, csv) = get(&app, "/api/labels.csv").await;
    assert!(String::from_utf8(csv).unwrap().contains("5,2,kept"));
}

#[tokio::test]
async fn static_ui_served_at_root() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path(), false);
    let ui = tmp.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>annotate</html>").unwrap();
    let app = build_app(&ServiceConfig {
        dataset: tmp.path().to_path_buf(),
        journal: None,
        ui_dir: Some(ui),
    })
    .unwrap();
    let (status, body) = get(&app, "/").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>annotate</html>");
}

#[test]
fn missing_segment_raster_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = build_app(&ServiceConfig {
        dataset: tmp.path().to_path_buf(),
        journal: None,
        ui_dir: None,
    })
    .unwrap_err();
    assert!(err.to_string().contains("segments.grid"));
}
