use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use linebench::dataset::{ingest, IngestOptions, Registry, Sample, Status};
use linebench::engines::train_reference;
use linebench::synth::{generate_corpus, render_line, write_corpus, GlyphAtlas, SYRIAC_LETTERS};
use linebench::textnorm::normalize_text;
use linebench_review::{router, AppState, ServiceOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

fn twenty_letters() -> String {
    SYRIAC_LETTERS[..20].iter().collect()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    app: Router,
}

/// Dataset with three clean synthetic lines, a reference model and a few
/// stub engines.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let atlas = GlyphAtlas::default_syriac();
    let gt = normalize_text(&twenty_letters()).unwrap();
    let mut lines = vec![("a01_01".to_string(), render_line(&gt, &atlas).unwrap())];
    for (i, (_, l)) in generate_corpus(2, 11, &atlas, &Default::default()).unwrap().into_iter().enumerate() {
        lines.push((format!("a0{}_0{}", i + 1, i + 2), l));
    }
    write_corpus(&lines, &root).unwrap();
    let reg = ingest(
        &root,
        IngestOptions {
            initial_status: Status::Clean,
            ..Default::default()
        },
    )
    .unwrap();
    reg.save().unwrap();

    let training: Vec<_> = generate_corpus(50, 1, &atlas, &Default::default())
        .unwrap()
        .into_iter()
        .map(|(_, l)| l)
        .collect();
    std::fs::write(root.join("reference_model.json"), train_reference(&training).unwrap().to_json()).unwrap();

    let mut one_sub: Vec<char> = twenty_letters().chars().collect();
    one_sub[0] = SYRIAC_LETTERS[21];
    let hyp = root.join("one_sub.txt");
    std::fs::write(&hyp, one_sub.iter().collect::<String>()).unwrap();
    let engines = json!({
        "empty": {"kind": "external", "command": "sh -c 'true' sh {image}", "timeout_secs": 5},
        "one_sub": {"kind": "external", "command": format!("sh -c 'cat \"$0\"' '{}' {{image}}", hyp.display()), "timeout_secs": 5},
        "broken": {"kind": "external", "command": "sh -c 'exit 3' sh {image}", "timeout_secs": 5},
    });
    std::fs::write(root.join("engines.json"), engines.to_string()).unwrap();

    let app = router(AppState::open(&root).unwrap());
    Fixture { _dir: dir, root, app }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn manifest(root: &Path) -> Vec<u8> {
    std::fs::read(root.join("manifest.jsonl")).unwrap()
}

#[tokio::test]
async fn healthz_and_get() {
    let f = fixture();
    let (s, v) = call_json(&f.app, "GET", "/healthz", None).await;
    assert_eq!((s, v["samples"].as_u64()), (StatusCode::OK, Some(3)));
    let (s, v) = call_json(&f.app, "GET", "/samples/a01_01", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["gt"], twenty_letters());
    assert_eq!(v["revision"], 0);
    let (s, v) = call_json(&f.app, "GET", "/samples/z99_99", None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("NotFound")));
}

#[tokio::test]
async fn list_filters_are_conjunctive() {
    let f = fixture();
    let (_, v) = call_json(&f.app, "GET", "/samples?status=rejected", None).await;
    assert_eq!(v["items"].as_array().unwrap().len(), 0);
    assert_eq!(v["pages"], 0);
    let (_, v) = call_json(&f.app, "GET", "/samples?author=01", None).await;
    let ids: Vec<&str> = v["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a01_01", "a01_02"]);
    let (_, v) = call_json(&f.app, "GET", "/samples?author=02&status=clean", None).await;
    assert_eq!(v["items"][0]["id"], "a02_03");
    let (s, _) = call_json(&f.app, "GET", "/samples?status=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn paging_624_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut reg = Registry::new(dir.path());
    let gt = normalize_text("\u{0710}").unwrap();
    for i in 0..624 {
        let (a, q) = (i / 20 + 1, i % 20 + 1);
        reg.insert(Sample {
            id: format!("a{a:02}_{q:02}"),
            batch: linebench::dataset::Batch::A,
            author: a as u32,
            seq: q as u32,
            image: "x.png".into(),
            ground_truth: gt.clone(),
            status: Status::Raw,
            revision: 0,
            split: Default::default(),
            processed: None,
        })
        .unwrap();
    }
    let app = router(AppState::new(reg, ServiceOptions::default()));
    let (_, v) = call_json(&app, "GET", "/samples", None).await;
    assert_eq!((v["total"].as_u64(), v["pages"].as_u64()), (Some(624), Some(13)));
    assert_eq!(v["items"].as_array().unwrap().len(), 50);
    let (_, v) = call_json(&app, "GET", "/samples?page=13", None).await;
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 24);
    assert_eq!(items.last().unwrap()["id"], "a32_04");
    let (_, first) = call_json(&app, "GET", "/samples?page=2", None).await;
    let (_, again) = call_json(&app, "GET", "/samples?page=2", None).await;
    assert_eq!(first, again);
}

#[tokio::test]
async fn patch_happy_path_and_stale_revision() {
    let f = fixture();
    let body = json!({"expected_revision": 0, "ground_truth": " \u{0712}\u{0730}\u{0713} ", "status": "rejected"});
    let (s, v) = call_json(&f.app, "PATCH", "/samples/a01_02", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["revision"].as_u64(), v["gt"].as_str()), (Some(1), Some("\u{0712}\u{0713}")));
    let (_, v) = call_json(&f.app, "GET", "/samples/a01_02", None).await;
    assert_eq!((v["revision"].as_u64(), v["status"].as_str()), (Some(1), Some("rejected")));
    assert!(String::from_utf8(manifest(&f.root)).unwrap().contains("\"revision\":1"));

    let before = manifest(&f.root);
    let stale = json!({"expected_revision": 0, "status": "clean"});
    let (s, v) = call_json(&f.app, "PATCH", "/samples/a01_02", Some(stale)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["current_revision"], 1);
    assert_eq!(manifest(&f.root), before);

    let (s, _) = call_json(&f.app, "PATCH", "/samples/a01_02", Some(json!({"expected_revision": 1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&f.app, "PATCH", "/samples/nope", Some(json!({"expected_revision": 0, "status": "raw"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn charset_gate() {
    let f = fixture();
    let (s, v) = call_json(
        &f.app,
        "PATCH",
        "/samples/a01_01",
        Some(json!({"expected_revision": 0, "ground_truth": "A"})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "ValidationFailed");
    assert_eq!(v["violations"], json!([{"position": 0, "codepoint": "U+0041"}]));
    let (_, v) = call_json(&f.app, "GET", "/samples/a01_01", None).await;
    assert_eq!(v["revision"], 0);

    let (s, v) = call_json(
        &f.app,
        "PATCH",
        "/samples/a01_01",
        Some(json!({"expected_revision": 0, "ground_truth": "\u{0710}x", "force": true})),
    )
    .await;
    assert_eq!((s, v["gt"].as_str()), (StatusCode::OK, Some("\u{0710}x")));

    let (s, _) = call_json(
        &f.app,
        "PATCH",
        "/samples/a01_01",
        Some(json!({"expected_revision": 1, "ground_truth": " \u{0730} "})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn racing_patches_one_wins() {
    let f = fixture();
    for round in 0..20u64 {
        let a = json!({"expected_revision": round, "ground_truth": "\u{0710}"});
        let b = json!({"expected_revision": round, "ground_truth": "\u{0712}"});
        let (ra, rb) = tokio::join!(
            call_json(&f.app, "PATCH", "/samples/a02_03", Some(a)),
            call_json(&f.app, "PATCH", "/samples/a02_03", Some(b)),
        );
        let mut statuses = [ra.0, rb.0];
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT], "round {round}");
        let winner = if ra.0 == StatusCode::OK { ra.1 } else { rb.1 };
        let (_, now) = call_json(&f.app, "GET", "/samples/a02_03", None).await;
        assert_eq!(now["gt"], winner["gt"]);
        assert_eq!(now["revision"].as_u64(), Some(round + 1));
    }
}

#[tokio::test]
async fn gets_do_not_mutate() {
    let f = fixture();
    call_json(&f.app, "POST", "/samples/a01_01/reprocess", Some(json!({}))).await;
    std::fs::create_dir_all(f.root.join("reports")).unwrap();
    std::fs::write(f.root.join("reports/run1.json"), r#"{"macro_cer": 1.5}"#).unwrap();
    let before = manifest(&f.root);
    let (_, snap_before) = call_json(&f.app, "GET", "/samples", None).await;
    for uri in [
        "/healthz",
        "/samples",
        "/samples?author=01",
        "/samples/a01_01",
        "/samples/a01_01/image",
        "/samples/a01_01/image?stage=processed",
        "/reports/run1",
        "/reports/missing",
        "/samples/zz",
    ] {
        for _ in 0..3 {
            call(&f.app, "GET", uri, None).await;
        }
    }
    let (_, snap_after) = call_json(&f.app, "GET", "/samples", None).await;
    assert_eq!(snap_before, snap_after);
    assert_eq!(manifest(&f.root), before);
}

#[tokio::test]
async fn image_stages() {
    let f = fixture();
    let (s, bytes) = call(&f.app, "GET", "/samples/a01_01/image", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(bytes, std::fs::read(f.root.join("a01_01.png")).unwrap());
    let (s, _) = call(&f.app, "GET", "/samples/a01_01/image?stage=processed", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&f.app, "GET", "/samples/a01_01/image?stage=other", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reprocess_contract() {
    let f = fixture();
    let raw = std::fs::read(f.root.join("a01_01.png")).unwrap();
    let (s, v) = call_json(&f.app, "POST", "/samples/a01_01/reprocess", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(1200), Some(110)));
    assert_eq!(v["revision"], 1);
    assert!(v["warning"].is_null());
    let processed = f.root.join(v["processed"].as_str().unwrap());
    let first = std::fs::read(&processed).unwrap();
    let img = linebench::Raster::decode_png(&first).unwrap();
    assert_eq!((img.width(), img.height()), (1200, 110));

    let (_, v) = call_json(&f.app, "POST", "/samples/a01_01/reprocess", Some(json!({}))).await;
    assert_eq!(v["revision"], 2);
    assert_eq!(std::fs::read(&processed).unwrap(), first);
    assert_eq!(std::fs::read(f.root.join("a01_01.png")).unwrap(), raw);

    // Scan-like levels: gray ink on off-white paper.
    let line = linebench::Raster::read_png(f.root.join("a01_02.png")).unwrap();
    let scan = linebench::Raster::from_gray_fn(line.width(), line.height(), |x, y| if line.get(x, y) < 128 { 60 } else { 230 });
    scan.write_png(f.root.join("a01_02.png")).unwrap();
    let (_, v) = call_json(&f.app, "POST", "/samples/a01_02/reprocess", None).await;
    assert!(v["warning"].is_null());
    let (s, v) = call_json(&f.app, "POST", "/samples/a01_02/reprocess", Some(json!({"threshold": 0}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["warning"].as_str().unwrap().starts_with("low contrast"));

    let (s, v) = call_json(&f.app, "POST", "/samples/a01_01/reprocess", Some(json!({"threshold": 300}))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::BAD_REQUEST, Some("BadParams")));
    let (s, _) = call_json(&f.app, "POST", "/samples/nope/reprocess", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn recognize_contract() {
    let f = fixture();
    let (s, v) = call_json(&f.app, "POST", "/samples/a01_01/recognize", Some(json!({"engine": "reference"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["hypothesis"], twenty_letters());
    assert_eq!(v["cer"], 0.0);
    assert!(v["ops"].as_array().unwrap().iter().all(|o| o["kind"] == "Match"));

    let (_, v) = call_json(&f.app, "POST", "/samples/a01_01/recognize", Some(json!({"engine": "empty"}))).await;
    assert_eq!(v["chars"], json!({"s": 0, "d": 20, "i": 0, "n": 20}));
    assert_eq!(v["cer"], 100.0);

    let (_, v) = call_json(&f.app, "POST", "/samples/a01_01/recognize", Some(json!({"engine": "one_sub"}))).await;
    assert_eq!(v["chars"]["s"], 1);
    assert_eq!(v["cer"], 5.0);
    assert_eq!(v["ops"][0]["kind"], "Substitute");

    let (s, v) = call_json(&f.app, "POST", "/samples/a01_01/recognize", Some(json!({"engine": "broken"}))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::BAD_GATEWAY, Some("EngineFailure")));
    let (s, _) = call_json(&f.app, "POST", "/samples/a01_01/recognize", Some(json!({"engine": "missing"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // Processed images take precedence once they exist.
    call_json(&f.app, "POST", "/samples/a01_01/reprocess", Some(json!({"blur_k": 1}))).await;
    let (s, v) = call_json(&f.app, "POST", "/samples/a01_01/recognize", Some(json!({"engine": "reference"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["hypothesis"], twenty_letters());
}

#[tokio::test]
async fn reports() {
    let f = fixture();
    std::fs::create_dir_all(f.root.join("reports")).unwrap();
    std::fs::write(f.root.join("reports/esyr.json"), r#"{"engine_name": "esyr", "macro_cer": 19.8}"#).unwrap();
    let (s, v) = call_json(&f.app, "GET", "/reports/esyr", None).await;
    assert_eq!((s, v["macro_cer"].as_f64()), (StatusCode::OK, Some(19.8)));
    let (s, _) = call_json(&f.app, "GET", "/reports/none", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&f.app, "GET", "/reports/..%2Fmanifest", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
