//! Local HTTP API over a dataset registry for curating samples: browse,
//! fix ground truth, reject, reprocess images, run engines, read reports.
//!
//! Reads take a snapshot under a shared lock. Every mutation goes through
//! one writer thread that applies it to a copy of the registry, persists
//! the manifest, then swaps the copy in, so a failed save changes nothing.

pub mod api;

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use linebench::dataset::{DatasetError, Registry, Sample, SampleUpdate, SplitTag, Status};
use linebench::engines::{load_engines, EngineHandle, ReferenceModel};
use linebench::imaging::{preprocess, LineGeometry, PreprocessParams, DEFAULT_BLUR_K, DEFAULT_THRESHOLD};
use linebench::metrics::{align, char_units, score_sample, RateOptions};
use linebench::textnorm::{normalize_text, validate_charset, Charset};
use linebench::Raster;
use serde_json::json;
use thiserror::Error;
use tokio::sync::{oneshot, Semaphore};

use crate::api::*;

pub const ENGINES_FILE: &str = "engines.json";
pub const REFERENCE_MODEL_FILE: &str = "reference_model.json";
pub const PROCESSED_DIR: &str = "processed";
pub const REPORTS_DIR: &str = "reports";
/// Dominant-level fraction above which a reprocessed image is flagged.
pub const LOW_CONTRAST_FRACTION: f64 = 0.99;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] linebench::engines::EngineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

struct WriteCmd {
    id: String,
    update: SampleUpdate,
    expected_revision: Option<u64>,
    reply: oneshot::Sender<Result<Sample, DatasetError>>,
}

struct Shared {
    registry: Arc<RwLock<Registry>>,
    writer: mpsc::Sender<WriteCmd>,
    engines: BTreeMap<String, EngineHandle>,
    charset: Charset,
    engine_slots: Semaphore,
}

/// Cheaply clonable handle to the service state.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

pub struct ServiceOptions {
    pub engines: BTreeMap<String, EngineHandle>,
    pub charset: Charset,
    /// Engine runs allowed at once.
    pub max_engine_jobs: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            engines: BTreeMap::new(),
            charset: Charset::default(),
            max_engine_jobs: 2,
        }
    }
}

fn writer_loop(registry: Arc<RwLock<Registry>>, rx: mpsc::Receiver<WriteCmd>) {
    for cmd in rx {
        let mut guard = registry.write().expect("registry lock poisoned");
        let mut next = guard.clone();
        let result = next
            .update(&cmd.id, cmd.update, cmd.expected_revision)
            .map(|s| s.clone())
            .and_then(|s| {
                next.save()?;
                Ok(s)
            });
        if result.is_ok() {
            *guard = next;
        }
        drop(guard);
        let _ = cmd.reply.send(result);
    }
}

impl AppState {
    pub fn new(registry: Registry, opts: ServiceOptions) -> Self {
        let registry = Arc::new(RwLock::new(registry));
        let (tx, rx) = mpsc::channel();
        let reg = registry.clone();
        std::thread::Builder::new()
            .name("registry-writer".into())
            .spawn(move || writer_loop(reg, rx))
            .expect("spawn writer thread");
        AppState(Arc::new(Shared {
            registry,
            writer: tx,
            engines: opts.engines,
            charset: opts.charset,
            engine_slots: Semaphore::new(opts.max_engine_jobs.max(1)),
        }))
    }

    /// Loads `<root>/manifest.jsonl` plus engines from `<root>/engines.json`
    /// and `<root>/reference_model.json` (registered as `reference`) when
    /// present.
    pub fn open(root: &Path) -> Result<Self, ServiceError> {
        let registry = Registry::load(root)?;
        let mut engines = BTreeMap::new();
        let engines_file = root.join(ENGINES_FILE);
        if engines_file.is_file() {
            engines = load_engines(&engines_file)?;
        }
        let model_file = root.join(REFERENCE_MODEL_FILE);
        if model_file.is_file() && !engines.contains_key("reference") {
            let model = ReferenceModel::from_json(&std::fs::read_to_string(model_file)?)?;
            engines.insert("reference".to_string(), EngineHandle::Reference(model));
        }
        Ok(Self::new(
            registry,
            ServiceOptions {
                engines,
                ..Default::default()
            },
        ))
    }

    pub fn snapshot(&self) -> Registry {
        self.0.registry.read().expect("registry lock poisoned").clone()
    }

    fn sample(&self, id: &str) -> Result<(Sample, PathBuf), ApiError> {
        let reg = self.0.registry.read().expect("registry lock poisoned");
        let s = reg.get(id).ok_or_else(|| ApiError::not_found(format!("unknown sample {id}")))?;
        Ok((s.clone(), reg.root().to_path_buf()))
    }

    async fn write(&self, id: &str, update: SampleUpdate, expected_revision: Option<u64>) -> Result<Sample, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.0
            .writer
            .send(WriteCmd {
                id: id.to_string(),
                update,
                expected_revision,
                reply,
            })
            .map_err(|_| ApiError::internal("writer stopped"))?;
        Ok(rx.await.map_err(|_| ApiError::internal("writer stopped"))??)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/samples", get(list_samples))
        .route("/samples/{id}", get(get_sample).patch(patch_sample))
        .route("/samples/{id}/image", get(get_image))
        .route("/samples/{id}/reprocess", post(reprocess_sample))
        .route("/samples/{id}/recognize", post(recognize_sample))
        .route("/reports/{run}", get(get_report))
        .with_state(state)
}

/// Serves on `127.0.0.1:<port>` until the process ends.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port))).await?;
    axum::serve(listener, router(state)).await
}

async fn healthz(State(st): State<AppState>) -> Json<serde_json::Value> {
    let n = st.0.registry.read().expect("registry lock poisoned").len();
    Json(json!({ "status": "ok", "samples": n }))
}

async fn list_samples(State(st): State<AppState>, Query(q): Query<ListQuery>) -> Result<Json<SamplePage>, ApiError> {
    let split = q.split.as_deref().map(str::parse::<SplitTag>).transpose().map_err(ApiError::bad_request)?;
    let status = q.status.as_deref().map(str::parse::<Status>).transpose().map_err(ApiError::bad_request)?;
    let author = q
        .author
        .as_deref()
        .map(|a| a.parse::<u32>().map_err(|_| ApiError::bad_request(format!("bad author {a:?}"))))
        .transpose()?;
    let page = q.page.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::bad_request("pages start at 1"));
    }
    let reg = st.0.registry.read().expect("registry lock poisoned");
    let matching: Vec<SampleSummary> = reg
        .samples()
        .filter(|s| split.is_none_or(|v| s.split == v))
        .filter(|s| status.is_none_or(|v| s.status == v))
        .filter(|s| author.is_none_or(|v| s.author == v))
        .map(SampleSummary::from)
        .collect();
    let total = matching.len();
    let items = matching.into_iter().skip((page - 1) * PAGE_SIZE).take(PAGE_SIZE).collect();
    Ok(Json(SamplePage {
        items,
        page,
        page_size: PAGE_SIZE,
        total,
        pages: total.div_ceil(PAGE_SIZE),
    }))
}

async fn get_sample(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Sample>, ApiError> {
    Ok(Json(st.sample(&id)?.0))
}

#[derive(serde::Deserialize)]
struct ImageQuery {
    stage: Option<String>,
}

async fn get_image(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ImageQuery>,
) -> Result<Response, ApiError> {
    let (s, root) = st.sample(&id)?;
    let rel = match q.stage.as_deref().unwrap_or("raw") {
        "raw" => s.image,
        "processed" => s
            .processed
            .ok_or_else(|| ApiError::not_found(format!("{id} has no processed image")))?,
        other => return Err(ApiError::bad_request(format!("unknown stage {other:?}"))),
    };
    let bytes = tokio::task::spawn_blocking(move || std::fs::read(root.join(rel)))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn patch_sample(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<Sample>, ApiError> {
    let req = PatchRequest::from_json(&body)?;
    let ground_truth = match req.ground_truth {
        None => None,
        Some(text) => {
            let gt = normalize_text(&text).map_err(|e| ApiError::validation(e.to_string(), &[]))?;
            let violations = validate_charset(&gt, &st.0.charset);
            if !violations.is_empty() && !req.force {
                return Err(ApiError::validation("ground truth has characters outside the charset", &violations));
            }
            Some(gt)
        }
    };
    let update = SampleUpdate {
        ground_truth,
        status: req.status,
        ..Default::default()
    };
    Ok(Json(st.write(&id, update, Some(req.expected_revision)).await?))
}

fn low_contrast(img: &Raster) -> Option<String> {
    let dark = img.dark_ratio();
    let dominant = dark.max(1.0 - dark);
    (dominant >= LOW_CONTRAST_FRACTION).then(|| format!("low contrast: {:.1}% of pixels share one level", dominant * 100.0))
}

async fn reprocess_sample(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<ReprocessResponse>, ApiError> {
    let req = ReprocessRequest::from_json(&body)?;
    let (s, root) = st.sample(&id)?;
    let params = PreprocessParams {
        blur_k: req.blur_k.map_or(DEFAULT_BLUR_K, |k| k as usize),
        threshold: req.threshold.map_or(DEFAULT_THRESHOLD, |t| t as u8),
        invert: req.invert.unwrap_or(false),
        normalize: None,
    };
    let rel = PathBuf::from(PROCESSED_DIR).join(format!("{id}.png"));
    let out = root.join(&rel);
    let raw = root.join(&s.image);
    let (width, height, warning) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let img = Raster::read_png(&raw).map_err(|e| ApiError::not_found(format!("raw image: {e}")))?;
        let binary = preprocess(&img, &params).map_err(|e| ApiError::bad_params(e.to_string()))?;
        let warning = low_contrast(&binary);
        let geom = LineGeometry {
            background: if params.invert { 0 } else { 255 },
            ..Default::default()
        };
        let line = linebench::imaging::normalize_line(&binary, &geom).map_err(|e| ApiError::internal(e.to_string()))?;
        let png = line.encode_png().map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::create_dir_all(out.parent().expect("processed dir"))
            .and_then(|_| {
                let tmp = out.with_extension("png.tmp");
                std::fs::write(&tmp, png)?;
                std::fs::rename(&tmp, &out)
            })
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok((line.width(), line.height(), warning))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let updated = st
        .write(
            &id,
            SampleUpdate {
                processed: Some(rel.clone()),
                ..Default::default()
            },
            None,
        )
        .await?;
    Ok(Json(ReprocessResponse {
        id,
        processed: rel.to_string_lossy().into_owned(),
        width,
        height,
        revision: updated.revision,
        warning,
    }))
}

async fn recognize_sample(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<RecognizeResponse>, ApiError> {
    let req: RecognizeRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let (s, root) = st.sample(&id)?;
    let engine = st
        .0
        .engines
        .get(&req.engine)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown engine {:?}", req.engine)))?;
    let image = root.join(s.processed.as_ref().unwrap_or(&s.image));
    let _permit = st.0.engine_slots.acquire().await.map_err(|e| ApiError::internal(e.to_string()))?;
    let hypothesis = tokio::task::spawn_blocking(move || engine.recognize(&image))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let opts = RateOptions::default();
    let reference = s.ground_truth.as_str();
    let ops = align(&char_units(reference, opts), &char_units(&hypothesis, opts)).ops;
    let score = score_sample(id.clone(), &s.ground_truth, &hypothesis, opts)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let rates = score.rates();
    Ok(Json(RecognizeResponse {
        id,
        engine: req.engine,
        reference: reference.to_string(),
        hypothesis,
        ops,
        chars: score.chars,
        words: score.words,
        cer: rates.cer,
        wer: rates.wer,
    }))
}

async fn get_report(State(st): State<AppState>, UrlPath(run): UrlPath<String>) -> Result<Response, ApiError> {
    let valid = !run.is_empty()
        && !run.starts_with('.')
        && run.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !valid {
        return Err(ApiError::bad_request(format!("bad run name {run:?}")));
    }
    let root = st.0.registry.read().expect("registry lock poisoned").root().to_path_buf();
    let path = root.join(REPORTS_DIR).join(format!("{run}.json"));
    let text = tokio::task::spawn_blocking(move || std::fs::read_to_string(path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|_| ApiError::not_found(format!("no report {run:?}")))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::OK, Json(value)).into_response())
}
