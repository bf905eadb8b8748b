//! HTTP API over a loaded checkpoint.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /api/synthesize` | JSON request in, `audio/wav` out with `X-Frames` and `X-Duration-Ms` |
//! | `GET /api/spectrogram` | same parameters as query string, de-normalized frames as JSON |
//! | `GET /api/labels` | class names, phoneme inventory and frame limit |
//!
//! Errors are JSON `{code, message, position?}`. Synthesis runs on the
//! blocking pool behind a FIFO semaphore so a burst of requests queues
//! instead of oversubscribing the CPU.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use onoma::dsp::{wav_bytes, DEFAULT_GL_ITERS};
use onoma::model::{ModelError, Synthesis, TrainedModel, DEFAULT_FRAMES};
use onoma::phoneme::PhonemeError;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

pub const MAX_FRAMES: usize = 256;
pub const MAX_GL_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    /// Concurrent synthesis jobs; further requests wait in arrival order.
    pub workers: usize,
    pub max_frames: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            max_frames: MAX_FRAMES,
        }
    }
}

#[derive(Clone)]
struct AppState {
    model: Arc<TrainedModel>,
    permits: Arc<Semaphore>,
    max_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRequest {
    pub phonemes: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub frames: Option<usize>,
    #[serde(default)]
    pub gl_iters: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub position: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsBody {
    pub conditioned: bool,
    pub labels: Vec<String>,
    pub inventory: Vec<String>,
    pub inventory_hash: String,
    pub max_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramBody {
    pub n_frames: usize,
    pub n_bins: usize,
    pub frames: Vec<Vec<f32>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                position: None,
            },
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let message = e.to_string();
        let bad = |code| Self::new(StatusCode::BAD_REQUEST, code, message.clone());
        match e {
            ModelError::Phoneme(PhonemeError::UnknownToken { position, .. }) => {
                let mut err = bad("UnknownToken");
                err.body.position = Some(position);
                err
            }
            ModelError::Phoneme(PhonemeError::EmptyInput) => bad("EmptyInput"),
            ModelError::MissingLabel => bad("MissingLabel"),
            ModelError::UnexpectedLabel => bad("UnexpectedLabel"),
            ModelError::UnknownLabel(_) => bad("UnknownLabel"),
            _ => Self::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl AppState {
    fn check(&self, req: &SynthRequest) -> Result<(usize, usize), ApiError> {
        let frames = req.frames.unwrap_or(DEFAULT_FRAMES);
        if frames == 0 || frames > self.max_frames {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "FramesOutOfRange",
                format!("frames must be between 1 and {}, got {frames}", self.max_frames),
            ));
        }
        let iters = req.gl_iters.unwrap_or(DEFAULT_GL_ITERS);
        if iters > MAX_GL_ITERS {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "GlItersOutOfRange",
                format!("gl_iters must be at most {MAX_GL_ITERS}, got {iters}"),
            ));
        }
        // token and label errors are cheap to find before queueing
        self.model.inventory.tokenize(&req.phonemes).map_err(ModelError::from)?;
        self.model.resolve_label(req.label.as_deref())?;
        Ok((frames, iters))
    }

    async fn run<T, F>(&self, job: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&TrainedModel) -> Result<T, ApiError> + Send + 'static,
    {
        let _permit = self
            .permits
            .clone()
            .acquire_owned()
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let model = self.model.clone();
        tokio::task::spawn_blocking(move || job(&model))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }
}

async fn synthesize(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SynthRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string()))?;
    let (frames, iters) = state.check(&req)?;
    let (wav, duration_ms) = state
        .run(move |m| {
            let Synthesis { waveform, .. } =
                m.synthesize_text(&req.phonemes, req.label.as_deref(), frames, iters, req.seed)?;
            let ms = (waveform.duration_secs() * 1000.0).round() as u64;
            let bytes = wav_bytes(&waveform).map_err(|e| ApiError::internal(e.to_string()))?;
            Ok((bytes, ms))
        })
        .await?;
    let mut resp = (StatusCode::OK, wav).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("audio/wav"));
    headers.insert("x-frames", HeaderValue::from(frames));
    headers.insert("x-duration-ms", HeaderValue::from(duration_ms));
    Ok(resp)
}

async fn spectrogram(
    State(state): State<AppState>,
    query: Result<Query<SynthRequest>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<SpectrogramBody>, ApiError> {
    let Query(req) =
        query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.body_text()))?;
    let (frames, _) = state.check(&req)?;
    let body = state
        .run(move |m| {
            let seq = m.inventory.tokenize(&req.phonemes).map_err(ModelError::from)?;
            let label = m.resolve_label(req.label.as_deref())?;
            let s = m.model.predict_spectrogram(&seq, label.as_ref(), frames)?;
            Ok(SpectrogramBody {
                n_frames: s.n_frames(),
                n_bins: s.n_bins(),
                frames: s.frames().rows().into_iter().map(|r| r.to_vec()).collect(),
            })
        })
        .await?;
    Ok(Json(body))
}

async fn labels(State(state): State<AppState>) -> Json<LabelsBody> {
    let m = &state.model;
    Json(LabelsBody {
        conditioned: m.conditioned(),
        labels: if m.conditioned() { m.labels.clone() } else { Vec::new() },
        inventory: m.inventory.symbols().to_vec(),
        inventory_hash: m.inventory.hash(),
        max_frames: state.max_frames,
    })
}

pub fn router(model: TrainedModel, config: ServiceConfig) -> Router {
    let state = AppState {
        model: Arc::new(model),
        permits: Arc::new(Semaphore::new(config.workers.max(1))),
        max_frames: config.max_frames,
    };
    Router::new()
        .route("/api/synthesize", post(synthesize))
        .route("/api/spectrogram", get(spectrogram))
        .route("/api/labels", get(labels))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, model: TrainedModel, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(model, config)).await
}
