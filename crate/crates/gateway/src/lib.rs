//! HTTP gateway: route, feedback and complete endpoints over one shared
//! experience base.

pub mod wire;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use chrono::Utc;
use serde::de::DeserializeOwned;
use thiserror::Error;
use tokio::net::TcpListener;
use tracing::{info, warn};
use uuid::Uuid;

use evoroute_core::embedding::{canonical_unit, EmbedError};
use evoroute_core::retrieval::KeywordTableError;
use evoroute_core::{
    BufferError, ConfigLoadError, Embedder, EmbeddingVector, EpisodeBuffer, EvoConfig,
    ExperienceBase, KbError, KeywordTable, ModelId, Phase, RandomSource, RoleId, Router,
    StepSuccess, SubTaskContext, ToolId,
};

pub use wire::*;

pub const ENV_KB_PATH: &str = "EVOROUTE_KB_PATH";
pub const ENV_CONFIG: &str = "EVOROUTE_CONFIG";
pub const ENV_BIND: &str = "EVOROUTE_BIND";

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_KB_PATH: &str = "evoroute-kb.jsonl";
pub const DEFAULT_IDLE_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone, PartialEq)]
pub struct GatewaySettings {
    pub bind: String,
    pub kb_path: PathBuf,
    /// `None` selects the bundled planted pool.
    pub config_path: Option<PathBuf>,
    pub keywords_path: Option<PathBuf>,
    pub idle_ttl: Duration,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.to_owned(),
            kb_path: PathBuf::from(DEFAULT_KB_PATH),
            config_path: None,
            keywords_path: None,
            idle_ttl: DEFAULT_IDLE_TTL,
        }
    }
}

impl GatewaySettings {
    pub fn from_env() -> Self {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Self {
        let mut s = Self::default();
        if let Some(v) = lookup(ENV_BIND) {
            s.bind = v;
        }
        if let Some(v) = lookup(ENV_KB_PATH) {
            s.kb_path = v.into();
        }
        s.config_path = lookup(ENV_CONFIG).map(PathBuf::from);
        s
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigLoadError),
    #[error("experience base: {0}")]
    Kb(#[from] KbError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("keyword table {path}: {source}")]
    Keywords {
        path: String,
        source: KeywordTableError,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

/// An error response: status plus a JSON `{"error": ...}` body.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub missing: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            missing: Vec::new(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.message,
            missing: self.missing,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<BufferError> for ApiError {
    fn from(e: BufferError) -> Self {
        match e {
            BufferError::UnknownDecision(_) => Self::not_found(e.to_string()),
            BufferError::DuplicateStepOutcome(_) | BufferError::DuplicateDecision(_) => {
                Self::conflict(e.to_string())
            }
            BufferError::IncompleteBuffer(missing) => Self {
                status: StatusCode::CONFLICT,
                message: format!("steps without feedback: {}", missing.join(", ")),
                missing,
            },
            BufferError::InvalidPerformance(_) => {
                Self::bad_request(format!("field `task_performance`: {e}"))
            }
            BufferError::InvalidOutcome(_) | BufferError::EpisodeMismatch { .. } => {
                Self::bad_request(e.to_string())
            }
            BufferError::Commit(KbError::DuplicateRecordId(_)) => Self::conflict(e.to_string()),
            BufferError::Commit(KbError::InvalidRecord(_)) => Self::bad_request(e.to_string()),
            BufferError::Commit(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

struct Episode {
    buffer: EpisodeBuffer,
    touched: Instant,
    /// Set once committed or expired; holders of a stale handle must not reuse it.
    closed: bool,
}

/// Shared server state.
pub struct Gateway {
    inference: Router,
    optimization: Router,
    embedder: Embedder,
    kb: Mutex<ExperienceBase>,
    rng: Mutex<RandomSource>,
    episodes: Mutex<HashMap<String, Arc<Mutex<Episode>>>>,
    decisions: Mutex<HashMap<String, String>>,
    selections: Mutex<BTreeMap<ModelId, u64>>,
    idle_ttl: Duration,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Gateway {
    pub fn new(
        config: EvoConfig,
        kb: ExperienceBase,
        idle_ttl: Duration,
    ) -> Result<Self, GatewayError> {
        let embedder = Embedder::new(config.embedding.clone())?;
        let mut inference_cfg = config.router.clone();
        inference_cfg.phase = Phase::Inference;
        let mut optimization_cfg = config.router.clone();
        optimization_cfg.phase = Phase::Optimization;
        Ok(Self {
            inference: Router::new(config.pool.clone(), inference_cfg),
            optimization: Router::new(config.pool, optimization_cfg),
            embedder,
            rng: Mutex::new(RandomSource::new(config.router.rng_seed)),
            kb: Mutex::new(kb),
            episodes: Mutex::new(HashMap::new()),
            decisions: Mutex::new(HashMap::new()),
            selections: Mutex::new(BTreeMap::new()),
            idle_ttl,
        })
    }

    pub fn with_keywords(mut self, table: KeywordTable) -> Self {
        self.inference = self.inference.with_keywords(table.clone());
        self.optimization = self.optimization.with_keywords(table);
        self
    }

    pub fn from_settings(settings: &GatewaySettings) -> Result<Self, GatewayError> {
        let config = match &settings.config_path {
            Some(p) => EvoConfig::from_path(p)?,
            None => EvoConfig::planted(),
        };
        let kb = ExperienceBase::open(&settings.kb_path, config.embedding.dimension)?;
        info!(path = %settings.kb_path.display(), records = kb.len(), "experience base opened");
        let mut gw = Self::new(config, kb, settings.idle_ttl)?;
        if let Some(p) = &settings.keywords_path {
            let text = std::fs::read_to_string(p).map_err(|source| GatewayError::Io {
                context: p.display().to_string(),
                source,
            })?;
            let table = KeywordTable::parse(&text).map_err(|source| GatewayError::Keywords {
                path: p.display().to_string(),
                source,
            })?;
            gw = gw.with_keywords(table);
        }
        Ok(gw)
    }

    pub fn route(&self, req: RouteRequest) -> Result<RouteResponse, ApiError> {
        let phase: Phase = req
            .phase
            .parse()
            .map_err(|e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
        if req.episode_id.is_empty() {
            return Err(ApiError::bad_request(
                "field `episode_id` must be non-empty",
            ));
        }
        let role = RoleId::new(req.role)
            .map_err(|_| ApiError::bad_request("field `role` must be non-empty"))?;
        let embedding = self.embedder.embed(&req.instruction).unwrap_or_else(|e| {
            warn!(error = %e, "embedding failed; using the canonical vector");
            let dim = self.embedder.dimension();
            EmbeddingVector::new(canonical_unit(dim)).expect("finite")
        });
        let ctx = SubTaskContext {
            role,
            instruction: req.instruction,
            embedding,
            episode_id: req.episode_id,
            step_index: req.step_index,
        };
        let snapshot = lock(&self.kb).snapshot();
        let seed = lock(&self.rng).next_u64();
        let mut rng = RandomSource::new(seed);
        let decision = match phase {
            Phase::Inference => self.inference.route(&ctx, &snapshot, &mut rng),
            Phase::Optimization => {
                let mut branches = self
                    .optimization
                    .route_branched(&ctx, &snapshot, &mut rng)
                    .expect("optimization router");
                let k = branch_index(&ctx.episode_id).min(branches.len() - 1);
                branches.swap_remove(k)
            }
        };

        let decision_id = Uuid::new_v4().to_string();
        let episode_id = ctx.episode_id.clone();
        loop {
            let handle = Arc::clone(
                lock(&self.episodes)
                    .entry(episode_id.clone())
                    .or_insert_with(|| {
                        Arc::new(Mutex::new(Episode {
                            buffer: EpisodeBuffer::new(episode_id.clone()),
                            touched: Instant::now(),
                            closed: false,
                        }))
                    }),
            );
            let mut ep = lock(&handle);
            if ep.closed {
                // Being removed by a concurrent commit or expiry; retry with a fresh buffer.
                drop(ep);
                std::thread::yield_now();
                continue;
            }
            if self.is_expired(&ep) {
                let ids = close(&mut ep);
                drop(ep);
                self.forget(&episode_id, &ids, "expired");
                continue;
            }
            ep.touched = Instant::now();
            ep.buffer.push_step(
                decision_id.clone(),
                ctx,
                decision.model.clone(),
                decision.predicted_tools.clone(),
            )?;
            break;
        }
        lock(&self.decisions).insert(decision_id.clone(), episode_id);
        *lock(&self.selections)
            .entry(decision.model.clone())
            .or_default() += 1;

        Ok(RouteResponse {
            decision_id,
            model: decision.model.to_string(),
            fallback_used: decision.fallback_used,
            pareto_models: decision
                .pareto_models
                .iter()
                .map(ToString::to_string)
                .collect(),
            candidate_count: decision.candidate_count,
        })
    }

    pub fn feedback(&self, req: FeedbackRequest) -> Result<FeedbackResponse, ApiError> {
        let success = match req.step_success {
            0 => StepSuccess::Failed,
            1 => StepSuccess::Succeeded,
            _ => return Err(ApiError::bad_request("field `step_success` must be 0 or 1")),
        };
        let tools = match req.tools {
            None => None,
            Some(names) => Some(
                names
                    .into_iter()
                    .map(ToolId::new)
                    .collect::<Result<BTreeSet<_>, _>>()
                    .map_err(|_| ApiError::bad_request("field `tools`: empty tool name"))?,
            ),
        };
        let unknown = || ApiError::not_found(format!("unknown decision `{}`", req.decision_id));
        let episode_id = lock(&self.decisions)
            .get(&req.decision_id)
            .cloned()
            .ok_or_else(unknown)?;
        let handle = self.live_episode(&episode_id).ok_or_else(unknown)?;
        let mut ep = lock(&handle);
        if ep.closed {
            return Err(unknown());
        }
        ep.touched = Instant::now();
        ep.buffer.record_step_with_tools(
            &req.decision_id,
            req.cost_usd,
            req.duration_s,
            success,
            tools,
        )?;
        Ok(FeedbackResponse { ok: true })
    }

    /// Commits the episode. The records are durable before this returns.
    pub fn complete(&self, req: CompleteRequest) -> Result<CompleteResponse, ApiError> {
        if !(0.0..=1.0).contains(&req.task_performance) {
            return Err(ApiError::bad_request(format!(
                "field `task_performance` must lie in [0,1], got {}",
                req.task_performance
            )));
        }
        let unknown = || ApiError::not_found(format!("unknown episode `{}`", req.episode_id));
        let handle = self.live_episode(&req.episode_id).ok_or_else(unknown)?;
        let mut ep = lock(&handle);
        if ep.closed {
            return Err(unknown());
        }
        let records_added = ep.buffer.len();
        let generation = {
            let mut kb = lock(&self.kb);
            ep.buffer
                .complete_task(req.task_performance, &mut kb, Utc::now())?
        };
        let ids = close(&mut ep);
        drop(ep);
        self.forget(&req.episode_id, &ids, "committed");
        Ok(CompleteResponse {
            generation,
            records_added,
        })
    }

    pub fn stats(&self) -> StatsResponse {
        let snapshot = lock(&self.kb).snapshot();
        StatsResponse {
            kb_size: snapshot.len(),
            generation: snapshot.generation(),
            selections: lock(&self.selections)
                .iter()
                .map(|(m, &n)| (m.to_string(), n))
                .collect(),
            kb_models: snapshot
                .model_counts()
                .into_iter()
                .map(|(m, n)| (m.to_string(), n))
                .collect(),
            open_episodes: lock(&self.episodes).len(),
        }
    }

    /// Discards every buffer idle for longer than the expiry. Returns how many.
    pub fn sweep_expired(&self) -> usize {
        let handles: Vec<(String, Arc<Mutex<Episode>>)> = lock(&self.episodes)
            .iter()
            .map(|(k, v)| (k.clone(), Arc::clone(v)))
            .collect();
        let mut swept = 0;
        for (id, handle) in handles {
            let Ok(mut ep) = handle.try_lock() else {
                continue;
            };
            if !ep.closed && self.is_expired(&ep) {
                let ids = close(&mut ep);
                drop(ep);
                self.forget(&id, &ids, "expired");
                swept += 1;
            }
        }
        swept
    }

    /// The episode handle, or `None` when absent or expired (expiry discards it).
    fn live_episode(&self, episode_id: &str) -> Option<Arc<Mutex<Episode>>> {
        let handle = lock(&self.episodes).get(episode_id).cloned()?;
        let mut ep = lock(&handle);
        if self.is_expired(&ep) && !ep.closed {
            let ids = close(&mut ep);
            drop(ep);
            self.forget(episode_id, &ids, "expired");
            return None;
        }
        drop(ep);
        Some(handle)
    }

    fn is_expired(&self, ep: &Episode) -> bool {
        ep.touched.elapsed() > self.idle_ttl
    }

    fn forget(&self, episode_id: &str, decision_ids: &[String], why: &str) {
        {
            let mut episodes = lock(&self.episodes);
            if episodes.get(episode_id).is_some_and(|h| lock(h).closed) {
                episodes.remove(episode_id);
            }
        }
        let mut decisions = lock(&self.decisions);
        for d in decision_ids {
            decisions.remove(d);
        }
        if why == "expired" {
            warn!(
                episode = episode_id,
                steps = decision_ids.len(),
                "idle episode discarded"
            );
        } else {
            info!(
                episode = episode_id,
                steps = decision_ids.len(),
                "episode {why}"
            );
        }
    }
}

fn close(ep: &mut Episode) -> Vec<String> {
    ep.closed = true;
    let ids = ep
        .buffer
        .pending()
        .iter()
        .map(|p| p.decision_id.clone())
        .collect();
    ep.buffer = EpisodeBuffer::new(ep.buffer.episode_id());
    ids
}

/// Branch number of an optimization episode id (`task-b2` → 2); 0 otherwise.
fn branch_index(episode_id: &str) -> usize {
    episode_id
        .rsplit_once("-b")
        .and_then(|(_, k)| k.parse().ok())
        .unwrap_or(0)
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            ApiError::bad_request(inner.to_string())
        } else {
            ApiError::bad_request(format!("field `{path}`: {inner}"))
        }
    })
}

async fn blocking<T, F>(gw: Arc<Gateway>, f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Gateway) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&gw))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
}

async fn route_handler(
    State(gw): State<Arc<Gateway>>,
    body: Bytes,
) -> Result<Json<RouteResponse>, ApiError> {
    let req: RouteRequest = parse(&body)?;
    blocking(gw, move |g| g.route(req)).await
}

async fn feedback_handler(
    State(gw): State<Arc<Gateway>>,
    body: Bytes,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    blocking(gw, move |g| g.feedback(req)).await
}

async fn complete_handler(
    State(gw): State<Arc<Gateway>>,
    body: Bytes,
) -> Result<Json<CompleteResponse>, ApiError> {
    let req: CompleteRequest = parse(&body)?;
    blocking(gw, move |g| g.complete(req)).await
}

async fn stats_handler(State(gw): State<Arc<Gateway>>) -> Json<StatsResponse> {
    Json(gw.stats())
}

pub fn app(gateway: Arc<Gateway>) -> axum::Router {
    axum::Router::new()
        .route("/v1/route", post(route_handler))
        .route("/v1/feedback", post(feedback_handler))
        .route("/v1/complete", post(complete_handler))
        .route("/v1/stats", get(stats_handler))
        .with_state(gateway)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let gw = Arc::clone(&gateway);
        let period = gw
            .idle_ttl
            .clamp(Duration::from_millis(100), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let g = Arc::clone(&gw);
                let _ = tokio::task::spawn_blocking(move || g.sweep_expired()).await;
            }
        })
    };
    let result = axum::serve(listener, app(gateway))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    result
}

/// Binds `settings.bind` and serves until Ctrl-C.
pub async fn serve(settings: GatewaySettings) -> Result<(), GatewayError> {
    let gateway = Arc::new(Gateway::from_settings(&settings)?);
    let listener = TcpListener::bind(&settings.bind)
        .await
        .map_err(|source| GatewayError::Io {
            context: format!("bind {}", settings.bind),
            source,
        })?;
    let addr: SocketAddr = listener.local_addr().map_err(|source| GatewayError::Io {
        context: "local address".into(),
        source,
    })?;
    info!(%addr, "gateway listening");
    serve_on(listener, gateway, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|source| GatewayError::Io {
        context: "serve".into(),
        source,
    })
}
