//! The routing loop: retrieve, aggregate, filter, select; buffer step
//! outcomes; commit whole trajectories once the task score is known.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::experience::{ExperienceBase, KbError, KbSnapshot};
use crate::pareto::{aggregate_records, pareto_filter};
use crate::retrieval::{retrieve_candidates, KeywordTable, SubTaskContext, ToolPredictor};
use crate::rng::RandomSource;
use crate::selector::{select, SampledUtility};
use crate::types::{ModelId, Phase, RouterConfig, StepRecord, StepSuccess, ToolId, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolModel {
    pub name: ModelId,
    pub input_price_per_m: f64,
    pub output_price_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("model pool is empty")]
    Empty,
    #[error("model `{0}` listed twice")]
    Duplicate(ModelId),
    #[error("model `{0}` has a negative or non-finite price")]
    BadPrice(ModelId),
}

/// The available LLM backbones, in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool {
    models: Vec<PoolModel>,
}

impl ModelPool {
    pub fn new(models: Vec<PoolModel>) -> Result<Self, PoolError> {
        if models.is_empty() {
            return Err(PoolError::Empty);
        }
        let mut seen = HashSet::new();
        for m in &models {
            if !seen.insert(&m.name) {
                return Err(PoolError::Duplicate(m.name.clone()));
            }
            let ok = |p: f64| p.is_finite() && p >= 0.0;
            if !(ok(m.input_price_per_m) && ok(m.output_price_per_m)) {
                return Err(PoolError::BadPrice(m.name.clone()));
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[PoolModel] {
        &self.models
    }

    pub fn names(&self) -> Vec<ModelId> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }

    pub fn contains(&self, model: &ModelId) -> bool {
        self.models.iter().any(|m| &m.name == model)
    }

    pub fn get(&self, model: &ModelId) -> Option<&PoolModel> {
        self.models.iter().find(|m| &m.name == model)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub decision_id: String,
    pub model: ModelId,
    pub phase: Phase,
    pub candidate_count: usize,
    pub pareto_models: Vec<ModelId>,
    pub sampled_utilities: Vec<SampledUtility>,
    pub fallback_used: bool,
    /// Set when `explore_rate` replaced the pipeline choice with an unobserved model.
    pub explored: bool,
    pub predicted_tools: BTreeSet<ToolId>,
    pub seed_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouterError {
    #[error("branched routing requires the optimization phase")]
    WrongPhase,
}

/// Routing engine: pool, configuration and tool prediction.
#[derive(Clone)]
pub struct Router {
    pool: ModelPool,
    config: RouterConfig,
    keywords: KeywordTable,
    predictor: Option<Arc<dyn ToolPredictor>>,
}

impl std::fmt::Debug for Router {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Router")
            .field("pool", &self.pool)
            .field("config", &self.config)
            .field("keywords", &self.keywords)
            .field("predictor", &self.predictor.is_some())
            .finish()
    }
}

impl Router {
    pub fn new(pool: ModelPool, config: RouterConfig) -> Self {
        Self {
            pool,
            config,
            keywords: KeywordTable::default(),
            predictor: None,
        }
    }

    pub fn with_keywords(mut self, keywords: KeywordTable) -> Self {
        self.keywords = keywords;
        self
    }

    pub fn with_predictor(mut self, predictor: Arc<dyn ToolPredictor>) -> Self {
        self.predictor = Some(predictor);
        self
    }

    pub fn pool(&self) -> &ModelPool {
        &self.pool
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    pub fn keywords(&self) -> &KeywordTable {
        &self.keywords
    }

    /// Routes one sub-task. Never fails: with no usable evidence the fallback
    /// model (or a uniform pool draw) is returned with `fallback_used` set.
    ///
    /// Exactly one `u64` is taken from `rng`; it seeds the decision's own
    /// stream and is reported as `seed_used`.
    pub fn route(
        &self,
        ctx: &SubTaskContext,
        snapshot: &KbSnapshot,
        rng: &mut RandomSource,
    ) -> RoutingDecision {
        let seed_used = rng.next_u64();
        let mut local = RandomSource::new(seed_used);
        let mut decision = RoutingDecision {
            decision_id: format!("{}:{}:0", ctx.episode_id, ctx.step_index),
            model: self.pool.models[0].name.clone(),
            phase: self.config.phase,
            candidate_count: 0,
            pareto_models: Vec::new(),
            sampled_utilities: Vec::new(),
            fallback_used: false,
            explored: false,
            predicted_tools: BTreeSet::new(),
            seed_used,
        };

        let cand = match retrieve_candidates(
            ctx,
            snapshot,
            &self.config,
            &self.keywords,
            self.predictor.as_deref(),
        ) {
            Ok(c) => c,
            Err(e) => {
                warn!(error = %e, "retrieval failed; using fallback");
                Default::default()
            }
        };
        decision.candidate_count = cand.len();
        decision.predicted_tools = cand.predicted_tools.clone();

        let profiles = aggregate_records(
            cand.records
                .iter()
                .map(|r| r.as_ref())
                .filter(|r| self.pool.contains(&r.model)),
        );
        if profiles.is_empty() {
            decision.fallback_used = true;
            decision.model = match &self.config.fallback_model {
                Some(m) if self.pool.contains(m) => m.clone(),
                _ => self.pool.models[local.index(self.pool.len())].name.clone(),
            };
            return decision;
        }

        let front = if self.config.pareto_filter {
            pareto_filter(&profiles).expect("profiles non-empty")
        } else {
            profiles.clone()
        };
        let chosen = select(&front, &self.config, &mut local).expect("front non-empty");
        decision.pareto_models = front.iter().map(|p| p.model.clone()).collect();
        decision.sampled_utilities = chosen.utilities;
        decision.model = chosen.model;

        if self.config.explore_rate > 0.0 && local.bernoulli(self.config.explore_rate) {
            let observed: HashSet<&ModelId> = profiles.iter().map(|p| &p.model).collect();
            let unobserved: Vec<&ModelId> = self
                .pool
                .models
                .iter()
                .map(|m| &m.name)
                .filter(|m| !observed.contains(m))
                .collect();
            if !unobserved.is_empty() {
                decision.model = unobserved[local.index(unobserved.len())].clone();
                decision.explored = true;
            }
        }
        decision
    }

    /// Optimization-phase routing: the pipeline choice first, then up to
    /// `branch_factor − 1` distinct uniform draws from the rest of the pool.
    pub fn route_branched(
        &self,
        ctx: &SubTaskContext,
        snapshot: &KbSnapshot,
        rng: &mut RandomSource,
    ) -> Result<Vec<RoutingDecision>, RouterError> {
        if self.config.phase != Phase::Optimization {
            return Err(RouterError::WrongPhase);
        }
        let first = self.route(ctx, snapshot, rng);
        let rest: Vec<ModelId> = self
            .pool
            .names()
            .into_iter()
            .filter(|m| m != &first.model)
            .collect();
        let mut local = RandomSource::new(first.seed_used ^ 0x5bd1_e995);
        let alternates = local.sample_distinct(&rest, self.config.branch_factor - 1);
        let mut out = Vec::with_capacity(alternates.len() + 1);
        for (k, model) in alternates.into_iter().enumerate() {
            let mut alt = first.clone();
            alt.decision_id = format!("{}:{}:{}", ctx.episode_id, ctx.step_index, k + 1);
            alt.model = model;
            alt.sampled_utilities.clear();
            alt.explored = true;
            out.push(alt);
        }
        out.insert(0, first);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub cost: f64,
    pub duration: f64,
    pub step_success: StepSuccess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingStep {
    pub decision_id: String,
    pub ctx: SubTaskContext,
    pub model: ModelId,
    pub tools: BTreeSet<ToolId>,
    pub outcome: Option<StepOutcome>,
}

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("unknown decision `{0}`")]
    UnknownDecision(String),
    #[error("decision `{0}` already has an outcome")]
    DuplicateStepOutcome(String),
    #[error("decision `{0}` is already buffered")]
    DuplicateDecision(String),
    #[error("context belongs to episode `{found}`, buffer holds `{expected}`")]
    EpisodeMismatch { expected: String, found: String },
    #[error("invalid step outcome: {0}")]
    InvalidOutcome(&'static str),
    #[error("steps without outcome: {0:?}")]
    IncompleteBuffer(Vec<String>),
    #[error("task_performance must lie in [0,1], got {0}")]
    InvalidPerformance(f64),
    #[error(transparent)]
    Commit(#[from] KbError),
}

/// Steps of one in-flight episode awaiting the task-level score.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBuffer {
    episode_id: String,
    pending: Vec<PendingStep>,
}

impl EpisodeBuffer {
    pub fn new(episode_id: impl Into<String>) -> Self {
        Self {
            episode_id: episode_id.into(),
            pending: Vec::new(),
        }
    }

    pub fn episode_id(&self) -> &str {
        &self.episode_id
    }

    pub fn pending(&self) -> &[PendingStep] {
        &self.pending
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn contains(&self, decision_id: &str) -> bool {
        self.pending.iter().any(|p| p.decision_id == decision_id)
    }

    /// Buffers a routed step. `tools` defaults to the predicted tools.
    pub fn push_decision(
        &mut self,
        decision: &RoutingDecision,
        ctx: SubTaskContext,
    ) -> Result<(), BufferError> {
        self.push_step(
            decision.decision_id.clone(),
            ctx,
            decision.model.clone(),
            decision.predicted_tools.clone(),
        )
    }

    /// Buffers a step whose model was chosen outside the router.
    pub fn push_step(
        &mut self,
        decision_id: String,
        ctx: SubTaskContext,
        model: ModelId,
        tools: BTreeSet<ToolId>,
    ) -> Result<(), BufferError> {
        if ctx.episode_id != self.episode_id {
            return Err(BufferError::EpisodeMismatch {
                expected: self.episode_id.clone(),
                found: ctx.episode_id,
            });
        }
        if self.contains(&decision_id) {
            return Err(BufferError::DuplicateDecision(decision_id));
        }
        self.pending.push(PendingStep {
            decision_id,
            ctx,
            model,
            tools,
            outcome: None,
        });
        Ok(())
    }

    pub fn record_step(
        &mut self,
        decision_id: &str,
        cost: f64,
        duration: f64,
        step_success: StepSuccess,
    ) -> Result<(), BufferError> {
        self.record_step_with_tools(decision_id, cost, duration, step_success, None)
    }

    /// Attaches an outcome; `tools`, when given, replaces the predicted tool set
    /// with the tools actually invoked.
    pub fn record_step_with_tools(
        &mut self,
        decision_id: &str,
        cost: f64,
        duration: f64,
        step_success: StepSuccess,
        tools: Option<BTreeSet<ToolId>>,
    ) -> Result<(), BufferError> {
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(BufferError::InvalidOutcome("cost must be non-negative"));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(BufferError::InvalidOutcome("duration must be non-negative"));
        }
        let step = self
            .pending
            .iter_mut()
            .find(|p| p.decision_id == decision_id)
            .ok_or_else(|| BufferError::UnknownDecision(decision_id.to_owned()))?;
        if step.outcome.is_some() {
            return Err(BufferError::DuplicateStepOutcome(decision_id.to_owned()));
        }
        step.outcome = Some(StepOutcome {
            cost,
            duration,
            step_success,
        });
        if let Some(tools) = tools {
            step.tools = tools;
        }
        Ok(())
    }

    /// Stamps every step with `task_performance`, commits the trajectory and
    /// clears the buffer. Steps are ordered by their context `step_index`
    /// (stable) and renumbered from 0.
    pub fn complete_task(
        &mut self,
        task_performance: f64,
        kb: &mut ExperienceBase,
        timestamp: DateTime<Utc>,
    ) -> Result<u64, BufferError> {
        if !(0.0..=1.0).contains(&task_performance) {
            return Err(BufferError::InvalidPerformance(task_performance));
        }
        let missing: Vec<String> = self
            .pending
            .iter()
            .filter(|p| p.outcome.is_none())
            .map(|p| p.decision_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(BufferError::IncompleteBuffer(missing));
        }
        let mut steps: Vec<&PendingStep> = self.pending.iter().collect();
        steps.sort_by_key(|p| p.ctx.step_index);
        let records: Vec<StepRecord> = steps
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let outcome = p.outcome.expect("checked above");
                StepRecord {
                    record_id: format!("{}/{}", self.episode_id, i),
                    episode_id: self.episode_id.clone(),
                    step_index: i as u32,
                    role: p.ctx.role.clone(),
                    model: p.model.clone(),
                    instruction: p.ctx.instruction.clone(),
                    embedding: p.ctx.embedding.clone(),
                    tools: p.tools.clone(),
                    cost: outcome.cost,
                    duration: outcome.duration,
                    step_success: outcome.step_success,
                    task_performance,
                    timestamp,
                    schema_version: SCHEMA_VERSION,
                }
            })
            .collect();
        let generation = kb.append_trajectory(records)?;
        self.pending.clear();
        Ok(generation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;
    use crate::types::fixtures::record;
    use crate::types::RoleId;

    const DIM: usize = 16;

    fn pool(names: &[&str]) -> ModelPool {
        ModelPool::new(
            names
                .iter()
                .map(|n| PoolModel {
                    name: ModelId::new(*n).unwrap(),
                    input_price_per_m: 1.0,
                    output_price_per_m: 2.0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn ctx(episode: &str, step: u32, role: &str, text: &str) -> SubTaskContext {
        SubTaskContext {
            role: RoleId::new(role).unwrap(),
            instruction: text.into(),
            embedding: hash_embed(text, DIM),
            episode_id: episode.into(),
            step_index: step,
        }
    }

    fn m(n: &str) -> ModelId {
        ModelId::new(n).unwrap()
    }

    #[test]
    fn pool_validation() {
        assert_eq!(ModelPool::new(vec![]), Err(PoolError::Empty));
        let dup = vec![
            PoolModel {
                name: m("a"),
                input_price_per_m: 1.0,
                output_price_per_m: 1.0,
            },
            PoolModel {
                name: m("a"),
                input_price_per_m: 1.0,
                output_price_per_m: 1.0,
            },
        ];
        assert!(matches!(ModelPool::new(dup), Err(PoolError::Duplicate(_))));
        let neg = vec![PoolModel {
            name: m("a"),
            input_price_per_m: -1.0,
            output_price_per_m: 1.0,
        }];
        assert!(matches!(ModelPool::new(neg), Err(PoolError::BadPrice(_))));
    }

    #[test]
    fn empty_base_uses_configured_fallback() {
        let cfg = RouterConfig {
            fallback_model: Some(m("qwen3-14b")),
            ..RouterConfig::default()
        };
        let router = Router::new(pool(&["gpt-4o", "qwen3-14b"]), cfg);
        let kb = ExperienceBase::new(DIM);
        let d = router.route(
            &ctx("e", 0, "coder", "write code"),
            &kb.snapshot(),
            &mut RandomSource::new(1),
        );
        assert_eq!(d.model, m("qwen3-14b"));
        assert!(d.fallback_used);
        assert_eq!(d.candidate_count, 0);
    }

    #[test]
    fn empty_base_without_fallback_draws_from_pool() {
        let router = Router::new(pool(&["a", "b", "c"]), RouterConfig::default());
        let kb = ExperienceBase::new(DIM);
        let mut seen = HashSet::new();
        let mut rng = RandomSource::new(3);
        for _ in 0..100 {
            let d = router.route(&ctx("e", 0, "r", "x"), &kb.snapshot(), &mut rng);
            assert!(d.fallback_used);
            seen.insert(d.model);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn single_candidate_model_is_selected() {
        let mut kb = ExperienceBase::new(DIM);
        let recs: Vec<StepRecord> = (0..3)
            .map(|i| {
                let mut r = record("h", i, "coder", "x-model", DIM);
                r.embedding = hash_embed("unrelated words here", DIM);
                r
            })
            .collect();
        kb.append_trajectory(recs).unwrap();
        let router = Router::new(pool(&["x-model", "y-model"]), RouterConfig::default());
        let d = router.route(
            &ctx("e", 0, "coder", "summarize"),
            &kb.snapshot(),
            &mut RandomSource::new(0),
        );
        assert_eq!(d.model, m("x-model"));
        assert!(!d.fallback_used);
        assert_eq!(d.candidate_count, 3);
        assert_eq!(d.pareto_models, vec![m("x-model")]);
    }

    #[test]
    fn candidates_outside_pool_trigger_fallback() {
        let mut kb = ExperienceBase::new(DIM);
        kb.append_trajectory(vec![record("h", 0, "coder", "retired", DIM)])
            .unwrap();
        let router = Router::new(pool(&["a"]), RouterConfig::default());
        let d = router.route(
            &ctx("e", 0, "coder", "x"),
            &kb.snapshot(),
            &mut RandomSource::new(0),
        );
        assert!(d.fallback_used);
        assert_eq!(d.candidate_count, 1);
        assert_eq!(d.model, m("a"));
    }

    #[test]
    fn exploration_picks_unobserved_models() {
        let mut kb = ExperienceBase::new(DIM);
        kb.append_trajectory(vec![record("h", 0, "coder", "a", DIM)])
            .unwrap();
        let cfg = RouterConfig {
            explore_rate: 1.0,
            ..RouterConfig::default()
        };
        let router = Router::new(pool(&["a", "b"]), cfg);
        let d = router.route(
            &ctx("e", 0, "coder", "x"),
            &kb.snapshot(),
            &mut RandomSource::new(0),
        );
        assert_eq!(d.model, m("b"));
        assert!(d.explored && !d.fallback_used);
    }

    #[test]
    fn branched_routing() {
        let mut kb = ExperienceBase::new(DIM);
        kb.append_trajectory(vec![record("h", 0, "coder", "a", DIM)])
            .unwrap();
        let names = ["a", "b", "c", "d", "e", "f"];
        let cfg = RouterConfig {
            phase: Phase::Optimization,
            ..RouterConfig::default()
        };
        let router = Router::new(pool(&names), cfg.clone());
        let c = ctx("e", 0, "coder", "x");
        let ds = router
            .route_branched(&c, &kb.snapshot(), &mut RandomSource::new(4))
            .unwrap();
        assert_eq!(ds.len(), 3);
        let single = router.route(&c, &kb.snapshot(), &mut RandomSource::new(4));
        assert_eq!(ds[0], single);
        let distinct: HashSet<_> = ds.iter().map(|d| d.model.clone()).collect();
        assert_eq!(distinct.len(), 3);
        let ids: HashSet<_> = ds.iter().map(|d| d.decision_id.clone()).collect();
        assert_eq!(ids.len(), 3);

        let one = Router::new(
            pool(&names),
            RouterConfig {
                branch_factor: 1,
                ..cfg.clone()
            },
        );
        let ds = one
            .route_branched(&c, &kb.snapshot(), &mut RandomSource::new(4))
            .unwrap();
        assert_eq!(ds, vec![single]);

        let small = Router::new(pool(&["a", "b"]), cfg);
        assert_eq!(
            small
                .route_branched(&c, &kb.snapshot(), &mut RandomSource::new(4))
                .unwrap()
                .len(),
            2
        );

        let inference = Router::new(pool(&names), RouterConfig::default());
        assert_eq!(
            inference.route_branched(&c, &kb.snapshot(), &mut RandomSource::new(4)),
            Err(RouterError::WrongPhase)
        );
    }

    fn routed_buffer(n: u32) -> (EpisodeBuffer, Vec<String>) {
        let router = Router::new(pool(&["a"]), RouterConfig::default());
        let kb = ExperienceBase::new(DIM);
        let mut buf = EpisodeBuffer::new("ep");
        let mut ids = Vec::new();
        let mut rng = RandomSource::new(0);
        for i in 0..n {
            let c = ctx("ep", i, "coder", "run the script");
            let d = router.route(&c, &kb.snapshot(), &mut rng);
            buf.push_decision(&d, c).unwrap();
            ids.push(d.decision_id);
        }
        (buf, ids)
    }

    #[test]
    fn record_step_errors() {
        let (mut buf, ids) = routed_buffer(1);
        buf.record_step(&ids[0], 0.0075, 2.1, StepSuccess::Succeeded)
            .unwrap();
        assert_eq!(buf.len(), 1);
        assert!(matches!(
            buf.record_step("nope", 0.0, 0.0, StepSuccess::Failed),
            Err(BufferError::UnknownDecision(_))
        ));
        assert!(matches!(
            buf.record_step(&ids[0], 9.0, 9.0, StepSuccess::Failed),
            Err(BufferError::DuplicateStepOutcome(_))
        ));
        assert_eq!(buf.pending()[0].outcome.unwrap().cost, 0.0075);
    }

    #[test]
    fn complete_task_commits_every_step() {
        let (mut buf, ids) = routed_buffer(3);
        for id in &ids {
            buf.record_step(id, 0.01, 1.0, StepSuccess::Succeeded)
                .unwrap();
        }
        let mut kb = ExperienceBase::new(DIM);
        let generation = buf.complete_task(1.0, &mut kb, Utc::now()).unwrap();
        assert_eq!(generation, 1);
        assert_eq!(kb.len(), 3);
        assert!(kb
            .snapshot()
            .records()
            .iter()
            .all(|r| r.task_performance == 1.0));
        assert!(buf.is_empty());
        // Predicted tools become the record's tool set by default.
        assert!(kb.snapshot().records()[0]
            .tools
            .contains(&ToolId::new("code_interpreter").unwrap()));
    }

    #[test]
    fn incomplete_buffer_is_rejected() {
        let (mut buf, ids) = routed_buffer(3);
        buf.record_step(&ids[0], 0.01, 1.0, StepSuccess::Succeeded)
            .unwrap();
        buf.record_step(&ids[2], 0.01, 1.0, StepSuccess::Succeeded)
            .unwrap();
        let mut kb = ExperienceBase::new(DIM);
        match buf.complete_task(1.0, &mut kb, Utc::now()) {
            Err(BufferError::IncompleteBuffer(missing)) => {
                assert_eq!(missing, vec![ids[1].clone()])
            }
            other => panic!("{other:?}"),
        }
        assert!(kb.is_empty());
        assert_eq!(buf.len(), 3);
        assert!(matches!(
            buf.complete_task(1.5, &mut kb, Utc::now()),
            Err(BufferError::InvalidPerformance(_))
        ));
    }

    #[test]
    fn zero_score_feeds_back_into_estimates() {
        let (mut buf, ids) = routed_buffer(2);
        for id in &ids {
            buf.record_step(id, 0.01, 1.0, StepSuccess::Succeeded)
                .unwrap();
        }
        let mut kb = ExperienceBase::new(DIM);
        buf.complete_task(0.0, &mut kb, Utc::now()).unwrap();
        let profiles = aggregate_records(kb.snapshot().records().iter().map(|r| r.as_ref()));
        assert_eq!(profiles[0].p_hat, 0.0);
    }

    #[test]
    fn committed_steps_become_candidates() {
        let router = Router::new(pool(&["a", "b"]), RouterConfig::default());
        let mut kb = ExperienceBase::new(DIM);
        let c = ctx("ep", 0, "coder", "compile the module");
        let before = router.route(&c, &kb.snapshot(), &mut RandomSource::new(9));
        assert_eq!(before.candidate_count, 0);
        let mut buf = EpisodeBuffer::new("ep");
        buf.push_decision(&before, c.clone()).unwrap();
        buf.record_step(&before.decision_id, 0.01, 1.0, StepSuccess::Succeeded)
            .unwrap();
        buf.complete_task(1.0, &mut kb, Utc::now()).unwrap();
        let after = router.route(&c, &kb.snapshot(), &mut RandomSource::new(9));
        assert_eq!(after.candidate_count, 1);
        assert_eq!(after.model, before.model);
        assert!(!after.fallback_used);
    }
}
