//! Episode execution, cold start, policy evaluation and the analytical oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spec::{Difficulty, GeneratorConfig, PerformanceMode, SpecError, SyntheticModelSpec};
use super::task::{exec_step, gen_task, SyntheticTask};
use crate::embedding::{fnv1a64, EmbedError, Embedder};
use crate::experience::ExperienceBase;
use crate::pareto::dominates_triple;
use crate::retrieval::SubTaskContext;
use crate::rng::RandomSource;
use crate::router::{
    BufferError, EpisodeBuffer, ModelPool, PoolError, PoolModel, Router, RouterError,
};
use crate::types::{ModelId, Phase, RoleId, StepSuccess};

const STREAM_COLD: u64 = 1;
const STREAM_EVAL: u64 = 2;
const LABEL_TASK: u64 = 10;
const LABEL_EXEC: u64 = 11;
const LABEL_ROUTE: u64 = 12;
const LABEL_POLICY: u64 = 13;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error("{0}")]
    Invalid(String),
}

/// Which controller picks the model for each step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    EvoRoute,
    FixedModel(ModelId),
    UniformRandom,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::EvoRoute => f.write_str("evoroute"),
            Policy::FixedModel(m) => write!(f, "fixed:{m}"),
            Policy::UniformRandom => f.write_str("random"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "evoroute" => Ok(Policy::EvoRoute),
            "random" => Ok(Policy::UniformRandom),
            _ => match s.strip_prefix("fixed:") {
                Some(m) => ModelId::new(m)
                    .map(Policy::FixedModel)
                    .map_err(|_| "fixed policy needs a model name".to_owned()),
                None => Err(format!(
                    "unknown policy `{s}` (expected evoroute, random or fixed:<model>)"
                )),
            },
        }
    }
}

/// Source of the task sequence. Cold start and evaluation draw from disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStream {
    ColdStart,
    Evaluation,
}

impl TaskStream {
    fn label(self) -> u64 {
        match self {
            TaskStream::ColdStart => STREAM_COLD,
            TaskStream::Evaluation => STREAM_EVAL,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            TaskStream::ColdStart => "cold",
            TaskStream::Evaluation => "eval",
        }
    }
}

/// Planted pool plus task generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    specs: Vec<SyntheticModelSpec>,
    generator: GeneratorConfig,
    performance: PerformanceMode,
}

impl Simulation {
    pub fn new(
        specs: Vec<SyntheticModelSpec>,
        generator: GeneratorConfig,
        performance: PerformanceMode,
    ) -> Result<Self, SimError> {
        generator.validate()?;
        if specs.is_empty() {
            return Err(PoolError::Empty.into());
        }
        for s in &specs {
            s.validate()?;
            for r in &generator.roles {
                s.success(&r.name, Difficulty::Easy)?;
                s.tokens(&r.name)?;
            }
        }
        let sim = Self {
            specs,
            generator,
            performance,
        };
        sim.pool()?;
        Ok(sim)
    }

    pub fn specs(&self) -> &[SyntheticModelSpec] {
        &self.specs
    }

    pub fn generator(&self) -> &GeneratorConfig {
        &self.generator
    }

    pub fn performance(&self) -> PerformanceMode {
        self.performance
    }

    pub fn spec(&self, model: &ModelId) -> Result<&SyntheticModelSpec, SpecError> {
        self.specs
            .iter()
            .find(|s| &s.model == model)
            .ok_or_else(|| SpecError::UnknownModel(model.clone()))
    }

    pub fn pool(&self) -> Result<ModelPool, PoolError> {
        ModelPool::new(
            self.specs
                .iter()
                .map(|s| PoolModel {
                    name: s.model.clone(),
                    input_price_per_m: s.input_price,
                    output_price_per_m: s.output_price,
                })
                .collect(),
        )
    }

    /// The `index`-th task of a stream. Identical for every policy given the seed.
    pub fn task(
        &self,
        seed: u64,
        stream: TaskStream,
        index: u64,
    ) -> Result<SyntheticTask, SpecError> {
        let mut rng = RandomSource::derived(seed, &[LABEL_TASK, stream.label(), index]);
        gen_task(
            &self.generator,
            format!("{}-{index}", stream.prefix()),
            &mut rng,
        )
    }

    /// Task-level score from the outcomes of a trajectory.
    pub fn score(&self, task: &SyntheticTask, outcomes: &[StepSuccess]) -> f64 {
        let critical: Vec<bool> = task
            .steps
            .iter()
            .zip(outcomes)
            .filter(|(s, _)| s.critical)
            .map(|(_, o)| o.is_success())
            .collect();
        match self.performance {
            PerformanceMode::Binary => f64::from(u8::from(critical.iter().all(|ok| *ok))),
            PerformanceMode::Fraction if critical.is_empty() => 1.0,
            PerformanceMode::Fraction => {
                critical.iter().filter(|ok| **ok).count() as f64 / critical.len() as f64
            }
        }
    }
}

/// One executed step, for histograms and audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub branch: usize,
    pub role: RoleId,
    pub difficulty: Difficulty,
    pub model: ModelId,
    pub step_success: StepSuccess,
    pub cost: f64,
    pub duration: f64,
    pub fallback_used: bool,
}

/// Metrics of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub performance: f64,
    pub cost: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// One entry per executed trajectory; the first is the pipeline path.
    pub trajectories: Vec<TrajectoryMetrics>,
    pub steps: Vec<StepTrace>,
    pub generation: u64,
    pub records_added: usize,
}

impl EpisodeResult {
    pub fn primary(&self) -> TrajectoryMetrics {
        self.trajectories[0]
    }

    pub fn total_cost(&self) -> f64 {
        self.trajectories.iter().map(|t| t.cost).sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.trajectories.iter().map(|t| t.duration).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColdStartSummary {
    pub tasks: usize,
    pub records_added: usize,
    pub total_cost: f64,
    pub total_duration: f64,
}

pub type SelectionHistogram<K> = BTreeMap<K, BTreeMap<ModelId, u64>>;

/// Aggregate outcome of running one policy over a task sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrilemmaReport {
    pub policy: String,
    pub episodes: usize,
    pub mean_performance: f64,
    pub total_cost: f64,
    pub total_duration: f64,
    pub selections_by_role: SelectionHistogram<RoleId>,
    pub selections_by_difficulty: SelectionHistogram<Difficulty>,
    /// Primary-trajectory score of each episode, in task order.
    pub episode_performance: Vec<f64>,
}

impl TrilemmaReport {
    pub fn routed_steps(&self) -> u64 {
        self.selections_by_role
            .values()
            .flat_map(|m| m.values())
            .sum()
    }

    /// Share of `model` among steps of `difficulty` (0 when there are none).
    pub fn difficulty_share(&self, difficulty: Difficulty, model: &ModelId) -> f64 {
        share(self.selections_by_difficulty.get(&difficulty), model)
    }

    pub fn role_share(&self, role: &RoleId, model: &ModelId) -> f64 {
        share(self.selections_by_role.get(role), model)
    }
}

fn share(counts: Option<&BTreeMap<ModelId, u64>>, model: &ModelId) -> f64 {
    let Some(counts) = counts else { return 0.0 };
    let total: u64 = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    counts.get(model).copied().unwrap_or(0) as f64 / total as f64
}

fn synthetic_clock(generation: u64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0)
        .single()
        .expect("valid date")
        + Duration::seconds(generation as i64)
}

/// Router, embedder and simulated environment bundled for episode runs.
#[derive(Debug, Clone)]
pub struct Harness {
    pub sim: Simulation,
    pub router: Router,
    pub embedder: Embedder,
    specs_by_model: HashMap<ModelId, usize>,
}

impl Harness {
    pub fn new(sim: Simulation, router: Router, embedder: Embedder) -> Result<Self, SimError> {
        for m in router.pool().models() {
            sim.spec(&m.name)?;
        }
        let specs_by_model = sim
            .specs()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.model.clone(), i))
            .collect();
        Ok(Self {
            sim,
            router,
            embedder,
            specs_by_model,
        })
    }

    fn spec(&self, model: &ModelId) -> Result<&SyntheticModelSpec, SpecError> {
        self.specs_by_model
            .get(model)
            .map(|&i| &self.sim.specs()[i])
            .ok_or_else(|| SpecError::UnknownModel(model.clone()))
    }

    /// Runs one task under `policy` and commits every executed trajectory.
    ///
    /// Step outcomes are drawn from a stream keyed by (seed, task, step), so
    /// different policies on the same task face the same noise. Under
    /// `EvoRoute` in the optimization phase each branch index forms its own
    /// trajectory: branch 0 follows the pipeline, the others its alternates.
    pub fn run_episode(
        &self,
        kb: &mut ExperienceBase,
        task: &SyntheticTask,
        policy: &Policy,
        seed: u64,
    ) -> Result<EpisodeResult, SimError> {
        let task_key = fnv1a64(task.task_id.as_bytes());
        let branched =
            *policy == Policy::EvoRoute && self.router.config().phase == Phase::Optimization;
        let pool = self.router.pool();
        let n_branches = if branched {
            self.router.config().branch_factor.min(pool.len())
        } else {
            1
        };
        let episode_ids: Vec<String> = (0..n_branches)
            .map(|b| match b {
                0 => task.task_id.clone(),
                b => format!("{}-b{b}", task.task_id),
            })
            .collect();
        let mut buffers: Vec<EpisodeBuffer> = episode_ids.iter().map(EpisodeBuffer::new).collect();
        let mut outcomes: Vec<Vec<StepSuccess>> = vec![Vec::new(); n_branches];
        let mut traces = Vec::new();
        let mut route_rng = RandomSource::derived(seed, &[LABEL_ROUTE, task_key]);
        let mut policy_rng = RandomSource::derived(seed, &[LABEL_POLICY, task_key]);
        let snapshot = kb.snapshot();

        for (i, step) in task.steps.iter().enumerate() {
            let ctx = SubTaskContext {
                role: step.role.clone(),
                instruction: step.instruction.clone(),
                embedding: self.embedder.embed(&step.instruction)?,
                episode_id: episode_ids[0].clone(),
                step_index: i as u32,
            };
            // (decision id, model, fallback flag) per branch.
            let choices: Vec<(String, ModelId, bool)> = match policy {
                Policy::EvoRoute if branched => self
                    .router
                    .route_branched(&ctx, &snapshot, &mut route_rng)?
                    .into_iter()
                    .map(|d| (d.decision_id, d.model, d.fallback_used))
                    .collect(),
                Policy::EvoRoute => {
                    let d = self.router.route(&ctx, &snapshot, &mut route_rng);
                    vec![(d.decision_id, d.model, d.fallback_used)]
                }
                Policy::FixedModel(m) => {
                    vec![(format!("{}:{i}:0", ctx.episode_id), m.clone(), false)]
                }
                Policy::UniformRandom => {
                    let m = pool.models()[policy_rng.index(pool.len())].name.clone();
                    vec![(format!("{}:{i}:0", ctx.episode_id), m, false)]
                }
            };
            if choices.len() != n_branches {
                return Err(SimError::Invalid(format!(
                    "expected {n_branches} branches, router returned {}",
                    choices.len()
                )));
            }
            for (b, (decision_id, model, fallback_used)) in choices.into_iter().enumerate() {
                let spec = self.spec(&model)?;
                let mut exec_rng = RandomSource::derived(seed, &[LABEL_EXEC, task_key, i as u64]);
                let exec = exec_step(spec, step, &mut exec_rng)?;
                let branch_ctx = SubTaskContext {
                    episode_id: episode_ids[b].clone(),
                    ..ctx.clone()
                };
                let buffer = &mut buffers[b];
                buffer.push_step(
                    decision_id.clone(),
                    branch_ctx,
                    model.clone(),
                    step.required_tools.clone(),
                )?;
                buffer.record_step(&decision_id, exec.cost, exec.duration, exec.step_success)?;
                outcomes[b].push(exec.step_success);
                traces.push(StepTrace {
                    branch: b,
                    role: step.role.clone(),
                    difficulty: step.difficulty,
                    model,
                    step_success: exec.step_success,
                    cost: exec.cost,
                    duration: exec.duration,
                    fallback_used,
                });
            }
        }
        drop(snapshot);

        let mut trajectories = Vec::with_capacity(n_branches);
        let mut generation = kb.generation();
        let mut records_added = 0;
        for (b, buffer) in buffers.iter_mut().enumerate() {
            let performance = self.sim.score(task, &outcomes[b]);
            let (cost, duration) = traces
                .iter()
                .filter(|t| t.branch == b)
                .fold((0.0, 0.0), |(c, d), t| (c + t.cost, d + t.duration));
            records_added += buffer.len();
            generation = buffer.complete_task(performance, kb, synthetic_clock(kb.generation()))?;
            trajectories.push(TrajectoryMetrics {
                performance,
                cost,
                duration,
            });
        }
        Ok(EpisodeResult {
            trajectories,
            steps: traces,
            generation,
            records_added,
        })
    }

    /// Populates `kb` by running `tasks` with a uniformly random model at every step.
    pub fn cold_start_tasks(
        &self,
        kb: &mut ExperienceBase,
        tasks: impl IntoIterator<Item = SyntheticTask>,
        seed: u64,
    ) -> Result<ColdStartSummary, SimError> {
        let mut summary = ColdStartSummary {
            tasks: 0,
            records_added: 0,
            total_cost: 0.0,
            total_duration: 0.0,
        };
        for task in tasks {
            let r = self.run_episode(kb, &task, &Policy::UniformRandom, seed)?;
            summary.tasks += 1;
            summary.records_added += r.records_added;
            summary.total_cost += r.total_cost();
            summary.total_duration += r.total_duration();
        }
        Ok(summary)
    }

    /// Cold start over the first `n_tasks` tasks of the cold-start stream.
    pub fn cold_start(
        &self,
        kb: &mut ExperienceBase,
        n_tasks: usize,
        seed: u64,
    ) -> Result<ColdStartSummary, SimError> {
        if n_tasks == 0 {
            return Err(SimError::Invalid(
                "cold start needs at least one task".into(),
            ));
        }
        let tasks = (0..n_tasks as u64)
            .map(|i| self.sim.task(seed, TaskStream::ColdStart, i))
            .collect::<Result<Vec<_>, _>>()?;
        self.cold_start_tasks(kb, tasks, seed)
    }

    /// Runs the first `n_episodes` evaluation tasks under `policy`.
    pub fn evaluate(
        &self,
        kb: &mut ExperienceBase,
        policy: &Policy,
        n_episodes: usize,
        seed: u64,
    ) -> Result<TrilemmaReport, SimError> {
        if n_episodes == 0 {
            return Err(SimError::Invalid(
                "evaluation needs at least one episode".into(),
            ));
        }
        if let Policy::FixedModel(m) = policy {
            self.spec(m)?;
        }
        let mut report = TrilemmaReport {
            policy: policy.to_string(),
            episodes: n_episodes,
            mean_performance: 0.0,
            total_cost: 0.0,
            total_duration: 0.0,
            selections_by_role: BTreeMap::new(),
            selections_by_difficulty: BTreeMap::new(),
            episode_performance: Vec::with_capacity(n_episodes),
        };
        for i in 0..n_episodes as u64 {
            let task = self.sim.task(seed, TaskStream::Evaluation, i)?;
            let r = self.run_episode(kb, &task, policy, seed)?;
            report.episode_performance.push(r.primary().performance);
            report.total_cost += r.total_cost();
            report.total_duration += r.total_duration();
            for s in &r.steps {
                *report
                    .selections_by_role
                    .entry(s.role.clone())
                    .or_default()
                    .entry(s.model.clone())
                    .or_default() += 1;
                *report
                    .selections_by_difficulty
                    .entry(s.difficulty)
                    .or_default()
                    .entry(s.model.clone())
                    .or_default() += 1;
            }
        }
        report.mean_performance =
            report.episode_performance.iter().sum::<f64>() / n_episodes as f64;
        Ok(report)
    }
}

/// Closed-form expected (performance, cost, duration) of one step.
pub fn expected_triple(
    spec: &SyntheticModelSpec,
    role: &RoleId,
    difficulty: Difficulty,
) -> Result<(f64, f64, f64), SpecError> {
    Ok((
        spec.success(role, difficulty)?,
        spec.mean_cost(role)?,
        spec.mean_duration(),
    ))
}

/// Models whose expected step triple is not dominated by any other model's.
pub fn oracle_pareto(
    specs: &[SyntheticModelSpec],
    role: &RoleId,
    difficulty: Difficulty,
) -> Result<BTreeSet<ModelId>, SpecError> {
    let triples = specs
        .iter()
        .map(|s| expected_triple(s, role, difficulty))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(specs
        .iter()
        .zip(&triples)
        .filter(|(_, t)| !triples.iter().any(|o| dominates_triple(*o, **t)))
        .map(|(s, _)| s.model.clone())
        .collect())
}
