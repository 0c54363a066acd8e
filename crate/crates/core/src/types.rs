//! Domain vocabulary shared by every other module.
//!
//! Everything here is a plain value: cloneable, comparable, and safe to send
//! across threads. Units are fixed: cost in USD, duration in seconds.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current on-disk schema version for [`StepRecord`].
pub const SCHEMA_VERSION: u32 = 1;

/// Default embedding dimension (MiniLM-class encoders emit 384 floats).
pub const DEFAULT_DIMENSION: usize = 384;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} identifier must be non-empty")]
pub struct EmptyIdentifier {
    pub kind: &'static str,
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident, $kind:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Result<Self, EmptyIdentifier> {
                let name = name.into();
                if name.is_empty() {
                    return Err(EmptyIdentifier { kind: $kind });
                }
                Ok(Self(name))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = EmptyIdentifier;

            fn try_from(value: String) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = EmptyIdentifier;

            fn try_from(value: &str) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(value: $name) -> String {
                value.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Name of an LLM backbone in the model pool, e.g. `gpt-4o`.
    ModelId,
    "model"
);
string_id!(
    /// Name of an agent role, e.g. `web_agent`.
    RoleId,
    "role"
);
string_id!(
    /// Name of an external tool, e.g. `web_search`.
    ToolId,
    "tool"
);

/// Fixed-length embedding of an instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("embedding must have at least one entry")]
    Empty,
    #[error("embedding entry {index} is not finite")]
    NonFinite { index: usize },
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Binary step outcome (`σ_t`), encoded as `0` or `1` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum StepSuccess {
    Failed,
    Succeeded,
}

impl StepSuccess {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            StepSuccess::Succeeded
        } else {
            StepSuccess::Failed
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            StepSuccess::Failed => 0.0,
            StepSuccess::Succeeded => 1.0,
        }
    }

    pub fn is_success(self) -> bool {
        self == StepSuccess::Succeeded
    }
}

impl TryFrom<u8> for StepSuccess {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(StepSuccess::Failed),
            1 => Ok(StepSuccess::Succeeded),
            other => Err(format!("step_success must be 0 or 1, got {other}")),
        }
    }
}

impl From<StepSuccess> for u8 {
    fn from(value: StepSuccess) -> u8 {
        match value {
            StepSuccess::Failed => 0,
            StepSuccess::Succeeded => 1,
        }
    }
}

/// One historical sub-task execution.
///
/// Field names are the canonical JSON keys of the experience-base log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub record_id: String,
    pub episode_id: String,
    pub step_index: u32,
    pub role: RoleId,
    pub model: ModelId,
    pub instruction: String,
    pub embedding: EmbeddingVector,
    pub tools: BTreeSet<ToolId>,
    pub cost: f64,
    pub duration: f64,
    pub step_success: StepSuccess,
    pub task_performance: f64,
    pub timestamp: DateTime<Utc>,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid record: {0}")]
pub struct InvalidRecord(pub String);

impl StepRecord {
    /// Performance sample used by the router: `P(τ) · σ_t`.
    pub fn performance_sample(&self) -> f64 {
        self.task_performance * self.step_success.as_f64()
    }

    /// Returns the record unchanged iff every invariant holds; the error names
    /// the first violated invariant.
    pub fn validate(self, dimension: usize) -> Result<Self, InvalidRecord> {
        validate_record(&self, dimension)?;
        Ok(self)
    }
}

pub fn validate_record(record: &StepRecord, dimension: usize) -> Result<(), InvalidRecord> {
    let fail = |msg: &str| Err(InvalidRecord(msg.to_owned()));
    if record.record_id.is_empty() {
        return fail("record_id empty");
    }
    if record.episode_id.is_empty() {
        return fail("episode_id empty");
    }
    if !(record.cost.is_finite() && record.cost >= 0.0) {
        return fail("cost negative or not finite");
    }
    if !(record.duration.is_finite() && record.duration >= 0.0) {
        return fail("duration negative or not finite");
    }
    if !(0.0..=1.0).contains(&record.task_performance) {
        return fail("task_performance out of [0,1]");
    }
    if record.embedding.dimension() != dimension {
        return fail("embedding dimension mismatch");
    }
    if record.schema_version == 0 || record.schema_version > SCHEMA_VERSION {
        return fail("unsupported schema_version");
    }
    Ok(())
}

/// Scalarization weights of the sampled utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrilemmaWeights {
    #[serde(rename = "p")]
    pub performance: f64,
    #[serde(rename = "c")]
    pub cost: f64,
    #[serde(rename = "d")]
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("weights must be finite and non-negative")]
    NegativeWeight,
    #[error("performance weight must be positive")]
    ZeroPerformanceWeight,
    #[error("theta_sim must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("explore_rate must lie in [0, 1], got {0}")]
    ExploreRate(f64),
    #[error("branch_factor must be at least 1")]
    BranchFactor,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl TrilemmaWeights {
    pub fn new(performance: f64, cost: f64, duration: f64) -> Result<Self, ConfigError> {
        let w = Self {
            performance,
            cost,
            duration,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(self.performance) && ok(self.cost) && ok(self.duration)) {
            return Err(ConfigError::NegativeWeight);
        }
        if self.performance <= 0.0 {
            return Err(ConfigError::ZeroPerformanceWeight);
        }
        Ok(())
    }

    /// `w_p·p − w_c·c − w_d·d`
    pub fn utility(&self, performance: f64, cost: f64, duration: f64) -> f64 {
        self.performance * performance - self.cost * cost - self.duration * duration
    }
}

impl Default for TrilemmaWeights {
    fn default() -> Self {
        Self {
            performance: 1.0,
            cost: 0.1,
            duration: 0.05,
        }
    }
}

/// Trajectory-level objectives: performance in `[0,1]`, cost in USD, duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub performance: f64,
    pub cost: f64,
    pub duration: f64,
}

impl MetricTriple {
    pub fn new(performance: f64, cost: f64, duration: f64) -> Option<Self> {
        let valid = (0.0..=1.0).contains(&performance)
            && cost.is_finite()
            && cost >= 0.0
            && duration.is_finite()
            && duration >= 0.0;
        valid.then_some(Self {
            performance,
            cost,
            duration,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Branched exploration that enriches the experience base.
    Optimization,
    /// Single-path exploitation.
    #[default]
    Inference,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Optimization => f.write_str("optimization"),
            Phase::Inference => f.write_str("inference"),
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimization" => Ok(Phase::Optimization),
            "inference" => Ok(Phase::Inference),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// Which retrieval facets contribute to the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FacetMask {
    pub agent: bool,
    pub semantic: bool,
    pub tool: bool,
}

impl Default for FacetMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl FacetMask {
    pub const ALL: FacetMask = FacetMask {
        agent: true,
        semantic: true,
        tool: true,
    };
    pub const SEMANTIC_ONLY: FacetMask = FacetMask {
        agent: false,
        semantic: true,
        tool: false,
    };
}

/// How a model is picked from the Pareto set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// One posterior draw per metric, argmax of sampled utility.
    #[default]
    Thompson,
    /// Argmax of utility at the sample means.
    Greedy,
}

/// Router configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    pub theta_sim: f64,
    pub weights: TrilemmaWeights,
    pub variance_floor: f64,
    pub min_pseudo_count: f64,
    pub fallback_model: Option<ModelId>,
    pub explore_rate: f64,
    pub phase: Phase,
    pub branch_factor: usize,
    pub rng_seed: u64,
    /// Min-max normalize sampled metrics across the Pareto set before scoring.
    pub normalize_metrics: bool,
    pub facets: FacetMask,
    pub selection: SelectionMode,
    /// Skip dominance pruning and score every candidate model.
    pub pareto_filter: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            theta_sim: 0.85,
            weights: TrilemmaWeights::default(),
            variance_floor: 1e-6,
            min_pseudo_count: 1.0,
            fallback_model: None,
            explore_rate: 0.0,
            phase: Phase::Inference,
            branch_factor: 3,
            rng_seed: 0,
            normalize_metrics: false,
            facets: FacetMask::ALL,
            selection: SelectionMode::Thompson,
            pareto_filter: true,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.theta_sim > 0.0 && self.theta_sim <= 1.0) {
            return Err(ConfigError::Threshold(self.theta_sim));
        }
        if !(0.0..=1.0).contains(&self.explore_rate) {
            return Err(ConfigError::ExploreRate(self.explore_rate));
        }
        if self.branch_factor == 0 {
            return Err(ConfigError::BranchFactor);
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(ConfigError::NonPositive("variance_floor"));
        }
        if !(self.min_pseudo_count > 0.0 && self.min_pseudo_count.is_finite()) {
            return Err(ConfigError::NonPositive("min_pseudo_count"));
        }
        self.weights.validate()
    }
}
