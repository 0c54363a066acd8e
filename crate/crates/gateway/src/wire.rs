//! JSON bodies of the HTTP API.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    pub episode_id: String,
    pub step_index: u32,
    pub role: String,
    pub instruction: String,
    /// Validated separately so an unknown value maps to 422, not 400.
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub decision_id: String,
    pub model: String,
    pub fallback_used: bool,
    pub pareto_models: Vec<String>,
    pub candidate_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub decision_id: String,
    pub cost_usd: f64,
    pub duration_s: f64,
    pub step_success: u8,
    /// Tools actually invoked; replaces the predicted set when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteRequest {
    pub episode_id: String,
    pub task_performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub generation: u64,
    pub records_added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub kb_size: usize,
    pub generation: u64,
    /// Decisions served by this process, per model.
    pub selections: BTreeMap<String, u64>,
    /// Records per model in the experience base.
    pub kb_models: BTreeMap<String, usize>,
    pub open_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}
