//! Planted ground truth: per-model behavior and the task generator's knobs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ModelId, RoleId, ToolId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown difficulty `{s}`"))
    }
}

/// One value per difficulty bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerDifficulty {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl PerDifficulty {
    pub const fn uniform(v: f64) -> Self {
        Self {
            easy: v,
            medium: v,
            hard: v,
        }
    }

    pub fn get(&self, d: Difficulty) -> f64 {
        match d {
            Difficulty::Easy => self.easy,
            Difficulty::Medium => self.medium,
            Difficulty::Hard => self.hard,
        }
    }

    fn values(&self) -> [f64; 3] {
        [self.easy, self.medium, self.hard]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenProfile {
    pub input: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("model `{model}`: {reason}")]
    InvalidModelSpec { model: ModelId, reason: String },
    #[error("invalid generator config: {0}")]
    InvalidGeneratorConfig(String),
    #[error("model `{model}` does not cover role `{role}`")]
    UnknownRole { model: ModelId, role: RoleId },
    #[error("model `{0}` has no simulator spec")]
    UnknownModel(ModelId),
}

/// Simulated behavior of one backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub model: ModelId,
    pub input_price: f64,
    pub output_price: f64,
    pub success_prob: BTreeMap<RoleId, PerDifficulty>,
    pub token_profile: BTreeMap<RoleId, TokenProfile>,
    pub base_latency_s: f64,
    pub speed_factor: f64,
    pub latency_sigma: f64,
    /// Lognormal spread of token counts around the profile means.
    pub token_sigma: f64,
}

impl SyntheticModelSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |reason: &str| SpecError::InvalidModelSpec {
            model: self.model.clone(),
            reason: reason.to_owned(),
        };
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(nonneg(self.input_price) && nonneg(self.output_price)) {
            return Err(bad("prices must be non-negative"));
        }
        if !(nonneg(self.base_latency_s) && nonneg(self.speed_factor)) {
            return Err(bad("latency parameters must be non-negative"));
        }
        if !(nonneg(self.latency_sigma) && nonneg(self.token_sigma)) {
            return Err(bad("noise scales must be non-negative"));
        }
        for p in self.success_prob.values() {
            if !p.values().iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(bad("success probabilities must lie in [0,1]"));
            }
        }
        for t in self.token_profile.values() {
            if !(nonneg(t.input) && nonneg(t.output)) {
                return Err(bad("token means must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn success(&self, role: &RoleId, difficulty: Difficulty) -> Result<f64, SpecError> {
        self.success_prob
            .get(role)
            .map(|p| p.get(difficulty))
            .ok_or_else(|| self.unknown_role(role))
    }

    pub fn tokens(&self, role: &RoleId) -> Result<TokenProfile, SpecError> {
        self.token_profile
            .get(role)
            .copied()
            .ok_or_else(|| self.unknown_role(role))
    }

    /// Expected step duration in seconds. The noise is mean-one.
    pub fn mean_duration(&self) -> f64 {
        self.base_latency_s * self.speed_factor
    }

    /// Expected step cost in USD for `role`.
    pub fn mean_cost(&self, role: &RoleId) -> Result<f64, SpecError> {
        let t = self.tokens(role)?;
        Ok(step_cost(
            t.input,
            t.output,
            self.input_price,
            self.output_price,
        ))
    }

    fn unknown_role(&self, role: &RoleId) -> SpecError {
        SpecError::UnknownRole {
            model: self.model.clone(),
            role: role.clone(),
        }
    }
}

/// USD cost of a call priced per million tokens.
pub fn step_cost(
    input_tokens: f64,
    output_tokens: f64,
    input_price: f64,
    output_price: f64,
) -> f64 {
    (input_tokens * input_price + output_tokens * output_price) / 1e6
}

/// Per-role template material and step mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleTemplate {
    pub name: RoleId,
    /// Relative frequency of this role among steps.
    pub weight: f64,
    /// Relative frequency of each difficulty within the role.
    pub difficulty_mix: PerDifficulty,
    #[serde(default)]
    pub tools: Vec<ToolId>,
    /// Probability that a step of this role needs one of `tools`.
    #[serde(default)]
    pub tool_prob: f64,
    pub input_tokens: f64,
    pub output_tokens: f64,
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub roles: Vec<RoleTemplate>,
    pub steps_min: u32,
    pub steps_max: u32,
    /// Probability that a step of each difficulty is critical to the task outcome.
    pub critical_prob: PerDifficulty,
    /// Words that make the keyword predictor recognise each tool.
    pub tool_keywords: BTreeMap<ToolId, Vec<String>>,
    pub topics: Vec<String>,
    pub entities: Vec<String>,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: String| Err(SpecError::InvalidGeneratorConfig(m));
        if self.roles.is_empty() {
            return bad("no roles".into());
        }
        if self.steps_min == 0 || self.steps_min > self.steps_max {
            return bad(format!(
                "step range {}..={} is empty or starts at zero",
                self.steps_min, self.steps_max
            ));
        }
        if !self
            .critical_prob
            .values()
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
        {
            return bad("critical_prob outside [0,1]".into());
        }
        if self.topics.is_empty() || self.entities.is_empty() {
            return bad("topics and entities must be non-empty".into());
        }
        let positive_sum = |xs: &[f64]| {
            xs.iter().all(|v| v.is_finite() && *v >= 0.0) && xs.iter().sum::<f64>() > 0.0
        };
        let weights: Vec<f64> = self.roles.iter().map(|r| r.weight).collect();
        if !positive_sum(&weights) {
            return bad("role weights must be non-negative with a positive sum".into());
        }
        for r in &self.roles {
            if !positive_sum(&r.difficulty_mix.values()) {
                return bad(format!("role `{}`: difficulty mix has no mass", r.name));
            }
            if r.verbs.is_empty() || r.nouns.is_empty() {
                return bad(format!(
                    "role `{}`: verbs and nouns must be non-empty",
                    r.name
                ));
            }
            if !(0.0..=1.0).contains(&r.tool_prob) {
                return bad(format!("role `{}`: tool_prob outside [0,1]", r.name));
            }
            if r.tool_prob > 0.0 && r.tools.is_empty() {
                return bad(format!("role `{}`: tool_prob set without tools", r.name));
            }
            for t in &r.tools {
                if self.tool_keywords.get(t).is_none_or(|k| k.is_empty()) {
                    return bad(format!("tool `{t}` has no trigger keywords"));
                }
            }
            if !(r.input_tokens >= 0.0 && r.output_tokens >= 0.0) {
                return bad(format!("role `{}`: negative token means", r.name));
            }
        }
        Ok(())
    }

    pub fn role(&self, name: &RoleId) -> Option<&RoleTemplate> {
        self.roles.iter().find(|r| &r.name == name)
    }
}

/// How the task-level score is derived from step outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerformanceMode {
    /// 1 when every critical step succeeds, else 0.
    #[default]
    Binary,
    /// Share of critical steps that succeeded (1 when there are none).
    Fraction,
}

impl FromStr for PerformanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Self::Binary),
            "fraction" => Ok(Self::Fraction),
            other => Err(format!("unknown performance mode `{other}`")),
        }
    }
}
