//! Task generation and single-step execution.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::spec::{step_cost, Difficulty, GeneratorConfig, SpecError, SyntheticModelSpec};
use crate::rng::RandomSource;
use crate::types::{RoleId, StepSuccess, ToolId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStep {
    pub role: RoleId,
    pub instruction: String,
    pub required_tools: BTreeSet<ToolId>,
    pub difficulty: Difficulty,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub task_id: String,
    pub steps: Vec<SyntheticStep>,
}

fn weighted_index(rng: &mut RandomSource, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding at the top end lands on the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn pick<'a>(rng: &mut RandomSource, items: &'a [String]) -> &'a str {
    &items[rng.index(items.len())]
}

/// Draws one task. Deterministic in the state of `rng`.
pub fn gen_task(
    config: &GeneratorConfig,
    task_id: impl Into<String>,
    rng: &mut RandomSource,
) -> Result<SyntheticTask, SpecError> {
    config.validate()?;
    let span = (config.steps_max - config.steps_min + 1) as usize;
    let n_steps = config.steps_min + rng.index(span) as u32;
    let role_weights: Vec<f64> = config.roles.iter().map(|r| r.weight).collect();
    let mut steps = Vec::with_capacity(n_steps as usize);
    for _ in 0..n_steps {
        let role = &config.roles[weighted_index(rng, &role_weights)];
        let mix = role.difficulty_mix;
        let difficulty = Difficulty::ALL[weighted_index(rng, &[mix.easy, mix.medium, mix.hard])];
        let critical = rng.bernoulli(config.critical_prob.get(difficulty));
        let tool = if rng.bernoulli(role.tool_prob) {
            Some(role.tools[rng.index(role.tools.len())].clone())
        } else {
            None
        };
        let verb = pick(rng, &role.verbs);
        let noun = pick(rng, &role.nouns);
        let topic = pick(rng, &config.topics);
        let entity = pick(rng, &config.entities);
        let instruction = match &tool {
            Some(t) => {
                let keyword = pick(rng, &config.tool_keywords[t]);
                format!("{keyword} and {verb} the {noun} on {topic} for {entity}")
            }
            None => format!("{verb} the {noun} on {topic} for {entity}"),
        };
        steps.push(SyntheticStep {
            role: role.name.clone(),
            instruction,
            required_tools: tool.into_iter().collect(),
            difficulty,
            critical,
        });
    }
    Ok(SyntheticTask {
        task_id: task_id.into(),
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepExecution {
    pub step_success: StepSuccess,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    pub duration: f64,
}

/// Mean-one lognormal factor.
fn lognormal_factor(rng: &mut RandomSource, sigma: f64) -> f64 {
    let z = rng.standard_normal();
    (sigma * z - 0.5 * sigma * sigma).exp()
}

/// Simulates one call of `spec` on `step`.
///
/// Draw order is fixed (success, input tokens, output tokens, latency) so
/// two models executed on the same stream share their noise.
pub fn exec_step(
    spec: &SyntheticModelSpec,
    step: &SyntheticStep,
    rng: &mut RandomSource,
) -> Result<StepExecution, SpecError> {
    let p = spec.success(&step.role, step.difficulty)?;
    let tokens = spec.tokens(&step.role)?;
    let success = rng.uniform() < p;
    let input_tokens = (tokens.input * lognormal_factor(rng, spec.token_sigma)).round() as u64;
    let output_tokens = (tokens.output * lognormal_factor(rng, spec.token_sigma)).round() as u64;
    let duration = spec.mean_duration() * lognormal_factor(rng, spec.latency_sigma);
    Ok(StepExecution {
        step_success: StepSuccess::from_bool(success),
        input_tokens,
        output_tokens,
        cost: step_cost(
            input_tokens as f64,
            output_tokens as f64,
            spec.input_price,
            spec.output_price,
        ),
        duration,
    })
}
