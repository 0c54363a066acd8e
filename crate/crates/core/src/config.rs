//! TOML configuration: router settings, the model pool and, optionally, the
//! simulated environment.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, EmbeddingProvider};
use crate::router::{ModelPool, PoolError, PoolModel};
use crate::simulator::{
    GeneratorConfig, PerDifficulty, PerformanceMode, SimError, Simulation, SyntheticModelSpec,
    TokenProfile,
};
use crate::types::{ConfigError, ModelId, RoleId, RouterConfig};

/// The planted six-model scenario used by the examples and tests.
pub const PLANTED_TOML: &str = include_str!("../assets/planted.toml");

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Router(#[from] ConfigError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("fallback model `{0}` is not in the pool")]
    UnknownFallback(String),
    #[error("simulator: {0}")]
    Simulator(#[from] SimError),
    #[error("simulator section present but model `{0}` has no behavior table")]
    MissingBehavior(String),
}

/// Simulated behavior attached to a pool entry. Invented ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBehavior {
    pub speed_factor: f64,
    /// Step success probability by difficulty, for every role.
    pub success: PerDifficulty,
    /// Role-specific overrides of `success`.
    #[serde(default)]
    pub success_by_role: BTreeMap<RoleId, PerDifficulty>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: ModelId,
    pub input_price_per_m: f64,
    pub output_price_per_m: f64,
    #[serde(default)]
    pub behavior: Option<ModelBehavior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSection {
    #[serde(default)]
    pub performance: PerformanceMode,
    pub base_latency_s: f64,
    #[serde(default = "default_latency_sigma")]
    pub latency_sigma: f64,
    #[serde(default)]
    pub token_sigma: f64,
    pub generator: GeneratorConfig,
}

fn default_latency_sigma() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
struct RawConfig {
    #[serde(flatten)]
    router: RouterConfig,
    #[serde(default)]
    models: Vec<ModelEntry>,
    #[serde(default)]
    embedding: EmbeddingProvider,
    #[serde(default)]
    simulator: Option<SimulatorSection>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct EvoConfig {
    pub router: RouterConfig,
    pub pool: ModelPool,
    pub embedding: EmbeddingProvider,
    pub simulation: Option<Simulation>,
}

impl EvoConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigLoadError> {
        let raw: RawConfig = toml::from_str(text)?;
        raw.router.validate()?;
        raw.embedding.validate()?;
        let pool = ModelPool::new(
            raw.models
                .iter()
                .map(|m| PoolModel {
                    name: m.name.clone(),
                    input_price_per_m: m.input_price_per_m,
                    output_price_per_m: m.output_price_per_m,
                })
                .collect(),
        )?;
        if let Some(f) = &raw.router.fallback_model {
            if !pool.contains(f) {
                return Err(ConfigLoadError::UnknownFallback(f.to_string()));
            }
        }
        let simulation = match &raw.simulator {
            None => None,
            Some(section) => Some(build_simulation(section, &raw.models)?),
        };
        Ok(Self {
            router: raw.router,
            pool,
            embedding: raw.embedding,
            simulation,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigLoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn planted() -> Self {
        Self::from_toml_str(PLANTED_TOML).expect("bundled config is valid")
    }
}

fn build_simulation(
    section: &SimulatorSection,
    models: &[ModelEntry],
) -> Result<Simulation, ConfigLoadError> {
    let generator = &section.generator;
    let tokens: BTreeMap<RoleId, TokenProfile> = generator
        .roles
        .iter()
        .map(|r| {
            (
                r.name.clone(),
                TokenProfile {
                    input: r.input_tokens,
                    output: r.output_tokens,
                },
            )
        })
        .collect();
    let mut specs = Vec::with_capacity(models.len());
    for m in models {
        let b = m
            .behavior
            .as_ref()
            .ok_or_else(|| ConfigLoadError::MissingBehavior(m.name.to_string()))?;
        let success_prob = generator
            .roles
            .iter()
            .map(|r| {
                let p = b.success_by_role.get(&r.name).copied().unwrap_or(b.success);
                (r.name.clone(), p)
            })
            .collect();
        specs.push(SyntheticModelSpec {
            model: m.name.clone(),
            input_price: m.input_price_per_m,
            output_price: m.output_price_per_m,
            success_prob,
            token_profile: tokens.clone(),
            base_latency_s: section.base_latency_s,
            speed_factor: b.speed_factor,
            latency_sigma: section.latency_sigma,
            token_sigma: section.token_sigma,
        });
    }
    Ok(Simulation::new(
        specs,
        generator.clone(),
        section.performance,
    )?)
}
