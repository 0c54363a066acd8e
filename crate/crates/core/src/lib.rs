//! Step-level routing of agent sub-tasks across a pool of LLM backbones.
//!
//! Finished trajectories are stored in an append-only experience base. Each
//! new sub-task is routed by retrieving similar past steps, aggregating
//! per-model performance, cost and latency, discarding Pareto-dominated
//! models and Thompson-sampling among the rest.

pub mod config;
pub mod embedding;
pub mod experience;
pub mod pareto;
pub mod retrieval;
pub mod rng;
pub mod router;
pub mod selector;
pub mod simulator;
pub mod types;

pub use config::{ConfigLoadError, EvoConfig};
pub use embedding::{cosine_sim, hash_embed, Embedder, EmbeddingProvider, ProviderKind};
pub use experience::{ExperienceBase, KbError, KbSnapshot};
pub use pareto::{aggregate_stats, dominates, pareto_filter, TrilemmaProfile};
pub use retrieval::{
    predict_tools, retrieve_candidates, CandidateSet, KeywordTable, SubTaskContext, ToolPredictor,
};
pub use rng::RandomSource;
pub use router::{
    BufferError, EpisodeBuffer, ModelPool, PoolModel, Router, RouterError, RoutingDecision,
};
pub use selector::{fit_nig, select, NigPosterior};
pub use simulator::{Harness, Policy, Simulation, TrilemmaReport};
pub use types::*;
