//! Shared fixtures for the benchmarks.

use evoroute_core::{
    Embedder, EvoConfig, ExperienceBase, Harness, ModelId, RandomSource, RoleId, Router,
    SubTaskContext, TrilemmaProfile,
};

/// A planted-scenario base after `tasks` cold-start episodes, plus its router.
pub fn planted_fixture(tasks: usize) -> (Router, Embedder, ExperienceBase) {
    let cfg = EvoConfig::planted();
    let router = Router::new(cfg.pool.clone(), cfg.router.clone());
    let embedder = Embedder::new(cfg.embedding.clone()).expect("embedder");
    let harness = Harness::new(
        cfg.simulation
            .clone()
            .expect("planted config has a simulation"),
        router.clone(),
        Embedder::new(cfg.embedding.clone()).expect("embedder"),
    )
    .expect("harness");
    let mut kb = ExperienceBase::new(cfg.embedding.dimension);
    harness.cold_start(&mut kb, tasks, 1).expect("cold start");
    (router, embedder, kb)
}

pub fn context(embedder: &Embedder, role: &str, instruction: &str) -> SubTaskContext {
    SubTaskContext {
        role: RoleId::new(role).expect("role"),
        embedding: embedder.embed(instruction).expect("embed"),
        instruction: instruction.into(),
        episode_id: "bench".into(),
        step_index: 0,
    }
}

/// `n` random profiles with a few samples each.
pub fn random_profiles(n: usize, seed: u64) -> Vec<TrilemmaProfile> {
    let mut rng = RandomSource::new(seed);
    (0..n)
        .map(|i| {
            let mut draw = |scale: f64| (0..8).map(|_| rng.uniform() * scale).collect::<Vec<_>>();
            let (p, c, d) = (draw(1.0), draw(0.05), draw(30.0));
            TrilemmaProfile::from_samples(ModelId::new(format!("m{i}")).expect("id"), p, c, d)
        })
        .collect()
}
