use std::collections::{BTreeMap, BTreeSet};

use evoroute_core::retrieval::predict_tools;
use evoroute_core::rng::RandomSource;
use evoroute_core::simulator::*;
use evoroute_core::*;

fn id(s: &str) -> ModelId {
    ModelId::new(s).unwrap()
}

fn role(s: &str) -> RoleId {
    RoleId::new(s).unwrap()
}

fn template(name: &str, tools: &[&str], tool_prob: f64) -> RoleTemplate {
    RoleTemplate {
        name: role(name),
        weight: 1.0,
        difficulty_mix: PerDifficulty {
            easy: 1.0,
            medium: 1.0,
            hard: 1.0,
        },
        tools: tools.iter().map(|t| ToolId::new(*t).unwrap()).collect(),
        tool_prob,
        input_tokens: 1000.0,
        output_tokens: 500.0,
        verbs: vec!["draft".into(), "review".into()],
        nouns: vec!["outline".into(), "summary".into()],
    }
}

fn generator(steps: (u32, u32)) -> GeneratorConfig {
    GeneratorConfig {
        roles: vec![
            template("planner", &[], 0.0),
            template("web_agent", &["web_search"], 1.0),
        ],
        steps_min: steps.0,
        steps_max: steps.1,
        critical_prob: PerDifficulty::uniform(1.0),
        tool_keywords: BTreeMap::from([(
            ToolId::new("web_search").unwrap(),
            vec!["search".to_owned(), "browse".to_owned()],
        )]),
        topics: vec!["tides".into(), "orchards".into()],
        entities: vec!["a client".into(), "the team".into()],
    }
}

fn spec(name: &str, prices: (f64, f64), p: f64, speed: f64) -> SyntheticModelSpec {
    let roles = ["planner", "web_agent"];
    SyntheticModelSpec {
        model: id(name),
        input_price: prices.0,
        output_price: prices.1,
        success_prob: roles
            .iter()
            .map(|r| (role(r), PerDifficulty::uniform(p)))
            .collect(),
        token_profile: roles
            .iter()
            .map(|r| {
                (
                    role(r),
                    TokenProfile {
                        input: 1000.0,
                        output: 500.0,
                    },
                )
            })
            .collect(),
        base_latency_s: 2.0,
        speed_factor: speed,
        latency_sigma: 0.25,
        token_sigma: 0.0,
    }
}

fn harness(specs: Vec<SyntheticModelSpec>, gen: GeneratorConfig, mode: PerformanceMode) -> Harness {
    let sim = Simulation::new(specs, gen, mode).unwrap();
    let router = Router::new(sim.pool().unwrap(), RouterConfig::default());
    Harness::new(sim, router, Embedder::hashed(64)).unwrap()
}

#[test]
fn tasks_are_deterministic_and_respect_step_bounds() {
    let g = generator((10, 10));
    let a = gen_task(&g, "t", &mut RandomSource::new(5)).unwrap();
    let b = gen_task(&g, "t", &mut RandomSource::new(5)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.steps.len(), 10);
    let g = generator((8, 12));
    let mut rng = RandomSource::new(1);
    for _ in 0..200 {
        let n = gen_task(&g, "t", &mut rng).unwrap().steps.len();
        assert!((8..=12).contains(&n));
    }
}

#[test]
fn tool_steps_carry_a_trigger_keyword() {
    let g = generator((20, 20));
    let table = KeywordTable::default();
    let task = gen_task(&g, "t", &mut RandomSource::new(3)).unwrap();
    let mut with_tools = 0;
    for s in &task.steps {
        assert!(!s.instruction.is_empty());
        assert_eq!(
            predict_tools(&s.instruction, &table, None),
            s.required_tools
        );
        with_tools += usize::from(!s.required_tools.is_empty());
    }
    assert!(with_tools > 0);
}

#[test]
fn planted_instructions_only_trigger_their_own_tools() {
    let sim = EvoConfig::planted().simulation.unwrap();
    let table = KeywordTable::default();
    for i in 0..100 {
        for s in sim.task(9, TaskStream::Evaluation, i).unwrap().steps {
            assert_eq!(
                predict_tools(&s.instruction, &table, None),
                s.required_tools,
                "{}",
                s.instruction
            );
        }
    }
}

#[test]
fn invalid_generator_config_is_rejected() {
    let mut g = generator((5, 4));
    assert!(matches!(
        gen_task(&g, "t", &mut RandomSource::new(0)),
        Err(SpecError::InvalidGeneratorConfig(_))
    ));
    g = generator((1, 1));
    g.roles.clear();
    assert!(g.validate().is_err());
    g = generator((1, 1));
    g.tool_keywords.clear();
    assert!(g.validate().is_err());
}

#[test]
fn step_cost_uses_per_million_prices() {
    assert!((step_cost(1000.0, 500.0, 2.50, 10.00) - 0.0075).abs() < 1e-15);
    assert!((step_cost(1000.0, 500.0, 0.05, 0.22) - 0.00016).abs() < 1e-15);

    let step = SyntheticStep {
        role: role("planner"),
        instruction: "x".into(),
        required_tools: BTreeSet::new(),
        difficulty: Difficulty::Easy,
        critical: true,
    };
    let gpt4o = spec("gpt-4o", (2.50, 10.00), 1.0, 1.0);
    let out = exec_step(&gpt4o, &step, &mut RandomSource::new(0)).unwrap();
    assert_eq!((out.input_tokens, out.output_tokens), (1000, 500));
    assert!((out.cost - 0.0075).abs() < 1e-15);
    let qwen = spec("qwen3-14b", (0.05, 0.22), 1.0, 1.0);
    let out = exec_step(&qwen, &step, &mut RandomSource::new(0)).unwrap();
    assert!((out.cost - 0.00016).abs() < 1e-15);
}

#[test]
fn degenerate_success_probabilities() {
    let step = SyntheticStep {
        role: role("planner"),
        instruction: "x".into(),
        required_tools: BTreeSet::new(),
        difficulty: Difficulty::Hard,
        critical: true,
    };
    let always = spec("a", (1.0, 1.0), 1.0, 1.0);
    let never = spec("b", (1.0, 1.0), 0.0, 1.0);
    let mut rng = RandomSource::new(4);
    for _ in 0..1000 {
        assert!(exec_step(&always, &step, &mut rng)
            .unwrap()
            .step_success
            .is_success());
        assert!(!exec_step(&never, &step, &mut rng)
            .unwrap()
            .step_success
            .is_success());
    }
    let other = SyntheticStep {
        role: role("coder"),
        ..step
    };
    assert!(matches!(
        exec_step(&always, &other, &mut rng),
        Err(SpecError::UnknownRole { .. })
    ));
}

#[test]
fn latency_noise_is_mean_one() {
    let s = spec("a", (1.0, 1.0), 1.0, 1.5);
    let step = SyntheticStep {
        role: role("planner"),
        instruction: "x".into(),
        required_tools: BTreeSet::new(),
        difficulty: Difficulty::Easy,
        critical: false,
    };
    let mut rng = RandomSource::new(8);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| exec_step(&s, &step, &mut rng).unwrap().duration)
        .sum::<f64>()
        / n as f64;
    // Lognormal(σ=0.25) has relative sd ≈ 0.254; 5 standard errors.
    assert!(
        (mean - 3.0).abs() < 5.0 * 3.0 * 0.254 / (n as f64).sqrt(),
        "{mean}"
    );
}

#[test]
fn forced_outcomes_and_additivity() {
    let sure = harness(
        vec![spec("a", (1.0, 2.0), 1.0, 1.0)],
        generator((6, 6)),
        PerformanceMode::Binary,
    );
    let mut kb = ExperienceBase::new(64);
    let task = sure.sim.task(1, TaskStream::Evaluation, 0).unwrap();
    let r = sure
        .run_episode(&mut kb, &task, &Policy::UniformRandom, 1)
        .unwrap();
    assert_eq!(r.primary().performance, 1.0);
    assert_eq!(r.records_added, 6);
    assert_eq!(kb.len(), 6);
    let sum: f64 = r.steps.iter().map(|s| s.cost).sum();
    assert!((r.primary().cost - sum).abs() < 1e-12);
    let dur: f64 = r.steps.iter().map(|s| s.duration).sum();
    assert!((r.primary().duration - dur).abs() < 1e-12);

    let doomed = harness(
        vec![spec("a", (1.0, 2.0), 0.0, 1.0)],
        generator((6, 6)),
        PerformanceMode::Binary,
    );
    let r = doomed
        .run_episode(
            &mut ExperienceBase::new(64),
            &task,
            &Policy::UniformRandom,
            1,
        )
        .unwrap();
    assert_eq!(r.primary().performance, 0.0);
}

#[test]
fn fraction_mode_scores_share_of_critical_successes() {
    let sim = Simulation::new(
        vec![spec("a", (1.0, 1.0), 1.0, 1.0)],
        generator((4, 4)),
        PerformanceMode::Fraction,
    )
    .unwrap();
    let mut task = sim.task(0, TaskStream::Evaluation, 0).unwrap();
    for (i, s) in task.steps.iter_mut().enumerate() {
        s.critical = i < 3;
    }
    let ok = StepSuccess::Succeeded;
    let no = StepSuccess::Failed;
    assert!((sim.score(&task, &[ok, no, ok, no]) - 2.0 / 3.0).abs() < 1e-12);
    for s in task.steps.iter_mut() {
        s.critical = false;
    }
    assert_eq!(sim.score(&task, &[no, no, no, no]), 1.0);
}

#[test]
fn committed_records_carry_invoked_tools_and_shared_score() {
    let h = harness(
        vec![spec("a", (1.0, 2.0), 1.0, 1.0)],
        generator((10, 10)),
        PerformanceMode::Binary,
    );
    let mut kb = ExperienceBase::new(64);
    let task = h.sim.task(2, TaskStream::Evaluation, 0).unwrap();
    h.run_episode(&mut kb, &task, &Policy::EvoRoute, 2).unwrap();
    let snap = kb.snapshot();
    for (r, s) in snap.records().iter().zip(&task.steps) {
        assert_eq!(r.tools, s.required_tools);
        assert_eq!(r.task_performance, 1.0);
        assert_eq!(r.role, s.role);
    }
}

#[test]
fn oracle_examples() {
    let r = role("planner");
    let a = spec("a", (1.0, 1.0), 0.9, 1.0);
    let b = spec("b", (2.0, 2.0), 0.8, 2.0);
    assert_eq!(
        oracle_pareto(&[a.clone(), b], &r, Difficulty::Easy).unwrap(),
        BTreeSet::from([id("a")])
    );
    let cheap = spec("cheap", (0.1, 0.1), 0.6, 1.0);
    let strong = spec("strong", (5.0, 5.0), 0.95, 1.0);
    assert_eq!(
        oracle_pareto(&[cheap, strong], &r, Difficulty::Hard).unwrap(),
        BTreeSet::from([id("cheap"), id("strong")])
    );
    assert!(matches!(
        oracle_pareto(&[a], &role("coder"), Difficulty::Easy),
        Err(SpecError::UnknownRole { .. })
    ));
}

#[test]
fn oracle_matches_brute_force_on_random_pools() {
    let mut rng = RandomSource::new(77);
    let r = role("planner");
    for _ in 0..300 {
        let n = 1 + rng.index(8);
        // Coarse grids make ties and exact duplicates common.
        let specs: Vec<SyntheticModelSpec> = (0..n)
            .map(|i| {
                spec(
                    &format!("m{i}"),
                    (rng.index(4) as f64, rng.index(4) as f64),
                    rng.index(5) as f64 / 4.0,
                    1.0 + rng.index(3) as f64,
                )
            })
            .collect();
        let triple = |s: &SyntheticModelSpec| {
            (
                s.success_prob[&r].hard,
                (1000.0 * s.input_price + 500.0 * s.output_price) / 1e6,
                2.0 * s.speed_factor,
            )
        };
        let expected: BTreeSet<ModelId> = specs
            .iter()
            .filter(|b| {
                let tb = triple(b);
                !specs.iter().any(|a| {
                    let ta = triple(a);
                    ta.0 >= tb.0
                        && ta.1 <= tb.1
                        && ta.2 <= tb.2
                        && (ta.0 > tb.0 || ta.1 < tb.1 || ta.2 < tb.2)
                })
            })
            .map(|s| s.model.clone())
            .collect();
        assert_eq!(
            oracle_pareto(&specs, &r, Difficulty::Hard).unwrap(),
            expected
        );
    }
}

#[test]
fn oracle_dominated_models_are_dominated_empirically() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let n = 10_000;
    for tmpl in &sim.generator().roles {
        for d in Difficulty::ALL {
            let front = oracle_pareto(sim.specs(), &tmpl.name, d).unwrap();
            let step = SyntheticStep {
                role: tmpl.name.clone(),
                instruction: "x".into(),
                required_tools: BTreeSet::new(),
                difficulty: d,
                critical: true,
            };
            // (mean, standard error) per axis.
            let stats: BTreeMap<ModelId, [(f64, f64); 3]> = sim
                .specs()
                .iter()
                .map(|s| {
                    let mut rng = RandomSource::derived(3, &[n as u64]);
                    let xs: Vec<[f64; 3]> = (0..n)
                        .map(|_| {
                            let e = exec_step(s, &step, &mut rng).unwrap();
                            [e.step_success.as_f64(), e.cost, e.duration]
                        })
                        .collect();
                    let axis = |k: usize| {
                        let m = xs.iter().map(|x| x[k]).sum::<f64>() / n as f64;
                        let v =
                            xs.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                        (m, (v / n as f64).sqrt())
                    };
                    (s.model.clone(), [axis(0), axis(1), axis(2)])
                })
                .collect();
            for s in sim.specs().iter().filter(|s| !front.contains(&s.model)) {
                let b = stats[&s.model];
                let dominated = front.iter().any(|f| {
                    let a = stats[f];
                    let tol = |k: usize| 3.0 * (a[k].1 + b[k].1);
                    a[0].0 >= b[0].0 - tol(0)
                        && a[1].0 <= b[1].0 + tol(1)
                        && a[2].0 <= b[2].0 + tol(2)
                });
                assert!(dominated, "{} on {}/{d}", s.model, tmpl.name);
            }
        }
    }
}

#[test]
fn fixed_model_performance_matches_closed_form() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let h = Harness::new(
        sim.clone(),
        Router::new(cfg.pool, cfg.router),
        Embedder::hashed(32),
    )
    .unwrap();
    let premium = id("claude-4");
    let spec = sim.spec(&premium).unwrap().clone();
    let n = 400;
    let report = h
        .evaluate(
            &mut ExperienceBase::new(32),
            &Policy::FixedModel(premium),
            n,
            21,
        )
        .unwrap();
    // Expected fraction score per task: mean success over its critical steps.
    let mut expected = 0.0;
    let mut var = 0.0;
    for i in 0..n as u64 {
        let task = sim.task(21, TaskStream::Evaluation, i).unwrap();
        let ps: Vec<f64> = task
            .steps
            .iter()
            .filter(|s| s.critical)
            .map(|s| spec.success(&s.role, s.difficulty).unwrap())
            .collect();
        if ps.is_empty() {
            expected += 1.0;
            continue;
        }
        let k = ps.len() as f64;
        expected += ps.iter().sum::<f64>() / k;
        var += ps.iter().map(|p| p * (1.0 - p)).sum::<f64>() / (k * k);
    }
    expected /= n as f64;
    let se = var.sqrt() / n as f64;
    assert!(
        (report.mean_performance - expected).abs() < 4.0 * se + 1e-9,
        "{} vs {expected} (se {se})",
        report.mean_performance
    );
}

#[test]
fn uniform_random_cost_matches_closed_form() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let h = Harness::new(
        sim.clone(),
        Router::new(cfg.pool, cfg.router),
        Embedder::hashed(32),
    )
    .unwrap();
    let n = 300;
    let report = h
        .evaluate(&mut ExperienceBase::new(32), &Policy::UniformRandom, n, 5)
        .unwrap();
    let mut expected = 0.0;
    let mut steps = 0usize;
    for i in 0..n as u64 {
        for s in sim.task(5, TaskStream::Evaluation, i).unwrap().steps {
            let mean_cost = sim.specs().iter().map(|m| {
                let t = m.token_profile[&s.role];
                (t.input * m.input_price + t.output * m.output_price) / 1e6
            });
            expected += mean_cost.sum::<f64>() / sim.specs().len() as f64;
            steps += 1;
        }
    }
    assert_eq!(report.routed_steps(), steps as u64);
    let rel = (report.total_cost - expected).abs() / expected;
    // Model choice dominates the spread; ~3000 draws keep it near 2%.
    assert!(rel < 0.05, "{} vs {expected}", report.total_cost);
}

#[test]
fn paired_policies_see_identical_tasks_and_noise() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let h = Harness::new(
        sim.clone(),
        Router::new(cfg.pool, cfg.router),
        Embedder::hashed(32),
    )
    .unwrap();
    let task = sim.task(4, TaskStream::Evaluation, 3).unwrap();
    let m = id("gpt-4o");
    let a = h
        .run_episode(
            &mut ExperienceBase::new(32),
            &task,
            &Policy::FixedModel(m.clone()),
            4,
        )
        .unwrap();
    let b = h
        .run_episode(
            &mut ExperienceBase::new(32),
            &task,
            &Policy::FixedModel(m),
            4,
        )
        .unwrap();
    assert_eq!(a.steps, b.steps);
    let ra = h
        .evaluate(&mut ExperienceBase::new(32), &Policy::UniformRandom, 5, 4)
        .unwrap();
    let rb = h
        .evaluate(
            &mut ExperienceBase::new(32),
            &Policy::FixedModel(id("qwen3-14b")),
            5,
            4,
        )
        .unwrap();
    let roles = |r: &TrilemmaReport| -> BTreeMap<RoleId, u64> {
        r.selections_by_role
            .iter()
            .map(|(k, v)| (k.clone(), v.values().sum()))
            .collect()
    };
    assert_eq!(roles(&ra), roles(&rb));
    assert_eq!(
        sim.task(4, TaskStream::Evaluation, 0).unwrap(),
        sim.task(4, TaskStream::Evaluation, 0).unwrap()
    );
    assert_ne!(
        sim.task(4, TaskStream::Evaluation, 0).unwrap(),
        sim.task(4, TaskStream::ColdStart, 0).unwrap()
    );
}

#[test]
fn cold_start_counts_records() {
    let h = harness(
        vec![
            spec("a", (1.0, 1.0), 0.9, 1.0),
            spec("b", (0.5, 0.5), 0.5, 1.0),
        ],
        generator((10, 10)),
        PerformanceMode::Binary,
    );
    let mut kb = ExperienceBase::new(64);
    let summary = h.cold_start(&mut kb, 50, 7).unwrap();
    assert_eq!(summary.tasks, 50);
    assert_eq!(summary.records_added, 500);
    assert_eq!(kb.len(), 500);
    assert_eq!(kb.generation(), 50);
    assert!(h.cold_start(&mut kb, 0, 7).is_err());
}

#[test]
fn cold_start_draws_models_uniformly() {
    let names = ["m0", "m1", "m2", "m3", "m4", "m5"];
    let h = harness(
        names
            .iter()
            .map(|n| spec(n, (1.0, 1.0), 0.9, 1.0))
            .collect(),
        generator((1, 1)),
        PerformanceMode::Binary,
    );
    let mut kb = ExperienceBase::new(64);
    let n = 6000;
    h.cold_start(&mut kb, n, 13).unwrap();
    let counts = kb.snapshot().model_counts();
    assert_eq!(counts.len(), 6);
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // Upper 1% point of chi-square with 5 degrees of freedom.
    assert!(chi2 < 15.086, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn histogram_counts_every_routed_step() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let h = Harness::new(
        sim.clone(),
        Router::new(cfg.pool, cfg.router),
        Embedder::hashed(32),
    )
    .unwrap();
    let mut kb = ExperienceBase::new(32);
    h.cold_start(&mut kb, 5, 1).unwrap();
    let before = kb.len();
    let r = h.evaluate(&mut kb, &Policy::EvoRoute, 10, 1).unwrap();
    let steps: u64 = r
        .selections_by_difficulty
        .values()
        .flat_map(|m| m.values())
        .sum();
    assert_eq!(steps, r.routed_steps());
    assert_eq!((kb.len() - before) as u64, r.routed_steps());
    assert_eq!(r.episode_performance.len(), 10);
}

#[test]
fn optimization_phase_commits_every_branch() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let router_cfg = RouterConfig {
        phase: Phase::Optimization,
        ..cfg.router
    };
    let h = Harness::new(
        sim.clone(),
        Router::new(cfg.pool, router_cfg),
        Embedder::hashed(32),
    )
    .unwrap();
    let mut kb = ExperienceBase::new(32);
    h.cold_start(&mut kb, 3, 2).unwrap();
    let before = (kb.len(), kb.generation());
    let task = sim.task(2, TaskStream::Evaluation, 0).unwrap();
    let r = h.run_episode(&mut kb, &task, &Policy::EvoRoute, 2).unwrap();
    assert_eq!(r.trajectories.len(), 3);
    assert_eq!(r.records_added, 3 * task.steps.len());
    assert_eq!(kb.len() - before.0, 3 * task.steps.len());
    assert_eq!(kb.generation() - before.1, 3);
    for i in 0..task.steps.len() {
        let models: BTreeSet<_> = r
            .steps
            .iter()
            .skip(3 * i)
            .take(3)
            .map(|s| s.model.clone())
            .collect();
        assert_eq!(
            models.len(),
            3,
            "branches of step {i} must use distinct models"
        );
    }
}

#[test]
fn summary_csv_round_trips_and_is_deterministic() {
    let cfg = EvoConfig::planted();
    let sim = cfg.simulation.unwrap();
    let h = Harness::new(sim, Router::new(cfg.pool, cfg.router), Embedder::hashed(32)).unwrap();
    let run = || {
        let mut kb = ExperienceBase::new(32);
        h.cold_start(&mut kb, 3, 9).unwrap();
        let r = h.evaluate(&mut kb, &Policy::EvoRoute, 5, 9).unwrap();
        let mut summary = Vec::new();
        write_summary_csv(std::slice::from_ref(&r), &mut summary).unwrap();
        let mut shares = Vec::new();
        write_share_csv(std::slice::from_ref(&r), &mut shares).unwrap();
        (r, summary, shares)
    };
    let (r, a, sa) = run();
    let (_, b, sb) = run();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let text = String::from_utf8(a.clone()).unwrap();
    assert!(text.starts_with("policy,episodes,mean_performance,total_cost_usd,total_duration_s\n"));
    let rows = read_summary_csv(a.as_slice()).unwrap();
    assert_eq!(rows, vec![SummaryRow::from(&r)]);
    let shares = share_rows(&r);
    let total: u64 = shares.iter().map(|s| s.count).sum();
    assert_eq!(total, r.routed_steps());
}
