//! The `evoroute` command.

pub mod args;
pub mod compare;
pub mod svg;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

use evoroute_core::simulator::{read_summary_csv, write_share_csv, write_summary_csv, SimError};
use evoroute_core::{
    ConfigLoadError, Embedder, EvoConfig, ExperienceBase, Harness, KbError, KeywordTable, Phase,
    RandomSource, RoleId, Router, StepRecord, SubTaskContext, TrilemmaReport,
};
use evoroute_gateway::GatewaySettings;

use args::{
    Cli, ColdstartArgs, Command, KbCommand, ReportArgs, RouteArgs, ServeArgs, SimulateArgs,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    ConfigLoadError,
    KbError,
    SimError,
    csv::Error,
    serde_json::Error
);

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(io::stderr)
        .try_init();
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Coldstart(a) => coldstart(a),
        Command::Simulate(a) => simulate(a),
        Command::Route(a) => route(a),
        Command::Kb(k) => kb(k),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<EvoConfig, CliError> {
    Ok(match path {
        Some(p) => EvoConfig::from_path(p)?,
        None => EvoConfig::planted(),
    })
}

fn harness(config: &EvoConfig) -> Result<Harness, CliError> {
    let sim = config
        .simulation
        .clone()
        .ok_or_else(|| CliError::Data("config has no [simulator] section".into()))?;
    let embedder =
        Embedder::new(config.embedding.clone()).map_err(|e| CliError::Data(e.to_string()))?;
    let router = Router::new(config.pool.clone(), config.router.clone());
    Ok(Harness::new(sim, router, embedder)?)
}

fn read_kb(path: &Path, dimension: usize) -> Result<ExperienceBase, CliError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    ExperienceBase::load(file, dimension)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_kb_or_empty(path: &Path, dimension: usize) -> Result<ExperienceBase, CliError> {
    if path.exists() {
        read_kb(path, dimension)
    } else {
        Ok(ExperienceBase::new(dimension))
    }
}

/// `name.ext` → `name.ext.partial`.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a `.partial` sibling and renames it into place on success.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    let tmp = partial_path(path);
    let file = File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w)?;
    let file = w.into_inner().map_err(|e| io_error(&tmp, e.into_error()))?;
    file.sync_all().map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

/// `runs/a.csv` → `runs/a.shares.csv`.
pub fn shares_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match out.extension() {
        Some(ext) => out.with_file_name(format!("{stem}.shares.{}", ext.to_string_lossy())),
        None => out.with_file_name(format!("{stem}.shares.csv")),
    }
}

fn coldstart(a: ColdstartArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let h = harness(&config)?;
    let mut kb = read_kb_or_empty(&a.kb, config.embedding.dimension)?;
    let summary = h.cold_start(&mut kb, a.tasks as usize, a.seed)?;
    write_atomic(&a.kb, |w| Ok(kb.persist(w)?))?;
    println!("tasks={}", summary.tasks);
    println!("records={}", summary.records_added);
    println!("cost_usd={:.6}", summary.total_cost);
    println!("duration_s={:.3}", summary.total_duration);
    Ok(())
}

/// Runs every policy on the same seeded tasks, each from its own copy of the base.
pub fn simulate_reports(
    config: &EvoConfig,
    a: &SimulateArgs,
) -> Result<Vec<TrilemmaReport>, CliError> {
    let mut config = config.clone();
    config.router.phase = Phase::from(a.phase);
    let h = harness(&config)?;
    let base = match &a.kb {
        Some(p) => read_kb(p, config.embedding.dimension)?,
        None => {
            let mut kb = ExperienceBase::new(config.embedding.dimension);
            h.cold_start(&mut kb, a.coldstart_tasks as usize, a.seed)?;
            kb
        }
    };
    a.policy
        .iter()
        .map(|p| Ok(h.evaluate(&mut base.detached(), p, a.episodes as usize, a.seed)?))
        .collect()
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let reports = simulate_reports(&config, &a)?;
    write_atomic(&a.out, |w| Ok(write_summary_csv(&reports, w)?))?;
    write_atomic(&shares_path(&a.out), |w| Ok(write_share_csv(&reports, w)?))?;
    if let Some(p) = &a.svg {
        let chart = svg::share_chart(&reports);
        write_atomic(p, |w| {
            w.write_all(chart.as_bytes()).map_err(|e| io_error(p, e))
        })?;
    }
    for r in &reports {
        println!(
            "{}: episodes={} mean_performance={:.4} total_cost_usd={:.4} total_duration_s={:.1}",
            r.policy, r.episodes, r.mean_performance, r.total_cost, r.total_duration
        );
    }
    Ok(())
}

fn load_keywords(path: Option<&Path>) -> Result<KeywordTable, CliError> {
    match path {
        None => Ok(KeywordTable::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            KeywordTable::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        }
    }
}

fn route(a: RouteArgs) -> Result<(), CliError> {
    let mut config = load_config(a.config.as_deref())?;
    config.router.phase = Phase::from(a.phase);
    let kb = read_kb(&a.kb, config.embedding.dimension)?;
    let embedder =
        Embedder::new(config.embedding.clone()).map_err(|e| CliError::Data(e.to_string()))?;
    let role =
        RoleId::new(a.role).map_err(|_| CliError::Usage("--role must be non-empty".into()))?;
    let ctx = SubTaskContext {
        role,
        embedding: embedder
            .embed(&a.instruction)
            .map_err(|e| CliError::Data(e.to_string()))?,
        instruction: a.instruction,
        episode_id: a.episode,
        step_index: a.step,
    };
    let seed = a.seed.unwrap_or(config.router.rng_seed);
    let router = Router::new(config.pool.clone(), config.router.clone())
        .with_keywords(load_keywords(a.keywords.as_deref())?);
    let mut rng = RandomSource::new(seed);
    let snapshot = kb.snapshot();
    let decisions = match config.router.phase {
        Phase::Inference => vec![router.route(&ctx, &snapshot, &mut rng)],
        Phase::Optimization => router
            .route_branched(&ctx, &snapshot, &mut rng)
            .map_err(|e| CliError::Data(e.to_string()))?,
    };
    let out = if decisions.len() == 1 {
        serde_json::to_string_pretty(&decisions[0])?
    } else {
        serde_json::to_string_pretty(&decisions)?
    };
    println!("{out}");
    Ok(())
}

/// Splits records into committed trajectories (each starts at step 0).
fn trajectories(records: &[std::sync::Arc<StepRecord>]) -> Vec<Vec<StepRecord>> {
    let mut out: Vec<Vec<StepRecord>> = Vec::new();
    for r in records {
        if r.step_index == 0 || out.is_empty() {
            out.push(Vec::new());
        }
        out.last_mut().expect("pushed above").push((**r).clone());
    }
    out
}

fn kb(command: KbCommand) -> Result<(), CliError> {
    match command {
        KbCommand::Export { kb, out, config } => {
            let config = load_config(config.as_deref())?;
            let base = read_kb(&kb, config.embedding.dimension)?;
            match out {
                Some(p) => write_atomic(&p, |w| Ok(base.persist(w)?))?,
                None => {
                    let stdout = io::stdout();
                    base.persist(stdout.lock())?;
                }
            }
        }
        KbCommand::Import { kb, from, config } => {
            let config = load_config(config.as_deref())?;
            let mut base = read_kb_or_empty(&kb, config.embedding.dimension)?;
            let source = read_kb(&from, config.embedding.dimension)?;
            let mut added = 0;
            for t in trajectories(source.snapshot().records()) {
                added += t.len();
                base.append_trajectory(t)?;
            }
            write_atomic(&kb, |w| Ok(base.persist(w)?))?;
            println!("imported={added}");
            println!("records={}", base.len());
            println!("generation={}", base.generation());
        }
        KbCommand::Stats { kb, config } => {
            let config = load_config(config.as_deref())?;
            let base = read_kb(&kb, config.embedding.dimension)?;
            let snap = base.snapshot();
            println!("records={}", snap.len());
            println!("generation={}", snap.generation());
            for (model, n) in snap.model_counts() {
                println!("model.{model}={n}");
            }
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let read = |p: &Path| -> Result<_, CliError> {
        let file = File::open(p).map_err(|e| io_error(p, e))?;
        read_summary_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    };
    let rows = compare::pair(&read(&a.compare[0])?, &read(&a.compare[1])?)?;
    print!("{}", compare::render(&rows));
    if let Some(p) = &a.svg {
        let chart = svg::trilemma_chart(&rows);
        write_atomic(p, |w| {
            w.write_all(chart.as_bytes()).map_err(|e| io_error(p, e))
        })?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut settings = GatewaySettings::from_env();
    if let Some(b) = a.bind {
        settings.bind = b;
    }
    if let Some(k) = a.kb {
        settings.kb_path = k;
    }
    if let Some(c) = a.config {
        settings.config_path = Some(c);
    }
    settings.keywords_path = a.keywords;
    settings.idle_ttl = Duration::from_secs(a.idle_ttl_secs);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    runtime
        .block_on(evoroute_gateway::serve(settings))
        .map_err(|e| CliError::Data(e.to_string()))
}
