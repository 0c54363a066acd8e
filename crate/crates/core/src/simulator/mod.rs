//! Synthetic agentic-workflow environment with planted ground truth.

mod episode;
mod report;
mod spec;
mod task;

pub use episode::{
    expected_triple, oracle_pareto, ColdStartSummary, EpisodeResult, Harness, Policy,
    SelectionHistogram, SimError, Simulation, StepTrace, TaskStream, TrajectoryMetrics,
    TrilemmaReport,
};
pub use report::{
    read_summary_csv, share_rows, write_share_csv, write_summary_csv, ShareRow, SummaryRow,
};
pub use spec::{
    step_cost, Difficulty, GeneratorConfig, PerDifficulty, PerformanceMode, RoleTemplate,
    SpecError, SyntheticModelSpec, TokenProfile,
};
pub use task::{exec_step, gen_task, StepExecution, SyntheticStep, SyntheticTask};
