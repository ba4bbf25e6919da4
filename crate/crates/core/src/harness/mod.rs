//! Declarative runs: TOML configs, CSV traces, JSON summaries, grids.

mod config;
mod gendata;
mod grid;
mod run;

pub use config::{
    parse_config, Algorithm, AutoOr, ProblemKind, ProblemParams, RunConfig, ScheduleSpec, DEFAULT_EPSILON,
    DEFAULT_LAMBDA,
};
pub use gendata::{gen_data, DataSpec};
pub use grid::{grid_configs, run_grid, GridEntry, GridIndex, INDEX_FILE};
pub use run::{
    auto_step, build_problem, execute, initial_point, iteration_budget, linear_matrix, resolve, run_experiment,
    summarize, summary_path, write_trace_csv, Problem, Resolved, RunStatus, RunSummary, CSV_HEADER,
    ESTIMATE_STREAM, INIT_STREAM, VARIANCE_SAMPLES,
};
