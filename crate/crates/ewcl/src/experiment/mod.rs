//! Baseline training, λ sweeps and reports.

mod config;
mod desk;
mod report;
mod run;
mod svg;

pub use config::{
    default_lambdas, validate_lambdas, CorpusSpec, EvalSuiteSpec, FisherSpec, JudgeSpec, NamedPath, SweepConfig, TaskSpec,
};
pub use desk::{desk_config, write_desk};
pub use report::{
    lambda_label, lambda_x, mean_accuracy, parse_summary_accuracy, read_records_csv, report, write_records_csv,
    ReportFiles, RECORD_COLUMNS,
};
pub use run::{
    cell_dir, evaluate, fisher_artifact, run_baseline, run_cell, run_sweep, thread_count, Baseline, CellResult,
    LoadedSuite, SweepResult, THREADS_ENV,
};
pub use svg::{LinePlot, Series};
