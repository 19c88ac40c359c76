//! Toy mixture datasets, the repeated-run experiment harness and report formats.

mod dataset;
mod experiment;
mod report;

pub use dataset::{generate_toy_dataset, ToyDataset, ToyDatasetSpec, MAX_CENTER_ATTEMPTS};
pub use experiment::{
    percentile, run_experiment, Algorithm, AlgorithmSpec, CoverageDensity, ExperimentConfig, ExperimentReport, Metric,
    OutputSpec, ReportFormat, ReportRow, DESK_REPEATS, DESK_TRAIN_SIZE, FULL_REPEATS,
};
pub use report::{format_g6, metric_names, parse_report, plot_columns, report_to_csv, report_to_json, SummaryRow, CSV_HEADER};
