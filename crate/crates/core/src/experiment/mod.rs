//! Seeded replication harness reproducing variance-ratio tables and envelope data.

mod config;
mod report;
mod run;

pub use config::{ExperimentConfig, ModelName, TestFunction};
pub use report::{read_report, report_json, table_csv, table_text, write_figures, write_outputs, write_tables, REPORT_FILE, TIMING_FILE};
pub use run::{
    probit_data, run_experiment, Accounting, Envelope, EnvelopeSet, EstimatorSummary, ExperimentReport, ProbitFitSummary,
    RatioCell, ScaleReport, TimingReport,
};
