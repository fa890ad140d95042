//! Configuration, CSV I/O, single runs, grids and reports.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod job;
pub mod report;

pub use config::{Candidate, DatasetSource, ExperimentConfig, Selection};
pub use csvio::{fmt_f64, load_csv_dataset, write_csv_dataset, CsvOptions};
pub use experiment::{run_experiment, RunRecord};
pub use job::{run_train_job, TrainJob, TrainedJob};
pub use report::{emit_report, mean_stderr};
