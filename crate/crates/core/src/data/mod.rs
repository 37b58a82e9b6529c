//! Datasets, trace files and experiment configs.

mod config;
mod dataset;
mod trace;

pub use config::{DataSource, ExperimentConfig, OracleKind, ScheduleKind, CONFIG_KEYS};
pub use dataset::{
    destandardize, load_csv, standardize, synth_teacher, write_csv, Dataset, Normalization,
    TargetSpec, Teacher,
};
pub use trace::{read_trace, read_trace_from, write_trace, write_trace_to, TRACE_HEADER};
