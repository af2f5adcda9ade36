//! File formats: CSV series, configuration, and JSON reports.

pub mod config;
pub mod report;
pub mod series;

pub use config::{Config, ConfigEcho};
pub use report::{write_json, write_report_json, ReportSummary};
pub use series::{
    load_regulation_csv, load_trace_csv, resample, resample_regulation, resample_trace,
    samples_per_hour, save_regulation_csv, save_trace_csv, window_hours, HourWindows,
};
