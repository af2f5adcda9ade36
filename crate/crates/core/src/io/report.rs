//! JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gain::{CategoryResult, SweepSummary, WindowRecord};
use crate::io::config::ConfigEcho;
use crate::peaks::{empirical_cdf, PeakStats};

/// Summary block of a sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub hours_total: usize,
    pub hours_superlinear: usize,
    pub probability: f64,
    pub mean_q: f64,
    /// Sorted `[q, cumulative probability]` pairs.
    pub q_cdf: Vec<[f64; 2]>,
}

impl From<&SweepSummary> for ReportSummary {
    fn from(s: &SweepSummary) -> Self {
        Self {
            hours_total: s.hours_total,
            hours_superlinear: s.hours_superlinear,
            probability: s.probability,
            mean_q: s.mean_q,
            q_cdf: empirical_cdf(&s.q_values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport<'a> {
    pub config_echo: &'a ConfigEcho,
    pub per_window: &'a [WindowRecord],
    pub summary: ReportSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport<'a> {
    pub config_echo: &'a ConfigEcho,
    pub steps: usize,
    pub step_s: f64,
    pub categories: &'a [CategoryResult],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakReport<'a> {
    pub config_echo: &'a ConfigEcho,
    #[serde(flatten)]
    pub stats: &'a PeakStats,
}

/// Pretty-printed JSON followed by a newline.
pub fn to_json_writer<W: Write, T: Serialize + ?Sized>(w: W, value: &T) -> crate::Result<()> {
    let mut w = BufWriter::new(w);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> crate::Result<()> {
    to_json_writer(File::create(path)?, value)
}

/// Writes the per-window sweep report.
pub fn write_report_json(
    path: impl AsRef<Path>,
    config_echo: &ConfigEcho,
    records: &[WindowRecord],
    summary: &SweepSummary,
) -> crate::Result<()> {
    write_json(
        path,
        &SweepReport {
            config_echo,
            per_window: records,
            summary: summary.into(),
        },
    )
}
