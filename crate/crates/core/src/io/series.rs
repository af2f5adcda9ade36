//! CSV ingestion and emission for load traces and regulation signals.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::domain::{RegulationSeries, TraceSeries};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 2] = ["timestamp", "power_mw"];
pub const REGULATION_HEADER: [&str; 2] = ["timestamp", "r"];

/// Regulation values within this distance outside [-1, 1] are clamped
/// rather than rejected.
pub const REGULATION_CLAMP_BAND: f64 = 1e-3;

const SECONDS_PER_HOUR: f64 = 3600.0;

struct Column {
    start: i64,
    step_s: f64,
    values: Vec<f64>,
    lines: Vec<usize>,
}

fn parse_error(name: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: name.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_two_columns<R: Read>(reader: R, name: &str, header: [&str; 2]) -> Result<Column> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let expected = header.join(",");
    let mut records = rdr.records();

    let first = records.next().ok_or_else(|| {
        parse_error(name, 1, format!("empty file, expected header `{expected}`"))
    })??;
    let found: Vec<&str> = first.iter().collect();
    if found != header {
        let line = first.position().map_or(1, |p| p.line() as usize);
        return Err(parse_error(
            name,
            line,
            format!("expected header `{expected}`, found `{}`", found.join(",")),
        ));
    }

    let mut stamps = Vec::new();
    let mut values = Vec::new();
    let mut lines = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(parse_error(
                name,
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let ts: i64 = rec[0]
            .parse()
            .map_err(|_| parse_error(name, line, format!("bad timestamp `{}`", &rec[0])))?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| parse_error(name, line, format!("bad value `{}`", &rec[1])))?;
        if !v.is_finite() {
            return Err(parse_error(
                name,
                line,
                format!("non-finite value `{}`", &rec[1]),
            ));
        }
        stamps.push(ts);
        values.push(v);
        lines.push(line);
    }
    if stamps.len() < 2 {
        return Err(parse_error(
            name,
            lines.first().copied().unwrap_or(2),
            "need at least two rows to infer the sampling step",
        ));
    }
    let step = stamps[1] - stamps[0];
    if step <= 0 {
        return Err(parse_error(
            name,
            lines[1],
            "timestamps must be strictly increasing",
        ));
    }
    for i in 2..stamps.len() {
        if stamps[i] - stamps[i - 1] != step {
            return Err(parse_error(
                name,
                lines[i],
                format!(
                    "non-uniform timestamps at index {i}: step {} s, expected {step} s",
                    stamps[i] - stamps[i - 1]
                ),
            ));
        }
    }
    Ok(Column {
        start: stamps[0],
        step_s: step as f64,
        values,
        lines,
    })
}

/// Reads a `timestamp,power_mw` table. Timestamps are epoch seconds and
/// must be evenly spaced; the step is inferred from them.
pub fn read_trace_csv<R: Read>(reader: R, name: &str) -> Result<TraceSeries> {
    let col = read_two_columns(reader, name, TRACE_HEADER)?;
    if let Some(i) = col.values.iter().position(|v| *v < 0.0) {
        return Err(parse_error(
            name,
            col.lines[i],
            format!("negative power {} at index {i}", col.values[i]),
        ));
    }
    TraceSeries::new(col.values, col.step_s, col.start)
}

pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<TraceSeries> {
    let path = path.as_ref();
    read_trace_csv(File::open(path)?, &path.display().to_string())
}

/// Reads a `timestamp,r` table. Values slightly outside [-1, 1] are clamped;
/// anything further out is rejected.
pub fn read_regulation_csv<R: Read>(reader: R, name: &str) -> Result<RegulationSeries> {
    let mut col = read_two_columns(reader, name, REGULATION_HEADER)?;
    for (i, v) in col.values.iter_mut().enumerate() {
        if v.abs() > 1.0 + REGULATION_CLAMP_BAND {
            return Err(parse_error(
                name,
                col.lines[i],
                format!("regulation value {v} at index {i} is outside [-1, 1]"),
            ));
        }
        *v = v.clamp(-1.0, 1.0);
    }
    RegulationSeries::new(col.values, col.step_s)
}

pub fn load_regulation_csv(path: impl AsRef<Path>) -> Result<RegulationSeries> {
    let path = path.as_ref();
    read_regulation_csv(File::open(path)?, &path.display().to_string())
}

fn write_rows<W: Write>(
    w: W,
    header: [&str; 2],
    start: i64,
    step_s: f64,
    values: &[f64],
) -> Result<()> {
    let step = step_s.round() as i64;
    if step as f64 != step_s {
        return Err(Error::invalid(format!(
            "step {step_s} s cannot be written as integer timestamps"
        )));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for (i, v) in values.iter().enumerate() {
        wtr.write_record([(start + i as i64 * step).to_string(), format!("{v:.6}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a trace with six decimals.
pub fn write_trace_csv<W: Write>(w: W, trace: &TraceSeries) -> Result<()> {
    write_rows(
        w,
        TRACE_HEADER,
        trace.start_time(),
        trace.step_s(),
        trace.samples(),
    )
}

pub fn save_trace_csv(path: impl AsRef<Path>, trace: &TraceSeries) -> Result<()> {
    write_trace_csv(File::create(path)?, trace)
}

/// Writes a regulation signal with six decimals, timestamps from `start_time`.
pub fn write_regulation_csv<W: Write>(w: W, r: &RegulationSeries, start_time: i64) -> Result<()> {
    write_rows(w, REGULATION_HEADER, start_time, r.step_s(), r.samples())
}

pub fn save_regulation_csv(
    path: impl AsRef<Path>,
    r: &RegulationSeries,
    start_time: i64,
) -> Result<()> {
    write_regulation_csv(File::create(path)?, r, start_time)
}

fn integer_ratio(source_s: f64, target_s: f64) -> Result<usize> {
    if !(source_s > 0.0 && target_s > 0.0) {
        return Err(Error::invalid("sampling steps must be positive"));
    }
    let ratio = target_s / source_s;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::invalid(format!(
            "target step {target_s} s is not an integer multiple of {source_s} s"
        )));
    }
    Ok(k as usize)
}

/// Window means of `samples` over groups of `target_s / source_s` samples.
/// A trailing incomplete group is dropped.
pub fn resample(samples: &[f64], source_s: f64, target_s: f64) -> Result<Vec<f64>> {
    let k = integer_ratio(source_s, target_s)?;
    Ok(samples
        .chunks_exact(k)
        .map(|c| c.iter().sum::<f64>() / k as f64)
        .collect())
}

pub fn resample_trace(trace: &TraceSeries, target_s: f64) -> Result<TraceSeries> {
    let out = resample(trace.samples(), trace.step_s(), target_s)?;
    if out.is_empty() {
        return Err(Error::invalid("trace is shorter than one target step"));
    }
    TraceSeries::new(out, target_s, trace.start_time())
}

pub fn resample_regulation(r: &RegulationSeries, target_s: f64) -> Result<RegulationSeries> {
    let out = resample(r.samples(), r.step_s(), target_s)?;
    // Means of values in [-1, 1] stay there up to rounding.
    let out = out.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    RegulationSeries::new(out, target_s)
}

/// Number of samples in one hour at `step_s`.
pub fn samples_per_hour(step_s: f64) -> Result<usize> {
    let n = SECONDS_PER_HOUR / step_s;
    if !(step_s > 0.0) || n.fract() != 0.0 {
        return Err(Error::invalid(format!(
            "step {step_s} s does not divide one hour"
        )));
    }
    Ok(n as usize)
}

/// Whole-hour windows of a trace.
#[derive(Debug, Clone)]
pub struct HourWindows {
    pub windows: Vec<TraceSeries>,
    pub window_len: usize,
    pub dropped: usize,
}

impl HourWindows {
    pub fn warning(&self) -> Option<String> {
        (self.dropped > 0).then(|| {
            format!(
                "dropped {} trailing samples that do not fill a whole hour",
                self.dropped
            )
        })
    }
}

pub fn window_hours(trace: &TraceSeries) -> Result<HourWindows> {
    let window_len = samples_per_hour(trace.step_s())?;
    let count = trace.len() / window_len;
    let windows = (0..count)
        .map(|i| trace.slice(i * window_len, window_len))
        .collect::<Result<Vec<_>>>()?;
    Ok(HourWindows {
        windows,
        window_len,
        dropped: trace.len() - count * window_len,
    })
}
