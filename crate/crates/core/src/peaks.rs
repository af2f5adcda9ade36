//! Peak abstraction for load traces.
//!
//! Each day is thresholded at `C_f = (1 - f) d + p_min`, where `d` is the
//! day's demand range. Maximal runs strictly above the threshold are peaks,
//! described by height (normalized by `d`), width and shape. Shape comes
//! from how the area above the threshold grows as `f` increases: linearly
//! for flat-topped peaks, quadratically for ramps.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::TraceSeries;
use crate::error::{Error, Result};

pub const DEFAULT_CAPPING_FRACTION: f64 = 0.2;
pub const DEFAULT_NOCP_GAP_S: f64 = 120.0;
const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeVerdict {
    Rectangular,
    Triangular,
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    pub p_min: f64,
    pub p_max: f64,
    /// Demand range `p_max - p_min`.
    pub range: f64,
    pub capping_fraction: f64,
    pub threshold: f64,
}

impl DayProfile {
    /// A flat day has no peaks at any capping fraction.
    pub fn is_flat(&self) -> bool {
        self.range <= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakDescriptor {
    /// First sample index of the peak.
    pub start: usize,
    /// Last sample index, inclusive.
    pub end: usize,
    /// Highest excursion above the threshold, as a fraction of the day range.
    pub height: f64,
    pub width_s: f64,
    pub shape: ShapeVerdict,
}

pub fn daily_threshold(samples: &[f64], capping_fraction: f64) -> Result<DayProfile> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot threshold an empty day"));
    }
    if !(0.0..=1.0).contains(&capping_fraction) {
        return Err(Error::invalid(format!(
            "capping fraction must lie in [0, 1], got {capping_fraction}"
        )));
    }
    let p_min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = p_max - p_min;
    Ok(DayProfile {
        p_min,
        p_max,
        range,
        capping_fraction,
        threshold: (1.0 - capping_fraction) * range + p_min,
    })
}

/// Maximal runs of samples strictly above the threshold.
pub fn segment_peaks(samples: &[f64], profile: &DayProfile, step_s: f64) -> Vec<PeakDescriptor> {
    if profile.is_flat() {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    let close = |start: usize, end: usize, top: f64| PeakDescriptor {
        start,
        end,
        height: (top - profile.threshold) / profile.range,
        width_s: (end - start + 1) as f64 * step_s,
        shape: ShapeVerdict::Unclassified,
    };
    for (t, &s) in samples.iter().enumerate() {
        match (s > profile.threshold, run) {
            (true, None) => run = Some((t, s)),
            (true, Some((start, top))) => run = Some((start, top.max(s))),
            (false, Some((start, top))) => {
                peaks.push(close(start, t - 1, top));
                run = None;
            }
            (false, None) => {}
        }
    }
    if let Some((start, top)) = run {
        peaks.push(close(start, samples.len() - 1, top));
    }
    peaks
}

/// Area above `C_f(f)` for each capping fraction in `f_grid`, in MW·s.
pub fn area_growth(samples: &[f64], f_grid: &[f64], step_s: f64) -> Result<Vec<f64>> {
    check_grid(f_grid)?;
    let profile = daily_threshold(samples, 0.0)?;
    Ok(f_grid
        .iter()
        .map(|&f| {
            let threshold = (1.0 - f) * profile.range + profile.p_min;
            area_above(samples, threshold) * step_s
        })
        .collect())
}

fn area_above(samples: &[f64], threshold: f64) -> f64 {
    samples.iter().map(|s| (s - threshold).max(0.0)).sum()
}

fn check_grid(f_grid: &[f64]) -> Result<()> {
    if f_grid.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::invalid("capping fractions must lie in (0, 1]"));
    }
    if f_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "capping fractions must be strictly ascending",
        ));
    }
    Ok(())
}

/// `n` evenly spaced fractions ending at `top`.
pub fn fraction_grid(n: usize, top: f64) -> Vec<f64> {
    (1..=n).map(|k| top * k as f64 / n as f64).collect()
}

/// Least-squares polynomial fit; returns coefficients (constant first) and
/// the residual sum of squares.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> (Vec<f64>, f64) {
    let design = DMatrix::from_fn(x.len(), degree + 1, |i, k| x[i].powi(k as i32));
    let rhs = DVector::from_column_slice(y);
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("SVD computed with both factors");
    let residual = &design * &coeffs - rhs;
    (coeffs.iter().copied().collect(), residual.norm_squared())
}

/// Verdict from comparing linear and quadratic fits of `areas` against
/// `f_grid`: triangular when the quadratic removes more than half of the
/// linear residual with upward curvature, rectangular when the linear fit is
/// within 5% of the quadratic one.
pub fn classify_shape(areas: &[f64], f_grid: &[f64]) -> Result<ShapeVerdict> {
    if areas.len() != f_grid.len() {
        return Err(Error::LengthMismatch {
            what: "areas vs capping fractions",
            left: areas.len(),
            right: f_grid.len(),
        });
    }
    if areas.len() < 4 {
        return Err(Error::invalid(
            "shape classification needs at least 4 points",
        ));
    }
    let scale: f64 = areas.iter().map(|a| a * a).sum();
    if scale == 0.0 {
        return Err(Error::invalid(
            "all peak areas are zero; shape is undefined",
        ));
    }
    let (_, lin) = polyfit(f_grid, areas, 1);
    let (quad_coeffs, quad) = polyfit(f_grid, areas, 2);
    // Residuals at rounding level count as an exact linear fit.
    if lin <= 1e-20 * scale {
        return Ok(ShapeVerdict::Rectangular);
    }
    if quad < 0.5 * lin && quad_coeffs[2] > 0.0 {
        Ok(ShapeVerdict::Triangular)
    } else if lin <= 1.05 * quad {
        Ok(ShapeVerdict::Rectangular)
    } else {
        Ok(ShapeVerdict::Unclassified)
    }
}

/// Shape of one peak, fitted on its own support for fractions up to the
/// one that defined it.
pub fn classify_peak(
    samples: &[f64],
    peak: &PeakDescriptor,
    profile: &DayProfile,
    grid_points: usize,
) -> Result<ShapeVerdict> {
    let support = &samples[peak.start..=peak.end];
    let grid = fraction_grid(grid_points, profile.capping_fraction);
    let areas: Vec<f64> = grid
        .iter()
        .map(|&f| area_above(support, (1.0 - f) * profile.range + profile.p_min))
        .collect();
    classify_shape(&areas, &grid)
}

/// Sizes of groups of consecutive peaks whose separating valleys last at
/// most `gap_threshold_s`.
pub fn nocp_groups(peaks: &[PeakDescriptor], gap_threshold_s: f64, step_s: f64) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut iter = peaks.iter();
    let Some(mut prev) = iter.next() else {
        return groups;
    };
    let mut size = 1;
    for p in iter {
        if valley_s(prev, p, step_s) <= gap_threshold_s {
            size += 1;
        } else {
            groups.push(size);
            size = 1;
        }
        prev = p;
    }
    groups.push(size);
    groups
}

/// Time from the end of `a` to the start of `b`.
fn valley_s(a: &PeakDescriptor, b: &PeakDescriptor, step_s: f64) -> f64 {
    (b.start as f64 - a.end as f64 - 1.0) * step_s
}

/// Empirical CDF as `[x, P(X <= x)]` pairs over distinct sorted values.
pub fn empirical_cdf(values: &[f64]) -> Vec<[f64; 2]> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<[f64; 2]> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last[0] == *v => last[1] = p,
            _ => out.push([*v, p]),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    /// UTC epoch seconds of the day's first sample.
    pub start_time: i64,
    pub samples: usize,
    pub partial: bool,
    pub profile: DayProfile,
    pub peaks: usize,
    /// `None` for a flat day.
    pub shape: Option<ShapeVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    pub height_cdf: Vec<[f64; 2]>,
    pub width_cdf: Vec<[f64; 2]>,
    pub gap_cdf: Vec<[f64; 2]>,
    /// Group size -> number of groups.
    pub nocp_histogram: BTreeMap<usize, usize>,
    pub days: Vec<DaySummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct PeakOptions {
    pub capping_fraction: f64,
    pub gap_threshold_s: f64,
    /// Points in the area-growth grid used for day shape verdicts.
    pub shape_grid_points: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            capping_fraction: DEFAULT_CAPPING_FRACTION,
            gap_threshold_s: DEFAULT_NOCP_GAP_S,
            shape_grid_points: 20,
        }
    }
}

/// Splits a trace at UTC midnights. Traces shorter than a day are one day.
pub fn split_days(trace: &TraceSeries) -> (Vec<std::ops::Range<usize>>, Vec<String>) {
    let n = trace.len();
    let step = trace.step_s();
    if n as f64 * step < SECONDS_PER_DAY {
        let msg = format!(
            "trace covers {:.0} s, less than one day; treating it as a single day",
            n as f64 * step
        );
        return (vec![0..n], vec![msg]);
    }
    let day_of = |i: usize| {
        let ts = trace.start_time() as f64 + i as f64 * step;
        (ts / SECONDS_PER_DAY).floor() as i64
    };
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..n {
        if day_of(i) != day_of(start) {
            ranges.push(start..i);
            start = i;
        }
    }
    ranges.push(start..n);
    (ranges, Vec::new())
}

/// Per-day thresholds, pooled peak distributions and shape verdicts.
pub fn peak_statistics(trace: &TraceSeries, opts: &PeakOptions) -> Result<PeakStats> {
    let step = trace.step_s();
    let full_day = (SECONDS_PER_DAY / step).round() as usize;
    let (ranges, mut warnings) = split_days(trace);
    let grid = fraction_grid(opts.shape_grid_points.max(4), 1.0);

    let mut heights = Vec::new();
    let mut widths = Vec::new();
    let mut gaps = Vec::new();
    let mut histogram = BTreeMap::new();
    let mut days = Vec::with_capacity(ranges.len());
    for range in ranges {
        let day = &trace.samples()[range.clone()];
        let profile = daily_threshold(day, opts.capping_fraction)?;
        let peaks = segment_peaks(day, &profile, step);
        heights.extend(peaks.iter().map(|p| p.height));
        widths.extend(peaks.iter().map(|p| p.width_s));
        gaps.extend(peaks.windows(2).map(|w| valley_s(&w[0], &w[1], step)));
        for size in nocp_groups(&peaks, opts.gap_threshold_s, step) {
            *histogram.entry(size).or_insert(0) += 1;
        }
        let shape = if profile.is_flat() {
            None
        } else {
            let areas = area_growth(day, &grid, step)?;
            Some(classify_shape(&areas, &grid)?)
        };
        let start_time = trace.start_time() + (range.start as f64 * step).round() as i64;
        let partial = day.len() < full_day;
        if partial && days.is_empty() && warnings.is_empty() {
            warnings.push(format!("first day (starting {start_time}) is partial"));
        }
        days.push(DaySummary {
            start_time,
            samples: day.len(),
            partial,
            profile,
            peaks: peaks.len(),
            shape,
        });
    }
    if days.len() > 1 && days.last().is_some_and(|d| d.partial) {
        warnings.push("last day is partial".to_string());
    }
    Ok(PeakStats {
        height_cdf: empirical_cdf(&heights),
        width_cdf: empirical_cdf(&widths),
        gap_cdf: empirical_cdf(&gaps),
        nocp_histogram: histogram,
        days,
        warnings,
    })
}
