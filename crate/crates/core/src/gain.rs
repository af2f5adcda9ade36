//! Four-scenario evaluation and superlinear-gain experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billing::{self, baseline_bill};
use crate::domain::{
    BatterySpec, BillBreakdown, DispatchSolution, GainReport, RegulationSeries, Tariff, TraceSeries,
};
use crate::error::{Error, Result};
use crate::optimize::{
    optimize_joint_with_plan, optimize_peak_shaving, optimize_regulation,
    regulation_bill_breakdown, BaselineMode, SolveOptions,
};
use crate::synth::{synth_regulation, synth_trace, PeakCategory, RegulationModel};

/// Relative guard band below which a superlinear excess counts as zero.
pub const SUPERLINEAR_GUARD: f64 = 1e-9;

/// Battery used for an evaluation: either fixed, or sized from the load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatterySizing {
    Fixed(BatterySpec),
    /// Power equal to the trace maximum, energy for `duration_h` at that power.
    FromPeak {
        duration_h: f64,
        soc_ini: f64,
        soc_min: f64,
        soc_max: f64,
    },
}

impl Default for BatterySizing {
    fn default() -> Self {
        BatterySizing::FromPeak {
            duration_h: 1.0 / 6.0,
            soc_ini: 0.5,
            soc_min: 0.2,
            soc_max: 0.9,
        }
    }
}

impl BatterySizing {
    pub fn resolve(&self, trace: &TraceSeries) -> Result<BatterySpec> {
        match *self {
            BatterySizing::Fixed(spec) => {
                spec.validate()?;
                Ok(spec)
            }
            BatterySizing::FromPeak {
                duration_h,
                soc_ini,
                soc_min,
                soc_max,
            } => {
                let p = trace.peak();
                if !(p > 0.0) {
                    return Err(Error::invalid(
                        "cannot size a battery from an all-zero trace; configure it explicitly",
                    ));
                }
                BatterySpec::new(p, p * duration_h, soc_ini, soc_min, soc_max)
            }
        }
    }

    pub fn is_defaulted(&self) -> bool {
        matches!(self, BatterySizing::FromPeak { .. })
    }
}

/// Itemized bills of the four scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBills {
    pub baseline: BillBreakdown,
    pub regulation: BillBreakdown,
    pub peak_shaving: BillBreakdown,
    pub joint: BillBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEvaluation {
    pub report: GainReport,
    pub bills: ScenarioBills,
    pub battery: BatterySpec,
    pub peak_dispatch: DispatchSolution,
    pub regulation_dispatch: DispatchSolution,
    pub joint_dispatch: DispatchSolution,
}

/// Superlinear saving ratio `((J - J*) - ((J - J_r) + (J - J_p))) / J`.
/// Excesses inside the guard band are reported as exactly zero.
pub fn superlinear_ratio(
    baseline: f64,
    peak_only: f64,
    regulation_only: f64,
    joint: f64,
) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::invalid(format!(
            "superlinear ratio needs a positive baseline bill, got {baseline}"
        )));
    }
    let excess = (baseline - joint) - ((baseline - regulation_only) + (baseline - peak_only));
    if excess.abs() <= SUPERLINEAR_GUARD * baseline.max(1.0) {
        return Ok(0.0);
    }
    Ok(excess / baseline)
}

pub fn gain_report(
    baseline: f64,
    peak_only: f64,
    regulation_only: f64,
    joint: f64,
) -> Result<GainReport> {
    let q = superlinear_ratio(baseline, peak_only, regulation_only, joint)?;
    Ok(GainReport {
        baseline,
        peak_only,
        regulation_only,
        joint,
        q,
        superlinear: q > 0.0,
    })
}

/// Bills one window with the battery idle, peak shaving, regulation, and both.
pub fn run_four_scenarios(
    trace: &TraceSeries,
    r: &RegulationSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<WindowEvaluation> {
    let j = baseline_bill(trace, tariff)?;
    let idle = DispatchSolution::idle(trace, battery);
    let baseline = billing::bill_breakdown(trace, &idle, None, battery, tariff)?;

    let peak = optimize_peak_shaving(trace, battery, tariff, opts)?;
    let reg = optimize_regulation(r, battery, tariff, opts)?;
    let reg_bill = regulation_bill_breakdown(trace, r, &reg, battery, tariff)?;
    let plan = (opts.baseline_mode == BaselineMode::PeakPlan).then_some(peak.dispatch.b.as_slice());
    let joint = optimize_joint_with_plan(trace, r, battery, tariff, opts, plan)?;

    let report = gain_report(j, peak.bill.total, reg_bill.total, joint.bill.total)?;
    Ok(WindowEvaluation {
        report,
        bills: ScenarioBills {
            baseline,
            regulation: reg_bill,
            peak_shaving: peak.bill,
            joint: joint.bill,
        },
        battery: *battery,
        peak_dispatch: peak.dispatch,
        regulation_dispatch: DispatchSolution {
            baseline: trace.samples().to_vec(),
            ..reg.dispatch
        },
        joint_dispatch: joint.dispatch,
    })
}

/// Result of one hourly window in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub index: usize,
    #[serde(flatten)]
    pub report: GainReport,
    pub bill_breakdowns: ScenarioBills,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub hours_total: usize,
    pub hours_superlinear: usize,
    pub probability: f64,
    pub mean_q: f64,
    pub q_values: Vec<f64>,
}

impl SweepSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a GainReport>) -> Self {
        let q_values: Vec<f64> = reports.into_iter().map(|r| r.q).collect();
        let hours_total = q_values.len();
        let hours_superlinear = q_values.iter().filter(|q| **q > 0.0).count();
        let (probability, mean_q) = if hours_total == 0 {
            (0.0, 0.0)
        } else {
            (
                hours_superlinear as f64 / hours_total as f64,
                q_values.iter().sum::<f64>() / hours_total as f64,
            )
        };
        Self {
            hours_total,
            hours_superlinear,
            probability,
            mean_q,
            q_values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub windows: Vec<WindowRecord>,
    pub summary: SweepSummary,
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_workers<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Evaluates consecutive aligned windows of `window_len` samples.
pub fn sweep(
    trace: &TraceSeries,
    r: &RegulationSeries,
    window_len: usize,
    battery: &BatterySizing,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<SweepResult> {
    if window_len == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    let count = (trace.len() / window_len).min(r.len() / window_len);
    if count == 0 {
        return Err(Error::invalid("no complete window to evaluate"));
    }
    let spec = battery.resolve(trace)?;
    let windows: Vec<WindowRecord> = (0..count)
        .into_par_iter()
        .map(|i| {
            let tw = trace.slice(i * window_len, window_len)?;
            let rw = r.slice(i * window_len, window_len)?;
            let eval = run_four_scenarios(&tw, &rw, &spec, tariff, opts)?;
            Ok(WindowRecord {
                index: i,
                report: eval.report,
                bill_breakdowns: eval.bills,
            })
        })
        .collect::<Result<_>>()?;
    let summary = SweepSummary::from_reports(windows.iter().map(|w| &w.report));
    Ok(SweepResult { windows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub category: String,
    pub peak: PeakCategory,
    pub trials: usize,
    pub superlinear: usize,
    pub probability: f64,
    pub mean_q: f64,
}

/// Settings shared by all trials of a category experiment.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentSetup {
    pub steps: usize,
    pub step_s: f64,
    pub regulation: RegulationModel,
    pub battery: BatterySizing,
    pub tariff: Tariff,
    pub opts: SolveOptions,
}

/// Frequency of superlinear gain over `trials` windows of one peak category.
/// Trial `i` draws its regulation signal from `setup.regulation.for_trial(i)`,
/// so every category sees the same signal draws.
pub fn category_experiment(
    category: &PeakCategory,
    trials: usize,
    setup: &ExperimentSetup,
) -> Result<CategoryResult> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let trace = synth_trace(category, setup.steps, setup.step_s, None)?;
    let battery = setup.battery.resolve(&trace)?;
    let reports: Vec<GainReport> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let r = synth_regulation(
                &setup.regulation.for_trial(i as u64),
                setup.steps,
                setup.step_s,
            )?;
            Ok(run_four_scenarios(&trace, &r, &battery, &setup.tariff, &setup.opts)?.report)
        })
        .collect::<Result<_>>()?;
    let summary = SweepSummary::from_reports(&reports);
    Ok(CategoryResult {
        category: category.to_string(),
        peak: *category,
        trials,
        superlinear: summary.hours_superlinear,
        probability: summary.probability,
        mean_q: summary.mean_q,
    })
}
