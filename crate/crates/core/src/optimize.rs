//! The three dispatch problems and the greedy signal follower.
//!
//! Every problem is posed as one linear program. Battery power is split
//! into discharge and charge parts (`b = b_dis - b_chg`, both costed), the
//! stored energy is tracked by one bounded variable per step, the window
//! maximum of the grid draw is an epigraph variable, and each absolute
//! mismatch term gets a pair of nonnegative slacks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::billing::{self, bill_breakdown};
use crate::domain::{
    soc_trajectory, BatterySpec, BillBreakdown, DispatchSolution, RegulationSeries, Tariff,
    TraceSeries,
};
use crate::error::{Error, Result};
use crate::lp::{solve_lp_with, LinearProgram, LpStatus, Relation, SolverOptions};

/// Baseline `y(t)` the data center reports when it also sells regulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// `y = s`: the raw load.
    Raw,
    /// `y = s - b_p`: the peak-shaving plan, committed before the signal is known.
    #[default]
    PeakPlan,
    /// `y` is chosen by the optimizer subject to `y >= 0`.
    Free,
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMode::Raw => "raw",
            BaselineMode::PeakPlan => "peak_plan",
            BaselineMode::Free => "free",
        })
    }
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(BaselineMode::Raw),
            "peak_plan" => Ok(BaselineMode::PeakPlan),
            "free" => Ok(BaselineMode::Free),
            other => Err(Error::invalid(format!(
                "unknown baseline mode {other:?} (expected raw, peak_plan or free)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Require the final state of charge to equal the initial one.
    pub net_energy_zero: bool,
    /// Only used by the joint problem.
    pub baseline_mode: BaselineMode,
    /// Cap on the capacity bid as a multiple of battery power; infinite by default.
    pub capacity_cap_ratio: f64,
    pub solver: SolverOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            net_energy_zero: true,
            baseline_mode: BaselineMode::PeakPlan,
            capacity_cap_ratio: f64::INFINITY,
            solver: SolverOptions::default(),
        }
    }
}

/// Optimal dispatch with its itemized bill.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub dispatch: DispatchSolution,
    pub bill: BillBreakdown,
    /// Objective reported by the LP (bill total, or negated revenue for the
    /// regulation problem).
    pub lp_objective: f64,
}

/// Revenue-maximizing regulation bid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulationOptimum {
    pub dispatch: DispatchSolution,
    /// Net regulation revenue `R*`.
    pub revenue: f64,
    pub lp_objective: f64,
}

/// Column layout shared by the dispatch LPs.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub steps: usize,
    /// Epigraph variable for the window maximum.
    pub peak: Option<usize>,
    /// Capacity bid, followed by per-step mismatch slack pairs.
    pub regulation: Option<usize>,
    /// First column of the per-step baseline variables (free mode).
    pub baseline: Option<usize>,
    pub num_vars: usize,
}

impl Layout {
    fn new(steps: usize, peak: bool, regulation: bool, free_baseline: bool) -> Self {
        let mut next = 3 * steps;
        let peak = peak.then(|| {
            next += 1;
            next - 1
        });
        let regulation = regulation.then(|| {
            next += 1 + 2 * steps;
            next - 1 - 2 * steps
        });
        let baseline = free_baseline.then(|| {
            next += steps;
            next - steps
        });
        Self {
            steps,
            peak,
            regulation,
            baseline,
            num_vars: next,
        }
    }

    pub fn discharge(&self, t: usize) -> usize {
        t
    }

    pub fn charge(&self, t: usize) -> usize {
        self.steps + t
    }

    /// Stored energy after step `t`, MWh.
    pub fn energy(&self, t: usize) -> usize {
        2 * self.steps + t
    }

    fn capacity(&self) -> usize {
        self.regulation.expect("layout has a regulation block")
    }

    fn mismatch_pos(&self, t: usize) -> usize {
        self.capacity() + 1 + t
    }

    fn mismatch_neg(&self, t: usize) -> usize {
        self.capacity() + 1 + self.steps + t
    }

    fn dispatch_from(&self, x: &[f64], battery: &BatterySpec) -> Vec<f64> {
        (0..self.steps)
            .map(|t| {
                let b = x[self.discharge(t)] - x[self.charge(t)];
                b.clamp(-battery.power_mw, battery.power_mw)
            })
            .collect()
    }
}

/// A dispatch LP with the column layout needed to read its solution.
#[derive(Debug, Clone)]
pub struct DispatchLp {
    pub lp: LinearProgram,
    pub layout: Layout,
}

fn battery_block(
    lp: &mut LinearProgram,
    layout: &Layout,
    battery: &BatterySpec,
    step_hours: f64,
    opts: &SolveOptions,
) {
    let e = battery.energy_mwh;
    let n = layout.steps;
    for t in 0..n {
        lp.set_bounds(layout.discharge(t), 0.0, battery.power_mw);
        lp.set_bounds(layout.charge(t), 0.0, battery.power_mw);
        lp.set_bounds(layout.energy(t), battery.soc_min * e, battery.soc_max * e);
        let mut row = vec![
            (layout.energy(t), 1.0),
            (layout.discharge(t), step_hours),
            (layout.charge(t), -step_hours),
        ];
        let rhs = if t == 0 {
            battery.soc_ini * e
        } else {
            row.push((layout.energy(t - 1), -1.0));
            0.0
        };
        lp.add_sparse(&row, Relation::Eq, rhs);
    }
    if opts.net_energy_zero && n > 0 {
        let last = layout.energy(n - 1);
        lp.set_bounds(last, battery.soc_ini * e, battery.soc_ini * e);
    }
}

/// Energy, demand and wear terms; returns the constant `lambda_elec * sum(s)`.
fn bill_block(lp: &mut LinearProgram, layout: &Layout, s: &[f64], tariff: &Tariff) -> f64 {
    let m = layout.peak.expect("layout has a peak variable");
    lp.set_bounds(m, f64::NEG_INFINITY, f64::INFINITY);
    lp.set_objective(m, tariff.lambda_peak);
    for (t, &st) in s.iter().enumerate() {
        lp.set_objective(layout.discharge(t), tariff.lambda_b - tariff.lambda_elec);
        lp.set_objective(layout.charge(t), tariff.lambda_b + tariff.lambda_elec);
        lp.add_sparse(
            &[
                (m, 1.0),
                (layout.discharge(t), 1.0),
                (layout.charge(t), -1.0),
            ],
            Relation::Ge,
            st,
        );
    }
    tariff.lambda_elec * s.iter().sum::<f64>()
}

/// Capacity payment and mismatch penalty against `y - s + C r`.
/// `fixed_offset[t]` is `y(t) - s(t)` for a fixed baseline; in free mode it
/// is `-s(t)` and the baseline columns enter the row.
fn regulation_block(
    lp: &mut LinearProgram,
    layout: &Layout,
    r: &[f64],
    fixed_offset: &[f64],
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) {
    let c = layout.capacity();
    let cap = if opts.capacity_cap_ratio.is_infinite() {
        f64::INFINITY
    } else {
        opts.capacity_cap_ratio * battery.power_mw
    };
    lp.set_bounds(c, 0.0, cap);
    lp.set_objective(c, -tariff.lambda_c);
    for t in 0..layout.steps {
        lp.set_objective(layout.mismatch_pos(t), tariff.lambda_mis);
        lp.set_objective(layout.mismatch_neg(t), tariff.lambda_mis);
        let mut row = vec![
            (layout.mismatch_pos(t), 1.0),
            (layout.mismatch_neg(t), -1.0),
            (layout.discharge(t), -1.0),
            (layout.charge(t), 1.0),
            (c, r[t]),
        ];
        if let Some(y0) = layout.baseline {
            row.push((y0 + t, -1.0));
        }
        lp.add_sparse(&row, Relation::Eq, fixed_offset[t]);
    }
}

fn check_inputs(battery: &BatterySpec, tariff: &Tariff, opts: &SolveOptions) -> Result<()> {
    battery.validate()?;
    tariff.validate()?;
    if !(opts.capacity_cap_ratio >= 0.0) {
        return Err(Error::invalid("capacity cap ratio must be >= 0"));
    }
    Ok(())
}

fn check_aligned(trace: &TraceSeries, r: &RegulationSeries) -> Result<()> {
    if trace.len() != r.len() {
        return Err(Error::LengthMismatch {
            what: "trace vs regulation signal",
            left: trace.len(),
            right: r.len(),
        });
    }
    if (trace.step_s() - r.step_s()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "trace step {} s differs from regulation step {} s; resample first",
            trace.step_s(),
            r.step_s()
        )));
    }
    Ok(())
}

pub fn build_peak_shaving_lp(
    trace: &TraceSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<DispatchLp> {
    check_inputs(battery, tariff, opts)?;
    let layout = Layout::new(trace.len(), true, false, false);
    let mut lp = LinearProgram::new(layout.num_vars);
    battery_block(&mut lp, &layout, battery, trace.step_hours(), opts);
    let constant = bill_block(&mut lp, &layout, trace.samples(), tariff);
    lp.set_constant(constant);
    Ok(DispatchLp { lp, layout })
}

pub fn build_regulation_lp(
    r: &RegulationSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<DispatchLp> {
    check_inputs(battery, tariff, opts)?;
    if r.is_empty() {
        return Err(Error::invalid("empty regulation signal"));
    }
    let layout = Layout::new(r.len(), false, true, false);
    let mut lp = LinearProgram::new(layout.num_vars);
    battery_block(&mut lp, &layout, battery, r.step_s() / 3600.0, opts);
    for t in 0..layout.steps {
        lp.set_objective(layout.discharge(t), tariff.lambda_b);
        lp.set_objective(layout.charge(t), tariff.lambda_b);
    }
    let zeros = vec![0.0; r.len()];
    regulation_block(&mut lp, &layout, r.samples(), &zeros, battery, tariff, opts);
    Ok(DispatchLp { lp, layout })
}

/// Joint LP. `plan` is the committed peak-shaving dispatch, required in
/// `peak_plan` mode and ignored otherwise.
pub fn build_joint_lp(
    trace: &TraceSeries,
    r: &RegulationSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
    plan: Option<&[f64]>,
) -> Result<DispatchLp> {
    check_inputs(battery, tariff, opts)?;
    check_aligned(trace, r)?;
    let free = opts.baseline_mode == BaselineMode::Free;
    let layout = Layout::new(trace.len(), true, true, free);
    let mut lp = LinearProgram::new(layout.num_vars);
    battery_block(&mut lp, &layout, battery, trace.step_hours(), opts);
    let constant = bill_block(&mut lp, &layout, trace.samples(), tariff);
    lp.set_constant(constant);
    let s = trace.samples();
    let offset: Vec<f64> = match opts.baseline_mode {
        BaselineMode::Raw => vec![0.0; s.len()],
        BaselineMode::Free => s.iter().map(|v| -v).collect(),
        BaselineMode::PeakPlan => {
            let plan = plan.ok_or_else(|| Error::invalid("peak_plan mode needs a plan"))?;
            if plan.len() != s.len() {
                return Err(Error::LengthMismatch {
                    what: "trace vs peak plan",
                    left: s.len(),
                    right: plan.len(),
                });
            }
            plan.iter().map(|b| -b).collect()
        }
    };
    regulation_block(
        &mut lp,
        &layout,
        r.samples(),
        &offset,
        battery,
        tariff,
        opts,
    );
    Ok(DispatchLp { lp, layout })
}

fn solve(dlp: &DispatchLp, opts: &SolveOptions, what: &str) -> Result<Vec<f64>> {
    let out = solve_lp_with(&dlp.lp, &opts.solver)?;
    match out.status {
        LpStatus::Optimal => Ok(out.solution),
        LpStatus::Infeasible => Err(Error::Solver(format!(
            "{what} LP reported infeasible although the idle battery is feasible"
        ))),
        LpStatus::Unbounded => Err(Error::Unbounded(format!(
            "{what}: the capacity payment outgrows every enforceable mismatch penalty; \
             cap the bid or use a fixed baseline"
        ))),
    }
}

fn assemble(
    layout: &Layout,
    x: &[f64],
    battery: &BatterySpec,
    step_hours: f64,
    baseline: Vec<f64>,
) -> Result<DispatchSolution> {
    let b = layout.dispatch_from(x, battery);
    let capacity = layout.regulation.map_or(0.0, |c| x[c].max(0.0));
    let soc = soc_trajectory(&b, battery, step_hours)?;
    Ok(DispatchSolution {
        b,
        capacity,
        baseline,
        soc,
    })
}

/// Minimizes the bill using the battery for peak shaving alone.
pub fn optimize_peak_shaving(
    trace: &TraceSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<Optimized> {
    let dlp = build_peak_shaving_lp(trace, battery, tariff, opts)?;
    let x = solve(&dlp, opts, "peak shaving")?;
    let dispatch = assemble(
        &dlp.layout,
        &x,
        battery,
        trace.step_hours(),
        trace.samples().to_vec(),
    )?;
    let bill = bill_breakdown(trace, &dispatch, None, battery, tariff)?;
    Ok(Optimized {
        lp_objective: dlp.lp.evaluate(&x),
        dispatch,
        bill,
    })
}

/// Maximizes net regulation revenue, ignoring the data-center bill.
pub fn optimize_regulation(
    r: &RegulationSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<RegulationOptimum> {
    let dlp = build_regulation_lp(r, battery, tariff, opts)?;
    let x = solve(&dlp, opts, "regulation")?;
    let dispatch = assemble(&dlp.layout, &x, battery, r.step_s() / 3600.0, Vec::new())?;
    battery.check_dispatch(&dispatch.b, r.step_s() / 3600.0)?;
    let revenue = billing::regulation_revenue(&dispatch.b, dispatch.capacity, r.samples(), tariff)?;
    Ok(RegulationOptimum {
        lp_objective: dlp.lp.evaluate(&x),
        dispatch,
        revenue,
    })
}

/// Bill of a regulation-only dispatch: energy and demand charges on
/// `s - b_r`, less the optimal net revenue.
pub fn regulation_total_bill(
    trace: &TraceSeries,
    dispatch: &DispatchSolution,
    revenue: f64,
    tariff: &Tariff,
) -> Result<f64> {
    let grid = billing::grid_draw(trace, &dispatch.b)?;
    Ok(billing::energy_cost(&grid, tariff)? + billing::peak_cost(&grid, tariff)? - revenue)
}

/// Itemized bill for a regulation-only dispatch, measured against the raw load.
pub fn regulation_bill_breakdown(
    trace: &TraceSeries,
    r: &RegulationSeries,
    optimum: &RegulationOptimum,
    battery: &BatterySpec,
    tariff: &Tariff,
) -> Result<BillBreakdown> {
    check_aligned(trace, r)?;
    let dispatch = DispatchSolution {
        baseline: trace.samples().to_vec(),
        ..optimum.dispatch.clone()
    };
    bill_breakdown(trace, &dispatch, Some(r), battery, tariff)
}

/// Joint peak shaving and regulation. In `peak_plan` mode the peak-shaving
/// problem is solved first to obtain the committed baseline.
pub fn optimize_joint(
    trace: &TraceSeries,
    r: &RegulationSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
) -> Result<Optimized> {
    let plan = match opts.baseline_mode {
        BaselineMode::PeakPlan => Some(optimize_peak_shaving(trace, battery, tariff, opts)?),
        _ => None,
    };
    optimize_joint_with_plan(
        trace,
        r,
        battery,
        tariff,
        opts,
        plan.as_ref().map(|p| p.dispatch.b.as_slice()),
    )
}

/// As [`optimize_joint`] with a precomputed peak-shaving dispatch.
pub fn optimize_joint_with_plan(
    trace: &TraceSeries,
    r: &RegulationSeries,
    battery: &BatterySpec,
    tariff: &Tariff,
    opts: &SolveOptions,
    plan: Option<&[f64]>,
) -> Result<Optimized> {
    let dlp = build_joint_lp(trace, r, battery, tariff, opts, plan)?;
    let x = solve(&dlp, opts, "joint")?;
    let s = trace.samples();
    let baseline = match opts.baseline_mode {
        BaselineMode::Raw => s.to_vec(),
        BaselineMode::PeakPlan => {
            let plan = plan.expect("checked by build_joint_lp");
            s.iter().zip(plan).map(|(s, b)| s - b).collect()
        }
        BaselineMode::Free => {
            let y0 = dlp
                .layout
                .baseline
                .expect("free layout has baseline columns");
            x[y0..y0 + s.len()].iter().map(|v| v.max(0.0)).collect()
        }
    };
    let dispatch = assemble(&dlp.layout, &x, battery, trace.step_hours(), baseline)?;
    let bill = bill_breakdown(trace, &dispatch, Some(r), battery, tariff)?;
    Ok(Optimized {
        lp_objective: dlp.lp.evaluate(&x),
        dispatch,
        bill,
    })
}

/// Follows `C * r` as closely as the power and SoC limits allow.
pub fn greedy_follow(
    r: &RegulationSeries,
    capacity: f64,
    battery: &BatterySpec,
) -> Result<Vec<f64>> {
    battery.validate()?;
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::invalid(format!(
            "capacity must be >= 0, got {capacity}"
        )));
    }
    let dt = r.step_s() / 3600.0;
    let e = battery.energy_mwh;
    let (lo, hi) = (battery.soc_min * e, battery.soc_max * e);
    let mut stored = battery.soc_ini * e;
    Ok(r.samples()
        .iter()
        .map(|rt| {
            let target = (capacity * rt).clamp(-battery.power_mw, battery.power_mw);
            let max_discharge = ((stored - lo) / dt).max(0.0);
            let max_charge = ((hi - stored) / dt).max(0.0);
            let b = target.clamp(-max_charge, max_discharge);
            stored -= b * dt;
            b
        })
        .collect())
}
