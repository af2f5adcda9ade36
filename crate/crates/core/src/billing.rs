//! Bill arithmetic for a single window.

use crate::domain::{
    BatterySpec, BillBreakdown, DispatchSolution, RegulationSeries, Tariff, TraceSeries,
};
use crate::error::{Error, Result};

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{what} contains a non-finite value"
        )));
    }
    Ok(())
}

/// Energy charge `lambda_elec * sum(grid)`.
pub fn energy_cost(grid: &[f64], tariff: &Tariff) -> Result<f64> {
    check_finite(grid, "grid draw")?;
    Ok(tariff.lambda_elec * grid.iter().sum::<f64>())
}

/// Demand charge on the window maximum. Net export is allowed, so the
/// maximum may be zero or negative.
pub fn peak_cost(grid: &[f64], tariff: &Tariff) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("peak cost of an empty window"));
    }
    check_finite(grid, "grid draw")?;
    let max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(tariff.lambda_peak * max)
}

/// Bill with the battery idle.
pub fn baseline_bill(trace: &TraceSeries, tariff: &Tariff) -> Result<f64> {
    Ok(energy_cost(trace.samples(), tariff)? + peak_cost(trace.samples(), tariff)?)
}

/// Linear wear cost on battery throughput.
pub fn battery_cost(b: &[f64], tariff: &Tariff) -> Result<f64> {
    check_finite(b, "dispatch")?;
    Ok(tariff.lambda_b * b.iter().map(|v| v.abs()).sum::<f64>())
}

/// Net regulation revenue: capacity payment minus tracking mismatch
/// against `C * r` minus battery wear.
pub fn regulation_revenue(b: &[f64], capacity: f64, r: &[f64], tariff: &Tariff) -> Result<f64> {
    if b.len() != r.len() {
        return Err(Error::LengthMismatch {
            what: "dispatch vs regulation signal",
            left: b.len(),
            right: r.len(),
        });
    }
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::invalid(format!(
            "capacity must be >= 0, got {capacity}"
        )));
    }
    let mismatch: f64 = b
        .iter()
        .zip(r)
        .map(|(bt, rt)| (bt - capacity * rt).abs())
        .sum();
    Ok(tariff.lambda_c * capacity - tariff.lambda_mis * mismatch - battery_cost(b, tariff)?)
}

/// Grid draw `s - b`.
pub fn grid_draw(trace: &TraceSeries, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != trace.len() {
        return Err(Error::LengthMismatch {
            what: "trace vs dispatch",
            left: trace.len(),
            right: b.len(),
        });
    }
    Ok(trace.samples().iter().zip(b).map(|(s, b)| s - b).collect())
}

/// Itemized bill for `dispatch` over `trace`.
///
/// With `regulation = None` the battery is not enrolled in the market: the
/// bid must be zero and no mismatch is charged. Otherwise the mismatch is
/// measured as `|-s + b + y - C r|` using the dispatch's reported baseline
/// `y`. The dispatch is checked against `battery` first.
pub fn bill_breakdown(
    trace: &TraceSeries,
    dispatch: &DispatchSolution,
    regulation: Option<&RegulationSeries>,
    battery: &BatterySpec,
    tariff: &Tariff,
) -> Result<BillBreakdown> {
    let grid = grid_draw(trace, &dispatch.b)?;
    battery.check_dispatch(&dispatch.b, trace.step_hours())?;
    let energy = energy_cost(&grid, tariff)?;
    let peak = peak_cost(&grid, tariff)?;
    let wear = battery_cost(&dispatch.b, tariff)?;
    let (mismatch, revenue) = match regulation {
        None => {
            if dispatch.capacity != 0.0 {
                return Err(Error::invalid(
                    "a nonzero capacity bid needs a regulation signal",
                ));
            }
            (0.0, 0.0)
        }
        Some(r) => {
            if r.len() != trace.len() {
                return Err(Error::LengthMismatch {
                    what: "trace vs regulation signal",
                    left: trace.len(),
                    right: r.len(),
                });
            }
            if dispatch.baseline.len() != trace.len() {
                return Err(Error::LengthMismatch {
                    what: "trace vs baseline",
                    left: trace.len(),
                    right: dispatch.baseline.len(),
                });
            }
            let c = dispatch.capacity;
            let deviation: f64 = trace
                .samples()
                .iter()
                .zip(&dispatch.b)
                .zip(&dispatch.baseline)
                .zip(r.samples())
                .map(|(((s, b), y), rt)| (-s + b + y - c * rt).abs())
                .sum();
            (tariff.lambda_mis * deviation, tariff.lambda_c * c)
        }
    };
    Ok(BillBreakdown::from_components(
        energy, peak, wear, mismatch, revenue,
    ))
}

/// Converts a monthly demand price into the charge applied to one window.
pub fn amortize_peak_price(monthly_price: f64, hours_per_month: f64) -> Result<f64> {
    if !(monthly_price > 0.0 && hours_per_month > 0.0) {
        return Err(Error::invalid(format!(
            "amortization needs positive inputs, got {monthly_price} over {hours_per_month} h"
        )));
    }
    Ok(monthly_price / hours_per_month)
}
