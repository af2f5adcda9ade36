//! Value types shared across the crate.
//!
//! Power is in MW, energy in MWh, step lengths in seconds at the API
//! boundary and hours internally. Positive battery power means discharge
//! into the load, which lowers the stored energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when validating a dispatch against its battery limits.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Data-center load at a fixed sampling step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    samples: Vec<f64>,
    step_s: f64,
    start_time: i64,
}

impl TraceSeries {
    pub fn new(samples: Vec<f64>, step_s: f64, start_time: i64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("trace must contain at least one sample"));
        }
        if !(step_s.is_finite() && step_s > 0.0) {
            return Err(Error::invalid(format!(
                "step length must be > 0, got {step_s}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "trace sample {i} is {} (must be finite and >= 0)",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            step_s,
            start_time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step_s(&self) -> f64 {
        self.step_s
    }

    pub fn step_hours(&self) -> f64 {
        self.step_s / SECONDS_PER_HOUR
    }

    /// UTC epoch seconds of the first sample.
    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Sub-series `[start, start + len)`, keeping the timestamp consistent.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.samples.len() && len > 0)
            .ok_or_else(|| Error::invalid("slice out of range"))?;
        let offset = (start as f64 * self.step_s).round() as i64;
        Self::new(
            self.samples[start..end].to_vec(),
            self.step_s,
            self.start_time + offset,
        )
    }
}

/// Normalized regulation signal, every sample in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RegulationSeries {
    samples: Vec<f64>,
    step_s: f64,
}

impl RegulationSeries {
    pub fn new(samples: Vec<f64>, step_s: f64) -> Result<Self> {
        if !(step_s.is_finite() && step_s > 0.0) {
            return Err(Error::invalid(format!(
                "step length must be > 0, got {step_s}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid(format!(
                "regulation sample {i} is {} (must lie in [-1, 1])",
                samples[i]
            )));
        }
        Ok(Self { samples, step_s })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step_s(&self) -> f64 {
        self.step_s
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.samples.len())
            .ok_or_else(|| Error::invalid("slice out of range"))?;
        Self::new(self.samples[start..end].to_vec(), self.step_s)
    }
}

/// Battery power/energy ratings and the allowed state-of-charge window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub power_mw: f64,
    pub energy_mwh: f64,
    pub soc_ini: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl BatterySpec {
    pub fn new(
        power_mw: f64,
        energy_mwh: f64,
        soc_ini: f64,
        soc_min: f64,
        soc_max: f64,
    ) -> Result<Self> {
        let spec = Self {
            power_mw,
            energy_mwh,
            soc_ini,
            soc_min,
            soc_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power_mw.is_finite() && self.power_mw >= 0.0) {
            return Err(Error::invalid(format!(
                "battery power must be >= 0, got {}",
                self.power_mw
            )));
        }
        if !(self.energy_mwh.is_finite() && self.energy_mwh > 0.0) {
            return Err(Error::invalid(format!(
                "battery energy must be > 0, got {}",
                self.energy_mwh
            )));
        }
        let ordered = 0.0 <= self.soc_min
            && self.soc_min <= self.soc_ini
            && self.soc_ini <= self.soc_max
            && self.soc_max <= 1.0;
        if !ordered {
            return Err(Error::invalid(format!(
                "need 0 <= soc_min <= soc_ini <= soc_max <= 1, got {} / {} / {}",
                self.soc_min, self.soc_ini, self.soc_max
            )));
        }
        Ok(())
    }

    /// Checks the power limit and SoC window for `b`, reporting the first
    /// violating index.
    pub fn check_dispatch(&self, b: &[f64], step_hours: f64) -> Result<Vec<f64>> {
        if let Some(i) = b
            .iter()
            .position(|v| v.abs() > self.power_mw + FEASIBILITY_TOL)
        {
            return Err(Error::InfeasibleDispatch {
                index: i,
                reason: format!("|b| = {} exceeds power cap {}", b[i].abs(), self.power_mw),
            });
        }
        let soc = soc_trajectory(b, self, step_hours)?;
        if let Some(i) = soc.iter().position(|s| {
            *s < self.soc_min - FEASIBILITY_TOL || *s > self.soc_max + FEASIBILITY_TOL
        }) {
            return Err(Error::InfeasibleDispatch {
                index: i,
                reason: format!(
                    "SoC {} outside [{}, {}]",
                    soc[i], self.soc_min, self.soc_max
                ),
            });
        }
        Ok(soc)
    }
}

/// Price coefficients, already scaled to the sampling step where noted.
///
/// `lambda_elec`, `lambda_b` and `lambda_mis` multiply per-step MW values,
/// so they carry the step length. `lambda_peak` is the amortized charge for
/// one window's maximum and `lambda_c` is paid per MW of capacity per window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Tariff {
    pub lambda_elec: f64,
    pub lambda_peak: f64,
    pub lambda_c: f64,
    pub lambda_b: f64,
    pub lambda_mis: f64,
}

impl Tariff {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_elec", self.lambda_elec),
            ("lambda_peak", self.lambda_peak),
            ("lambda_c", self.lambda_c),
            ("lambda_b", self.lambda_b),
            ("lambda_mis", self.lambda_mis),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Same tariff with the regulation market terms switched off.
    pub fn without_regulation(&self) -> Self {
        Self {
            lambda_c: 0.0,
            lambda_mis: 0.0,
            ..*self
        }
    }
}

/// A battery schedule together with its regulation bid and reported baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    /// Battery power per step, MW (positive = discharge).
    pub b: Vec<f64>,
    /// Regulation capacity bid, MW.
    pub capacity: f64,
    /// Baseline load reported to the grid operator, MW.
    pub baseline: Vec<f64>,
    /// State of charge after each step, fraction of energy capacity.
    pub soc: Vec<f64>,
}

impl DispatchSolution {
    /// Battery left idle: no bid, baseline equal to the load.
    pub fn idle(trace: &TraceSeries, battery: &BatterySpec) -> Self {
        let n = trace.len();
        Self {
            b: vec![0.0; n],
            capacity: 0.0,
            baseline: trace.samples().to_vec(),
            soc: vec![battery.soc_ini; n],
        }
    }
}

/// Itemized bill for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BillBreakdown {
    pub energy_cost: f64,
    pub peak_cost: f64,
    pub battery_cost: f64,
    pub mismatch_penalty: f64,
    pub capacity_revenue: f64,
    pub total: f64,
}

impl BillBreakdown {
    pub fn from_components(
        energy_cost: f64,
        peak_cost: f64,
        battery_cost: f64,
        mismatch_penalty: f64,
        capacity_revenue: f64,
    ) -> Self {
        Self {
            energy_cost,
            peak_cost,
            battery_cost,
            mismatch_penalty,
            capacity_revenue,
            total: energy_cost + peak_cost + battery_cost + mismatch_penalty - capacity_revenue,
        }
    }

    /// Net regulation revenue: capacity payment less mismatch and wear.
    pub fn regulation_revenue(&self) -> f64 {
        self.capacity_revenue - self.mismatch_penalty - self.battery_cost
    }
}

/// Bills of the four scenarios for one window and the superlinear verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    #[serde(rename = "J")]
    pub baseline: f64,
    #[serde(rename = "J_p")]
    pub peak_only: f64,
    #[serde(rename = "J_r")]
    pub regulation_only: f64,
    #[serde(rename = "J_star")]
    pub joint: f64,
    pub q: f64,
    pub superlinear: bool,
}

/// State of charge after each step for dispatch `b`.
///
/// No bounds are enforced here; see [`BatterySpec::check_dispatch`].
pub fn soc_trajectory(b: &[f64], battery: &BatterySpec, step_hours: f64) -> Result<Vec<f64>> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("dispatch contains a non-finite value"));
    }
    let mut released = 0.0;
    Ok(b.iter()
        .map(|p| {
            released += p * step_hours;
            battery.soc_ini - released / battery.energy_mwh
        })
        .collect())
}
