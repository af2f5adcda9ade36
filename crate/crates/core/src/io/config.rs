//! Flat `key = value` configuration files.
//!
//! Prices are given in natural units (per MWh, per MW-month) and converted
//! to per-step coefficients once the sampling step is known. Lines starting
//! with `#` are comments.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use crate::domain::{BatterySpec, Tariff};
use crate::error::{Error, Result};
use crate::gain::BatterySizing;
use crate::lp::SolverOptions;
use crate::optimize::{BaselineMode, SolveOptions};
use crate::peaks::{PeakOptions, DEFAULT_CAPPING_FRACTION, DEFAULT_NOCP_GAP_S};
use crate::synth::RegulationModel;

pub const KEYS: &[&str] = &[
    "lambda_elec",
    "lambda_peak_monthly",
    "hours_per_month",
    "lambda_c",
    "lambda_b",
    "lambda_mis",
    "battery.p_mw",
    "battery.e_mwh",
    "battery.soc_ini",
    "battery.soc_min",
    "battery.soc_max",
    "f",
    "nocp_gap_s",
    "baseline_mode",
    "net_energy_zero",
    "capacity_cap_ratio",
    "solver.tol",
    "reg_model.sigma",
    "seed",
];

/// Parsed configuration. Every field has a default; `explicit` records
/// which keys the file actually set.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// $/MWh.
    pub lambda_elec: f64,
    /// $/MW per month, spread evenly over `hours_per_month` windows.
    pub lambda_peak_monthly: f64,
    pub hours_per_month: f64,
    /// $/MW of capacity per window.
    pub lambda_c: f64,
    /// $/MWh of throughput.
    pub lambda_b: f64,
    /// $/MWh of tracking error.
    pub lambda_mis: f64,
    pub battery_p_mw: Option<f64>,
    pub battery_e_mwh: Option<f64>,
    pub soc_ini: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub capping_fraction: f64,
    pub nocp_gap_s: f64,
    pub baseline_mode: BaselineMode,
    pub net_energy_zero: bool,
    pub capacity_cap_ratio: f64,
    pub solver_tol: f64,
    pub reg_sigma: f64,
    pub seed: u64,
    explicit: BTreeSet<&'static str>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            lambda_elec: 50.0,
            lambda_peak_monthly: 7300.0,
            hours_per_month: 730.0,
            lambda_c: 40.0,
            lambda_b: 20.0,
            lambda_mis: 150.0,
            battery_p_mw: None,
            battery_e_mwh: None,
            soc_ini: 0.5,
            soc_min: 0.2,
            soc_max: 0.9,
            capping_fraction: DEFAULT_CAPPING_FRACTION,
            nocp_gap_s: DEFAULT_NOCP_GAP_S,
            baseline_mode: BaselineMode::default(),
            net_energy_zero: true,
            capacity_cap_ratio: f64::INFINITY,
            solver_tol: SolverOptions::default().feasibility_tol,
            reg_sigma: RegulationModel::default().step_sigma,
            seed: RegulationModel::default().seed,
            explicit: BTreeSet::new(),
        }
    }
}

fn number(key: &str, v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v
        .parse()
        .map_err(|_| format!("{key}: `{v}` is not a number"))?;
    if x.is_nan() {
        return Err(format!("{key}: NaN is not allowed"));
    }
    Ok(x)
}

fn boolean(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: `{v}` is not a boolean")),
    }
}

impl Config {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| Error::Parse {
                path: name.to_string(),
                line,
                msg,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let known = KEYS
                .iter()
                .copied()
                .find(|k| *k == key)
                .ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if !cfg.explicit.insert(known) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(known, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "lambda_elec" => self.lambda_elec = number(key, v)?,
            "lambda_peak_monthly" => self.lambda_peak_monthly = number(key, v)?,
            "hours_per_month" => self.hours_per_month = number(key, v)?,
            "lambda_c" => self.lambda_c = number(key, v)?,
            "lambda_b" => self.lambda_b = number(key, v)?,
            "lambda_mis" => self.lambda_mis = number(key, v)?,
            "battery.p_mw" => self.battery_p_mw = Some(number(key, v)?),
            "battery.e_mwh" => self.battery_e_mwh = Some(number(key, v)?),
            "battery.soc_ini" => self.soc_ini = number(key, v)?,
            "battery.soc_min" => self.soc_min = number(key, v)?,
            "battery.soc_max" => self.soc_max = number(key, v)?,
            "f" => self.capping_fraction = number(key, v)?,
            "nocp_gap_s" => self.nocp_gap_s = number(key, v)?,
            "baseline_mode" => self.baseline_mode = v.parse().map_err(|e: Error| e.to_string())?,
            "net_energy_zero" => self.net_energy_zero = boolean(key, v)?,
            "capacity_cap_ratio" => self.capacity_cap_ratio = number(key, v)?,
            "solver.tol" => self.solver_tol = number(key, v)?,
            "reg_model.sigma" => self.reg_sigma = number(key, v)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| format!("seed: `{v}` is not a non-negative integer"))?
            }
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let prices = [
            ("lambda_elec", self.lambda_elec),
            ("lambda_peak_monthly", self.lambda_peak_monthly),
            ("lambda_c", self.lambda_c),
            ("lambda_b", self.lambda_b),
            ("lambda_mis", self.lambda_mis),
        ];
        for (k, v) in prices {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{k} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.hours_per_month.is_finite() && self.hours_per_month > 0.0) {
            return Err(Error::invalid("hours_per_month must be > 0"));
        }
        if !(self.capping_fraction > 0.0 && self.capping_fraction <= 1.0) {
            return Err(Error::invalid("f must lie in (0, 1]"));
        }
        if !(self.nocp_gap_s >= 0.0 && self.nocp_gap_s.is_finite()) {
            return Err(Error::invalid("nocp_gap_s must be >= 0"));
        }
        if !(self.capacity_cap_ratio >= 0.0) {
            return Err(Error::invalid("capacity_cap_ratio must be >= 0"));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1e-2) {
            return Err(Error::invalid("solver.tol must lie in (0, 0.01)"));
        }
        if !(self.reg_sigma > 0.0 && self.reg_sigma.is_finite()) {
            return Err(Error::invalid("reg_model.sigma must be > 0"));
        }
        if self.battery_e_mwh.is_some() && self.battery_p_mw.is_none() {
            return Err(Error::invalid("battery.e_mwh needs battery.p_mw"));
        }
        // Catches bad SoC settings before any trace is loaded.
        BatterySpec::new(1.0, 1.0, self.soc_ini, self.soc_min, self.soc_max)?;
        if let Some(p) = self.battery_p_mw {
            self.battery_spec(p)?;
        }
        Ok(())
    }

    fn battery_spec(&self, p: f64) -> Result<BatterySpec> {
        let e = self.battery_e_mwh.unwrap_or(p / 6.0);
        BatterySpec::new(p, e, self.soc_ini, self.soc_min, self.soc_max)
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Keys that fell back to their defaults.
    pub fn defaulted_keys(&self) -> Vec<&'static str> {
        KEYS.iter()
            .copied()
            .filter(|k| !self.is_explicit(k))
            .collect()
    }

    /// Per-step tariff for a sampling step of `step_s` seconds.
    pub fn tariff(&self, step_s: f64) -> Result<Tariff> {
        if !(step_s > 0.0 && step_s.is_finite()) {
            return Err(Error::invalid(format!("step must be > 0, got {step_s}")));
        }
        let h = step_s / 3600.0;
        let t = Tariff {
            lambda_elec: self.lambda_elec * h,
            lambda_peak: self.lambda_peak_monthly / self.hours_per_month,
            lambda_c: self.lambda_c,
            lambda_b: self.lambda_b * h,
            lambda_mis: self.lambda_mis * h,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn battery(&self) -> Result<BatterySizing> {
        match self.battery_p_mw {
            Some(p) => Ok(BatterySizing::Fixed(self.battery_spec(p)?)),
            None => Ok(BatterySizing::FromPeak {
                duration_h: 1.0 / 6.0,
                soc_ini: self.soc_ini,
                soc_min: self.soc_min,
                soc_max: self.soc_max,
            }),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            net_energy_zero: self.net_energy_zero,
            baseline_mode: self.baseline_mode,
            capacity_cap_ratio: self.capacity_cap_ratio,
            solver: SolverOptions {
                feasibility_tol: self.solver_tol,
                ..SolverOptions::default()
            },
        }
    }

    pub fn peak_options(&self) -> PeakOptions {
        PeakOptions {
            capping_fraction: self.capping_fraction,
            gap_threshold_s: self.nocp_gap_s,
            ..PeakOptions::default()
        }
    }

    pub fn regulation_model(&self) -> RegulationModel {
        RegulationModel {
            step_sigma: self.reg_sigma,
            seed: self.seed,
        }
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            lambda_elec: self.lambda_elec,
            lambda_peak_monthly: self.lambda_peak_monthly,
            hours_per_month: self.hours_per_month,
            lambda_c: self.lambda_c,
            lambda_b: self.lambda_b,
            lambda_mis: self.lambda_mis,
            battery_p_mw: self.battery_p_mw,
            battery_e_mwh: self
                .battery_p_mw
                .map(|p| self.battery_e_mwh.unwrap_or(p / 6.0)),
            battery_soc_ini: self.soc_ini,
            battery_soc_min: self.soc_min,
            battery_soc_max: self.soc_max,
            battery_sized_from_trace: self.battery_p_mw.is_none(),
            f: self.capping_fraction,
            nocp_gap_s: self.nocp_gap_s,
            baseline_mode: self.baseline_mode,
            net_energy_zero: self.net_energy_zero,
            capacity_cap_ratio: self
                .capacity_cap_ratio
                .is_finite()
                .then_some(self.capacity_cap_ratio),
            solver_tol: self.solver_tol,
            reg_model_sigma: self.reg_sigma,
            seed: self.seed,
            defaulted: self.defaulted_keys(),
        }
    }
}

/// Configuration as echoed into reports. `defaulted` lists keys that were
/// not set by the user; they are tool defaults, not measured values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub lambda_elec: f64,
    pub lambda_peak_monthly: f64,
    pub hours_per_month: f64,
    pub lambda_c: f64,
    pub lambda_b: f64,
    pub lambda_mis: f64,
    pub battery_p_mw: Option<f64>,
    pub battery_e_mwh: Option<f64>,
    pub battery_soc_ini: f64,
    pub battery_soc_min: f64,
    pub battery_soc_max: f64,
    pub battery_sized_from_trace: bool,
    pub f: f64,
    pub nocp_gap_s: f64,
    pub baseline_mode: BaselineMode,
    pub net_energy_zero: bool,
    /// `None` means uncapped.
    pub capacity_cap_ratio: Option<f64>,
    pub solver_tol: f64,
    pub reg_model_sigma: f64,
    pub seed: u64,
    pub defaulted: Vec<&'static str>,
}
