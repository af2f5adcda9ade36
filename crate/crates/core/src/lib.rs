//! Battery co-optimization for data-center peak shaving and frequency
//! regulation.
//!
//! The crate prices a data-center load window under four policies (battery
//! idle, peak shaving only, regulation only, both jointly), detects when the
//! joint saving beats the sum of the individual savings, and characterizes
//! load traces by their peaks.

pub mod billing;
pub mod domain;
pub mod error;
pub mod gain;
pub mod io;
pub mod lp;
pub mod optimize;
pub mod peaks;
pub mod synth;

pub use domain::{
    soc_trajectory, BatterySpec, BillBreakdown, DispatchSolution, GainReport, RegulationSeries,
    Tariff, TraceSeries,
};
pub use error::{Error, Result};
