//! Synthetic load windows with controlled peaks, and a seeded stand-in for
//! a fast regulation signal.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{RegulationSeries, TraceSeries};
use crate::error::{Error, Result};

/// Base load of every synthetic window, MW.
pub const BASE_LOAD_MW: f64 = 1.0;
pub const NARROW_DURATION_S: f64 = 120.0;
pub const WIDE_DURATION_S: f64 = 600.0;
pub const LOW_APEX_MW: f64 = 1.33;
pub const HIGH_APEX_MW: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakShape {
    Rectangular,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakWidth {
    Narrow,
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakHeight {
    Low,
    High,
}

impl PeakWidth {
    pub fn duration_s(self) -> f64 {
        match self {
            PeakWidth::Narrow => NARROW_DURATION_S,
            PeakWidth::Wide => WIDE_DURATION_S,
        }
    }
}

impl PeakHeight {
    pub fn apex_mw(self) -> f64 {
        match self {
            PeakHeight::Low => LOW_APEX_MW,
            PeakHeight::High => HIGH_APEX_MW,
        }
    }
}

/// One of the eight single-peak shapes, optionally repeated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCategory {
    pub shape: PeakShape,
    pub width: PeakWidth,
    pub height: PeakHeight,
    pub count: usize,
    /// Valley length between consecutive peaks, seconds.
    pub gap_s: f64,
}

impl PeakCategory {
    pub fn single(shape: PeakShape, width: PeakWidth, height: PeakHeight) -> Self {
        Self {
            shape,
            width,
            height,
            count: 1,
            gap_s: 0.0,
        }
    }

    pub fn repeated(mut self, count: usize, gap_s: f64) -> Self {
        self.count = count;
        self.gap_s = gap_s;
        self
    }

    /// All eight single-peak categories in a fixed order.
    pub fn all_single() -> Vec<Self> {
        let mut out = Vec::with_capacity(8);
        for shape in [PeakShape::Rectangular, PeakShape::Triangular] {
            for width in [PeakWidth::Narrow, PeakWidth::Wide] {
                for height in [PeakHeight::Low, PeakHeight::High] {
                    out.push(Self::single(shape, width, height));
                }
            }
        }
        out
    }

    pub fn validate(&self, step_s: f64) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("peak count must be >= 1"));
        }
        if self.count > 1 && !(self.gap_s >= step_s) {
            return Err(Error::invalid(format!(
                "gap {} s must be at least one step ({step_s} s) between peaks",
                self.gap_s
            )));
        }
        Ok(())
    }

    /// Samples covered by one peak. Triangles use an odd count so the apex
    /// lands on the central sample.
    pub fn samples_per_peak(&self, step_s: f64) -> usize {
        let raw = self.width.duration_s() / step_s;
        match self.shape {
            PeakShape::Rectangular => (raw.round() as usize).max(1),
            PeakShape::Triangular => {
                let n = (raw - 1e-9).ceil().max(1.0) as usize;
                if n % 2 == 0 {
                    n + 1
                } else {
                    n
                }
            }
        }
    }

    /// Width of one generated peak, seconds.
    pub fn declared_width_s(&self, step_s: f64) -> f64 {
        self.samples_per_peak(step_s) as f64 * step_s
    }

    pub fn gap_samples(&self, step_s: f64) -> usize {
        if self.count > 1 {
            (self.gap_s / step_s).round() as usize
        } else {
            0
        }
    }

    /// Samples spanned from the first peak's start to the last peak's end.
    pub fn span_samples(&self, step_s: f64) -> usize {
        self.count * self.samples_per_peak(step_s) + (self.count - 1) * self.gap_samples(step_s)
    }

    fn profile(&self, step_s: f64) -> Vec<f64> {
        let n = self.samples_per_peak(step_s);
        let apex = self.height.apex_mw();
        match self.shape {
            PeakShape::Rectangular => vec![apex; n],
            PeakShape::Triangular => (0..n)
                .map(|k| {
                    let mid = (k as f64 + 0.5) / n as f64;
                    let frac = 1.0 - (2.0 * mid - 1.0).abs();
                    BASE_LOAD_MW + (apex - BASE_LOAD_MW) * frac
                })
                .collect(),
        }
    }
}

impl fmt::Display for PeakCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match self.shape {
            PeakShape::Rectangular => "rect",
            PeakShape::Triangular => "tri",
        };
        let width = match self.width {
            PeakWidth::Narrow => "narrow",
            PeakWidth::Wide => "wide",
        };
        let height = match self.height {
            PeakHeight::Low => "low",
            PeakHeight::High => "high",
        };
        write!(f, "{shape}.{width}.{height}")?;
        if self.count > 1 {
            write!(f, "x{}@{}s", self.count, self.gap_s)?;
        }
        Ok(())
    }
}

impl FromStr for PeakCategory {
    type Err = Error;

    /// Parses `shape.width.height`, e.g. `rect.narrow.low` or `tri.wide.high`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('.').collect();
        let bad = || {
            Error::invalid(format!(
                "invalid category {s:?}: expected rect|tri.narrow|wide.low|high"
            ))
        };
        let [shape, width, height] = parts[..] else {
            return Err(bad());
        };
        let shape = match shape {
            "rect" | "rectangular" => PeakShape::Rectangular,
            "tri" | "triangular" => PeakShape::Triangular,
            _ => return Err(bad()),
        };
        let width = match width {
            "narrow" => PeakWidth::Narrow,
            "wide" => PeakWidth::Wide,
            _ => return Err(bad()),
        };
        let height = match height {
            "low" => PeakHeight::Low,
            "high" => PeakHeight::High,
            _ => return Err(bad()),
        };
        Ok(Self::single(shape, width, height))
    }
}

/// Builds a window of `steps` samples on the base load with the category's
/// peaks. `start` is the index of the first peak sample; `None` centers the
/// peak group in the window.
pub fn synth_trace(
    category: &PeakCategory,
    steps: usize,
    step_s: f64,
    start: Option<usize>,
) -> Result<TraceSeries> {
    if !(step_s > 0.0) {
        return Err(Error::invalid("step length must be > 0"));
    }
    category.validate(step_s)?;
    let span = category.span_samples(step_s);
    if span > steps {
        return Err(Error::invalid(format!(
            "peaks need {span} samples but the window has {steps}"
        )));
    }
    let start = start.unwrap_or((steps - span) / 2);
    if start + span > steps {
        return Err(Error::invalid(format!(
            "peaks starting at {start} overflow the {steps}-sample window"
        )));
    }
    let mut samples = vec![BASE_LOAD_MW; steps];
    let profile = category.profile(step_s);
    let stride = profile.len() + category.gap_samples(step_s);
    for k in 0..category.count {
        let at = start + k * stride;
        samples[at..at + profile.len()].copy_from_slice(&profile);
    }
    TraceSeries::new(samples, step_s, 0)
}

/// Clipped Gaussian random walk on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegulationModel {
    /// Standard deviation of one step's increment.
    pub step_sigma: f64,
    pub seed: u64,
}

impl Default for RegulationModel {
    fn default() -> Self {
        Self {
            step_sigma: 0.3,
            seed: 42,
        }
    }
}

impl RegulationModel {
    /// Independent model for trial `index`, derived from this model's seed.
    pub fn for_trial(&self, index: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, index),
            ..*self
        }
    }
}

/// SplitMix64 mix of a master seed and an index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `steps` samples starting from zero.
pub fn synth_regulation(
    model: &RegulationModel,
    steps: usize,
    step_s: f64,
) -> Result<RegulationSeries> {
    if !(model.step_sigma > 0.0 && model.step_sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "regulation step sigma must be > 0, got {}",
            model.step_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut r = 0.0f64;
    let mut samples = Vec::with_capacity(steps);
    for t in 0..steps {
        if t > 0 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            r = (r + model.step_sigma * eps).clamp(-1.0, 1.0);
        }
        samples.push(r);
    }
    RegulationSeries::new(samples, step_s)
}
