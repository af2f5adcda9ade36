//! Brute-force reference solutions for tiny dispatch problems.
//!
//! Dispatch values are enumerated on a lattice of step `h`, the capacity
//! bid on `[0, cap]` with the same step. When the battery limits are lattice
//! aligned the feasible dispatch set is an interval-matrix polytope, so some
//! lattice point lies within `h` of the LP optimum in every coordinate and
//! the oracle can exceed the LP value by at most `lipschitz * h`.

#![allow(dead_code)]

use peakreg::optimize::BaselineMode;
use peakreg::{BatterySpec, Tariff};

pub const H: f64 = 0.05;

pub struct Instance {
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub dt: f64,
    pub battery: BatterySpec,
    pub tariff: Tariff,
    pub net_zero: bool,
    pub cap: f64,
}

/// Calls `f` for every lattice dispatch that respects the battery.
fn for_each_dispatch(inst: &Instance, mut f: impl FnMut(&[f64])) {
    let b = &inst.battery;
    let n = (b.power_mw / H).round() as i64;
    let lo = b.soc_min * b.energy_mwh - 1e-9;
    let hi = b.soc_max * b.energy_mwh + 1e-9;
    let start = b.soc_ini * b.energy_mwh;
    let t_len = inst.s.len();
    let mut cur = vec![0.0; t_len];

    fn rec(
        t: usize,
        energy: f64,
        cur: &mut Vec<f64>,
        ctx: (i64, f64, f64, f64, f64, bool),
        f: &mut dyn FnMut(&[f64]),
    ) {
        let (n, lo, hi, start, dt, net_zero) = ctx;
        if t == cur.len() {
            if !net_zero || (energy - start).abs() < 1e-9 {
                f(cur);
            }
            return;
        }
        for k in -n..=n {
            let v = k as f64 * H;
            let e = energy - v * dt;
            if e < lo || e > hi {
                continue;
            }
            cur[t] = v;
            rec(t + 1, e, cur, ctx, f);
        }
    }
    rec(
        0,
        start,
        &mut cur,
        (n, lo, hi, start, inst.dt, inst.net_zero),
        &mut f,
    );
}

fn capacities(cap: f64) -> Vec<f64> {
    let n = (cap / H).round() as i64;
    (0..=n).map(|k| k as f64 * H).collect()
}

fn bill(inst: &Instance, b: &[f64]) -> f64 {
    let t = &inst.tariff;
    let grid: Vec<f64> = inst.s.iter().zip(b).map(|(s, b)| s - b).collect();
    let max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    t.lambda_elec * grid.iter().sum::<f64>()
        + t.lambda_peak * max
        + t.lambda_b * b.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn peak_oracle(inst: &Instance) -> f64 {
    let mut best = f64::INFINITY;
    for_each_dispatch(inst, |b| best = best.min(bill(inst, b)));
    best
}

/// Minimum of the negated net regulation revenue.
pub fn regulation_oracle(inst: &Instance) -> f64 {
    let t = &inst.tariff;
    let caps = capacities(inst.cap);
    let mut best = f64::INFINITY;
    for_each_dispatch(inst, |b| {
        let wear = t.lambda_b * b.iter().map(|v| v.abs()).sum::<f64>();
        for &c in &caps {
            let mis: f64 = b.iter().zip(&inst.r).map(|(b, r)| (b - c * r).abs()).sum();
            best = best.min(-(t.lambda_c * c - t.lambda_mis * mis - wear));
        }
    });
    best
}

/// Joint bill. `plan` is the committed dispatch for `peak_plan` mode.
pub fn joint_oracle(inst: &Instance, mode: BaselineMode, plan: Option<&[f64]>) -> f64 {
    let t = &inst.tariff;
    let caps = capacities(inst.cap);
    let mut best = f64::INFINITY;
    for_each_dispatch(inst, |b| {
        let base = bill(inst, b);
        for &c in &caps {
            let mut mis = 0.0;
            for i in 0..b.len() {
                let (s, r) = (inst.s[i], inst.r[i]);
                mis += match mode {
                    BaselineMode::Raw => (b[i] - c * r).abs(),
                    BaselineMode::PeakPlan => {
                        let y = s - plan.expect("plan")[i];
                        (-s + b[i] + y - c * r).abs()
                    }
                    // The best y >= 0 zeroes the mismatch unless it would go negative.
                    BaselineMode::Free => (-(s - b[i] + c * r)).max(0.0),
                };
            }
            best = best.min(base + t.lambda_mis * mis - t.lambda_c * c);
        }
    });
    best
}

/// Largest objective change per unit of sup-norm movement in `(b, C)`.
pub fn lipschitz(inst: &Instance, with_bill: bool, with_regulation: bool) -> f64 {
    let t = &inst.tariff;
    let n = inst.s.len() as f64;
    let mut l = t.lambda_b * n;
    if with_bill {
        l += t.lambda_elec * n + t.lambda_peak;
    }
    if with_regulation {
        let sum_r: f64 = inst.r.iter().map(|v| v.abs()).sum();
        l += t.lambda_mis * n + t.lambda_c + t.lambda_mis * sum_r;
    }
    l
}

/// Small lattice-aligned instance drawn from a seeded generator.
pub fn random_instance(rng: &mut impl rand::Rng) -> Instance {
    let t_len = rng.random_range(1..=3);
    let dt = [1.0, 0.5][rng.random_range(0..2)];
    let power = [0.25, 0.5, 0.75][rng.random_range(0..3)];
    let energy = [1.0, 2.0][rng.random_range(0..2)];
    let soc_min = rng.random_range(0..=4) as f64 * 0.05;
    let soc_max = 1.0 - rng.random_range(0..=4) as f64 * 0.05;
    let soc_ini =
        soc_min + rng.random_range(0..=((soc_max - soc_min) / 0.05).round() as i64) as f64 * 0.05;
    let soc_ini = soc_ini.min(soc_max);
    let battery = BatterySpec::new(power, energy, soc_ini, soc_min, soc_max).unwrap();
    let tariff = Tariff {
        lambda_elec: rng.random_range(0.0..2.0),
        lambda_peak: rng.random_range(0.0..10.0),
        lambda_c: rng.random_range(0.0..10.0),
        lambda_b: rng.random_range(0.0..1.0),
        lambda_mis: rng.random_range(0.0..5.0),
    };
    Instance {
        s: (0..t_len).map(|_| rng.random_range(0.5..3.0)).collect(),
        r: (0..t_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        dt,
        battery,
        tariff,
        net_zero: rng.random_bool(0.5),
        cap: power,
    }
}
