//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints one PASS/FAIL line; the process fails if any check fails.

mod common;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use peakreg::gain::{
    category_experiment, run_four_scenarios, superlinear_ratio, sweep, with_workers, BatterySizing,
    ExperimentSetup,
};
use peakreg::io::report::{to_json_writer, ExperimentReport, SweepReport};
use peakreg::io::Config;
use peakreg::optimize::{
    optimize_joint, optimize_joint_with_plan, optimize_peak_shaving, optimize_regulation,
    BaselineMode, SolveOptions,
};
use peakreg::peaks::{
    area_growth, classify_shape, daily_threshold, fraction_grid, nocp_groups, segment_peaks,
    ShapeVerdict,
};
use peakreg::synth::{
    synth_regulation, synth_trace, PeakCategory, PeakHeight, PeakShape, PeakWidth, RegulationModel,
    BASE_LOAD_MW,
};
use peakreg::{BatterySpec, BillBreakdown, RegulationSeries, Tariff, TraceSeries};

use common::{joint_oracle, lipschitz, peak_oracle, random_instance, regulation_oracle, H};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fmt_err(e: peakreg::Error) -> String {
    e.to_string()
}

fn bill_identities() -> Check {
    let start = Instant::now();
    // Rows: energy, peak, battery, capacity revenue (mismatch already netted
    // into the revenue), expected total and saving.
    let rows = [
        ("original", 44.92, 28.89, 0.0, 0.0, 73.81, 0.0),
        ("regulation only", 44.92, 54.55, 25.90, 65.71, 59.66, 14.15),
        ("peak shaving", 44.92, 28.35, 0.26, 0.0, 73.53, 0.28),
        ("joint", 44.92, 42.86, 19.48, 54.80, 52.46, 21.35),
    ];
    let mut totals = Vec::new();
    for (name, e, p, b, rev, total, saving) in rows {
        let bill = BillBreakdown::from_components(e, p, b, 0.0, rev);
        ensure(
            (bill.total - total).abs() <= 0.01,
            format!("{name}: total {}", bill.total),
        )?;
        let s = rows[0].5 - bill.total;
        ensure((s - saving).abs() <= 0.01, format!("{name}: saving {s}"))?;
        totals.push(bill.total);
    }
    let q = superlinear_ratio(totals[0], totals[2], totals[1], totals[3]).map_err(fmt_err)?;
    let elapsed = start.elapsed();
    ensure((q - 0.0938).abs() <= 1e-4, format!("q = {q}"))?;
    ensure(
        elapsed < Duration::from_millis(1),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!("q = {q:.4}, {elapsed:?}"))
}

fn lp_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let per_optimizer = 50;
    let mut slowest = Duration::ZERO;
    let mut worst_gap: f64 = 0.0;
    let mut timed =
        |f: &mut dyn FnMut() -> peakreg::Result<f64>| -> std::result::Result<f64, String> {
            let t = Instant::now();
            let v = f().map_err(fmt_err)?;
            slowest = slowest.max(t.elapsed());
            Ok(v)
        };
    let modes = [
        BaselineMode::Raw,
        BaselineMode::PeakPlan,
        BaselineMode::Free,
    ];
    for i in 0..per_optimizer {
        let inst = random_instance(&mut rng);
        let trace = TraceSeries::new(inst.s.clone(), inst.dt * 3600.0, 0).map_err(fmt_err)?;
        let r = RegulationSeries::new(inst.r.clone(), inst.dt * 3600.0).map_err(fmt_err)?;
        let mode = modes[i % modes.len()];
        let opts = SolveOptions {
            net_energy_zero: inst.net_zero,
            baseline_mode: mode,
            capacity_cap_ratio: inst.cap / inst.battery.power_mw,
            ..SolveOptions::default()
        };
        let bat = inst.battery;
        let tar = inst.tariff;

        let peak = optimize_peak_shaving(&trace, &bat, &tar, &opts).map_err(fmt_err)?;
        let lp = timed(&mut || {
            optimize_peak_shaving(&trace, &bat, &tar, &opts).map(|o| o.lp_objective)
        })?;
        let oracle = peak_oracle(&inst);
        let bound = lipschitz(&inst, true, false) * H + 1e-7;
        ensure(
            lp <= oracle + 1e-7 && oracle - lp <= bound,
            format!("peak instance {i}: lp {lp} oracle {oracle} bound {bound}"),
        )?;
        worst_gap = worst_gap.max((oracle - lp) / bound);

        let lp = timed(&mut || optimize_regulation(&r, &bat, &tar, &opts).map(|o| o.lp_objective))?;
        let oracle = regulation_oracle(&inst);
        let bound = lipschitz(&inst, false, true) * H + 1e-7;
        ensure(
            lp <= oracle + 1e-7 && oracle - lp <= bound,
            format!("regulation instance {i}: lp {lp} oracle {oracle} bound {bound}"),
        )?;
        worst_gap = worst_gap.max((oracle - lp) / bound);

        let plan = (mode == BaselineMode::PeakPlan).then_some(peak.dispatch.b.as_slice());
        let lp = timed(&mut || {
            optimize_joint_with_plan(&trace, &r, &bat, &tar, &opts, plan).map(|o| o.lp_objective)
        })?;
        let oracle = joint_oracle(&inst, mode, plan);
        let bound = lipschitz(&inst, true, true) * H + 1e-7;
        ensure(
            lp <= oracle + 1e-7 && oracle - lp <= bound,
            format!("joint ({mode}) instance {i}: lp {lp} oracle {oracle} bound {bound}"),
        )?;
        worst_gap = worst_gap.max((oracle - lp) / bound);
    }
    ensure(
        slowest < Duration::from_millis(50),
        format!("slowest solve {slowest:?}"),
    )?;
    Ok(format!(
        "{per_optimizer} instances per optimizer, worst gap {:.0}% of bound, slowest solve {slowest:?}",
        worst_gap * 100.0
    ))
}

fn derived_instances() -> Check {
    let hourly = |v: &[f64]| TraceSeries::new(v.to_vec(), 3600.0, 0).unwrap();
    let reg = |v: &[f64]| RegulationSeries::new(v.to_vec(), 3600.0).unwrap();
    let tariff = Tariff {
        lambda_elec: 1.0,
        lambda_peak: 10.0,
        lambda_c: 10.0,
        lambda_b: 0.1,
        lambda_mis: 6.0,
    };
    let big = BatterySpec::new(1.0, 10.0, 0.5, 0.0, 1.0).unwrap();
    let small = BatterySpec::new(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    let opts = |net_energy_zero: bool| SolveOptions {
        net_energy_zero,
        baseline_mode: BaselineMode::Raw,
        ..SolveOptions::default()
    };
    let s3 = hourly(&[1.0, 2.0, 1.0]);
    let got = [
        (
            "peak net-zero",
            optimize_peak_shaving(&s3, &big, &tariff, &opts(true))
                .map_err(fmt_err)?
                .bill
                .total,
            17.466_666_666_666_667,
        ),
        (
            "peak free terminal",
            optimize_peak_shaving(&s3, &big, &tariff, &opts(false))
                .map_err(fmt_err)?
                .bill
                .total,
            11.3,
        ),
        (
            "regulation follow",
            optimize_regulation(&reg(&[1.0, -1.0]), &big, &tariff, &opts(true))
                .map_err(fmt_err)?
                .revenue,
            9.8,
        ),
        (
            "regulation soc-limited",
            optimize_regulation(&reg(&[1.0, 1.0]), &small, &tariff, &opts(false))
                .map_err(fmt_err)?
                .revenue,
            2.45,
        ),
        (
            "joint raw",
            optimize_joint(
                &hourly(&[1.0, 2.0]),
                &reg(&[1.0, -1.0]),
                &big,
                &tariff,
                &opts(false),
            )
            .map_err(fmt_err)?
            .bill
            .total,
            13.2,
        ),
    ];
    for (name, v, want) in got {
        ensure((v - want).abs() <= 1e-6, format!("{name}: {v} vs {want}"))?;
    }
    Ok("5 instances within 1e-6".into())
}

fn mixed_categories() -> Vec<PeakCategory> {
    let mut cats = PeakCategory::all_single();
    let small = PeakCategory::single(PeakShape::Triangular, PeakWidth::Narrow, PeakHeight::Low);
    cats.push(small.repeated(2, 120.0));
    cats.push(small.repeated(3, 120.0));
    cats
}

fn dominance() -> Check {
    let start = Instant::now();
    let cfg = Config::default();
    let step_s = 20.0;
    let steps = 180;
    let tariff = cfg.tariff(step_s).map_err(fmt_err)?;
    let cats = mixed_categories();
    let model = RegulationModel {
        seed: 7,
        ..cfg.regulation_model()
    };
    let hours = 200;
    let tol = 1e-6;
    let mut worst: f64 = f64::NEG_INFINITY;
    for h in 0..hours {
        let cat = &cats[h % cats.len()];
        let trace = synth_trace(cat, steps, step_s, Some(10 + (h * 7) % 60)).map_err(fmt_err)?;
        let r = synth_regulation(&model.for_trial(h as u64), steps, step_s).map_err(fmt_err)?;
        let battery = cfg
            .battery()
            .map_err(fmt_err)?
            .resolve(&trace)
            .map_err(fmt_err)?;
        let mode = [
            BaselineMode::Raw,
            BaselineMode::PeakPlan,
            BaselineMode::Free,
        ][h % 3];
        let opts = SolveOptions {
            baseline_mode: mode,
            // Free baselines make the capacity payment unbounded on some
            // signals; cap the bid at the battery rating there.
            capacity_cap_ratio: if mode == BaselineMode::Free {
                1.0
            } else {
                f64::INFINITY
            },
            ..cfg.solve_options()
        };
        let ev = run_four_scenarios(&trace, &r, &battery, &tariff, &opts).map_err(fmt_err)?;
        let g = ev.report;
        let mut gaps = vec![
            ("J_p <= J", g.peak_only - g.baseline),
            ("J* <= J", g.joint - g.baseline),
        ];
        match mode {
            BaselineMode::Raw => gaps.push(("J* <= J_r", g.joint - g.regulation_only)),
            BaselineMode::PeakPlan => gaps.push(("J* <= J_p", g.joint - g.peak_only)),
            BaselineMode::Free => {
                gaps.push(("J* <= J_p", g.joint - g.peak_only));
                gaps.push(("J* <= J_r", g.joint - g.regulation_only));
            }
        }
        for (name, gap) in gaps {
            worst = worst.max(gap);
            ensure(
                gap <= tol,
                format!("hour {h} ({cat}, {mode}): {name} violated by {gap}"),
            )?;
        }
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(600),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "{hours} hours, largest slack {worst:.2e}, {elapsed:.1?}"
    ))
}

fn category_trends() -> Check {
    let cfg = Config::default();
    let step_s = 20.0;
    let setup = ExperimentSetup {
        steps: 180,
        step_s,
        regulation: cfg.regulation_model(),
        battery: cfg.battery().map_err(fmt_err)?,
        tariff: cfg.tariff(step_s).map_err(fmt_err)?,
        opts: cfg.solve_options(),
    };
    let trials = 100;
    let p = |name: &str| -> std::result::Result<f64, String> {
        let cat: PeakCategory = name.parse().map_err(fmt_err)?;
        Ok(category_experiment(&cat, trials, &setup)
            .map_err(fmt_err)?
            .probability)
    };
    let small = PeakCategory::single(PeakShape::Triangular, PeakWidth::Narrow, PeakHeight::Low);
    let chain = |n: usize| -> std::result::Result<f64, String> {
        Ok(
            category_experiment(&small.repeated(n, 120.0), trials, &setup)
                .map_err(fmt_err)?
                .probability,
        )
    };
    let (rwl, rnh) = (p("rect.wide.low")?, p("rect.narrow.high")?);
    let (twl, tnh) = (p("tri.wide.low")?, p("tri.narrow.high")?);
    let (c1, c2, c3) = (chain(1)?, chain(2)?, chain(3)?);
    let summary = format!(
        "rect wide-low {rwl:.2} vs narrow-high {rnh:.2}; tri wide-low {twl:.2} vs narrow-high {tnh:.2}; small triangles 1/2/3: {c1:.2}/{c2:.2}/{c3:.2}"
    );
    ensure(
        rwl > rnh && twl > tnh && c1 <= c2 && c2 <= c3,
        summary.clone(),
    )?;
    Ok(summary)
}

fn peak_exactness() -> Check {
    let step_s = 20.0;
    for cat in PeakCategory::all_single() {
        let trace = synth_trace(&cat, 180, step_s, None).map_err(fmt_err)?;
        let apex = cat.height.apex_mw();
        let d = apex - BASE_LOAD_MW;
        // Rectangles keep their full support at the default fraction;
        // triangles only do so when everything above the base counts.
        let f = match cat.shape {
            PeakShape::Rectangular => 0.2,
            PeakShape::Triangular => 1.0,
        };
        let prof = daily_threshold(trace.samples(), f).map_err(fmt_err)?;
        let peaks = segment_peaks(trace.samples(), &prof, step_s);
        ensure(peaks.len() == 1, format!("{cat}: {} peaks", peaks.len()))?;
        let pk = &peaks[0];
        ensure(
            pk.width_s == cat.declared_width_s(step_s),
            format!(
                "{cat}: width {} vs {}",
                pk.width_s,
                cat.declared_width_s(step_s)
            ),
        )?;
        let want_ph = (apex - prof.threshold) / d;
        ensure(
            (pk.height - want_ph).abs() < 1e-12,
            format!("{cat}: PH {}", pk.height),
        )?;
        ensure(
            (pk.height - f).abs() < 1e-9,
            format!("{cat}: PH {} vs f {f}", pk.height),
        )?;

        let grid = fraction_grid(20, 1.0);
        let areas = area_growth(trace.samples(), &grid, step_s).map_err(fmt_err)?;
        let verdict = classify_shape(&areas, &grid).map_err(fmt_err)?;
        let want = match cat.shape {
            PeakShape::Rectangular => ShapeVerdict::Rectangular,
            PeakShape::Triangular => ShapeVerdict::Triangular,
        };
        ensure(verdict == want, format!("{cat}: shape {verdict:?}"))?;
    }
    for shape in [PeakShape::Rectangular, PeakShape::Triangular] {
        let cat =
            PeakCategory::single(shape, PeakWidth::Narrow, PeakHeight::Low).repeated(3, 120.0);
        let trace = synth_trace(&cat, 180, step_s, None).map_err(fmt_err)?;
        let f = if shape == PeakShape::Rectangular {
            0.2
        } else {
            1.0
        };
        let prof = daily_threshold(trace.samples(), f).map_err(fmt_err)?;
        let peaks = segment_peaks(trace.samples(), &prof, step_s);
        let groups = nocp_groups(&peaks, 120.0, step_s);
        ensure(groups == vec![3], format!("{cat}: groups {groups:?}"))?;
    }
    let prof = daily_threshold(&[1.0, 1.5, 2.0, 1.2], 0.2).map_err(fmt_err)?;
    ensure(prof.threshold == 1.8, format!("C_f = {}", prof.threshold))?;
    Ok("8 categories, NOCP [3], C_f = 1.8".into())
}

fn sweep_json(
    trace: &TraceSeries,
    r: &RegulationSeries,
    cfg: &Config,
    workers: usize,
) -> Result<Vec<u8>, String> {
    let tariff = cfg.tariff(trace.step_s()).map_err(fmt_err)?;
    let sizing = cfg.battery().map_err(fmt_err)?;
    let opts = cfg.solve_options();
    let res = with_workers(Some(workers), || {
        sweep(trace, r, 180, &sizing, &tariff, &opts)
    })
    .and_then(|r| r)
    .map_err(fmt_err)?;
    let echo = cfg.echo();
    let mut buf = Vec::new();
    to_json_writer(
        &mut buf,
        &SweepReport {
            config_echo: &echo,
            per_window: &res.windows,
            summary: (&res.summary).into(),
        },
    )
    .map_err(fmt_err)?;
    Ok(buf)
}

fn experiment_json(cfg: &Config, trials: usize, workers: usize) -> Result<Vec<u8>, String> {
    let step_s = 20.0;
    let setup = ExperimentSetup {
        steps: 180,
        step_s,
        regulation: cfg.regulation_model(),
        battery: cfg.battery().map_err(fmt_err)?,
        tariff: cfg.tariff(step_s).map_err(fmt_err)?,
        opts: cfg.solve_options(),
    };
    let results = with_workers(Some(workers), || {
        mixed_categories()
            .iter()
            .map(|c| category_experiment(c, trials, &setup))
            .collect::<peakreg::Result<Vec<_>>>()
    })
    .and_then(|r| r)
    .map_err(fmt_err)?;
    let echo = cfg.echo();
    let mut buf = Vec::new();
    to_json_writer(
        &mut buf,
        &ExperimentReport {
            config_echo: &echo,
            steps: 180,
            step_s,
            categories: &results,
        },
    )
    .map_err(fmt_err)?;
    Ok(buf)
}

fn hours_of_load(hours: usize) -> Result<(TraceSeries, RegulationSeries), String> {
    let cats = mixed_categories();
    let mut load = Vec::new();
    for h in 0..hours {
        let t = synth_trace(&cats[h % cats.len()], 180, 20.0, Some(5 + 11 * h % 90))
            .map_err(fmt_err)?;
        load.extend_from_slice(t.samples());
    }
    let trace = TraceSeries::new(load, 20.0, 1_700_000_000).map_err(fmt_err)?;
    let r = synth_regulation(&RegulationModel::default(), 180 * hours, 20.0).map_err(fmt_err)?;
    Ok((trace, r))
}

fn determinism() -> Check {
    let cfg = Config::default();
    let (trace, r) = hours_of_load(3)?;
    let a = sweep_json(&trace, &r, &cfg, 1)?;
    let b = sweep_json(&trace, &r, &cfg, 1)?;
    let c = sweep_json(&trace, &r, &cfg, 4)?;
    ensure(a == b, "sweep JSON differs between runs")?;
    ensure(a == c, "sweep JSON differs between 1 and 4 workers")?;
    let a = experiment_json(&cfg, 3, 1)?;
    let b = experiment_json(&cfg, 3, 1)?;
    let c = experiment_json(&cfg, 3, 4)?;
    ensure(a == b, "experiment JSON differs between runs")?;
    ensure(a == c, "experiment JSON differs between 1 and 4 workers")?;
    Ok("sweep and experiment reports byte-identical across runs and 1/4 workers".into())
}

fn performance() -> Check {
    let cfg = Config::default();
    let tariff = cfg.tariff(20.0).map_err(fmt_err)?;
    let trace = synth_trace(&"tri.wide.high".parse().map_err(fmt_err)?, 180, 20.0, None)
        .map_err(fmt_err)?;
    let r = synth_regulation(&RegulationModel::default(), 180, 20.0).map_err(fmt_err)?;
    let battery = cfg
        .battery()
        .map_err(fmt_err)?
        .resolve(&trace)
        .map_err(fmt_err)?;
    let opts = SolveOptions {
        baseline_mode: BaselineMode::Raw,
        ..cfg.solve_options()
    };
    let t = Instant::now();
    optimize_joint(&trace, &r, &battery, &tariff, &opts).map_err(fmt_err)?;
    let single = t.elapsed();
    ensure(
        single < Duration::from_secs(2),
        format!("joint LP took {single:?}"),
    )?;

    let (trace, r) = hours_of_load(24)?;
    let t = Instant::now();
    let res = sweep(
        &trace,
        &r,
        180,
        &BatterySizing::default(),
        &tariff,
        &cfg.solve_options(),
    )
    .map_err(fmt_err)?;
    let day = t.elapsed();
    ensure(
        res.windows.len() == 24,
        format!("{} windows", res.windows.len()),
    )?;
    ensure(
        day < Duration::from_secs(180),
        format!("24-hour sweep took {day:?}"),
    )?;
    Ok(format!("joint LP {single:.2?}, 24-hour sweep {day:.1?}"))
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("1 bill identities", bill_identities),
        ("2 LP vs grid oracle", lp_oracle_equivalence),
        ("3 derived instances", derived_instances),
        ("4 dominance", dominance),
        ("5 category trends", category_trends),
        ("6 peak abstraction", peak_exactness),
        ("7 determinism", determinism),
        ("8 performance", performance),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("acceptance {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("acceptance {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
