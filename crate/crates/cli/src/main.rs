use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use peakreg::billing::{baseline_bill, bill_breakdown};
use peakreg::gain::{category_experiment, sweep, with_workers, ExperimentSetup};
use peakreg::io::report::{to_json_writer, ExperimentReport, PeakReport};
use peakreg::io::{self, Config};
use peakreg::optimize::{
    build_joint_lp, build_peak_shaving_lp, build_regulation_lp, optimize_joint_with_plan,
    optimize_peak_shaving, optimize_regulation, regulation_bill_breakdown, BaselineMode,
};
use peakreg::peaks::peak_statistics;
use peakreg::synth::{
    synth_regulation, synth_trace, PeakCategory, PeakHeight, PeakShape, PeakWidth, RegulationModel,
};
use peakreg::{DispatchSolution, RegulationSeries, TraceSeries};

/// Battery co-optimization for demand-charge reduction and frequency regulation.
#[derive(Parser)]
#[command(name = "peakreg", version)]
struct Cli {
    /// Worker threads for sweeps and experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Baseline bill of a trace, hour by hour.
    Bill {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimizes one horizon covering the whole trace.
    Optimize {
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        reg: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Writes the LP in plain text for cross-checking with another solver.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Four-scenario comparison for every whole hour of a trace.
    Sweep {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        reg: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peak height, width, gap and contiguity statistics.
    AnalyzePeaks {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic traces and regulation signals.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Batch experiments on synthetic data.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Divide the trace by its maximum before use.
    #[arg(long)]
    normalize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Peak,
    Regulation,
    Joint,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// One hour-aligned load trace with peaks of a given category.
    Trace {
        /// `rect|tri` . `narrow|wide` . `low|high`, e.g. `tri.narrow.low`.
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Spacing between consecutive peaks, seconds.
        #[arg(long, default_value_t = 120.0)]
        gap: f64,
        #[arg(long, default_value_t = 1)]
        hours: usize,
        #[arg(long, default_value_t = 20.0)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        start: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clipped random-walk regulation signal.
    Reg {
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        hours: usize,
        #[arg(long, default_value_t = 20.0)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        start: i64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Superlinear-gain frequency for each synthetic peak category.
    Categories {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn load_trace(args: &TraceArgs) -> Result<TraceSeries> {
    let t = io::load_trace_csv(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    if !args.normalize {
        return Ok(t);
    }
    let peak = t.peak();
    if !(peak > 0.0) {
        bail!(peakreg::Error::InvalidInput(
            "cannot normalize an all-zero trace".into()
        ));
    }
    let scaled = t.samples().iter().map(|v| v / peak).collect();
    Ok(TraceSeries::new(scaled, t.step_s(), t.start_time())?)
}

/// Loads a regulation signal on the trace's time grid, truncating both to
/// the shorter length.
fn load_aligned(trace: TraceSeries, path: &Path) -> Result<(TraceSeries, RegulationSeries)> {
    let mut r =
        io::load_regulation_csv(path).with_context(|| format!("reading {}", path.display()))?;
    if r.step_s() != trace.step_s() {
        r = io::resample_regulation(&r, trace.step_s())
            .with_context(|| format!("resampling {}", path.display()))?;
    }
    let n = trace.len().min(r.len());
    if n == 0 {
        bail!(peakreg::Error::InvalidInput(
            "regulation signal is shorter than one trace step".into()
        ));
    }
    if n != trace.len() || n != r.len() {
        warn(format!(
            "trace has {} samples and regulation {}; using the first {n}",
            trace.len(),
            r.len()
        ));
    }
    Ok((trace.slice(0, n)?, r.slice(0, n)?))
}

fn emit_json<T: serde::Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value).with_context(|| format!("writing {}", p.display())),
        None => Ok(to_json_writer(std::io::stdout().lock(), value)?),
    }
}

fn note_defaults(cfg: &Config) {
    if cfg.battery_p_mw.is_none() {
        warn("battery not configured; sizing it from the trace peak (P = max load, E = P/6 MWh)");
    }
}

fn dispatch_json(d: &DispatchSolution) -> serde_json::Value {
    json!({ "b": d.b, "capacity": d.capacity, "baseline": d.baseline, "soc": d.soc })
}

fn cmd_bill(trace: &TraceArgs, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let trace = load_trace(trace)?;
    let tariff = cfg.tariff(trace.step_s())?;
    let hw = io::window_hours(&trace)?;
    if let Some(w) = hw.warning() {
        warn(w);
    }
    let windows = if hw.windows.is_empty() {
        warn("trace is shorter than one hour; billing it as a single window");
        vec![trace.clone()]
    } else {
        hw.windows
    };
    let mut rows = Vec::new();
    let mut total = 0.0;
    for (i, w) in windows.iter().enumerate() {
        let bill = baseline_bill(w, &tariff)?;
        total += bill;
        println!("window {i}: peak {:.2} MW, bill {:.2}", w.peak(), bill);
        rows.push(
            json!({ "index": i, "start_time": w.start_time(), "peak_mw": w.peak(), "bill": bill }),
        );
    }
    println!("total: {total:.2}");
    if let Some(p) = out {
        emit_json(
            Some(p),
            &json!({ "config_echo": cfg.echo(), "windows": rows, "total": total }),
        )?;
    }
    Ok(())
}

struct OptimizeArgs<'a> {
    mode: Mode,
    trace: &'a TraceArgs,
    reg: Option<&'a Path>,
    config: Option<&'a Path>,
    out: Option<&'a Path>,
    dump_lp: Option<&'a Path>,
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let cfg = load_config(a.config)?;
    note_defaults(&cfg);
    let trace = load_trace(a.trace)?;
    let (trace, reg) = match (a.mode, a.reg) {
        (Mode::Peak, None) => (trace, None),
        (Mode::Peak, Some(_)) => {
            warn("--reg is ignored in peak mode");
            (trace, None)
        }
        (_, Some(p)) => {
            let (t, r) = load_aligned(trace, p)?;
            (t, Some(r))
        }
        (_, None) => bail!(peakreg::Error::InvalidInput(
            "--reg is required for regulation and joint modes".into()
        )),
    };
    let tariff = cfg.tariff(trace.step_s())?;
    let battery = cfg.battery()?.resolve(&trace)?;
    let opts = cfg.solve_options();

    let report = match a.mode {
        Mode::Peak => {
            if let Some(p) = a.dump_lp {
                dump(
                    p,
                    &build_peak_shaving_lp(&trace, &battery, &tariff, &opts)?.lp,
                )?;
            }
            let res = optimize_peak_shaving(&trace, &battery, &tariff, &opts)?;
            println!("peak shaving bill: {:.2}", res.bill.total);
            println!("baseline bill: {:.2}", baseline_bill(&trace, &tariff)?);
            json!({ "bill": res.bill, "lp_objective": res.lp_objective, "dispatch": dispatch_json(&res.dispatch) })
        }
        Mode::Regulation => {
            let r = reg.as_ref().expect("checked above");
            if let Some(p) = a.dump_lp {
                dump(p, &build_regulation_lp(r, &battery, &tariff, &opts)?.lp)?;
            }
            let res = optimize_regulation(r, &battery, &tariff, &opts)?;
            let bill = regulation_bill_breakdown(&trace, r, &res, &battery, &tariff)?;
            println!("capacity bid: {:.2} MW", res.dispatch.capacity);
            println!("net regulation revenue: {:.2}", res.revenue);
            println!("bill with regulation only: {:.2}", bill.total);
            let mut d = res.dispatch.clone();
            d.baseline = trace.samples().to_vec();
            json!({ "bill": bill, "revenue": res.revenue, "lp_objective": res.lp_objective, "dispatch": dispatch_json(&d) })
        }
        Mode::Joint => {
            let r = reg.as_ref().expect("checked above");
            let plan = match opts.baseline_mode {
                BaselineMode::PeakPlan => Some(
                    optimize_peak_shaving(&trace, &battery, &tariff, &opts)?
                        .dispatch
                        .b,
                ),
                _ => None,
            };
            if let Some(p) = a.dump_lp {
                let lp = build_joint_lp(&trace, r, &battery, &tariff, &opts, plan.as_deref())?.lp;
                dump(p, &lp)?;
            }
            let res =
                optimize_joint_with_plan(&trace, r, &battery, &tariff, &opts, plan.as_deref())?;
            let check = bill_breakdown(&trace, &res.dispatch, Some(r), &battery, &tariff)?;
            println!("capacity bid: {:.2} MW", res.dispatch.capacity);
            println!("joint bill: {:.2}", check.total);
            json!({ "bill": res.bill, "lp_objective": res.lp_objective, "dispatch": dispatch_json(&res.dispatch) })
        }
    };
    let mode = match a.mode {
        Mode::Peak => "peak",
        Mode::Regulation => "regulation",
        Mode::Joint => "joint",
    };
    if let Some(p) = a.out {
        let doc = json!({
            "config_echo": cfg.echo(),
            "mode": mode,
            "battery": battery,
            "result": report,
        });
        emit_json(Some(p), &doc)?;
    }
    Ok(())
}

fn dump(path: &Path, lp: &peakreg::lp::LinearProgram) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    lp.write_text(&mut w)?;
    Ok(())
}

fn cmd_sweep(
    trace: &TraceArgs,
    reg: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<()> {
    let cfg = load_config(config)?;
    note_defaults(&cfg);
    let (trace, r) = load_aligned(load_trace(trace)?, reg)?;
    let hw = io::window_hours(&trace)?;
    if let Some(w) = hw.warning() {
        warn(w);
    }
    if hw.windows.is_empty() {
        bail!(peakreg::Error::InvalidInput(
            "trace is shorter than one hour".into()
        ));
    }
    let tariff = cfg.tariff(trace.step_s())?;
    let sizing = cfg.battery()?;
    let opts = cfg.solve_options();
    let res = with_workers(threads, || {
        sweep(&trace, &r, hw.window_len, &sizing, &tariff, &opts)
    })??;
    let s = &res.summary;
    println!("hours evaluated: {}", s.hours_total);
    println!("hours with superlinear gain: {}", s.hours_superlinear);
    println!("probability: {:.2}", s.probability);
    println!("mean q: {:.2}", s.mean_q);
    if let Some(p) = out {
        io::write_report_json(p, &cfg.echo(), &res.windows, &res.summary)?;
    }
    Ok(())
}

fn cmd_analyze(trace: &TraceArgs, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let trace = load_trace(trace)?;
    let stats = peak_statistics(&trace, &cfg.peak_options())?;
    for w in &stats.warnings {
        warn(w);
    }
    let peaks: usize = stats.days.iter().map(|d| d.peaks).sum();
    println!("days: {}", stats.days.len());
    println!("peaks: {peaks}");
    for (n, count) in &stats.nocp_histogram {
        println!("runs of {n} contiguous peaks: {count}");
    }
    if let Some(p) = out {
        emit_json(
            Some(p),
            &PeakReport {
                config_echo: &cfg.echo(),
                stats: &stats,
            },
        )?;
    }
    Ok(())
}

fn cmd_synth(cmd: &SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Trace {
            category,
            count,
            gap,
            hours,
            step,
            start,
            out,
        } => {
            let cat: PeakCategory = category.parse()?;
            let cat = if *count > 1 {
                cat.repeated(*count, *gap)
            } else {
                cat
            };
            let per_hour = io::samples_per_hour(*step)?;
            let hour = synth_trace(&cat, per_hour, *step, None)?;
            if *hours == 0 {
                bail!(peakreg::Error::InvalidInput(
                    "--hours must be at least 1".into()
                ));
            }
            let samples = hour.samples().repeat(*hours);
            let trace = TraceSeries::new(samples, *step, *start)?;
            io::save_trace_csv(out, &trace)?;
            println!(
                "wrote {} samples of {cat} to {}",
                trace.len(),
                out.display()
            );
        }
        SynthCommand::Reg {
            sigma,
            seed,
            hours,
            step,
            start,
            out,
        } => {
            let per_hour = io::samples_per_hour(*step)?;
            let model = RegulationModel {
                step_sigma: *sigma,
                seed: *seed,
            };
            let r = synth_regulation(&model, per_hour * hours, *step)?;
            io::save_regulation_csv(out, &r, *start)?;
            println!("wrote {} regulation samples to {}", r.len(), out.display());
        }
    }
    Ok(())
}

/// The eight single-peak categories followed by two and three contiguous
/// small triangles.
fn experiment_categories() -> Vec<PeakCategory> {
    let mut cats = PeakCategory::all_single();
    let small = PeakCategory::single(PeakShape::Triangular, PeakWidth::Narrow, PeakHeight::Low);
    cats.push(small.repeated(2, 120.0));
    cats.push(small.repeated(3, 120.0));
    cats
}

fn cmd_experiment(
    trials: usize,
    config: Option<&Path>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<()> {
    let cfg = load_config(config)?;
    note_defaults(&cfg);
    let step_s = 20.0;
    let steps = io::samples_per_hour(step_s)?;
    let setup = ExperimentSetup {
        steps,
        step_s,
        regulation: cfg.regulation_model(),
        battery: cfg.battery()?,
        tariff: cfg.tariff(step_s)?,
        opts: cfg.solve_options(),
    };
    let results = with_workers(threads, || {
        experiment_categories()
            .iter()
            .map(|c| category_experiment(c, trials, &setup))
            .collect::<peakreg::Result<Vec<_>>>()
    })??;
    for r in &results {
        println!(
            "{:24} {:.2}  (mean q {:.2})",
            r.category, r.probability, r.mean_q
        );
    }
    emit_json(
        out,
        &ExperimentReport {
            config_echo: &cfg.echo(),
            steps,
            step_s,
            categories: &results,
        },
    )
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Bill { trace, config, out } => cmd_bill(trace, config.as_deref(), out.as_deref()),
        Command::Optimize {
            mode,
            trace,
            reg,
            config,
            out,
            dump_lp,
        } => cmd_optimize(OptimizeArgs {
            mode: *mode,
            trace,
            reg: reg.as_deref(),
            config: config.as_deref(),
            out: out.as_deref(),
            dump_lp: dump_lp.as_deref(),
        }),
        Command::Sweep {
            trace,
            reg,
            config,
            out,
        } => cmd_sweep(trace, reg, config.as_deref(), out.as_deref(), cli.threads),
        Command::AnalyzePeaks { trace, config, out } => {
            cmd_analyze(trace, config.as_deref(), out.as_deref())
        }
        Command::Synth(cmd) => cmd_synth(cmd),
        Command::Experiment(ExperimentCommand::Categories {
            trials,
            config,
            out,
        }) => cmd_experiment(*trials, config.as_deref(), out.as_deref(), cli.threads),
    }
}

/// 2 for solver failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let solver = err
        .chain()
        .filter_map(|e| e.downcast_ref::<peakreg::Error>())
        .any(|e| e.is_solver_error());
    if solver {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
