//! `nbroute`: run routing simulations and studies from the command line.

mod multiprocess;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nbroute_core::engine::{run_simulation, sample_scenario, write_snapshot_csv};
use nbroute_core::harness::output::{
    plot_script, write_learning_curves, write_timings, PlotKind, RowWriter,
};
use nbroute_core::harness::{
    run_hoplimit_study, run_learning_curve, run_prepared, ExperimentReport, ExperimentSpec,
    HarnessError, ParallelSpec, Point, PointOutcome, Prepared,
};
use nbroute_core::parallel::{RoundExecutor, RoundSummary, ThreadExecutor};
use nbroute_core::{BayesCounters, HopLimit, Policy};

use multiprocess::ProcessExecutor;

#[derive(Parser)]
#[command(
    name = "nbroute",
    version,
    about = "Circuit-switched routing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy at one load interval.
    Simulate(Box<SimulateArgs>),
    /// Run every point of an experiment spec.
    Sweep(SpecArgs),
    /// Blocking against the extra-hop limit of LL.
    Hoplimit(SpecArgs),
    /// Windowed NB-LL blocking over the learning run, with per-round timings.
    LearningCurve(CurveArgs),
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        job: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Topology JSON file.
    #[arg(long)]
    topology: PathBuf,
    /// sp | ll | ll-hoplimit:<n|inf> | nb-ll
    #[arg(long)]
    policy: Policy,
    /// Width of the per-pair load range.
    #[arg(long)]
    x: f64,
    /// Total arrivals.
    #[arg(long, default_value_t = 1_000_000)]
    events: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seeds capacities and loads; defaults to --seed.
    #[arg(long)]
    scenario_seed: Option<u64>,
    /// Independent seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    replications: u32,
    /// Extra-hop limit; turns ll into ll-hoplimit.
    #[arg(long)]
    delta: Option<HopLimit>,
    #[command(flatten)]
    parallel: ParallelArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Write the final NB-LL counters here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Start NB-LL from these counters.
    #[arg(long)]
    warm_start: Option<PathBuf>,
    /// Log every arrival's snapshot (single-run policies, or nb-ll with one worker and one round).
    #[arg(long)]
    snapshot_log: Option<PathBuf>,
    /// Write a matplotlib script for the results.
    #[arg(long)]
    plot_script: Option<PathBuf>,
}

#[derive(Args)]
struct ParallelArgs {
    #[arg(long, default_value_t = 8)]
    workers: usize,
    #[arg(long)]
    events_per_subsim: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Arrivals per sub-simulation left out of the metrics.
    #[arg(long, default_value_t = 0)]
    warmup: u64,
    /// Run workers as child processes exchanging checkpoint files.
    #[arg(long)]
    multiprocess: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    capacity_range: Option<Vec<u32>>,
    #[arg(long)]
    load_base: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Arrivals per blocking sample.
    #[arg(long)]
    window: Option<u64>,
    /// Longest route in the catalog.
    #[arg(long)]
    hop_bound: Option<usize>,
    /// NB-LL histograms cover the rounds holding this many final arrivals.
    #[arg(long)]
    histogram_tail: Option<u64>,
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Results CSV; defaults to the spec's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot_script: Option<PathBuf>,
    #[arg(long)]
    multiprocess: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-round wall-clock times for each thread count.
    #[arg(long)]
    timings: Option<PathBuf>,
    /// Thread counts to time; results must agree across them.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long)]
    plot_script: Option<PathBuf>,
}

/// Fatal errors exit with 1; runs with failed points exit with 2.
enum Failure {
    Fatal(String),
    Partial(usize),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(*args),
        Command::Sweep(args) => sweep(args, false),
        Command::Hoplimit(args) => sweep(args, true),
        Command::LearningCurve(args) => learning_curve(args),
        Command::Worker { job } => multiprocess::run_job(&job).map_err(Failure::Fatal),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial(n)) => {
            eprintln!("{n} run(s) failed");
            ExitCode::from(2)
        }
        Err(Failure::Fatal(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn progress(point: &Point, s: &RoundSummary) {
    eprintln!(
        "{} x={} seed={} round {}: H={} blocking={:.6e}",
        point.policy, point.x, point.seed, s.round, s.cumulative_arrivals, s.cumulative_blocking
    );
}

fn executor(multiprocess: bool, threads: usize) -> Result<Box<dyn RoundExecutor>, Failure> {
    Ok(if multiprocess {
        Box::new(ProcessExecutor::new()?)
    } else {
        Box::new(ThreadExecutor::with_threads(threads)?)
    })
}

/// Splits `events` over `workers`, from whichever of M and R is given.
fn parallel_spec(args: &ParallelArgs, events: u64) -> Result<ParallelSpec, Failure> {
    let workers = args.workers.max(1) as u64;
    let per_round = |rounds: u64| {
        let batch = workers * rounds;
        if !events.is_multiple_of(batch) {
            return Err(Failure::Fatal(format!(
                "{events} events do not split into {rounds} rounds of {workers} workers; \
                 nearest valid totals are {} and {}",
                events / batch * batch,
                (events / batch + 1) * batch
            )));
        }
        Ok(events / batch)
    };
    let (m, r) = match (args.events_per_subsim, args.rounds) {
        (Some(m), Some(r)) => {
            if workers * m * r as u64 != events {
                return Err(Failure::Fatal(format!(
                    "--workers {workers} x --events-per-subsim {m} x --rounds {r} is {}, not --events {events}",
                    workers * m * r as u64
                )));
            }
            (m, r)
        }
        (Some(m), None) => {
            let plan = nbroute_core::plan_rounds(events, workers as usize, m, 0)?;
            (m, plan.rounds)
        }
        (None, r) => {
            let r = r.unwrap_or(if events >= workers * 10 { 10 } else { 1 });
            (per_round(r as u64)?, r)
        }
    };
    Ok(ParallelSpec {
        workers: workers as usize,
        events_per_subsim: m,
        rounds: r,
        warmup: args.warmup,
    })
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let policy = match (args.delta, args.policy) {
        (None, p) => p,
        (Some(d), Policy::LeastLoaded | Policy::LeastLoadedHopLimit(_)) => {
            Policy::LeastLoadedHopLimit(d)
        }
        (Some(_), p) => return Err(Failure::Fatal(format!("--delta does not apply to {p}"))),
    };
    let nb = policy == Policy::NaiveBayesLeastLoaded;
    if !nb && (args.checkpoint.is_some() || args.warm_start.is_some()) {
        return Err(Failure::Fatal(
            "--checkpoint and --warm-start need --policy nb-ll".into(),
        ));
    }
    let mut spec = ExperimentSpec::new(&args.topology, vec![policy], vec![args.x]);
    spec.events = args.events;
    spec.seed = args.seed;
    spec.scenario_seed = args.scenario_seed;
    spec.replications = args.replications;
    apply_model(&mut spec, &args.model)?;
    if nb {
        spec.parallel = parallel_spec(&args.parallel, args.events)?;
    }
    let topology = spec.read_topology()?;

    if let Some(log) = &args.snapshot_log {
        return simulate_logged(&spec, topology, log, &args);
    }

    let mut prepared = Prepared::new(&spec, topology)?;
    if let Some(path) = &args.warm_start {
        let counters = BayesCounters::read_checkpoint(BufReader::new(File::open(path)?))?;
        prepared.initial_counters = Some(counters);
    }
    prepared.on_round = Some(Box::new(progress));
    let exec = executor(args.parallel.multiprocess, spec.parallel.workers)?;

    if let Some(path) = &args.checkpoint {
        if args.replications != 1 {
            return Err(Failure::Fatal("--checkpoint needs --replications 1".into()));
        }
        let point = spec.points()[0];
        let outcome = prepared.run_point(&point, exec.as_ref());
        write_single(&prepared, &point, &outcome, &args.out)?;
        let counters = outcome?.counters.expect("nb-ll returns counters");
        let mut out = BufWriter::new(File::create(path)?);
        counters.write_checkpoint(&mut out)?;
        out.flush()?;
    } else {
        let report = write_report(&prepared, exec.as_ref(), &args.out)?;
        check(report)?;
    }
    if let Some(p) = &args.plot_script {
        emit_plot(p, PlotKind::Blocking, &args.out)?;
    }
    Ok(())
}

/// One run with the per-arrival snapshot log kept.
fn simulate_logged(
    spec: &ExperimentSpec,
    topology: nbroute_core::Topology,
    log: &Path,
    args: &SimulateArgs,
) -> Result<(), Failure> {
    let policy = spec.policies[0];
    let nb = policy == Policy::NaiveBayesLeastLoaded;
    if args.replications != 1 || (nb && (spec.parallel.workers != 1 || spec.parallel.rounds != 1)) {
        return Err(Failure::Fatal(
            "--snapshot-log needs one replication, and for nb-ll one worker and one round".into(),
        ));
    }
    if spec.parallel.warmup != 0 || args.parallel.multiprocess {
        return Err(Failure::Fatal(
            "--snapshot-log runs in-process without warm-up".into(),
        ));
    }
    let prepared = Prepared::new(spec, topology)?;
    let point = spec.points()[0];
    let mut config = spec.config(policy, point.x, point.seed);
    config.snapshot_log = true;
    let scenario = sample_scenario(&config, &prepared.topology)?;
    let learner = if nb {
        // Same seed as the single worker of a one-round plan.
        config.seed = spec.parallel.plan(point.seed)?.worker_seed(0, 0);
        Some(match &args.warm_start {
            Some(p) => BayesCounters::read_checkpoint(BufReader::new(File::open(p)?))?,
            None => BayesCounters::for_topology(&scenario.topology),
        })
    } else {
        None
    };
    let out = run_simulation(&config, &scenario, &prepared.catalog, learner)?;
    write_snapshot_csv(&out.snapshots, BufWriter::new(File::create(log)?))?;
    if let (Some(path), Some(counters)) = (&args.checkpoint, &out.learner) {
        let mut w = BufWriter::new(File::create(path)?);
        counters.write_checkpoint(&mut w)?;
        w.flush()?;
    }
    let outcome = Ok(PointOutcome {
        histogram: out.metrics.extra_hops.clone(),
        metrics: out.metrics,
        rounds: Vec::new(),
        counters: out.learner,
    });
    write_single(&prepared, &point, &outcome, &args.out)
}

fn write_single(
    prepared: &Prepared<'_>,
    point: &Point,
    outcome: &Result<PointOutcome, HarnessError>,
    out: &Path,
) -> Result<(), Failure> {
    let mut w = RowWriter::new(BufWriter::new(File::create(out)?))?;
    let row = prepared.row(point, outcome);
    w.write(&row)?;
    match &row.error {
        Some(e) => {
            eprintln!("{} x={} seed={}: {e}", row.policy, row.x, row.seed);
            Err(Failure::Partial(1))
        }
        None => Ok(()),
    }
}

fn apply_model(spec: &mut ExperimentSpec, m: &ModelArgs) -> Result<(), Failure> {
    if let Some(r) = &m.capacity_range {
        spec.capacity_range = [r[0], r[1]];
    }
    if let Some(v) = m.load_base {
        spec.load_base = v;
    }
    if let Some(v) = m.alpha {
        spec.alpha = v;
    }
    if let Some(v) = m.window {
        spec.window = v;
    }
    if m.hop_bound.is_some() {
        spec.hop_bound = m.hop_bound;
    }
    if let Some(v) = m.histogram_tail {
        spec.histogram_tail = v;
    }
    spec.validate()?;
    Ok(())
}

fn write_report(
    prepared: &Prepared<'_>,
    exec: &dyn RoundExecutor,
    out: &Path,
) -> Result<ExperimentReport, Failure> {
    let mut w = RowWriter::new(BufWriter::new(File::create(out)?))?;
    let report = run_prepared(prepared, exec, &mut |row| {
        if let Some(e) = &row.error {
            eprintln!("{} x={} seed={}: {e}", row.policy, row.x, row.seed);
        }
        w.write(row)
    })?;
    Ok(report)
}

fn check(report: ExperimentReport) -> Result<(), Failure> {
    match report.failures {
        0 => Ok(()),
        n => Err(Failure::Partial(n)),
    }
}

fn sweep(args: SpecArgs, hoplimit: bool) -> Result<(), Failure> {
    let spec = ExperimentSpec::load(&args.spec)?;
    let out = args
        .out
        .clone()
        .or_else(|| spec.output.clone())
        .ok_or_else(|| Failure::Fatal("no --out given and the spec has no output".into()))?;
    let topology = spec.read_topology()?;
    let report = if hoplimit {
        let mut w = RowWriter::new(BufWriter::new(File::create(&out)?))?;
        run_hoplimit_study(&spec, topology, &mut |row| w.write(row))?
    } else {
        let mut prepared = Prepared::new(&spec, topology)?;
        prepared.on_round = Some(Box::new(progress));
        let exec = executor(args.multiprocess, spec.parallel.workers)?;
        write_report(&prepared, exec.as_ref(), &out)?
    };
    if let Some(p) = &args.plot_script {
        let kind = if hoplimit {
            PlotKind::HopLimit
        } else {
            PlotKind::Blocking
        };
        emit_plot(p, kind, &out)?;
    }
    check(report)
}

fn learning_curve(args: CurveArgs) -> Result<(), Failure> {
    let spec = ExperimentSpec::load(&args.spec)?;
    let topology = spec.read_topology()?;
    let curves = run_learning_curve(&spec, topology, &args.threads)?;
    write_learning_curves(&curves, BufWriter::new(File::create(&args.out)?))?;
    if let Some(path) = &args.timings {
        write_timings(&curves, BufWriter::new(File::create(path)?))?;
    }
    for c in &curves {
        let last = c.samples.last().map_or(0.0, |s| s.blocking_probability());
        eprintln!(
            "x={}: overall blocking {:.6e}, final window {:.6e}",
            c.x,
            c.metrics.blocking_probability(),
            last
        );
    }
    if let Some(p) = &args.plot_script {
        emit_plot(p, PlotKind::LearningCurve, &args.out)?;
    }
    Ok(())
}

fn emit_plot(path: &Path, kind: PlotKind, csv: &Path) -> Result<(), Failure> {
    std::fs::write(path, plot_script(kind, &csv.to_string_lossy()))?;
    Ok(())
}
