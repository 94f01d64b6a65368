use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::stats::mean_ci95;
use super::HarnessError;
use crate::engine::{run_simulation, sample_scenario, Metrics, SimConfig};
use crate::learner::BayesCounters;
use crate::parallel::{
    run_parallel_learning, RoundExecutor, RoundPlan, RoundSummary, ThreadExecutor,
};
use crate::routing::{HopLimit, Policy};
use crate::topology::{enumerate_routes, RouteCatalog, Topology};

/// Histogram cells reported per row: extra hops 0..=9 and 10 or more.
pub const HISTOGRAM_CELLS: usize = 11;

fn default_replications() -> u32 {
    1
}

fn default_events() -> u64 {
    1_000_000
}

fn default_tail() -> u64 {
    1_000_000
}

fn default_jobs() -> usize {
    1
}

fn default_seed() -> u64 {
    SimConfig::default().seed
}

fn default_capacity_range() -> [u32; 2] {
    SimConfig::default().capacity_range
}

fn default_load_base() -> f64 {
    SimConfig::default().load_base
}

fn default_alpha() -> f64 {
    SimConfig::default().alpha
}

fn default_window() -> u64 {
    SimConfig::default().window
}

fn default_parallel() -> ParallelSpec {
    ParallelSpec {
        workers: 8,
        events_per_subsim: 125_000,
        rounds: 10,
        warmup: 0,
    }
}

/// Round layout for NB-LL points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelSpec {
    pub workers: usize,
    pub events_per_subsim: u64,
    pub rounds: usize,
    #[serde(default)]
    pub warmup: u64,
}

impl ParallelSpec {
    pub fn plan(&self, seed: u64) -> Result<RoundPlan, HarnessError> {
        Ok(
            RoundPlan::new(self.workers, self.events_per_subsim, self.rounds, seed)?
                .with_warmup(self.warmup)?,
        )
    }
}

/// A sweep over policies and load intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Topology file; relative paths here and in `output` resolve against
    /// the spec file's directory.
    pub topology: PathBuf,
    pub policies: Vec<Policy>,
    pub x_values: Vec<f64>,
    /// Independent seeds per point: `seed`, `seed + 1`, ...
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Arrivals per SP/LL run.
    #[serde(default = "default_events")]
    pub events: u64,
    #[serde(default = "default_parallel")]
    pub parallel: ParallelSpec,
    /// Hop limits for the hop-limit study; must include `"inf"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hop_limits: Vec<HopLimit>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Seeds capacities and loads, shared by every replication and policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_seed: Option<u64>,
    #[serde(default = "default_capacity_range")]
    pub capacity_range: [u32; 2],
    #[serde(default = "default_load_base")]
    pub load_base: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_window")]
    pub window: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_bound: Option<usize>,
    /// NB-LL histograms cover the rounds holding the last this-many arrivals.
    #[serde(default = "default_tail")]
    pub histogram_tail: u64,
    /// Points run concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    /// A spec with defaults for everything but the essentials.
    pub fn new(topology: impl Into<PathBuf>, policies: Vec<Policy>, x_values: Vec<f64>) -> Self {
        let base = SimConfig::default();
        Self {
            topology: topology.into(),
            policies,
            x_values,
            replications: default_replications(),
            events: default_events(),
            parallel: default_parallel(),
            hop_limits: Vec::new(),
            seed: base.seed,
            scenario_seed: None,
            capacity_range: base.capacity_range,
            load_base: base.load_base,
            alpha: base.alpha,
            window: base.window,
            hop_bound: None,
            histogram_tail: default_tail(),
            jobs: default_jobs(),
            output: None,
        }
    }

    /// Reads a JSON spec and resolves its topology path.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut spec: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Spec(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            if spec.topology.is_relative() {
                spec.topology = dir.join(&spec.topology);
            }
            if let Some(out) = spec.output.as_mut().filter(|o| o.is_relative()) {
                *out = dir.join(&*out);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Spec(m.to_owned()));
        if self.policies.is_empty() && self.hop_limits.is_empty() {
            return fail("no policies to run");
        }
        if self.x_values.is_empty() {
            return fail("x_values is empty");
        }
        if self.x_values.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return fail("x_values must be nonnegative");
        }
        if self.x_values.windows(2).any(|w| w[0] > w[1]) {
            return fail("x_values must be sorted");
        }
        if self.replications == 0 {
            return fail("replications must be at least 1");
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1");
        }
        if self.histogram_tail == 0 {
            return fail("histogram_tail must be at least 1");
        }
        if self
            .seed
            .checked_add(self.replications as u64 - 1)
            .is_none()
        {
            return fail("replication seeds overflow");
        }
        for &x in &self.x_values {
            self.config(Policy::LeastLoaded, x, self.seed).validate()?;
        }
        if self.runs_nb() {
            self.parallel.plan(self.seed)?;
        }
        Ok(())
    }

    fn runs_nb(&self) -> bool {
        self.policies.contains(&Policy::NaiveBayesLeastLoaded)
    }

    pub fn read_topology(&self) -> Result<Topology, HarnessError> {
        let text = std::fs::read_to_string(&self.topology)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", self.topology.display())))?;
        Ok(Topology::from_json(&text)?)
    }

    /// Configuration of one run.
    pub fn config(&self, policy: Policy, x: f64, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            scenario_seed: Some(self.scenario_seed.unwrap_or(self.seed)),
            num_events: self.events,
            policy,
            capacity_range: self.capacity_range,
            load_base: self.load_base,
            load_interval: x,
            alpha: self.alpha,
            window: self.window,
            hop_bound: self.hop_bound,
            snapshot_log: false,
        }
    }

    /// Every run, ordered by policy, X, then seed.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            for &x in &self.x_values {
                for r in 0..self.replications {
                    out.push(Point {
                        policy,
                        x,
                        seed: self.seed + r as u64,
                    });
                }
            }
        }
        out
    }
}

/// One run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub policy: Policy,
    pub x: f64,
    pub seed: u64,
}

/// Measured values of a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub arrivals: u64,
    pub blocked: u64,
    pub blocking_probability: f64,
    pub ci95_half_width: Option<f64>,
    pub avg_extra_hops: f64,
    pub histogram: [u64; HISTOGRAM_CELLS],
}

impl Measurement {
    fn new(arrivals: u64, blocked: u64, hops: &[u64]) -> Self {
        let mut histogram = [0; HISTOGRAM_CELLS];
        for (d, &c) in hops.iter().enumerate() {
            histogram[d.min(HISTOGRAM_CELLS - 1)] += c;
        }
        let served: u64 = hops.iter().sum();
        let weighted: u64 = hops.iter().enumerate().map(|(d, &c)| d as u64 * c).sum();
        Self {
            arrivals,
            blocked,
            blocking_probability: if arrivals == 0 {
                0.0
            } else {
                blocked as f64 / arrivals as f64
            },
            ci95_half_width: None,
            avg_extra_hops: if served == 0 {
                0.0
            } else {
                weighted as f64 / served as f64
            },
            histogram,
        }
    }
}

/// Which seed a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSeed {
    Single(u64),
    /// Pooled over every replication of the point.
    All,
}

impl std::fmt::Display for RowSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowSeed::Single(s) => write!(f, "{s}"),
            RowSeed::All => f.write_str("all"),
        }
    }
}

/// One CSV row. `measurement` is `None` when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub topology: String,
    pub policy: Policy,
    pub x: f64,
    pub seed: RowSeed,
    pub measurement: Option<Measurement>,
    pub error: Option<String>,
}

/// What one point produced before it becomes a row.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub metrics: Metrics,
    /// Extra-hop counts reported for the row.
    pub histogram: Vec<u64>,
    pub rounds: Vec<RoundSummary>,
    pub counters: Option<BayesCounters>,
}

/// Called with each finished NB-LL round.
pub type RoundHook<'a> = Box<dyn Fn(&Point, &RoundSummary) + Sync + 'a>;

/// A spec with its topology loaded and routes enumerated.
pub struct Prepared<'a> {
    pub spec: &'a ExperimentSpec,
    pub topology: Topology,
    pub catalog: RouteCatalog,
    pub label: String,
    /// Counters NB-LL runs start from; empty when `None`.
    pub initial_counters: Option<BayesCounters>,
    /// Called after every NB-LL round.
    pub on_round: Option<RoundHook<'a>>,
}

impl<'a> Prepared<'a> {
    pub fn new(spec: &'a ExperimentSpec, topology: Topology) -> Result<Self, HarnessError> {
        spec.validate()?;
        let catalog = enumerate_routes(&topology, spec.hop_bound)?;
        let label = topology.name().map(str::to_owned).unwrap_or_else(|| {
            spec.topology
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        });
        Ok(Self {
            spec,
            topology,
            catalog,
            label,
            initial_counters: None,
            on_round: None,
        })
    }

    pub fn run_point(
        &self,
        point: &Point,
        executor: &dyn RoundExecutor,
    ) -> Result<PointOutcome, HarnessError> {
        let config = self.spec.config(point.policy, point.x, point.seed);
        let scenario = sample_scenario(&config, &self.topology)?;
        if point.policy != Policy::NaiveBayesLeastLoaded {
            let out = run_simulation(&config, &scenario, &self.catalog, None)?;
            return Ok(PointOutcome {
                histogram: out.metrics.extra_hops.clone(),
                metrics: out.metrics,
                rounds: Vec::new(),
                counters: None,
            });
        }
        let plan = self.spec.parallel.plan(point.seed)?;
        let initial = match &self.initial_counters {
            Some(c) => c.clone(),
            None => BayesCounters::for_topology(&scenario.topology),
        };
        let out = run_parallel_learning(
            &plan,
            &config,
            &scenario,
            &self.catalog,
            initial,
            executor,
            &mut |s| {
                if let Some(f) = &self.on_round {
                    f(point, s)
                }
            },
        )?;
        let per_round = plan.workers as u64 * (plan.events_per_subsim - plan.warmup);
        let tail = self
            .spec
            .histogram_tail
            .div_ceil(per_round)
            .min(plan.rounds as u64) as usize;
        let mut tail_metrics = Metrics::new(scenario.topology.num_pairs(), config.window);
        for r in &out.rounds[out.rounds.len() - tail..] {
            tail_metrics.merge_from(&r.metrics);
        }
        Ok(PointOutcome {
            histogram: tail_metrics.extra_hops,
            metrics: out.metrics,
            rounds: out.rounds,
            counters: Some(out.counters),
        })
    }

    /// The CSV row for one finished point.
    pub fn row(&self, point: &Point, outcome: &Result<PointOutcome, HarnessError>) -> ResultRow {
        let (measurement, error) = match outcome {
            Ok(o) => (
                Some(Measurement::new(
                    o.metrics.arrivals,
                    o.metrics.blocked,
                    &o.histogram,
                )),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        };
        ResultRow {
            topology: self.label.clone(),
            policy: point.policy,
            x: point.x,
            seed: RowSeed::Single(point.seed),
            measurement,
            error,
        }
    }

    /// Pools the replications of one (policy, X) point.
    fn summary(&self, reps: &[ResultRow]) -> ResultRow {
        let first = &reps[0];
        let ok: Vec<&Measurement> = reps.iter().filter_map(|r| r.measurement.as_ref()).collect();
        let measurement = (!ok.is_empty()).then(|| {
            let mut hops = vec![0u64; HISTOGRAM_CELLS];
            for m in &ok {
                for (h, c) in hops.iter_mut().zip(&m.histogram) {
                    *h += c;
                }
            }
            let mut m = Measurement::new(
                ok.iter().map(|m| m.arrivals).sum(),
                ok.iter().map(|m| m.blocked).sum(),
                &hops,
            );
            // The 10+ cell loses exact hop counts, so pool the per-row means instead.
            let served = |m: &Measurement| m.histogram.iter().sum::<u64>() as f64;
            let total: f64 = ok.iter().map(|m| served(m)).sum();
            if total > 0.0 {
                m.avg_extra_hops =
                    ok.iter().map(|m| m.avg_extra_hops * served(m)).sum::<f64>() / total;
            }
            if first.policy != Policy::NaiveBayesLeastLoaded {
                let bps: Vec<f64> = ok.iter().map(|m| m.blocking_probability).collect();
                m.ci95_half_width = mean_ci95(&bps).map(|(_, hw)| hw);
            }
            m
        });
        let failed = reps.len() - ok.len();
        ResultRow {
            topology: first.topology.clone(),
            policy: first.policy,
            x: first.x,
            seed: RowSeed::All,
            measurement,
            error: (failed > 0).then(|| format!("{failed} of {} replications failed", reps.len())),
        }
    }
}

/// Rows of a finished sweep.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub failures: usize,
}

/// Runs every point of `spec`, handing rows to `sink` in (policy, X, seed)
/// order as soon as they are ready. Each (policy, X) group with more than
/// one replication is followed by a pooled row with seed `all`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    topology: Topology,
    executor: &dyn RoundExecutor,
    sink: &mut dyn FnMut(&ResultRow) -> Result<(), HarnessError>,
) -> Result<ExperimentReport, HarnessError> {
    run_prepared(&Prepared::new(spec, topology)?, executor, sink)
}

/// [`run_experiment`] on an already prepared spec.
pub fn run_prepared(
    prepared: &Prepared<'_>,
    executor: &dyn RoundExecutor,
    sink: &mut dyn FnMut(&ResultRow) -> Result<(), HarnessError>,
) -> Result<ExperimentReport, HarnessError> {
    let spec = prepared.spec;
    let points = spec.points();
    let reps = spec.replications as usize;
    let mut report = ExperimentReport::default();
    let mut group = Vec::with_capacity(reps);
    let mut emit = |row: ResultRow, report: &mut ExperimentReport| -> Result<(), HarnessError> {
        if row.error.is_some() {
            report.failures += 1;
        }
        sink(&row)?;
        report.rows.push(row);
        Ok(())
    };
    run_ordered(
        &points,
        spec.jobs,
        |p| prepared.run_point(p, executor),
        |i, outcome| {
            let row = prepared.row(&points[i], &outcome);
            group.push(row.clone());
            emit(row, &mut report)?;
            if reps > 1 && group.len() == reps {
                let summary = prepared.summary(&group);
                group.clear();
                // A pooled row with failed members is not counted twice.
                let failures = report.failures;
                emit(summary, &mut report)?;
                report.failures = failures;
            } else if group.len() == reps {
                group.clear();
            }
            Ok(())
        },
    )?;
    Ok(report)
}

/// Runs `work` over `items` on `jobs` threads and feeds results to `consume`
/// in item order.
fn run_ordered<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    work: impl Fn(&T) -> R + Sync,
    mut consume: impl FnMut(usize, R) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Spec(e.to_string()))?;
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        s.spawn(|| {
            pool.install(|| {
                items
                    .par_iter()
                    .enumerate()
                    .for_each_with(tx, |tx, (i, item)| {
                        // The receiver only hangs up after an error; later results are moot.
                        let _ = tx.send((i, work(item)));
                    })
            })
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&next) {
                consume(next, r)?;
                next += 1;
            }
        }
        Ok(())
    })
}

/// Runs plain LL plus LL-hoplimit for every entry of `spec.hop_limits`,
/// after any policies already listed in the spec.
pub fn run_hoplimit_study(
    spec: &ExperimentSpec,
    topology: Topology,
    sink: &mut dyn FnMut(&ResultRow) -> Result<(), HarnessError>,
) -> Result<ExperimentReport, HarnessError> {
    if !spec.hop_limits.contains(&HopLimit::Unbounded) {
        return Err(HarnessError::Spec("hop_limits must include \"inf\"".into()));
    }
    let mut study = spec.clone();
    let mut policies = vec![Policy::LeastLoaded];
    policies.extend(spec.policies.iter().copied());
    policies.extend(
        spec.hop_limits
            .iter()
            .map(|&d| Policy::LeastLoadedHopLimit(d)),
    );
    study.policies.clear();
    for p in policies {
        if !study.policies.contains(&p) {
            study.policies.push(p);
        }
    }
    study.hop_limits.clear();
    run_experiment(&study, topology, &ThreadExecutor::new(), sink)
}

/// Windowed blocking of an NB-LL run.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub round: usize,
    /// Window index within the round.
    pub window: usize,
    /// Arrivals up to and including this window.
    pub cumulative_arrivals: u64,
    pub arrivals: u64,
    pub blocked: u64,
}

impl CurveSample {
    pub fn blocking_probability(&self) -> f64 {
        self.blocked as f64 / self.arrivals as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTiming {
    /// Worker threads used.
    pub threads: usize,
    pub round: usize,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct LearningCurve {
    pub topology: String,
    pub x: f64,
    pub seed: u64,
    pub samples: Vec<CurveSample>,
    pub timings: Vec<RoundTiming>,
    pub metrics: Metrics,
    pub counters: BayesCounters,
}

/// Learning curve of NB-LL at every X of `spec`, using its first seed.
/// Each entry of `threads` reruns the plan on a pool of that size to
/// time it; the first pool's results are kept and the others must agree.
pub fn run_learning_curve(
    spec: &ExperimentSpec,
    topology: Topology,
    threads: &[usize],
) -> Result<Vec<LearningCurve>, HarnessError> {
    let mut curve_spec = spec.clone();
    curve_spec.policies = vec![Policy::NaiveBayesLeastLoaded];
    curve_spec.replications = 1;
    let prepared = Prepared::new(&curve_spec, topology)?;
    let threads = if threads.is_empty() {
        &[1][..]
    } else {
        threads
    };
    let mut curves = Vec::new();
    for &x in &curve_spec.x_values {
        let point = Point {
            policy: Policy::NaiveBayesLeastLoaded,
            x,
            seed: curve_spec.seed,
        };
        let mut kept: Option<PointOutcome> = None;
        let mut timings = Vec::new();
        for &t in threads {
            let outcome = prepared.run_point(&point, &ThreadExecutor::with_threads(t)?)?;
            timings.extend(outcome.rounds.iter().map(|r| RoundTiming {
                threads: t,
                round: r.round,
                wall: r.wall_time,
            }));
            match &kept {
                None => kept = Some(outcome),
                Some(k) if k.counters != outcome.counters || k.metrics != outcome.metrics => {
                    return Err(HarnessError::Spec(format!(
                        "run on {t} threads disagrees with the first run"
                    )))
                }
                Some(_) => {}
            }
        }
        let outcome = kept.expect("at least one thread count");
        let mut samples = Vec::new();
        let mut cumulative = 0;
        for r in &outcome.rounds {
            for (w, s) in r.metrics.windows.iter().enumerate() {
                cumulative += s.arrivals;
                samples.push(CurveSample {
                    round: r.round,
                    window: w,
                    cumulative_arrivals: cumulative,
                    arrivals: s.arrivals,
                    blocked: s.blocked,
                });
            }
        }
        curves.push(LearningCurve {
            topology: prepared.label.clone(),
            x,
            seed: point.seed,
            samples,
            timings,
            metrics: outcome.metrics,
            counters: outcome.counters.expect("nb-ll points return counters"),
        });
    }
    Ok(curves)
}
