//! Round-based parallel learning.
//!
//! A long NB-LL run is cut into rounds of `workers` independent
//! sub-simulations. Every worker in a round starts from an empty network and
//! the same frozen global counters, learns online from its own arrivals, and
//! hands back only what it added. The coordinator folds those deltas into the
//! global counters before the next round starts.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Metrics, Scenario, SimConfig, SimError, Simulator};
use crate::learner::{BayesCounters, LearnerError};
use crate::rng::{derive_seed, TAG_WORKER};
use crate::routing::Policy;
use crate::topology::RouteCatalog;

#[derive(Debug, Error)]
pub enum ParallelError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(
        "{total} events cannot be split into sub-simulations of {workers} x {per_subsim}; \
         nearest valid totals are {below} and {above}"
    )]
    NotDivisible {
        total: u64,
        workers: usize,
        per_subsim: u64,
        below: u64,
        above: u64,
    },
    #[error("round {round}: worker {worker} failed: {reason}")]
    Worker {
        round: usize,
        worker: usize,
        reason: String,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// How a run is split into rounds of sub-simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub workers: usize,
    pub events_per_subsim: u64,
    pub rounds: usize,
    pub base_seed: u64,
    /// Arrivals at the start of each sub-simulation kept out of the metrics.
    /// The learner still sees them.
    #[serde(default)]
    pub warmup: u64,
}

/// Splits `total_events` into rounds of `workers` sub-simulations of
/// `events_per_subsim` arrivals each.
pub fn plan_rounds(
    total_events: u64,
    workers: usize,
    events_per_subsim: u64,
    base_seed: u64,
) -> Result<RoundPlan, ParallelError> {
    if workers == 0 || events_per_subsim == 0 {
        return Err(ParallelError::InvalidPlan(
            "workers and events per sub-simulation must be at least 1".into(),
        ));
    }
    let batch = workers as u64 * events_per_subsim;
    if total_events == 0 || !total_events.is_multiple_of(batch) {
        let below = total_events / batch * batch;
        return Err(ParallelError::NotDivisible {
            total: total_events,
            workers,
            per_subsim: events_per_subsim,
            below,
            above: below + batch,
        });
    }
    RoundPlan::new(
        workers,
        events_per_subsim,
        (total_events / batch) as usize,
        base_seed,
    )
}

impl RoundPlan {
    pub fn new(
        workers: usize,
        events_per_subsim: u64,
        rounds: usize,
        base_seed: u64,
    ) -> Result<Self, ParallelError> {
        let plan = Self {
            workers,
            events_per_subsim,
            rounds,
            base_seed,
            warmup: 0,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_warmup(mut self, warmup: u64) -> Result<Self, ParallelError> {
        self.warmup = warmup;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ParallelError> {
        if self.workers == 0 || self.events_per_subsim == 0 || self.rounds == 0 {
            return Err(ParallelError::InvalidPlan(format!(
                "workers ({}), events per sub-simulation ({}) and rounds ({}) must all be at least 1",
                self.workers, self.events_per_subsim, self.rounds
            )));
        }
        if self.warmup >= self.events_per_subsim {
            return Err(ParallelError::InvalidPlan(format!(
                "warm-up {} leaves nothing to measure in {} events",
                self.warmup, self.events_per_subsim
            )));
        }
        Ok(())
    }

    pub fn total_events(&self) -> u64 {
        self.workers as u64 * self.events_per_subsim * self.rounds as u64
    }

    /// Seed of worker `worker` in round `round`.
    pub fn worker_seed(&self, round: usize, worker: usize) -> u64 {
        derive_seed(self.base_seed, &[TAG_WORKER, round as u64, worker as u64])
    }

    pub fn tasks(&self, round: usize) -> Vec<WorkerTask> {
        (0..self.workers)
            .map(|worker| WorkerTask {
                round,
                worker,
                seed: self.worker_seed(round, worker),
                events: self.events_per_subsim,
                warmup: self.warmup,
            })
            .collect()
    }
}

/// One sub-simulation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerTask {
    pub round: usize,
    pub worker: usize,
    pub seed: u64,
    pub events: u64,
    pub warmup: u64,
}

/// What a worker sends back: the counts it added and its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResult {
    pub worker: usize,
    pub delta: BayesCounters,
    pub metrics: Metrics,
}

/// Everything a worker reads during a round.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub config: &'a SimConfig,
    pub scenario: &'a Scenario,
    pub catalog: &'a RouteCatalog,
    pub global: &'a BayesCounters,
}

impl RoundContext<'_> {
    /// The configuration a worker runs with.
    pub fn worker_config(&self, task: &WorkerTask) -> SimConfig {
        SimConfig {
            seed: task.seed,
            num_events: task.events,
            policy: Policy::NaiveBayesLeastLoaded,
            ..self.config.clone()
        }
    }
}

/// A worker that did not produce a result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerFailure {
    pub worker: usize,
    pub reason: String,
}

/// Runs the sub-simulations of one round.
pub trait RoundExecutor: Sync {
    /// Returns one result per task, in task order, or the first failure.
    fn run_round(
        &self,
        tasks: &[WorkerTask],
        ctx: RoundContext<'_>,
    ) -> Result<Vec<WorkerResult>, WorkerFailure>;
}

/// Runs one sub-simulation against the frozen global counters.
pub fn run_worker(task: &WorkerTask, ctx: RoundContext<'_>) -> Result<WorkerResult, SimError> {
    let config = ctx.worker_config(task);
    let mut sim = Simulator::new(&config, ctx.scenario, ctx.catalog, Some(ctx.global.clone()))?;
    while sim.arrivals() < task.warmup && sim.step()?.is_some() {}
    if task.warmup > 0 {
        sim.reset_metrics();
    }
    while sim.step()?.is_some() {}
    let out = sim.finish();
    let learner = out.learner.expect("nb-ll runs carry a learner");
    Ok(WorkerResult {
        worker: task.worker,
        delta: learner.delta_from(ctx.global)?,
        metrics: out.metrics,
    })
}

/// In-process executor on a rayon pool.
#[derive(Debug, Default)]
pub struct ThreadExecutor {
    pool: Option<rayon::ThreadPool>,
}

impl ThreadExecutor {
    /// Uses the global rayon pool.
    pub fn new() -> Self {
        Self::default()
    }

    /// Uses a dedicated pool with `threads` threads.
    pub fn with_threads(threads: usize) -> Result<Self, ParallelError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| ParallelError::InvalidPlan(e.to_string()))?;
        Ok(Self { pool: Some(pool) })
    }
}

impl RoundExecutor for ThreadExecutor {
    fn run_round(
        &self,
        tasks: &[WorkerTask],
        ctx: RoundContext<'_>,
    ) -> Result<Vec<WorkerResult>, WorkerFailure> {
        let run = || {
            tasks
                .par_iter()
                .map(|task| {
                    run_worker(task, ctx).map_err(|e| WorkerFailure {
                        worker: task.worker,
                        reason: e.to_string(),
                    })
                })
                .collect::<Vec<_>>()
        };
        let results = match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        };
        results.into_iter().collect()
    }
}

/// Runs round `round` and returns the worker results with the merged counters.
/// Nothing is merged unless every worker succeeds.
pub fn run_round(
    plan: &RoundPlan,
    round: usize,
    ctx: RoundContext<'_>,
    executor: &dyn RoundExecutor,
) -> Result<(Vec<WorkerResult>, BayesCounters), ParallelError> {
    let tasks = plan.tasks(round);
    let results = executor
        .run_round(&tasks, ctx)
        .map_err(|f| ParallelError::Worker {
            round,
            worker: f.worker,
            reason: f.reason,
        })?;
    let fail = |worker: usize, reason: String| ParallelError::Worker {
        round,
        worker,
        reason,
    };
    if results.len() != tasks.len() {
        return Err(fail(
            results.len().min(tasks.len()),
            format!("expected {} results, got {}", tasks.len(), results.len()),
        ));
    }
    let mut global = ctx.global.clone();
    for (task, result) in tasks.iter().zip(&results) {
        if result.worker != task.worker {
            return Err(fail(
                task.worker,
                format!("result labelled worker {}", result.worker),
            ));
        }
        if result.delta.arrivals() != task.events
            || result.metrics.arrivals != task.events - task.warmup
            || !result.metrics.is_consistent()
        {
            return Err(fail(
                task.worker,
                "result does not account for every arrival".into(),
            ));
        }
        global
            .merge_from(&result.delta)
            .map_err(|e| fail(task.worker, e.to_string()))?;
    }
    Ok((results, global))
}

/// Progress after one round.
#[derive(Debug, Clone)]
pub struct RoundSummary {
    pub round: usize,
    /// Global arrival count after the merge.
    pub cumulative_arrivals: u64,
    /// Blocking over every measured arrival so far.
    pub cumulative_blocking: f64,
    /// The round's workers' metrics summed; windows are summed by index.
    pub metrics: Metrics,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct ParallelOutput {
    /// Totals over every sub-simulation; `windows` runs round by round.
    pub metrics: Metrics,
    pub counters: BayesCounters,
    pub rounds: Vec<RoundSummary>,
}

/// Runs every round of `plan`, starting from `initial` counters.
pub fn run_parallel_learning(
    plan: &RoundPlan,
    config: &SimConfig,
    scenario: &Scenario,
    catalog: &RouteCatalog,
    initial: BayesCounters,
    executor: &dyn RoundExecutor,
    progress: &mut dyn FnMut(&RoundSummary),
) -> Result<ParallelOutput, ParallelError> {
    plan.validate()?;
    config.validate()?;
    if !initial.matches(&scenario.topology) {
        return Err(LearnerError::TopologyMismatch.into());
    }
    let num_pairs = scenario.topology.num_pairs();
    let mut total = Metrics::new(num_pairs, config.window);
    let mut windows = Vec::new();
    let mut global = initial;
    let mut rounds = Vec::with_capacity(plan.rounds);
    for round in 0..plan.rounds {
        let start = Instant::now();
        let ctx = RoundContext {
            config,
            scenario,
            catalog,
            global: &global,
        };
        let (results, merged) = run_round(plan, round, ctx, executor)?;
        global = merged;
        let mut metrics = Metrics::new(num_pairs, config.window);
        for r in &results {
            metrics.merge_from(&r.metrics);
        }
        total.merge_from(&metrics);
        windows.extend_from_slice(&metrics.windows);
        let summary = RoundSummary {
            round,
            cumulative_arrivals: global.arrivals(),
            cumulative_blocking: total.blocking_probability(),
            metrics,
            wall_time: start.elapsed(),
        };
        progress(&summary);
        rounds.push(summary);
    }
    total.windows = windows;
    Ok(ParallelOutput {
        metrics: total,
        counters: global,
        rounds,
    })
}
