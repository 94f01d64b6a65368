//! Runs each worker of a round in a child process.
//!
//! The coordinator writes the frozen counters once per round as a counter
//! checkpoint plus one job file per worker, then starts `nbroute worker` for
//! every job. A worker writes its counter delta as a checkpoint and its
//! metrics as JSON next to the job file.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use nbroute_core::engine::{Metrics, Scenario, SimConfig, TrafficMatrix};
use nbroute_core::parallel::{
    run_worker, RoundContext, RoundExecutor, WorkerFailure, WorkerResult, WorkerTask,
};
use nbroute_core::topology::{enumerate_routes, Topology, TopologyFile};
use nbroute_core::BayesCounters;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct Job {
    task: WorkerTask,
    config: SimConfig,
    topology: TopologyFile,
    loads: Vec<f64>,
    counters: PathBuf,
    delta: PathBuf,
    metrics: PathBuf,
}

pub struct ProcessExecutor {
    exe: PathBuf,
    dir: tempfile::TempDir,
}

impl ProcessExecutor {
    pub fn new() -> std::io::Result<Self> {
        Ok(Self {
            exe: std::env::current_exe()?,
            dir: tempfile::tempdir()?,
        })
    }

    fn prepare(&self, tasks: &[WorkerTask], ctx: RoundContext<'_>) -> Result<Vec<PathBuf>, String> {
        let round = tasks.first().map_or(0, |t| t.round);
        let base = self.dir.path().join(format!("round{round}"));
        std::fs::create_dir_all(&base).map_err(|e| e.to_string())?;
        let counters = base.join("global.json");
        let out = File::create(&counters).map_err(|e| e.to_string())?;
        ctx.global
            .write_checkpoint(BufWriter::new(out))
            .map_err(|e| e.to_string())?;
        let mut paths = Vec::with_capacity(tasks.len());
        for task in tasks {
            let stem = format!("worker{}", task.worker);
            let job = Job {
                task: *task,
                config: ctx.worker_config(task),
                topology: ctx.scenario.topology.to_file(),
                loads: ctx.scenario.traffic.loads().to_vec(),
                counters: counters.clone(),
                delta: base.join(format!("{stem}.delta.json")),
                metrics: base.join(format!("{stem}.metrics.json")),
            };
            let path = base.join(format!("{stem}.job.json"));
            let text = serde_json::to_string(&job).map_err(|e| e.to_string())?;
            std::fs::write(&path, text).map_err(|e| e.to_string())?;
            paths.push(path);
        }
        Ok(paths)
    }

    fn collect(job_path: &Path) -> Result<WorkerResult, String> {
        let job: Job = read_json(job_path)?;
        let file = File::open(&job.delta).map_err(|e| format!("{}: {e}", job.delta.display()))?;
        let delta =
            BayesCounters::read_checkpoint(BufReader::new(file)).map_err(|e| e.to_string())?;
        let metrics: Metrics = read_json(&job.metrics)?;
        Ok(WorkerResult {
            worker: job.task.worker,
            delta,
            metrics,
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl RoundExecutor for ProcessExecutor {
    fn run_round(
        &self,
        tasks: &[WorkerTask],
        ctx: RoundContext<'_>,
    ) -> Result<Vec<WorkerResult>, WorkerFailure> {
        let fail = |worker: usize, reason: String| WorkerFailure { worker, reason };
        let jobs = self
            .prepare(tasks, ctx)
            .map_err(|e| fail(tasks.first().map_or(0, |t| t.worker), e))?;
        let mut children: Vec<(usize, Child)> = Vec::with_capacity(jobs.len());
        for (task, job) in tasks.iter().zip(&jobs) {
            let child = Command::new(&self.exe)
                .arg("worker")
                .arg("--job")
                .arg(job)
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::piped())
                .spawn()
                .map_err(|e| fail(task.worker, e.to_string()));
            match child {
                Ok(c) => children.push((task.worker, c)),
                Err(e) => {
                    for (_, mut c) in children {
                        let _ = c.kill();
                        let _ = c.wait();
                    }
                    return Err(e);
                }
            }
        }
        let mut first_failure = None;
        for (worker, child) in children {
            match child.wait_with_output() {
                Ok(out) if out.status.success() => {}
                Ok(out) => {
                    let reason = String::from_utf8_lossy(&out.stderr).trim().to_owned();
                    first_failure.get_or_insert(fail(worker, format!("{}: {reason}", out.status)));
                }
                Err(e) => {
                    first_failure.get_or_insert(fail(worker, e.to_string()));
                }
            }
        }
        if let Some(f) = first_failure {
            return Err(f);
        }
        tasks
            .iter()
            .zip(&jobs)
            .map(|(t, job)| Self::collect(job).map_err(|e| fail(t.worker, e)))
            .collect()
    }
}

/// Body of the hidden `worker` subcommand.
pub fn run_job(job_path: &Path) -> Result<(), String> {
    let job: Job = read_json(job_path)?;
    let topology = Topology::from_file(job.topology).map_err(|e| e.to_string())?;
    let traffic = TrafficMatrix::new(job.loads).map_err(|e| e.to_string())?;
    let scenario = Scenario::new(topology, traffic).map_err(|e| e.to_string())?;
    let catalog =
        enumerate_routes(&scenario.topology, job.config.hop_bound).map_err(|e| e.to_string())?;
    let file = File::open(&job.counters).map_err(|e| format!("{}: {e}", job.counters.display()))?;
    let global = BayesCounters::read_checkpoint(BufReader::new(file)).map_err(|e| e.to_string())?;
    let ctx = RoundContext {
        config: &job.config,
        scenario: &scenario,
        catalog: &catalog,
        global: &global,
    };
    let result = run_worker(&job.task, ctx).map_err(|e| e.to_string())?;
    let out = File::create(&job.delta).map_err(|e| e.to_string())?;
    result
        .delta
        .write_checkpoint(BufWriter::new(out))
        .map_err(|e| e.to_string())?;
    let text = serde_json::to_string(&result.metrics).map_err(|e| e.to_string())?;
    std::fs::write(&job.metrics, text).map_err(|e| e.to_string())?;
    Ok(())
}
