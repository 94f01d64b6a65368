//! Circuit-switched network simulation with least-loaded and
//! naive-Bayes-assisted routing.
//!
//! [`topology`] loads networks and enumerates simple routes, [`engine`]
//! runs the discrete-event simulation, [`routing`] holds the route
//! selection policies, [`learner`] keeps the blocking statistics behind
//! NB-LL, [`parallel`] splits learning runs into rounds of independent
//! workers whose counters are merged between rounds, and [`harness`] runs
//! sweeps and writes result files.

pub mod engine;
pub mod harness;
pub mod learner;
pub mod parallel;
pub mod rng;
pub mod routing;
pub mod topology;

pub use engine::{
    run_simulation, sample_scenario, Metrics, Occupancy, Scenario, SimConfig, SimError, SimOutput,
    TrafficMatrix,
};
pub use learner::{BayesCounters, LearnerError, Prediction};
pub use parallel::{
    plan_rounds, run_parallel_learning, ParallelError, ParallelOutput, RoundExecutor, RoundPlan,
    ThreadExecutor, WorkerResult,
};
pub use routing::{HopLimit, Outcome, Policy, PolicyDecision, Router};
pub use topology::{
    enumerate_routes, LinkId, NodeId, PairId, Route, RouteCatalog, Topology, TopologyError,
};
