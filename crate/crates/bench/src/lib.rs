//! Fixtures shared by the benchmarks.

use nbroute_core::engine::{run_simulation, sample_scenario};
use nbroute_core::{
    enumerate_routes, BayesCounters, Policy, RouteCatalog, Scenario, SimConfig, Topology,
};

/// Reads a topology from the workspace `fixtures/` directory.
pub fn fixture(name: &str) -> Topology {
    let path = format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    Topology::from_json(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// NSFNET with sampled capacities and loads at load interval `x`.
pub fn nsfnet_scenario(policy: Policy, x: f64, events: u64) -> (SimConfig, Scenario, RouteCatalog) {
    let config = SimConfig {
        policy,
        load_interval: x,
        num_events: events,
        ..SimConfig::default()
    };
    let scenario = sample_scenario(&config, &fixture("nsfnet")).expect("valid scenario");
    let catalog = enumerate_routes(&scenario.topology, None).expect("connected topology");
    (config, scenario, catalog)
}

/// Counters after `events` NB-LL arrivals from zero.
pub fn trained_counters(
    config: &SimConfig,
    scenario: &Scenario,
    catalog: &RouteCatalog,
    events: u64,
) -> BayesCounters {
    let config = SimConfig {
        num_events: events,
        policy: Policy::NaiveBayesLeastLoaded,
        ..config.clone()
    };
    let zero = BayesCounters::for_topology(&scenario.topology);
    run_simulation(&config, scenario, catalog, Some(zero))
        .expect("simulation runs")
        .learner
        .expect("nb-ll keeps its counters")
}
