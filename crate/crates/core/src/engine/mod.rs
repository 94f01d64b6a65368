//! Discrete-event simulation of a circuit-switched network.
//!
//! Each node pair offers an independent Poisson stream of requests; every
//! accepted request holds one capacity unit on each link of its route for an
//! exponentially distributed time with unit mean. Interarrival and holding
//! times come from per-pair streams keyed by `(seed, pair)`, and a holding
//! time is drawn for every arrival whether or not it is admitted, so the
//! offered traffic is identical for every policy run on the same seed.

mod event;
mod metrics;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{Event, EventKind, EventQueue};
pub use metrics::{Metrics, WindowSample};

use crate::learner::{BayesCounters, LearnerError};
use crate::rng::{StreamRng, TAG_ARRIVAL, TAG_HOLDING, TAG_SCENARIO};
use crate::routing::{Outcome, Policy, PolicyDecision, Router};
use crate::topology::{extra_hops, LinkId, PairId, Route, RouteCatalog, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("policy {0} requires a learner")]
    LearnerRequired(Policy),
    #[error("policy {0} does not use a learner")]
    LearnerNotExpected(Policy),
    #[error("route catalog was built for a different topology")]
    CatalogMismatch,
    #[error("traffic matrix has {found} entries, topology has {expected} pairs")]
    TrafficSize { expected: usize, found: usize },
    #[error("pair {pair}: offered load {load} must be positive and finite")]
    InvalidLoad { pair: usize, load: f64 },
    #[error("no live connection with id {0}")]
    UnknownConnection(u64),
    #[error("connection {connection}: link {link} has no busy unit to release")]
    DoubleRelease { connection: u64, link: usize },
    #[error("link {0} is already full")]
    CapacityExceeded(usize),
    #[error("link {link}: occupancy {used} but live connections hold {expected}")]
    Conservation {
        link: usize,
        used: u32,
        expected: u32,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Busy capacity units per link: the network snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Occupancy {
    used: Vec<u32>,
}

impl Occupancy {
    pub fn new(num_links: usize) -> Self {
        Self {
            used: vec![0; num_links],
        }
    }

    pub fn from_used(used: Vec<u32>) -> Self {
        Self { used }
    }

    #[inline]
    pub fn used(&self, link: LinkId) -> u32 {
        self.used[link.index()]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.used
    }

    pub fn len(&self) -> usize {
        self.used.len()
    }

    pub fn is_empty(&self) -> bool {
        self.used.is_empty()
    }

    pub fn is_valid_for(&self, topo: &Topology) -> bool {
        self.used.len() == topo.num_links()
            && self
                .used
                .iter()
                .zip(topo.links())
                .all(|(&u, l)| u <= l.capacity)
    }

    /// Takes one unit on every link of `route`.
    pub fn occupy(&mut self, route: &Route, topo: &Topology) -> Result<(), SimError> {
        if let Some(&l) = route
            .links
            .iter()
            .find(|&&l| self.used(l) >= topo.capacity(l))
        {
            return Err(SimError::CapacityExceeded(l.index()));
        }
        for &l in &route.links {
            self.used[l.index()] += 1;
        }
        Ok(())
    }
}

/// Offered load per pair, in erlang (mean holding time is one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrafficMatrix {
    loads: Vec<f64>,
}

impl TrafficMatrix {
    pub fn new(loads: Vec<f64>) -> Result<Self, SimError> {
        if let Some((pair, &load)) = loads
            .iter()
            .enumerate()
            .find(|(_, &l)| !(l > 0.0 && l.is_finite()))
        {
            return Err(SimError::InvalidLoad { pair, load });
        }
        Ok(Self { loads })
    }

    pub fn uniform(num_pairs: usize, load: f64) -> Result<Self, SimError> {
        Self::new(vec![load; num_pairs])
    }

    pub fn load(&self, pair: PairId) -> f64 {
        self.loads[pair.index()]
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn total(&self) -> f64 {
        self.loads.iter().sum()
    }
}

/// A network with concrete capacities and offered traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub traffic: TrafficMatrix,
}

impl Scenario {
    pub fn new(topology: Topology, traffic: TrafficMatrix) -> Result<Self, SimError> {
        if traffic.loads.len() != topology.num_pairs() {
            return Err(SimError::TrafficSize {
                expected: topology.num_pairs(),
                found: traffic.loads.len(),
            });
        }
        Ok(Self { topology, traffic })
    }
}

fn default_window() -> u64 {
    100_000
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seeds the per-pair arrival and holding streams.
    pub seed: u64,
    /// Seeds capacities and loads; falls back to `seed`.
    pub scenario_seed: Option<u64>,
    /// Number of arrivals to process.
    pub num_events: u64,
    pub policy: Policy,
    /// Inclusive range for link capacities.
    pub capacity_range: [u32; 2],
    /// Lower end of the per-pair load range.
    pub load_base: f64,
    /// Width `X` of the per-pair load range `[load_base, load_base + X]`.
    pub load_interval: f64,
    /// Utilization offset in the NB-LL route cost.
    pub alpha: f64,
    /// Arrivals per blocking-probability sample.
    #[serde(default = "default_window")]
    pub window: u64,
    /// Longest catalog route; unbounded when absent.
    pub hop_bound: Option<usize>,
    /// Keep every arrival's snapshot and outcome.
    pub snapshot_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario_seed: None,
            num_events: 1_000_000,
            policy: Policy::LeastLoaded,
            capacity_range: [5, 27],
            load_base: 0.45,
            load_interval: 0.15,
            alpha: 1e-6,
            window: default_window(),
            hop_bound: None,
            snapshot_log: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidConfig(msg));
        let [lo, hi] = self.capacity_range;
        if self.num_events == 0 {
            return fail("num_events must be at least 1".into());
        }
        if lo == 0 || lo > hi {
            return fail(format!(
                "capacity_range [{lo}, {hi}] must satisfy 1 <= lo <= hi"
            ));
        }
        if !(self.load_interval >= 0.0 && self.load_interval.is_finite()) {
            return fail(format!("load_interval {} must be >= 0", self.load_interval));
        }
        if !(self.load_base >= 0.0 && self.load_base.is_finite()) {
            return fail(format!("load_base {} must be >= 0", self.load_base));
        }
        if self.load_base == 0.0 && self.load_interval == 0.0 {
            return fail("offered load would be zero".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha {} must be >= 0", self.alpha));
        }
        if self.window == 0 {
            return fail("window must be at least 1".into());
        }
        Ok(())
    }

    pub fn scenario_seed(&self) -> u64 {
        self.scenario_seed.unwrap_or(self.seed)
    }
}

/// Draws capacities uniformly from `capacity_range` and per-pair loads
/// uniformly from `[load_base, load_base + X]`, in that order, from the
/// scenario stream of `scenario_seed`.
pub fn sample_scenario(config: &SimConfig, topo: &Topology) -> Result<Scenario, SimError> {
    config.validate()?;
    let mut rng = StreamRng::new(config.scenario_seed(), &[TAG_SCENARIO]);
    let [lo, hi] = config.capacity_range;
    let capacities: Vec<u32> = (0..topo.num_links())
        .map(|_| rng.uniform_int(lo as u64, hi as u64) as u32)
        .collect();
    let loads = (0..topo.num_pairs())
        .map(|_| rng.uniform_real(config.load_base, config.load_interval))
        .collect();
    Scenario::new(
        topo.with_capacities(&capacities)?,
        TrafficMatrix::new(loads)?,
    )
}

/// A request holding capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub id: u64,
    pub pair: PairId,
    pub route: Route,
    pub start: f64,
    pub departure: f64,
}

/// Returns the connection's units to the network.
pub fn release(connection: &Connection, occ: &mut Occupancy) -> Result<(), SimError> {
    if let Some(&l) = connection.route.links.iter().find(|&&l| occ.used(l) == 0) {
        return Err(SimError::DoubleRelease {
            connection: connection.id,
            link: l.index(),
        });
    }
    for &l in &connection.route.links {
        occ.used[l.index()] -= 1;
    }
    Ok(())
}

/// One arrival as seen by the learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub arrival: u64,
    pub pair: PairId,
    pub used: Vec<u32>,
    pub blocked: bool,
}

/// Writes `arrival,pair,blocked,u0,...,u{L-1}` rows.
pub fn write_snapshot_csv<W: Write>(records: &[SnapshotRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let links = records.first().map_or(0, |r| r.used.len());
    let mut header = vec![
        "arrival".to_owned(),
        "pair".to_owned(),
        "blocked".to_owned(),
    ];
    header.extend((0..links).map(|j| format!("u{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for r in records {
        let mut row = vec![
            r.arrival.to_string(),
            r.pair.to_string(),
            u8::from(r.blocked).to_string(),
        ];
        row.extend(r.used.iter().map(u32::to_string));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SimError {
    SimError::Io(std::io::Error::other(e))
}

/// What a call to [`Simulator::step`] processed.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Arrival {
        time: f64,
        pair: PairId,
        decision: PolicyDecision,
        connection: Option<u64>,
    },
    Departure {
        time: f64,
        connection: u64,
    },
}

/// Results of a finished run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub learner: Option<BayesCounters>,
    pub snapshots: Vec<SnapshotRecord>,
    pub end_time: f64,
}

/// Step-wise simulation of one run.
pub struct Simulator<'a> {
    config: &'a SimConfig,
    scenario: &'a Scenario,
    catalog: &'a RouteCatalog,
    router: Router<'a>,
    learner: Option<BayesCounters>,
    occ: Occupancy,
    live: HashMap<u64, Connection>,
    queue: EventQueue,
    arrival_rng: Vec<StreamRng>,
    holding_rng: Vec<StreamRng>,
    metrics: Metrics,
    arrivals: u64,
    now: f64,
    next_connection: u64,
    snapshots: Vec<SnapshotRecord>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        config: &'a SimConfig,
        scenario: &'a Scenario,
        catalog: &'a RouteCatalog,
        learner: Option<BayesCounters>,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let topo = &scenario.topology;
        if !catalog.matches(topo) {
            return Err(SimError::CatalogMismatch);
        }
        let wants_learner = config.policy == Policy::NaiveBayesLeastLoaded;
        match (&learner, wants_learner) {
            (None, true) => return Err(SimError::LearnerRequired(config.policy)),
            (Some(_), false) => return Err(SimError::LearnerNotExpected(config.policy)),
            (Some(l), true) if !l.matches(topo) => {
                return Err(LearnerError::TopologyMismatch.into())
            }
            _ => {}
        }
        let arrival_rng: Vec<_> = topo
            .pair_ids()
            .map(|p| StreamRng::new(config.seed, &[TAG_ARRIVAL, p.0 as u64]))
            .collect();
        let holding_rng = topo
            .pair_ids()
            .map(|p| StreamRng::new(config.seed, &[TAG_HOLDING, p.0 as u64]))
            .collect();
        let mut sim = Self {
            config,
            scenario,
            catalog,
            router: Router::new(topo, catalog, config.policy, config.alpha),
            learner,
            occ: Occupancy::new(topo.num_links()),
            live: HashMap::new(),
            queue: EventQueue::new(),
            arrival_rng,
            holding_rng,
            metrics: Metrics::new(topo.num_pairs(), config.window),
            arrivals: 0,
            now: 0.0,
            next_connection: 0,
            snapshots: Vec::new(),
        };
        for p in topo.pair_ids() {
            sim.schedule_arrival(p);
        }
        Ok(sim)
    }

    fn schedule_arrival(&mut self, pair: PairId) {
        let rate = self.scenario.traffic.load(pair);
        let t = self.now + self.arrival_rng[pair.index()].exponential(rate);
        self.queue.push(t, EventKind::Arrival(pair));
    }

    pub fn is_done(&self) -> bool {
        self.arrivals >= self.config.num_events
    }

    pub fn occupancy(&self) -> &Occupancy {
        &self.occ
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn learner(&self) -> Option<&BayesCounters> {
        self.learner.as_ref()
    }

    /// Arrivals processed so far, including any before [`Self::reset_metrics`].
    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn live_connections(&self) -> impl Iterator<Item = &Connection> {
        self.live.values()
    }

    /// Processes the next event, or returns `None` once `num_events` arrivals are done.
    pub fn step(&mut self) -> Result<Option<Step>, SimError> {
        if self.is_done() {
            return Ok(None);
        }
        let event = self
            .queue
            .pop()
            .expect("every pair always has a pending arrival");
        self.now = event.time;
        match event.kind {
            EventKind::Departure(id) => {
                self.release(id)?;
                Ok(Some(Step::Departure {
                    time: event.time,
                    connection: id,
                }))
            }
            EventKind::Arrival(pair) => self.arrive(pair).map(Some),
        }
    }

    fn arrive(&mut self, pair: PairId) -> Result<Step, SimError> {
        let holding = self.holding_rng[pair.index()].exponential(1.0);
        let decision = self.router.decide(pair, &self.occ, self.learner.as_ref());
        let blocked = decision.is_blocked();
        // The learner sees the snapshot from before admission.
        if let Some(learner) = self.learner.as_mut() {
            learner.observe(&self.occ, pair, blocked)?;
        }
        if self.config.snapshot_log {
            self.snapshots.push(SnapshotRecord {
                arrival: self.arrivals,
                pair,
                used: self.occ.as_slice().to_vec(),
                blocked,
            });
        }
        let mut connection = None;
        match &decision.outcome {
            Outcome::Blocked => self.metrics.record(pair, None),
            Outcome::Selected(route) => {
                self.occ.occupy(route, &self.scenario.topology)?;
                let id = self.next_connection;
                self.next_connection += 1;
                let departure = self.now + holding;
                self.queue.push(departure, EventKind::Departure(id));
                self.metrics
                    .record(pair, Some(extra_hops(route, self.catalog)));
                self.live.insert(
                    id,
                    Connection {
                        id,
                        pair,
                        route: route.clone(),
                        start: self.now,
                        departure,
                    },
                );
                connection = Some(id);
            }
        }
        self.arrivals += 1;
        self.schedule_arrival(pair);
        Ok(Step::Arrival {
            time: self.now,
            pair,
            decision,
            connection,
        })
    }

    /// Starts metrics afresh; the network state and the learner are kept.
    pub fn reset_metrics(&mut self) {
        self.metrics = Metrics::new(self.scenario.topology.num_pairs(), self.config.window);
    }

    /// Ends connection `id` and frees its units.
    pub fn release(&mut self, id: u64) -> Result<(), SimError> {
        let conn = self
            .live
            .remove(&id)
            .ok_or(SimError::UnknownConnection(id))?;
        release(&conn, &mut self.occ)
    }

    /// Checks that every link's occupancy equals the live connections crossing it.
    pub fn audit(&self) -> Result<(), SimError> {
        let mut expected = vec![0u32; self.occ.len()];
        for c in self.live.values() {
            for &l in &c.route.links {
                expected[l.index()] += 1;
            }
        }
        for (j, (&used, &want)) in self.occ.as_slice().iter().zip(&expected).enumerate() {
            if used != want {
                return Err(SimError::Conservation {
                    link: j,
                    used,
                    expected: want,
                });
            }
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    pub fn finish(self) -> SimOutput {
        SimOutput {
            metrics: self.metrics,
            learner: self.learner,
            snapshots: self.snapshots,
            end_time: self.now,
        }
    }
}

/// Runs `config.num_events` arrivals. `learner` must be given exactly when the policy is NB-LL.
pub fn run_simulation(
    config: &SimConfig,
    scenario: &Scenario,
    catalog: &RouteCatalog,
    learner: Option<BayesCounters>,
) -> Result<SimOutput, SimError> {
    Simulator::new(config, scenario, catalog, learner)?.run()
}
