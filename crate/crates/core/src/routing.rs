//! Route-selection policies.
//!
//! Ties are always broken by fewest hops, then by the lexicographic link
//! list, which is exactly the catalog order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Occupancy;
use crate::learner::BayesCounters;
use crate::topology::{
    extra_hops, route_load_cost, route_sum_load, LinkId, PairId, Route, RouteCatalog, Topology,
};

/// Maximum extra hops allowed by the hop-limited LL policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HopLimit {
    Finite(usize),
    Unbounded,
}

impl HopLimit {
    pub fn allows(self, extra: usize) -> bool {
        match self {
            HopLimit::Finite(d) => extra <= d,
            HopLimit::Unbounded => true,
        }
    }
}

impl fmt::Display for HopLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopLimit::Finite(d) => write!(f, "{d}"),
            HopLimit::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for HopLimit {
    type Err = PolicyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "∞" => Ok(HopLimit::Unbounded),
            _ => s
                .parse()
                .map(HopLimit::Finite)
                .map_err(|_| PolicyParseError(format!("bad hop limit {s:?}"))),
        }
    }
}

// In JSON a hop limit is a number or the string "inf".
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HopLimitRepr {
    Finite(usize),
    Named(String),
}

impl Serialize for HopLimit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            HopLimit::Finite(d) => HopLimitRepr::Finite(d),
            HopLimit::Unbounded => HopLimitRepr::Named("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HopLimit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match HopLimitRepr::deserialize(d)? {
            HopLimitRepr::Finite(n) => Ok(HopLimit::Finite(n)),
            HopLimitRepr::Named(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    /// Adaptive shortest path: fewest hops among routes with free capacity.
    ShortestPath,
    /// Least loaded: minimum summed utilization over the residual graph.
    LeastLoaded,
    /// Least loaded restricted to routes at most `Δ` hops above shortest.
    LeastLoadedHopLimit(HopLimit),
    /// Least loaded weighted by the predicted network-wide blocking score.
    NaiveBayesLeastLoaded,
}

#[derive(Debug, Clone, Error)]
#[error("{0} (expected sp | ll | ll-hoplimit:<n|inf> | nb-ll)")]
pub struct PolicyParseError(String);

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::ShortestPath => f.write_str("sp"),
            Policy::LeastLoaded => f.write_str("ll"),
            Policy::LeastLoadedHopLimit(d) => write!(f, "ll-hoplimit:{d}"),
            Policy::NaiveBayesLeastLoaded => f.write_str("nb-ll"),
        }
    }
}

impl FromStr for Policy {
    type Err = PolicyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sp" => Ok(Policy::ShortestPath),
            "ll" => Ok(Policy::LeastLoaded),
            "nb-ll" => Ok(Policy::NaiveBayesLeastLoaded),
            _ => match s.strip_prefix("ll-hoplimit:") {
                Some(d) => Ok(Policy::LeastLoadedHopLimit(d.parse()?)),
                None => Err(PolicyParseError(format!("unknown policy {s:?}"))),
            },
        }
    }
}

impl TryFrom<String> for Policy {
    type Error = PolicyParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Selected(Route),
    Blocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub outcome: Outcome,
    /// Policy-specific cost of the chosen route; `NaN` when blocked.
    pub score: f64,
    pub candidates_evaluated: usize,
}

impl PolicyDecision {
    fn blocked(candidates_evaluated: usize) -> Self {
        Self {
            outcome: Outcome::Blocked,
            score: f64::NAN,
            candidates_evaluated,
        }
    }

    pub fn route(&self) -> Option<&Route> {
        match &self.outcome {
            Outcome::Selected(r) => Some(r),
            Outcome::Blocked => None,
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self.outcome, Outcome::Blocked)
    }
}

#[inline]
fn has_room(route: &Route, occ: &Occupancy, topo: &Topology) -> bool {
    route.links.iter().all(|&l| occ.used(l) < topo.capacity(l))
}

/// Catalog routes of `pair` whose every link has a free unit, in catalog order.
pub fn eligible_routes<'c>(
    catalog: &'c RouteCatalog,
    pair: PairId,
    occ: &Occupancy,
    topo: &Topology,
) -> Vec<&'c Route> {
    catalog
        .routes(pair)
        .iter()
        .filter(|r| has_room(r, occ, topo))
        .collect()
}

/// First eligible route; the catalog is already sorted by hops.
pub fn select_sp(eligible: &[&Route]) -> PolicyDecision {
    match eligible.first() {
        Some(r) => PolicyDecision {
            outcome: Outcome::Selected((*r).clone()),
            score: r.hops() as f64,
            candidates_evaluated: eligible.len(),
        },
        None => PolicyDecision::blocked(0),
    }
}

/// Dijkstra over the residual graph with link cost `U_j / W_j`.
///
/// Labels are `(cost, hops)` on the integer cost scale, computed toward the
/// destination. The route is then walked from the source taking, at every
/// node, the lowest-numbered link that stays on an optimal path, which
/// yields the lexicographically smallest optimal link list.
pub fn select_ll(topo: &Topology, occ: &Occupancy, pair: PairId) -> PolicyDecision {
    let (src, dst) = topo.pair_nodes(pair);
    let open = |l: LinkId| occ.used(l) < topo.capacity(l);
    let mut dist = vec![(u64::MAX, usize::MAX); topo.num_nodes()];
    let mut heap = BinaryHeap::new();
    dist[dst.index()] = (0, 0);
    heap.push(Reverse((0u64, 0usize, dst)));
    let mut settled = 0;
    while let Some(Reverse((cost, hops, v))) = heap.pop() {
        if (cost, hops) > dist[v.index()] {
            continue;
        }
        settled += 1;
        for &l in topo.incident(v) {
            if !open(l) {
                continue;
            }
            let w = topo.link(l).other(v);
            let next = (cost + topo.load_cost(l, occ.used(l)), hops + 1);
            if next < dist[w.index()] {
                dist[w.index()] = next;
                heap.push(Reverse((next.0, next.1, w)));
            }
        }
    }
    if dist[src.index()].0 == u64::MAX {
        return PolicyDecision::blocked(settled);
    }
    let mut links = Vec::with_capacity(dist[src.index()].1);
    let mut at = src;
    while at != dst {
        let here = dist[at.index()];
        let step = topo
            .incident(at)
            .iter()
            .copied()
            .find(|&l| {
                if !open(l) {
                    return false;
                }
                let there = dist[topo.link(l).other(at).index()];
                there.0 != u64::MAX
                    && (there.0 + topo.load_cost(l, occ.used(l)), there.1 + 1) == here
            })
            .expect("optimal label has an optimal successor");
        links.push(step);
        at = topo.link(step).other(at);
    }
    let route = Route { pair, links };
    PolicyDecision {
        score: route_sum_load(&route, occ, topo, 0.0),
        outcome: Outcome::Selected(route),
        candidates_evaluated: settled,
    }
}

/// Least-loaded choice among eligible routes within `limit` extra hops.
pub fn select_ll_hoplimit(
    eligible: &[&Route],
    catalog: &RouteCatalog,
    limit: HopLimit,
    occ: &Occupancy,
    topo: &Topology,
) -> PolicyDecision {
    let mut best: Option<(&Route, u64)> = None;
    let mut evaluated = 0;
    for &r in eligible {
        if !limit.allows(extra_hops(r, catalog)) {
            continue;
        }
        evaluated += 1;
        let cost = route_load_cost(r, occ, topo);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((r, cost));
        }
    }
    match best {
        Some((r, _)) => PolicyDecision {
            outcome: Outcome::Selected(r.clone()),
            score: route_sum_load(r, occ, topo, 0.0),
            candidates_evaluated: evaluated,
        },
        None => PolicyDecision::blocked(evaluated),
    }
}

/// Reusable per-link tables for [`select_nb_ll`].
#[derive(Debug, Default, Clone)]
pub struct NbScratch {
    /// Log ratio at the current occupancy.
    current: Vec<f64>,
    /// Log ratio with one more unit busy minus `current`.
    bump: Vec<f64>,
    utilization: Vec<f64>,
}

impl NbScratch {
    fn fill(&mut self, occ: &Occupancy, topo: &Topology, learner: &BayesCounters, alpha: f64) {
        let n = topo.num_links();
        self.current.clear();
        self.bump.clear();
        self.utilization.clear();
        for j in 0..n {
            let l = LinkId::from(j);
            let u = occ.used(l);
            let w = topo.capacity(l);
            let cur = learner.link_log_ratio(l, u);
            self.current.push(cur);
            self.bump.push(if u < w {
                learner.link_log_ratio(l, u + 1) - cur
            } else {
                f64::NAN
            });
            self.utilization.push(u as f64 / w as f64 + alpha);
        }
    }
}

/// Route minimizing `BP_net(S_c + r) * sum_load(r)`.
///
/// `BP_net(S)` factors as `P(Y=1) * prod_j ratio_j(U_j) * mixture`, and only
/// the route's own links change between candidates, so each candidate costs
/// one pass over its links. The common factor is dropped while ranking and
/// restored for the reported score.
pub fn select_nb_ll(
    eligible: &[&Route],
    occ: &Occupancy,
    topo: &Topology,
    learner: &BayesCounters,
    alpha: f64,
) -> PolicyDecision {
    select_nb_ll_with(
        &mut NbScratch::default(),
        eligible,
        occ,
        topo,
        learner,
        alpha,
    )
}

pub fn select_nb_ll_with(
    scratch: &mut NbScratch,
    eligible: &[&Route],
    occ: &Occupancy,
    topo: &Topology,
    learner: &BayesCounters,
    alpha: f64,
) -> PolicyDecision {
    if eligible.is_empty() {
        return PolicyDecision::blocked(0);
    }
    scratch.fill(occ, topo, learner, alpha);
    let mut best: Option<(&Route, f64, f64, f64)> = None;
    for &r in eligible {
        let mut delta = 0.0;
        let mut load = 0.0;
        for &l in &r.links {
            delta += scratch.bump[l.index()];
            load += scratch.utilization[l.index()];
        }
        let relative = delta.exp() * load;
        if best.is_none_or(|(_, rel, _, _)| relative < rel) {
            best = Some((r, relative, delta, load));
        }
    }
    let (route, _, delta, load) = best.expect("eligible is nonempty");
    let base = learner.p_block_prior().ln() + scratch.current.iter().sum::<f64>();
    PolicyDecision {
        outcome: Outcome::Selected(route.clone()),
        score: (base + delta).exp() * learner.pair_mixture() * load,
        candidates_evaluated: eligible.len(),
    }
}

/// Dispatches a [`Policy`] with reusable scratch space.
#[derive(Debug, Clone)]
pub struct Router<'a> {
    topo: &'a Topology,
    catalog: &'a RouteCatalog,
    policy: Policy,
    alpha: f64,
    scratch: NbScratch,
    eligible: Vec<&'a Route>,
}

impl<'a> Router<'a> {
    pub fn new(topo: &'a Topology, catalog: &'a RouteCatalog, policy: Policy, alpha: f64) -> Self {
        Self {
            topo,
            catalog,
            policy,
            alpha,
            scratch: NbScratch::default(),
            eligible: Vec::new(),
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// `learner` is required by, and only read by, the NB policy.
    pub fn decide(
        &mut self,
        pair: PairId,
        occ: &Occupancy,
        learner: Option<&BayesCounters>,
    ) -> PolicyDecision {
        if self.policy == Policy::LeastLoaded {
            return select_ll(self.topo, occ, pair);
        }
        let topo = self.topo;
        self.eligible.clear();
        self.eligible.extend(
            self.catalog
                .routes(pair)
                .iter()
                .filter(|r| has_room(r, occ, topo)),
        );
        match self.policy {
            Policy::ShortestPath => select_sp(&self.eligible),
            Policy::LeastLoadedHopLimit(limit) => {
                select_ll_hoplimit(&self.eligible, self.catalog, limit, occ, topo)
            }
            Policy::NaiveBayesLeastLoaded => select_nb_ll_with(
                &mut self.scratch,
                &self.eligible,
                occ,
                topo,
                learner.expect("nb-ll routing needs a learner"),
                self.alpha,
            ),
            Policy::LeastLoaded => unreachable!(),
        }
    }
}
