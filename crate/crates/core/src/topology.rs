//! Network graph, link capacities and the offline route catalog.
//!
//! Node pairs are unordered. Pair `p` joins nodes `(a, b)` with `a < b`, and
//! every route of that pair is stored as the link sequence walked from `a`
//! to `b`. Pairs are numbered in lexicographic `(a, b)` order.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Occupancy;

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                Self(i as u32)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

index_type!(
    /// Dense node index in file order.
    NodeId
);
index_type!(
    /// Dense link index `j` in `[0, L)`.
    LinkId
);
index_type!(
    /// Unordered node-pair index in `[0, m)`.
    PairId
);

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("malformed topology file at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("topology needs at least two nodes, found {0}")]
    TooFewNodes(usize),
    #[error("nodes[{index}]: duplicate node name {name:?}")]
    DuplicateNode { index: usize, name: String },
    #[error("links[{position}].id: expected {position}, found {found} (ids must be 0..L-1 in file order)")]
    LinkIdOutOfOrder { position: usize, found: u32 },
    #[error("links[{position}].id: duplicate link id {id}")]
    DuplicateLinkId { position: usize, id: u32 },
    #[error("links[{position}].{field}: unknown node {name:?}")]
    DanglingNode {
        position: usize,
        field: &'static str,
        name: String,
    },
    #[error("links[{position}]: both endpoints are {name:?}")]
    SelfLoop { position: usize, name: String },
    #[error("links[{position}]: parallel to links[{other}] between {a:?} and {b:?}")]
    ParallelLink {
        position: usize,
        other: usize,
        a: String,
        b: String,
    },
    #[error("links[{position}].capacity: must be at least 1")]
    ZeroCapacity { position: usize },
    #[error("graph is disconnected: no path between {a:?} and {b:?}")]
    Disconnected { a: String, b: String },
    #[error("expected {expected} capacities, got {found}")]
    CapacityCount { expected: usize, found: usize },
    #[error(
        "hop bound {bound} leaves pair {pair} without a route (shortest path has {shortest} hops)"
    )]
    HopBoundTooSmall {
        pair: String,
        shortest: usize,
        bound: usize,
    },
}

/// A bidirectional link with a fixed number of capacity units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: u32,
}

impl Link {
    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// On-disk topology layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub nodes: Vec<String>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub id: u32,
    pub a: String,
    pub b: String,
    pub capacity: u32,
}

/// Integer link costs proportional to utilization `U_j / W_j`.
///
/// Costs are `U_j * (lcm(W) / W_j)`, which is exact, whenever the lcm keeps
/// every path sum inside `u64`. Otherwise utilization is quantized to 2^40
/// steps. Either way the Dijkstra search and the catalog scan share one
/// integer metric, so they agree on ties.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LoadCost {
    per_unit: Vec<u64>,
    exact: bool,
}

impl LoadCost {
    fn new(capacities: &[u32]) -> Self {
        let lcm = capacities.iter().try_fold(1u128, |acc, &w| {
            let w = w as u128;
            let l = acc / gcd(acc, w) * w;
            (l <= u64::MAX as u128).then_some(l)
        });
        let headroom = (capacities.len() as u128).max(1);
        match lcm {
            Some(l) if l * headroom <= u64::MAX as u128 => Self {
                per_unit: capacities.iter().map(|&w| (l / w as u128) as u64).collect(),
                exact: true,
            },
            _ => Self {
                per_unit: capacities
                    .iter()
                    .map(|&w| ((1u64 << 40) as f64 / w as f64).round() as u64)
                    .collect(),
                exact: false,
            },
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Network graph with per-link capacities.
#[derive(Debug, Clone)]
pub struct Topology {
    name: Option<String>,
    note: Option<String>,
    nodes: Vec<String>,
    links: Vec<Link>,
    adjacency: Vec<Vec<LinkId>>,
    pairs: Vec<(NodeId, NodeId)>,
    pair_lookup: Vec<u32>,
    cost: LoadCost,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.links == other.links
    }
}

impl Topology {
    /// Parses the JSON topology format.
    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = serde_json::from_str(text).map_err(|e| TopologyError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: TopologyFile) -> Result<Self, TopologyError> {
        if file.nodes.len() < 2 {
            return Err(TopologyError::TooFewNodes(file.nodes.len()));
        }
        let mut index = HashMap::with_capacity(file.nodes.len());
        for (i, name) in file.nodes.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(TopologyError::DuplicateNode {
                    index: i,
                    name: name.clone(),
                });
            }
        }
        let mut seen_ids = vec![false; file.links.len()];
        let mut endpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut links = Vec::with_capacity(file.links.len());
        for (position, rec) in file.links.iter().enumerate() {
            if (rec.id as usize) < seen_ids.len() && seen_ids[rec.id as usize] {
                return Err(TopologyError::DuplicateLinkId {
                    position,
                    id: rec.id,
                });
            }
            if rec.id as usize != position {
                return Err(TopologyError::LinkIdOutOfOrder {
                    position,
                    found: rec.id,
                });
            }
            seen_ids[position] = true;
            let lookup = |field: &'static str, name: &str| {
                index
                    .get(name)
                    .copied()
                    .ok_or_else(|| TopologyError::DanglingNode {
                        position,
                        field,
                        name: name.to_owned(),
                    })
            };
            let a = lookup("a", &rec.a)?;
            let b = lookup("b", &rec.b)?;
            if a == b {
                return Err(TopologyError::SelfLoop {
                    position,
                    name: rec.a.clone(),
                });
            }
            if rec.capacity == 0 {
                return Err(TopologyError::ZeroCapacity { position });
            }
            if let Some(&other) = endpoints.get(&(a.min(b), a.max(b))) {
                return Err(TopologyError::ParallelLink {
                    position,
                    other,
                    a: rec.a.clone(),
                    b: rec.b.clone(),
                });
            }
            endpoints.insert((a.min(b), a.max(b)), position);
            links.push(Link {
                id: LinkId::from(position),
                a: NodeId::from(a),
                b: NodeId::from(b),
                capacity: rec.capacity,
            });
        }
        Self::assemble(file.name, file.note, file.nodes, links)
    }

    /// Builds a topology from `(a, b, capacity)` triples over nodes `0..names.len()`.
    pub fn from_edges<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        edges: &[(usize, usize, u32)],
    ) -> Result<Self, TopologyError> {
        let nodes: Vec<String> = names.into_iter().map(Into::into).collect();
        let links = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b, capacity))| LinkRecord {
                id: i as u32,
                a: nodes.get(a).cloned().unwrap_or_else(|| format!("#{a}")),
                b: nodes.get(b).cloned().unwrap_or_else(|| format!("#{b}")),
                capacity,
            })
            .collect();
        Self::from_file(TopologyFile {
            name: None,
            note: None,
            nodes,
            links,
        })
    }

    fn assemble(
        name: Option<String>,
        note: Option<String>,
        nodes: Vec<String>,
        links: Vec<Link>,
    ) -> Result<Self, TopologyError> {
        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for link in &links {
            adjacency[link.a.index()].push(link.id);
            adjacency[link.b.index()].push(link.id);
        }
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        let mut pair_lookup = vec![u32::MAX; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let p = pairs.len() as u32;
                pair_lookup[a * n + b] = p;
                pair_lookup[b * n + a] = p;
                pairs.push((NodeId::from(a), NodeId::from(b)));
            }
        }
        let cost = LoadCost::new(&links.iter().map(|l| l.capacity).collect::<Vec<_>>());
        let topo = Self {
            name,
            note,
            nodes,
            links,
            adjacency,
            pairs,
            pair_lookup,
            cost,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &l in &self.adjacency[v] {
                let w = self.links[l.index()].other(NodeId::from(v)).index();
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            None => Ok(()),
            Some(w) => Err(TopologyError::Disconnected {
                a: self.nodes[0].clone(),
                b: self.nodes[w].clone(),
            }),
        }
    }

    /// Same graph with new capacities.
    pub fn with_capacities(&self, capacities: &[u32]) -> Result<Self, TopologyError> {
        if capacities.len() != self.links.len() {
            return Err(TopologyError::CapacityCount {
                expected: self.links.len(),
                found: capacities.len(),
            });
        }
        if let Some(position) = capacities.iter().position(|&w| w == 0) {
            return Err(TopologyError::ZeroCapacity { position });
        }
        let mut topo = self.clone();
        for (link, &w) in topo.links.iter_mut().zip(capacities) {
            link.capacity = w;
        }
        topo.cost = LoadCost::new(capacities);
        Ok(topo)
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            name: self.name.clone(),
            note: self.note.clone(),
            nodes: self.nodes.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkRecord {
                    id: l.id.0,
                    a: self.nodes[l.a.index()].clone(),
                    b: self.nodes[l.b.index()].clone(),
                    capacity: l.capacity,
                })
                .collect(),
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Number of unordered node pairs, `m`.
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.nodes[node.index()]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n == name).map(NodeId::from)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn capacity(&self, id: LinkId) -> u32 {
        self.links[id.index()].capacity
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    /// Links incident to `node`, in ascending id order.
    pub fn incident(&self, node: NodeId) -> &[LinkId] {
        &self.adjacency[node.index()]
    }

    pub fn pair(&self, a: NodeId, b: NodeId) -> Option<PairId> {
        let n = self.nodes.len();
        let p = *self.pair_lookup.get(a.index() * n + b.index())?;
        (p != u32::MAX).then_some(PairId(p))
    }

    /// Endpoints `(a, b)` with `a < b`.
    pub fn pair_nodes(&self, pair: PairId) -> (NodeId, NodeId) {
        self.pairs[pair.index()]
    }

    pub fn pair_label(&self, pair: PairId) -> String {
        let (a, b) = self.pair_nodes(pair);
        format!("{}-{}", self.node_name(a), self.node_name(b))
    }

    pub fn pair_ids(&self) -> impl Iterator<Item = PairId> + '_ {
        (0..self.pairs.len()).map(PairId::from)
    }

    /// Integer cost of the `used` busy units on `link`, on the shared LL scale.
    #[inline]
    pub fn load_cost(&self, link: LinkId, used: u32) -> u64 {
        used as u64 * self.cost.per_unit[link.index()]
    }

    /// Whether [`Topology::load_cost`] is an exact rescaling of `U/W`.
    pub fn load_cost_is_exact(&self) -> bool {
        self.cost.exact
    }

    /// Checks that `route` is a contiguous simple path between its pair's endpoints.
    pub fn is_valid_route(&self, route: &Route) -> bool {
        if route.pair.index() >= self.pairs.len() || route.links.is_empty() {
            return false;
        }
        let (a, b) = self.pair_nodes(route.pair);
        let mut visited = vec![false; self.nodes.len()];
        let mut at = a;
        visited[at.index()] = true;
        for &l in &route.links {
            let Some(link) = self.links.get(l.index()) else {
                return false;
            };
            if link.a != at && link.b != at {
                return false;
            }
            at = link.other(at);
            if visited[at.index()] {
                return false;
            }
            visited[at.index()] = true;
        }
        at == b
    }
}

/// A simple path between the endpoints of `pair`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    pub pair: PairId,
    pub links: Vec<LinkId>,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

/// Every candidate route per node pair, sorted by hops then by link list.
#[derive(Debug, Clone)]
pub struct RouteCatalog {
    routes: Vec<Vec<Route>>,
    hop_bound: Option<usize>,
    endpoints: Vec<(NodeId, NodeId)>,
    num_nodes: usize,
}

impl RouteCatalog {
    pub fn routes(&self, pair: PairId) -> &[Route] {
        &self.routes[pair.index()]
    }

    pub fn shortest_hops(&self, pair: PairId) -> usize {
        self.routes[pair.index()][0].hops()
    }

    pub fn hop_bound(&self) -> Option<usize> {
        self.hop_bound
    }

    pub fn num_pairs(&self) -> usize {
        self.routes.len()
    }

    pub fn total_routes(&self) -> usize {
        self.routes.iter().map(Vec::len).sum()
    }

    /// True when the catalog was enumerated on a graph with the same nodes and links.
    pub fn matches(&self, topo: &Topology) -> bool {
        self.num_nodes == topo.num_nodes()
            && self.endpoints.len() == topo.num_links()
            && self
                .endpoints
                .iter()
                .zip(topo.links())
                .all(|(&(a, b), l)| a == l.a && b == l.b)
    }
}

/// Enumerates every simple path of at most `hop_bound` hops (unbounded when `None`).
pub fn enumerate_routes(
    topo: &Topology,
    hop_bound: Option<usize>,
) -> Result<RouteCatalog, TopologyError> {
    let n = topo.num_nodes();
    let limit = hop_bound.unwrap_or(n - 1).min(n - 1);
    let mut routes: Vec<Vec<Route>> = vec![Vec::new(); topo.num_pairs()];
    let mut visited = vec![false; n];
    let mut path = Vec::with_capacity(limit);
    for src in 0..n {
        let src = NodeId::from(src);
        visited[src.index()] = true;
        collect_paths(topo, src, src, limit, &mut visited, &mut path, &mut routes);
        visited[src.index()] = false;
    }
    for list in &mut routes {
        list.sort_by(|x, y| x.hops().cmp(&y.hops()).then_with(|| x.links.cmp(&y.links)));
    }
    if let Some(bound) = hop_bound {
        if let Some(p) = routes.iter().position(Vec::is_empty) {
            let pair = PairId::from(p);
            let full = enumerate_routes(topo, None)?;
            return Err(TopologyError::HopBoundTooSmall {
                pair: topo.pair_label(pair),
                shortest: full.shortest_hops(pair),
                bound,
            });
        }
    }
    Ok(RouteCatalog {
        routes,
        hop_bound,
        endpoints: topo.links().iter().map(|l| (l.a, l.b)).collect(),
        num_nodes: n,
    })
}

fn collect_paths(
    topo: &Topology,
    src: NodeId,
    at: NodeId,
    limit: usize,
    visited: &mut [bool],
    path: &mut Vec<LinkId>,
    out: &mut [Vec<Route>],
) {
    if path.len() == limit {
        return;
    }
    for &l in topo.incident(at) {
        let next = topo.link(l).other(at);
        if visited[next.index()] {
            continue;
        }
        path.push(l);
        // Paths are stored once, walked from the lower-numbered endpoint.
        if next > src {
            let pair = topo.pair(src, next).expect("distinct nodes form a pair");
            out[pair.index()].push(Route {
                pair,
                links: path.clone(),
            });
        }
        visited[next.index()] = true;
        collect_paths(topo, src, next, limit, visited, path, out);
        visited[next.index()] = false;
        path.pop();
    }
}

/// Sum of `U_i / W_i + alpha` over the route's links. `alpha = 0` is the plain LL cost.
pub fn route_sum_load(route: &Route, occ: &Occupancy, topo: &Topology, alpha: f64) -> f64 {
    route
        .links
        .iter()
        .map(|&l| occ.used(l) as f64 / topo.capacity(l) as f64 + alpha)
        .sum()
}

/// The route's LL cost on the integer scale of [`Topology::load_cost`].
pub fn route_load_cost(route: &Route, occ: &Occupancy, topo: &Topology) -> u64 {
    route
        .links
        .iter()
        .map(|&l| topo.load_cost(l, occ.used(l)))
        .sum()
}

/// Hops beyond the pair's topological shortest path.
pub fn extra_hops(route: &Route, catalog: &RouteCatalog) -> usize {
    route.hops() - catalog.shortest_hops(route.pair)
}
