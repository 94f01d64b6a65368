//! Learner checks against independent recounts and direct products.

use nbroute_core::rng::StreamRng;
use nbroute_core::{BayesCounters, LinkId, NodeId, Occupancy, PairId, Topology};
use proptest::prelude::*;

fn triangle(caps: [u32; 3]) -> Topology {
    Topology::from_edges(
        ["A", "B", "C"],
        &[(0, 1, caps[0]), (1, 2, caps[1]), (2, 0, caps[2])],
    )
    .unwrap()
}

fn nsfnet() -> Topology {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/nsfnet.json"
    ))
    .unwrap();
    Topology::from_json(&text).unwrap()
}

#[derive(Debug, Clone)]
struct Arrival {
    used: Vec<u32>,
    pair: usize,
    blocked: bool,
}

fn random_log(topo: &Topology, len: usize, rng: &mut StreamRng) -> Vec<Arrival> {
    (0..len)
        .map(|_| Arrival {
            used: topo
                .links()
                .iter()
                .map(|l| rng.uniform_int(0, l.capacity as u64) as u32)
                .collect(),
            pair: rng.uniform_int(0, topo.num_pairs() as u64 - 1) as usize,
            blocked: rng.unit() < 0.3,
        })
        .collect()
}

fn replay(topo: &Topology, log: &[Arrival]) -> BayesCounters {
    let mut c = BayesCounters::for_topology(topo);
    for a in log {
        c.observe(
            &Occupancy::from_used(a.used.clone()),
            PairId(a.pair as u32),
            a.blocked,
        )
        .unwrap();
    }
    c
}

/// Eq-by-eq evaluation straight from the log, in linear space.
struct Recount<'a> {
    log: &'a [Arrival],
    caps: Vec<u32>,
    pairs: usize,
}

impl Recount<'_> {
    fn count(&self, f: impl Fn(&Arrival) -> bool) -> f64 {
        self.log.iter().filter(|a| f(a)).count() as f64
    }

    fn h(&self) -> f64 {
        self.log.len() as f64
    }

    fn b(&self) -> f64 {
        self.count(|a| a.blocked)
    }

    fn pair_bp(&self, used: &[u32], pair: usize) -> f64 {
        let (h, b, m) = (self.h(), self.b(), self.pairs as f64);
        let mut value = (b + 1.0) / (h + 2.0);
        for (j, &u) in used.iter().enumerate() {
            let w = self.caps[j] as f64;
            let given = (self.count(|a| a.blocked && a.used[j] == u) + 1.0) / (b + w + 1.0);
            let marginal = (self.count(|a| a.used[j] == u) + 1.0) / (h + w + 1.0);
            value *= given / marginal;
        }
        let given = (self.count(|a| a.blocked && a.pair == pair) + 1.0) / (b + m);
        let marginal = (self.count(|a| a.pair == pair) + 1.0) / (h + m);
        value * given / marginal
    }

    fn network_bp(&self, used: &[u32]) -> f64 {
        let (h, m) = (self.h(), self.pairs as f64);
        (0..self.pairs)
            .map(|p| (self.count(|a| a.pair == p) + 1.0) / (h + m) * self.pair_bp(used, p))
            .sum()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn incremental_counters_equal_a_recount() {
    let topo = triangle([2, 3, 4]);
    let mut rng = StreamRng::new(11, &[1]);
    for _ in 0..50 {
        let log = random_log(&topo, 40, &mut rng);
        let c = replay(&topo, &log);
        assert_eq!(c.arrivals(), log.len() as u64);
        assert_eq!(c.blocked(), log.iter().filter(|a| a.blocked).count() as u64);
        for (j, link) in topo.links().iter().enumerate() {
            for u in 0..=link.capacity {
                let total = log.iter().filter(|a| a.used[j] == u).count() as u64;
                let blocked = log.iter().filter(|a| a.blocked && a.used[j] == u).count() as u64;
                assert_eq!(c.occ_total(LinkId(j as u32))[u as usize], total);
                assert_eq!(c.occ_blocked(LinkId(j as u32))[u as usize], blocked);
            }
        }
        for p in 0..topo.num_pairs() {
            let total = log.iter().filter(|a| a.pair == p).count() as u64;
            let blocked = log.iter().filter(|a| a.blocked && a.pair == p).count() as u64;
            assert_eq!(c.pair_total(PairId(p as u32)), total);
            assert_eq!(c.pair_blocked(PairId(p as u32)), blocked);
        }
        assert!(c.is_consistent());
    }
}

#[test]
fn predictions_match_direct_products_on_random_logs() {
    let topo = triangle([3, 2, 4]);
    let mut rng = StreamRng::new(5, &[2]);
    for _ in 0..100 {
        let log = random_log(&topo, 20, &mut rng);
        let c = replay(&topo, &log);
        let oracle = Recount {
            log: &log,
            caps: topo.capacities(),
            pairs: topo.num_pairs(),
        };
        let probe = random_log(&topo, 3, &mut rng);
        for s in &probe {
            let snapshot = Occupancy::from_used(s.used.clone());
            for p in 0..topo.num_pairs() {
                let got = c
                    .predict_pair_bp(&snapshot, PairId(p as u32))
                    .unwrap()
                    .value;
                let want = oracle.pair_bp(&s.used, p);
                assert!(rel(got, want) < 1e-12, "{got} vs {want}");
            }
            let got = c.predict_network_bp(&snapshot).unwrap();
            let want = oracle.network_bp(&s.used);
            assert!(rel(got, want) < 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn hand_log_of_six_arrivals() {
    // Triangle with every capacity 2; links AB, BC, CA; pairs AB, AC, BC.
    let topo = triangle([2, 2, 2]);
    let log = [
        ([0, 0, 0], 0, false),
        ([1, 0, 0], 1, false),
        ([1, 1, 0], 2, false),
        ([2, 1, 1], 0, true),
        ([2, 2, 1], 1, true),
        ([1, 2, 2], 2, false),
    ];
    let mut c = BayesCounters::for_topology(&topo);
    for (used, pair, blocked) in log {
        c.observe(&Occupancy::from_used(used.to_vec()), PairId(pair), blocked)
            .unwrap();
    }
    // H = 6, B = 2. Snapshot (2, 1, 1) for pair AB:
    //   prior 3/8
    //   AB: u=2 blocked 2 of 2 -> (2+1)/(2+3) = 3/5; total 2 of 6 -> 3/9
    //   BC: u=1 blocked 1 -> 2/5; total 2 -> 3/9
    //   CA: u=1 blocked 2 -> 3/5; total 2 -> 3/9
    //   pair AB: blocked 1 -> 2/5; total 2 -> 3/9
    let want = 3.0 / 8.0 * (9.0 / 5.0) * (6.0 / 5.0) * (9.0 / 5.0) * (6.0 / 5.0);
    let got = c
        .predict_pair_bp(&Occupancy::from_used(vec![2, 1, 1]), PairId(0))
        .unwrap()
        .value;
    assert!(rel(got, want) < 1e-12, "{got} vs {want}");
}

fn random_state(topo: &Topology, rng: &mut StreamRng) -> BayesCounters {
    let n = rng.uniform_int(0, 300) as usize;
    replay(topo, &random_log(topo, n, rng))
}

#[test]
fn smoothed_distributions_sum_to_one() {
    let mut rng = StreamRng::new(3, &[3]);
    for topo in [triangle([5, 9, 27]), nsfnet()] {
        for _ in 0..1_000 {
            let c = random_state(&topo, &mut rng);
            for (j, link) in topo.links().iter().enumerate() {
                let l = LinkId(j as u32);
                let (mut given, mut marginal) = (0.0, 0.0);
                for u in 0..=link.capacity {
                    given += c.p_occ_given_block(l, u).unwrap();
                    marginal += c.p_occ(l, u).unwrap();
                }
                assert!((given - 1.0).abs() < 1e-12);
                assert!((marginal - 1.0).abs() < 1e-12);
                // Numerators add up to the denominators exactly.
                let w = link.capacity as u64;
                assert_eq!(
                    c.occ_blocked(l).iter().map(|x| x + 1).sum::<u64>(),
                    c.blocked() + w + 1
                );
                assert_eq!(
                    c.occ_total(l).iter().map(|x| x + 1).sum::<u64>(),
                    c.arrivals() + w + 1
                );
            }
            let (mut given, mut marginal, mut weight) = (0.0, 0.0, 0.0);
            for p in topo.pair_ids() {
                given += c.p_pair_given_block(p).unwrap();
                marginal += c.p_pair(p).unwrap();
                weight += c.traffic_weight(p).unwrap();
            }
            assert!((given - 1.0).abs() < 1e-12);
            assert!((marginal - 1.0).abs() < 1e-12);
            assert!((weight - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn factored_network_score_matches_double_loop() {
    let mut rng = StreamRng::new(8, &[4]);
    for topo in [triangle([4, 6, 3]), nsfnet()] {
        for _ in 0..100 {
            let c = random_state(&topo, &mut rng);
            let s = &random_log(&topo, 1, &mut rng)[0];
            let snapshot = Occupancy::from_used(s.used.clone());
            let naive: f64 = topo
                .pair_ids()
                .map(|p| {
                    c.traffic_weight(p).unwrap() * c.predict_pair_bp(&snapshot, p).unwrap().value
                })
                .sum();
            let factored = c.predict_network_bp(&snapshot).unwrap();
            assert!(rel(factored, naive) < 1e-9, "{factored} vs {naive}");
        }
    }
}

#[test]
fn four_way_partition_merges_to_sequential_counts() {
    let topo = nsfnet();
    let mut rng = StreamRng::new(21, &[5]);
    let log = random_log(&topo, 400, &mut rng);
    let whole = replay(&topo, &log);
    let cuts = [0, 37, 150, 151, 400];
    let parts: Vec<_> = cuts
        .windows(2)
        .map(|w| replay(&topo, &log[w[0]..w[1]]))
        .collect();
    let orders = [[0, 1, 2, 3], [3, 2, 1, 0], [2, 0, 3, 1], [1, 3, 0, 2]];
    for order in orders {
        let mut merged = BayesCounters::for_topology(&topo);
        for i in order {
            merged.merge_from(&parts[i]).unwrap();
        }
        assert_eq!(merged, whole);
    }
}

#[test]
fn merge_rejects_other_topologies() {
    let a = BayesCounters::for_topology(&triangle([2, 2, 2]));
    let b = BayesCounters::for_topology(&triangle([2, 2, 3]));
    assert!(a.merge(&b).is_err());
}

#[test]
fn zero_counters_give_one_half_everywhere() {
    let topo = nsfnet();
    let c = BayesCounters::for_topology(&topo);
    let snapshot = Occupancy::from_used(topo.links().iter().map(|l| l.capacity / 2).collect());
    assert_eq!(c.predict_network_bp(&snapshot).unwrap(), 0.5);
    let pair = topo.pair(NodeId(0), NodeId(13)).unwrap();
    assert_eq!(c.predict_pair_bp(&snapshot, pair).unwrap().value, 0.5);
}

fn arb_log(len: usize) -> impl Strategy<Value = Vec<Arrival>> {
    prop::collection::vec(
        (prop::collection::vec(0u32..=3, 3), 0usize..3, any::<bool>()).prop_map(
            |(used, pair, blocked)| Arrival {
                used,
                pair,
                blocked,
            },
        ),
        0..len,
    )
}

proptest! {
    #[test]
    fn merge_is_commutative_and_associative(a in arb_log(30), b in arb_log(30), c in arb_log(30)) {
        let topo = triangle([3, 3, 3]);
        let (a, b, c) = (replay(&topo, &a), replay(&topo, &b), replay(&topo, &c));
        prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
        prop_assert_eq!(
            a.merge(&b).unwrap().merge(&c).unwrap(),
            a.merge(&b.merge(&c).unwrap()).unwrap()
        );
        prop_assert_eq!(a.merge(&BayesCounters::for_topology(&topo)).unwrap(), a.clone());
        prop_assert_eq!(a.merge(&b).unwrap().delta_from(&a).unwrap(), b);
    }

    #[test]
    fn split_logs_merge_to_the_whole(log in arb_log(60), cut in 0usize..60) {
        let topo = triangle([3, 3, 3]);
        let cut = cut.min(log.len());
        let merged = replay(&topo, &log[..cut]).merge(&replay(&topo, &log[cut..])).unwrap();
        prop_assert_eq!(merged, replay(&topo, &log));
    }

    #[test]
    fn scores_are_positive_and_finite(log in arb_log(40), used in prop::collection::vec(0u32..=3, 3), pair in 0u32..3) {
        let topo = triangle([3, 3, 3]);
        let c = replay(&topo, &log);
        let snapshot = Occupancy::from_used(used);
        let p = c.predict_pair_bp(&snapshot, PairId(pair)).unwrap();
        prop_assert!(p.value > 0.0 && p.value.is_finite());
        prop_assert!((0.0..=1.0).contains(&p.clamped()));
        let net = c.predict_network_bp(&snapshot).unwrap();
        prop_assert!(net > 0.0 && net.is_finite());
    }

    #[test]
    fn checkpoints_roundtrip(log in arb_log(40)) {
        let topo = triangle([3, 3, 3]);
        let c = replay(&topo, &log);
        let mut buf = Vec::new();
        c.write_checkpoint(&mut buf).unwrap();
        prop_assert_eq!(BayesCounters::read_checkpoint(&buf[..]).unwrap(), c);
    }
}
