//! Naive Bayes blocking predictor.
//!
//! The classifier input is a network snapshot (busy units per link) plus
//! the requesting node pair; the class is blocked / served. All statistics
//! are integer counts, so counter states are exact, mergeable values.
//!
//! Every probability is read through add-one (Laplace) smoothing:
//!
//! | quantity              | estimate                                   |
//! |-----------------------|--------------------------------------------|
//! | `P(Y=1)`              | `(B + 1) / (H + 2)`                        |
//! | `P(U_j = u \| Y=1)`   | `(blocked_j[u] + 1) / (B + W_j + 1)`       |
//! | `P(U_j = u)`          | `(total_j[u] + 1) / (H + W_j + 1)`         |
//! | `P(sd \| Y=1)`        | `(pair_blocked[sd] + 1) / (B + m)`         |
//! | `P(sd)`, `l_sd`       | `(pair_total[sd] + 1) / (H + m)`           |
//!
//! The per-pair score `P(Y=1) * prod_j P(U_j|Y=1) * P(sd|Y=1) / (prod_j P(U_j) * P(sd))`
//! is not a normalized posterior and can exceed one; it is used as a raw
//! ranking score.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Occupancy;
use crate::topology::{LinkId, PairId, Topology};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("snapshot has {found} links, counters expect {expected}")]
    SnapshotLength { expected: usize, found: usize },
    #[error("link {link}: occupancy {used} exceeds capacity {capacity}")]
    OccupancyOutOfRange {
        link: usize,
        used: u32,
        capacity: u32,
    },
    #[error("pair {pair} out of range (m = {pairs})")]
    PairOutOfRange { pair: usize, pairs: usize },
    #[error("counters were built for a different topology")]
    TopologyMismatch,
    #[error("subtracting counters would go negative")]
    NegativeDelta,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sufficient statistics of the blocking classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BayesCounters {
    /// Arrivals observed, `H`.
    h: u64,
    /// Arrivals blocked, `B`.
    b: u64,
    capacities: Vec<u32>,
    num_pairs: usize,
    /// `occ_blocked[j][u]`: blocked arrivals that saw `u` busy units on link `j`.
    occ_blocked: Vec<Vec<u64>>,
    /// `occ_total[j][u]`: all arrivals that saw `u` busy units on link `j`.
    occ_total: Vec<Vec<u64>>,
    pair_blocked: Vec<u64>,
    pair_total: Vec<u64>,
}

impl BayesCounters {
    pub fn new(capacities: Vec<u32>, num_pairs: usize) -> Self {
        let hist = |w: &u32| vec![0u64; *w as usize + 1];
        Self {
            h: 0,
            b: 0,
            occ_blocked: capacities.iter().map(hist).collect(),
            occ_total: capacities.iter().map(hist).collect(),
            capacities,
            num_pairs,
            pair_blocked: vec![0; num_pairs],
            pair_total: vec![0; num_pairs],
        }
    }

    pub fn for_topology(topo: &Topology) -> Self {
        Self::new(topo.capacities(), topo.num_pairs())
    }

    pub fn arrivals(&self) -> u64 {
        self.h
    }

    pub fn blocked(&self) -> u64 {
        self.b
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn num_links(&self) -> usize {
        self.capacities.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }

    pub fn occ_blocked(&self, link: LinkId) -> &[u64] {
        &self.occ_blocked[link.index()]
    }

    pub fn occ_total(&self, link: LinkId) -> &[u64] {
        &self.occ_total[link.index()]
    }

    pub fn pair_blocked(&self, pair: PairId) -> u64 {
        self.pair_blocked[pair.index()]
    }

    pub fn pair_total(&self, pair: PairId) -> u64 {
        self.pair_total[pair.index()]
    }

    pub fn is_zero(&self) -> bool {
        self.h == 0
    }

    pub fn matches(&self, topo: &Topology) -> bool {
        self.num_pairs == topo.num_pairs()
            && self.capacities.len() == topo.num_links()
            && self
                .capacities
                .iter()
                .zip(topo.links())
                .all(|(&w, l)| w == l.capacity)
    }

    fn check_snapshot(&self, snapshot: &Occupancy) -> Result<(), LearnerError> {
        if snapshot.len() != self.capacities.len() {
            return Err(LearnerError::SnapshotLength {
                expected: self.capacities.len(),
                found: snapshot.len(),
            });
        }
        for (j, (&u, &w)) in snapshot.as_slice().iter().zip(&self.capacities).enumerate() {
            if u > w {
                return Err(LearnerError::OccupancyOutOfRange {
                    link: j,
                    used: u,
                    capacity: w,
                });
            }
        }
        Ok(())
    }

    fn check_pair(&self, pair: PairId) -> Result<(), LearnerError> {
        if pair.index() >= self.num_pairs {
            return Err(LearnerError::PairOutOfRange {
                pair: pair.index(),
                pairs: self.num_pairs,
            });
        }
        Ok(())
    }

    /// Records one arrival with its pre-admission snapshot and outcome.
    pub fn observe(
        &mut self,
        snapshot: &Occupancy,
        pair: PairId,
        blocked: bool,
    ) -> Result<(), LearnerError> {
        self.check_snapshot(snapshot)?;
        self.check_pair(pair)?;
        self.h += 1;
        self.pair_total[pair.index()] += 1;
        for (hist, &u) in self.occ_total.iter_mut().zip(snapshot.as_slice()) {
            hist[u as usize] += 1;
        }
        if blocked {
            self.b += 1;
            self.pair_blocked[pair.index()] += 1;
            for (hist, &u) in self.occ_blocked.iter_mut().zip(snapshot.as_slice()) {
                hist[u as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn p_block_prior(&self) -> f64 {
        (self.b + 1) as f64 / (self.h + 2) as f64
    }

    fn check_occ(&self, link: LinkId, u: u32) -> Result<(), LearnerError> {
        let w = *self
            .capacities
            .get(link.index())
            .ok_or(LearnerError::SnapshotLength {
                expected: self.capacities.len(),
                found: link.index() + 1,
            })?;
        if u > w {
            return Err(LearnerError::OccupancyOutOfRange {
                link: link.index(),
                used: u,
                capacity: w,
            });
        }
        Ok(())
    }

    /// Smoothed `P(U_j = u | Y = 1)`.
    pub fn p_occ_given_block(&self, link: LinkId, u: u32) -> Result<f64, LearnerError> {
        self.check_occ(link, u)?;
        let j = link.index();
        Ok((self.occ_blocked[j][u as usize] + 1) as f64
            / (self.b + self.capacities[j] as u64 + 1) as f64)
    }

    /// Smoothed `P(U_j = u)`.
    pub fn p_occ(&self, link: LinkId, u: u32) -> Result<f64, LearnerError> {
        self.check_occ(link, u)?;
        let j = link.index();
        Ok((self.occ_total[j][u as usize] + 1) as f64
            / (self.h + self.capacities[j] as u64 + 1) as f64)
    }

    /// Smoothed `P(sd | Y = 1)`.
    pub fn p_pair_given_block(&self, pair: PairId) -> Result<f64, LearnerError> {
        self.check_pair(pair)?;
        Ok((self.pair_blocked[pair.index()] + 1) as f64 / (self.b + self.num_pairs as u64) as f64)
    }

    /// Smoothed `P(sd)`.
    pub fn p_pair(&self, pair: PairId) -> Result<f64, LearnerError> {
        self.check_pair(pair)?;
        Ok((self.pair_total[pair.index()] + 1) as f64 / (self.h + self.num_pairs as u64) as f64)
    }

    /// Share of traffic offered by `pair`, smoothed like `P(sd)`.
    pub fn traffic_weight(&self, pair: PairId) -> Result<f64, LearnerError> {
        self.p_pair(pair)
    }

    /// `ln P(U_j = u | Y = 1) - ln P(U_j = u)`. Caller guarantees `u <= W_j`.
    #[inline]
    pub fn link_log_ratio(&self, link: LinkId, u: u32) -> f64 {
        let j = link.index();
        let w = self.capacities[j] as u64;
        debug_assert!(u as u64 <= w);
        let blocked = (self.occ_blocked[j][u as usize] + 1) as f64;
        let total = (self.occ_total[j][u as usize] + 1) as f64;
        (blocked.ln() - ((self.b + w + 1) as f64).ln())
            - (total.ln() - ((self.h + w + 1) as f64).ln())
    }

    fn pair_log_ratio(&self, pair: PairId) -> f64 {
        let p = pair.index();
        let m = self.num_pairs as u64;
        (((self.pair_blocked[p] + 1) as f64).ln() - ((self.b + m) as f64).ln())
            - (((self.pair_total[p] + 1) as f64).ln() - ((self.h + m) as f64).ln())
    }

    /// Sum over links of the per-link log ratio at the snapshot's occupancy.
    pub fn snapshot_log_ratio(&self, snapshot: &Occupancy) -> f64 {
        let mut sum = NeumaierSum::default();
        for (j, &u) in snapshot.as_slice().iter().enumerate() {
            sum.add(self.link_log_ratio(LinkId::from(j), u));
        }
        sum.value()
    }

    /// `sum_sd l_sd * P(sd | Y=1) / P(sd)`, the pair-dependent factor of the
    /// network-wide score. It does not depend on the snapshot.
    pub fn pair_mixture(&self) -> f64 {
        let m = self.num_pairs as u64;
        let (b, h) = ((self.b + m) as f64, (self.h + m) as f64);
        let mut sum = NeumaierSum::default();
        for p in 0..self.num_pairs {
            let weight = (self.pair_total[p] + 1) as f64 / h;
            let given_block = (self.pair_blocked[p] + 1) as f64 / b;
            sum.add(weight * (given_block / weight));
        }
        sum.value()
    }

    /// Blocking score of a request from `pair` arriving at `snapshot`.
    pub fn predict_pair_bp(
        &self,
        snapshot: &Occupancy,
        pair: PairId,
    ) -> Result<Prediction, LearnerError> {
        self.check_snapshot(snapshot)?;
        self.check_pair(pair)?;
        let terms: Vec<f64> = snapshot
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, &u)| self.link_log_ratio(LinkId::from(j), u))
            .collect();
        let mut sum = NeumaierSum::default();
        sum.add(self.p_block_prior().ln());
        for &t in &terms {
            sum.add(t);
        }
        sum.add(self.pair_log_ratio(pair));
        Ok(Prediction {
            value: sum.value().exp(),
            log_space_terms: terms,
        })
    }

    /// Traffic-weighted blocking score over every pair, in factored form.
    pub fn predict_network_bp(&self, snapshot: &Occupancy) -> Result<f64, LearnerError> {
        self.check_snapshot(snapshot)?;
        let log_bp = self.p_block_prior().ln() + self.snapshot_log_ratio(snapshot);
        Ok(log_bp.exp() * self.pair_mixture())
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LearnerError> {
        if self.capacities != other.capacities || self.num_pairs != other.num_pairs {
            return Err(LearnerError::TopologyMismatch);
        }
        Ok(())
    }

    /// Componentwise sum.
    pub fn merge(&self, other: &Self) -> Result<Self, LearnerError> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<(), LearnerError> {
        self.check_compatible(other)?;
        self.h += other.h;
        self.b += other.b;
        for (mine, theirs) in self
            .occ_blocked
            .iter_mut()
            .chain(self.occ_total.iter_mut())
            .zip(other.occ_blocked.iter().chain(other.occ_total.iter()))
        {
            add_assign(mine, theirs);
        }
        add_assign(&mut self.pair_blocked, &other.pair_blocked);
        add_assign(&mut self.pair_total, &other.pair_total);
        Ok(())
    }

    /// Componentwise difference `self - base`; fails if any count would go negative.
    pub fn delta_from(&self, base: &Self) -> Result<Self, LearnerError> {
        self.check_compatible(base)?;
        let sub = |a: &[u64], b: &[u64]| -> Result<Vec<u64>, LearnerError> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.checked_sub(*y).ok_or(LearnerError::NegativeDelta))
                .collect()
        };
        let sub_hist = |a: &[Vec<u64>], b: &[Vec<u64>]| -> Result<Vec<Vec<u64>>, LearnerError> {
            a.iter().zip(b).map(|(x, y)| sub(x, y)).collect()
        };
        Ok(Self {
            h: self
                .h
                .checked_sub(base.h)
                .ok_or(LearnerError::NegativeDelta)?,
            b: self
                .b
                .checked_sub(base.b)
                .ok_or(LearnerError::NegativeDelta)?,
            capacities: self.capacities.clone(),
            num_pairs: self.num_pairs,
            occ_blocked: sub_hist(&self.occ_blocked, &base.occ_blocked)?,
            occ_total: sub_hist(&self.occ_total, &base.occ_total)?,
            pair_blocked: sub(&self.pair_blocked, &base.pair_blocked)?,
            pair_total: sub(&self.pair_total, &base.pair_total)?,
        })
    }

    /// Checks the marginal identities every reachable counter state satisfies.
    pub fn is_consistent(&self) -> bool {
        self.b <= self.h
            && self
                .occ_blocked
                .iter()
                .all(|h| h.iter().sum::<u64>() == self.b)
            && self
                .occ_total
                .iter()
                .all(|h| h.iter().sum::<u64>() == self.h)
            && self.pair_blocked.iter().sum::<u64>() == self.b
            && self.pair_total.iter().sum::<u64>() == self.h
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<(), LearnerError> {
        let file = Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            counters: self.clone(),
        };
        serde_json::to_writer(&mut out, &file)
            .map_err(|e| LearnerError::Checkpoint(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self, LearnerError> {
        let file: Checkpoint =
            serde_json::from_reader(input).map_err(|e| LearnerError::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(LearnerError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let c = file.counters;
        let shapes_ok = c.occ_blocked.len() == c.capacities.len()
            && c.occ_total.len() == c.capacities.len()
            && c.occ_blocked
                .iter()
                .chain(&c.occ_total)
                .zip(c.capacities.iter().chain(&c.capacities))
                .all(|(h, &w)| h.len() == w as usize + 1)
            && c.pair_blocked.len() == c.num_pairs
            && c.pair_total.len() == c.num_pairs;
        if !shapes_ok || !c.is_consistent() {
            return Err(LearnerError::Checkpoint(
                "inconsistent counter state".into(),
            ));
        }
        Ok(c)
    }
}

fn add_assign(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

const CHECKPOINT_FORMAT: &str = "nbroute-counters";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    counters: BayesCounters,
}

/// Per-pair blocking score.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// `ln P(U_j|Y=1) - ln P(U_j)` per link.
    pub log_space_terms: Vec<f64>,
}

impl Prediction {
    /// The score clamped to a probability, for reporting.
    pub fn clamped(&self) -> f64 {
        self.value.clamp(0.0, 1.0)
    }
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
