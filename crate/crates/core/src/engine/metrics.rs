use serde::{Deserialize, Serialize};

use crate::topology::PairId;

/// Arrivals and blocks within one sampling window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSample {
    pub arrivals: u64,
    pub blocked: u64,
}

impl WindowSample {
    pub fn blocking_probability(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.blocked as f64 / self.arrivals as f64
        }
    }
}

/// Counts collected over one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub arrivals: u64,
    pub blocked: u64,
    pub pair_arrivals: Vec<u64>,
    pub pair_blocked: Vec<u64>,
    /// `extra_hops[d]` counts established connections routed `d` hops above shortest.
    pub extra_hops: Vec<u64>,
    /// Arrivals per entry of `windows`.
    pub window: u64,
    pub windows: Vec<WindowSample>,
}

impl Metrics {
    pub fn new(num_pairs: usize, window: u64) -> Self {
        assert!(window >= 1);
        Self {
            arrivals: 0,
            blocked: 0,
            pair_arrivals: vec![0; num_pairs],
            pair_blocked: vec![0; num_pairs],
            extra_hops: Vec::new(),
            window,
            windows: Vec::new(),
        }
    }

    /// Records an arrival; `extra_hops` is `None` when it was blocked.
    pub fn record(&mut self, pair: PairId, extra_hops: Option<usize>) {
        if self.arrivals.is_multiple_of(self.window) {
            self.windows.push(WindowSample::default());
        }
        let sample = self.windows.last_mut().expect("window opened above");
        self.arrivals += 1;
        sample.arrivals += 1;
        self.pair_arrivals[pair.index()] += 1;
        match extra_hops {
            None => {
                self.blocked += 1;
                sample.blocked += 1;
                self.pair_blocked[pair.index()] += 1;
            }
            Some(d) => {
                if self.extra_hops.len() <= d {
                    self.extra_hops.resize(d + 1, 0);
                }
                self.extra_hops[d] += 1;
            }
        }
    }

    pub fn served(&self) -> u64 {
        self.arrivals - self.blocked
    }

    pub fn blocking_probability(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.blocked as f64 / self.arrivals as f64
        }
    }

    /// Mean extra hop count over established connections.
    pub fn avg_extra_hops(&self) -> f64 {
        let served: u64 = self.extra_hops.iter().sum();
        if served == 0 {
            return 0.0;
        }
        let weighted: u64 = self
            .extra_hops
            .iter()
            .enumerate()
            .map(|(d, &c)| d as u64 * c)
            .sum();
        weighted as f64 / served as f64
    }

    /// Adds `other` into `self`; windows are summed index by index.
    ///
    /// Panics if the two were collected with different pair counts or window sizes.
    pub fn merge_from(&mut self, other: &Metrics) {
        assert_eq!(self.pair_arrivals.len(), other.pair_arrivals.len());
        assert_eq!(self.window, other.window);
        self.arrivals += other.arrivals;
        self.blocked += other.blocked;
        for (a, b) in self.pair_arrivals.iter_mut().zip(&other.pair_arrivals) {
            *a += b;
        }
        for (a, b) in self.pair_blocked.iter_mut().zip(&other.pair_blocked) {
            *a += b;
        }
        if self.extra_hops.len() < other.extra_hops.len() {
            self.extra_hops.resize(other.extra_hops.len(), 0);
        }
        for (a, b) in self.extra_hops.iter_mut().zip(&other.extra_hops) {
            *a += b;
        }
        if self.windows.len() < other.windows.len() {
            self.windows
                .resize(other.windows.len(), WindowSample::default());
        }
        for (a, b) in self.windows.iter_mut().zip(&other.windows) {
            a.arrivals += b.arrivals;
            a.blocked += b.blocked;
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.blocked <= self.arrivals
            && self.extra_hops.iter().sum::<u64>() == self.served()
            && self.pair_arrivals.iter().sum::<u64>() == self.arrivals
            && self.pair_blocked.iter().sum::<u64>() == self.blocked
            && self.windows.iter().map(|w| w.arrivals).sum::<u64>() == self.arrivals
            && self.windows.iter().map(|w| w.blocked).sum::<u64>() == self.blocked
    }
}
